//! Parameter update laws written as right-hand sides over the tuner state.
//!
//! * first order: `θ̇ = -γ φ ε`
//! * higher order: `ϑ̇ = -γ φ ε`, `θ̇ = -β (θ - ϑ) N_t` with `N_t = 1 + μ φᵀφ`
//! * accelerated baseline: `θ̈ + ((p+1)/t) θ̇ = -C p² t^{p-2} φ e_y`
//!
//! where `ε` is the output error `e_y` (regression) or `eᵀPb` (MRAC).
//! The laws never see θ*; only the error signal.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Law {
    FirstOrder,
    HigherOrder,
    WibisonoBaseline,
}

impl Law {
    pub const ALL: [Law; 3] = [Law::FirstOrder, Law::HigherOrder, Law::WibisonoBaseline];

    /// Short tag used in file names and config values.
    pub fn tag(self) -> &'static str {
        match self {
            Law::FirstOrder => "fo",
            Law::HigherOrder => "ho",
            Law::WibisonoBaseline => "wib",
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Law {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fo" | "first-order" | "firstorder" => Ok(Law::FirstOrder),
            "ho" | "higher-order" | "higherorder" => Ok(Law::HigherOrder),
            "wib" | "wibisono" | "wibisono-baseline" | "wibisonobaseline" => Ok(Law::WibisonoBaseline),
            other => Err(Error::InvalidConfig(format!("unknown law '{other}'"))),
        }
    }
}

/// Parameters of the time-explicit accelerated baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    pub p: f64,
    pub c: f64,
    /// The baseline clock runs at `t + t_shift` so that `(p+1)/t` is finite at start.
    pub t_shift: f64,
}

impl BaselineParams {
    pub const DEFAULT_T_SHIFT: f64 = 1e-2;

    /// Nesterov-like choice `p = 2`, `C = γβ/p²`, matching the gradient gain of
    /// the higher-order law.
    pub fn nesterov(gamma: f64, beta: f64) -> Self {
        let p = 2.0;
        BaselineParams { p, c: gamma * beta / (p * p), t_shift: Self::DEFAULT_T_SHIFT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunerConfig {
    pub law: Law,
    pub gamma: f64,
    pub beta: f64,
    pub mu: f64,
    pub baseline: BaselineParams,
}

impl TunerConfig {
    pub fn new(law: Law, gamma: f64, beta: f64, mu: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("beta", beta), ("mu", mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(TunerConfig { law, gamma, beta, mu, baseline: BaselineParams::nesterov(gamma, beta) })
    }

    pub fn with_baseline(mut self, baseline: BaselineParams) -> Self {
        self.baseline = baseline;
        self
    }
}

/// `μ = 2γ/β`, the value under which the regression rate bound holds.
pub fn regression_default_mu(gamma: f64, beta: f64) -> f64 {
    2.0 * gamma / beta
}

/// `μ = 2γ‖Pb‖²/β`, the MRAC counterpart.
pub fn mrac_default_mu(gamma: f64, beta: f64, pb: &[f64]) -> f64 {
    2.0 * gamma * pb.iter().map(|x| x * x).sum::<f64>() / beta
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerState {
    pub theta: Vector,
    /// Filter variable, higher-order law only.
    pub vartheta: Option<Vector>,
    /// Parameter velocity, baseline only.
    pub theta_dot: Option<Vector>,
}

impl TunerState {
    pub fn initial(law: Law, theta0: Vector, theta_dot0: Option<Vector>) -> Self {
        let n = theta0.dim();
        match law {
            Law::FirstOrder => TunerState { theta: theta0, vartheta: None, theta_dot: None },
            Law::HigherOrder => {
                TunerState { vartheta: Some(theta0.clone()), theta: theta0, theta_dot: None }
            }
            Law::WibisonoBaseline => TunerState {
                theta: theta0,
                vartheta: None,
                theta_dot: Some(theta_dot0.unwrap_or_else(|| Vector::zeros(n))),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn packed_len(law: Law, n: usize) -> usize {
        match law {
            Law::FirstOrder => n,
            Law::HigherOrder | Law::WibisonoBaseline => 2 * n,
        }
    }

    pub fn pack_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.theta);
        if let Some(v) = &self.vartheta {
            out.extend_from_slice(v);
        }
        if let Some(v) = &self.theta_dot {
            out.extend_from_slice(v);
        }
    }

    pub fn unpack(law: Law, n: usize, y: &[f64]) -> Result<Self> {
        check_dim(Self::packed_len(law, n), y.len())?;
        let theta = Vector::from(&y[..n]);
        let rest = || Some(Vector::from(&y[n..2 * n]));
        Ok(match law {
            Law::FirstOrder => TunerState { theta, vartheta: None, theta_dot: None },
            Law::HigherOrder => TunerState { theta, vartheta: rest(), theta_dot: None },
            Law::WibisonoBaseline => TunerState { theta, vartheta: None, theta_dot: rest() },
        })
    }

    fn filter(&self) -> Result<&Vector> {
        self.vartheta.as_ref().ok_or_else(|| Error::InvalidConfig("higher-order law needs a filter state".into()))
    }
}

/// `N_t = 1 + μ φᵀφ`
pub fn normalizing_signal(phi: &[f64], mu: f64) -> f64 {
    1.0 + mu * phi.iter().map(|x| x * x).sum::<f64>()
}

fn gradient_step(phi: &[f64], err: f64, gamma: f64) -> Vector {
    phi.iter().map(|p| -gamma * p * err).collect::<Vec<_>>().into()
}

fn filter_step(s: &TunerState, phi: &[f64], cfg: &TunerConfig) -> Result<Vector> {
    let vt = s.filter()?;
    check_dim(s.dim(), vt.dim())?;
    let gain = -cfg.beta * normalizing_signal(phi, cfg.mu);
    Ok(s.theta.iter().zip(vt.iter()).map(|(a, b)| gain * (a - b)).collect::<Vec<_>>().into())
}

fn scalar_mrac_error(e: &[f64], pb: &[f64]) -> Result<f64> {
    check_dim(e.len(), pb.len())?;
    Ok(e.iter().zip(pb).map(|(a, b)| a * b).sum())
}

pub fn first_order_regression_rhs(s: &TunerState, phi: &[f64], e_y: f64, cfg: &TunerConfig) -> Result<TunerState> {
    check_dim(s.dim(), phi.len())?;
    Ok(TunerState { theta: gradient_step(phi, e_y, cfg.gamma), vartheta: None, theta_dot: None })
}

pub fn higher_order_regression_rhs(s: &TunerState, phi: &[f64], e_y: f64, cfg: &TunerConfig) -> Result<TunerState> {
    check_dim(s.dim(), phi.len())?;
    Ok(TunerState {
        theta: filter_step(s, phi, cfg)?,
        vartheta: Some(gradient_step(phi, e_y, cfg.gamma)),
        theta_dot: None,
    })
}

pub fn first_order_mrac_rhs(
    s: &TunerState,
    phi: &[f64],
    e: &[f64],
    pb: &[f64],
    cfg: &TunerConfig,
) -> Result<TunerState> {
    check_dim(s.dim(), phi.len())?;
    let eps = scalar_mrac_error(e, pb)?;
    Ok(TunerState { theta: gradient_step(phi, eps, cfg.gamma), vartheta: None, theta_dot: None })
}

pub fn higher_order_mrac_rhs(
    s: &TunerState,
    phi: &[f64],
    e: &[f64],
    pb: &[f64],
    cfg: &TunerConfig,
) -> Result<TunerState> {
    check_dim(s.dim(), phi.len())?;
    let eps = scalar_mrac_error(e, pb)?;
    Ok(TunerState {
        theta: filter_step(s, phi, cfg)?,
        vartheta: Some(gradient_step(phi, eps, cfg.gamma)),
        theta_dot: None,
    })
}

/// Baseline ODE in first-order form. `t` is simulation time; the damping
/// clock is `t + t_shift`.
pub fn wibisono_baseline_rhs(
    s: &TunerState,
    phi: &[f64],
    e_y: f64,
    t: f64,
    cfg: &TunerConfig,
) -> Result<TunerState> {
    check_dim(s.dim(), phi.len())?;
    let vel = s
        .theta_dot
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("baseline law needs a velocity state".into()))?;
    let BaselineParams { p, c, t_shift } = cfg.baseline;
    let tau = t + t_shift;
    let damping = (p + 1.0) / tau;
    let gain = c * p * p * tau.powf(p - 2.0) * e_y;
    let accel = vel.iter().zip(phi).map(|(v, f)| -damping * v - gain * f).collect::<Vec<_>>();
    Ok(TunerState { theta: vel.clone(), vartheta: None, theta_dot: Some(accel.into()) })
}

/// One grid point fed to [`second_order_form_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FormSample {
    pub theta: Vector,
    pub phi: Vector,
    pub phi_rate: Vector,
    /// `φ e_y` for regression, `φ eᵀPb` for MRAC.
    pub grad: Vector,
}

/// Max-norm residual of `θ̈ + (βN - Ṅ/N) θ̇ + γβN·grad` over interior points,
/// with θ̇ and θ̈ from second-order central differences on a uniform grid of
/// spacing `h`.
pub fn second_order_form_check(cfg: &TunerConfig, samples: &[FormSample], h: f64) -> Result<f64> {
    if samples.len() < 5 {
        return Err(Error::GridTooCoarse { needed: 5, got: samples.len() });
    }
    let mut worst = 0.0f64;
    for w in samples.windows(3) {
        let (prev, cur, next) = (&w[0], &w[1], &w[2]);
        let n = normalizing_signal(&cur.phi, cfg.mu);
        let n_dot = 2.0 * cfg.mu * cur.phi.dot(&cur.phi_rate);
        let damping = cfg.beta * n - n_dot / n;
        for i in 0..cur.theta.dim() {
            let acc = (next.theta[i] - 2.0 * cur.theta[i] + prev.theta[i]) / (h * h);
            let vel = (next.theta[i] - prev.theta[i]) / (2.0 * h);
            let r = acc + damping * vel + cfg.gamma * cfg.beta * n * cur.grad[i];
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(law: Law) -> TunerConfig {
        TunerConfig::new(law, 0.1, 1.0, regression_default_mu(0.1, 1.0)).unwrap()
    }

    #[test]
    fn normalizing_signal_examples() {
        assert_eq!(normalizing_signal(&[0.0; 3], 0.2), 1.0);
        assert!((normalizing_signal(&[1.0, 1.0, 1.0], 0.2) - 1.6).abs() < 1e-15);
        assert!((normalizing_signal(&[2.0, -1.0, -2.0], 0.2) - 2.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_gains() {
        assert!(TunerConfig::new(Law::FirstOrder, 0.0, 1.0, 1.0).is_err());
        assert!(TunerConfig::new(Law::FirstOrder, 0.1, -1.0, 1.0).is_err());
        assert!(TunerConfig::new(Law::FirstOrder, 0.1, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn first_order_regression_examples() {
        let c = cfg(Law::FirstOrder);
        let s = TunerState::initial(Law::FirstOrder, Vector::zeros(3), None);
        let d = first_order_regression_rhs(&s, &[1.0, 1.0, 1.0], 0.0, &c).unwrap();
        assert!(d.theta.iter().all(|&x| x == 0.0));
        let d = first_order_regression_rhs(&s, &[1.0, 1.0, 1.0], -4.0, &c).unwrap();
        for x in d.theta.iter() {
            assert!((x - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn higher_order_regression_examples() {
        let c = cfg(Law::HigherOrder);
        let s = TunerState { theta: [0.5, 0.2, -1.0].into(), vartheta: Some([0.5, 0.2, -1.0].into()), theta_dot: None };
        let d = higher_order_regression_rhs(&s, &[1.0, 2.0, 3.0], 0.0, &c).unwrap();
        assert!(d.theta.iter().chain(d.vartheta.as_ref().unwrap().iter()).all(|&x| x == 0.0));

        let s = TunerState { theta: [1.0, 0.0, 0.0].into(), vartheta: Some(Vector::zeros(3)), theta_dot: None };
        let d = higher_order_regression_rhs(&s, &[0.0; 3], 0.0, &c).unwrap();
        assert_eq!(d.theta.as_slice(), &[-1.0, 0.0, 0.0]);
        assert!(d.vartheta.unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn first_order_mrac_examples() {
        let c = cfg(Law::FirstOrder);
        let s = TunerState::initial(Law::FirstOrder, Vector::zeros(3), None);
        let d = first_order_mrac_rhs(&s, &[1.0, 2.0, 3.0], &[0.0; 3], &[1.0, 1.0, 1.0], &c).unwrap();
        assert!(d.theta.iter().all(|&x| x == 0.0));
        // eᵀPb = 2
        let d = first_order_mrac_rhs(&s, &[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &c).unwrap();
        assert!((d.theta[0] + 0.2).abs() < 1e-15 && d.theta[1] == 0.0 && d.theta[2] == 0.0);
        assert!(matches!(
            first_order_mrac_rhs(&s, &[1.0, 0.0, 0.0], &[2.0, 0.0], &[1.0, 0.0, 0.0], &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mrac_reduces_to_regression_for_scalar_unit_plant() {
        // n = 1, P = b = 1: eᵀPb = e, so the MRAC update is the gradient flow
        let c = cfg(Law::FirstOrder);
        let s = TunerState::initial(Law::FirstOrder, Vector::from([0.3, -0.7]), None);
        let phi = [0.4, 1.1];
        let a = first_order_mrac_rhs(&s, &phi, &[0.9], &[1.0], &c).unwrap();
        let b = first_order_regression_rhs(&s, &phi, 0.9, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn higher_order_mrac_examples() {
        let c = cfg(Law::HigherOrder);
        let eq = TunerState { theta: [0.1, 0.2, 0.3].into(), vartheta: Some([0.1, 0.2, 0.3].into()), theta_dot: None };
        let d = higher_order_mrac_rhs(&eq, &[1.0, 1.0, 1.0], &[0.0; 3], &[0.5, 0.5, 0.5], &c).unwrap();
        assert!(d.theta.iter().chain(d.vartheta.as_ref().unwrap().iter()).all(|&x| x == 0.0));

        let s = TunerState { theta: [1.0, -1.0, 0.0].into(), vartheta: Some(Vector::zeros(3)), theta_dot: None };
        let phi = [1.0, 2.0, 0.0];
        let d = higher_order_mrac_rhs(&s, &phi, &[0.0; 3], &[0.5, 0.5, 0.5], &c).unwrap();
        let n = normalizing_signal(&phi, c.mu);
        assert!(d.vartheta.unwrap().iter().all(|&x| x == 0.0));
        assert_eq!(d.theta.as_slice(), &[-n, n, 0.0]);
    }

    #[test]
    fn baseline_examples() {
        let b = BaselineParams::nesterov(0.1, 1.0);
        assert_eq!(b.p, 2.0);
        assert!((b.c - 0.025).abs() < 1e-15);

        let c = cfg(Law::WibisonoBaseline);
        let s = TunerState::initial(Law::WibisonoBaseline, [1.0, 2.0, 3.0].into(), None);
        let d = wibisono_baseline_rhs(&s, &[1.0, 1.0, 1.0], 0.0, 3.0, &c).unwrap();
        assert!(d.theta.iter().chain(d.theta_dot.as_ref().unwrap().iter()).all(|&x| x == 0.0));

        // θ̈ = -(3/τ)θ̇ - 0.1 φ e_y for p = 2
        let s = TunerState { theta: Vector::zeros(1), vartheta: None, theta_dot: Some([2.0].into()) };
        let d = wibisono_baseline_rhs(&s, &[1.5], 4.0, 0.99, &c).unwrap();
        let expect = -3.0 / 1.0 * 2.0 - 0.1 * 1.5 * 4.0;
        assert!((d.theta_dot.unwrap()[0] - expect).abs() < 1e-12);
        assert_eq!(d.theta[0], 2.0);
    }

    #[test]
    fn pack_roundtrip() {
        let s = TunerState { theta: [1.0, 2.0].into(), vartheta: Some([3.0, 4.0].into()), theta_dot: None };
        let mut buf = Vec::new();
        s.pack_into(&mut buf);
        assert_eq!(buf, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(TunerState::unpack(Law::HigherOrder, 2, &buf).unwrap(), s);
    }

    #[test]
    fn form_check_needs_five_points() {
        let s = FormSample {
            theta: Vector::zeros(1),
            phi: Vector::zeros(1),
            phi_rate: Vector::zeros(1),
            grad: Vector::zeros(1),
        };
        assert_eq!(
            second_order_form_check(&cfg(Law::HigherOrder), &vec![s; 4], 0.1),
            Err(Error::GridTooCoarse { needed: 5, got: 4 })
        );
    }

    #[test]
    fn form_check_equilibrium_is_exact() {
        let s = FormSample {
            theta: [1.0, -2.0, 5.0].into(),
            phi: [1.0, 0.5, 0.2].into(),
            phi_rate: [0.0, 0.3, -0.1].into(),
            grad: Vector::zeros(3),
        };
        assert_eq!(second_order_form_check(&cfg(Law::HigherOrder), &vec![s; 10], 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn normalizing_signal_at_least_one() {
        for phi in [[0.0, 0.0], [1e-3, -4.0], [1e3, 1e3]] {
            assert!(normalizing_signal(&phi, 0.7) >= 1.0);
        }
    }
}
