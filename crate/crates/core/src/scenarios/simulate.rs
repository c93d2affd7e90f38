//! One draw under one law: build the flat ODE state, integrate, and log
//! diagnostics at every logged node.

use crate::diagnostics::{
    first_order_mrac_lyapunov, first_order_regression_lyapunov, lyapunov_mrac, lyapunov_mrac_rate_bound,
    lyapunov_regression, lyapunov_regression_rate_bound, wibisono_candidate_lyapunov, MracSample,
    RegretAccumulator, Sample, Trajectory,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate_guarded, IntegrationConfig, RunStatus, Stage};
use crate::linalg::Vector;
use crate::models::{output_error, plant_rhs, PlantModel, RegressionModel, SystemState};
use crate::signals::{eval_feature, eval_feature_rate};
use crate::tuners::{
    first_order_mrac_rhs, first_order_regression_rhs, higher_order_mrac_rhs, higher_order_regression_rhs,
    mrac_default_mu, normalizing_signal, regression_default_mu, wibisono_baseline_rhs, FormSample, Law,
    TunerConfig, TunerState,
};

/// The model realized for a single Monte-Carlo draw.
#[derive(Debug, Clone, PartialEq)]
pub enum DrawModel {
    Regression(RegressionModel),
    Mrac(PlantModel),
}

impl DrawModel {
    pub fn theta_star(&self) -> &Vector {
        match self {
            DrawModel::Regression(m) => &m.theta_star,
            DrawModel::Mrac(m) => &m.theta_star,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta_star().dim()
    }

    /// Instants where an input jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            DrawModel::Regression(m) => m.feature.breakpoints(),
            DrawModel::Mrac(m) => m.command.onset().into_iter().collect(),
        }
    }

    /// μ under which the Lyapunov rate bound holds.
    pub fn default_mu(&self, gamma: f64, beta: f64) -> f64 {
        match self {
            DrawModel::Regression(_) => regression_default_mu(gamma, beta),
            DrawModel::Mrac(m) => mrac_default_mu(gamma, beta, &m.pb()),
        }
    }

    /// Same model with every jump moved onto the integration grid.
    pub fn snapped(&self, step: f64) -> DrawModel {
        match self {
            DrawModel::Regression(m) => DrawModel::Regression(RegressionModel {
                theta_star: m.theta_star.clone(),
                feature: m.feature.snapped_to_grid(0.0, step),
            }),
            DrawModel::Mrac(m) => {
                DrawModel::Mrac(PlantModel { command: m.command.snapped_to_grid(0.0, step), ..m.clone() })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub tuner: TunerConfig,
    pub integration: IntegrationConfig,
    /// Log the Lyapunov rate bound; only meaningful at the default μ.
    pub rate_bound: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integrates from zero initial conditions and returns the logged
/// trajectory. A non-finite derivative ends the run as `Diverged`.
pub fn simulate(model: &DrawModel, spec: &RunSpec) -> Result<Trajectory> {
    let model = model.snapped(spec.integration.step);
    match &model {
        DrawModel::Regression(m) => simulate_regression(m, spec),
        DrawModel::Mrac(m) => simulate_mrac(m, spec),
    }
}

fn finish(law: Law, result: Result<RunStatus>, samples: Vec<Sample>) -> Result<Trajectory> {
    let status = match result {
        Ok(status) => status,
        Err(Error::NonFiniteDerivative { t }) => RunStatus::Diverged { t },
        Err(e) => return Err(e),
    };
    Ok(Trajectory { law, status, samples })
}

/// Flat right-hand side of the closed system under `cfg.law`. Jumps in the
/// feature or command are sampled at the start of each step.
pub type Rhs<'a> = Box<dyn FnMut(Stage, &[f64], &mut [f64]) -> Result<()> + 'a>;

/// Zero initial state and right-hand side for `model`. The model is used as
/// given; snap it first if its jumps must land on grid nodes.
pub fn draw_system<'a>(model: &'a DrawModel, cfg: &'a TunerConfig) -> Result<(Vec<f64>, Rhs<'a>)> {
    let n = model.dim();
    let mut y0 = match model {
        DrawModel::Regression(_) => Vec::new(),
        DrawModel::Mrac(_) => vec![0.0; 2 * n],
    };
    TunerState::initial(cfg.law, Vector::zeros(n), None).pack_into(&mut y0);
    let rhs: Rhs<'a> = match model {
        DrawModel::Regression(m) => Box::new(regression_rhs(m, cfg)),
        DrawModel::Mrac(m) => {
            if cfg.law == Law::WibisonoBaseline {
                return Err(Error::InvalidConfig("the baseline law is defined for regression only".into()));
            }
            Box::new(mrac_rhs(m, cfg))
        }
    };
    Ok((y0, rhs))
}

fn regression_rhs<'a>(
    m: &'a RegressionModel,
    cfg: &'a TunerConfig,
) -> impl FnMut(Stage, &[f64], &mut [f64]) -> Result<()> + 'a {
    let law = cfg.law;
    let n = m.theta_star.dim();
    let held = m.feature.is_piecewise_constant();
    move |stage: Stage, y: &[f64], out: &mut [f64]| -> Result<()> {
        let s = TunerState::unpack(law, n, y)?;
        let phi = eval_feature(&m.feature, if held { stage.segment_start } else { stage.t });
        let e_y = output_error(&s.theta, &m.theta_star, &phi);
        let d = match law {
            Law::FirstOrder => first_order_regression_rhs(&s, &phi, e_y, cfg)?,
            Law::HigherOrder => higher_order_regression_rhs(&s, &phi, e_y, cfg)?,
            Law::WibisonoBaseline => wibisono_baseline_rhs(&s, &phi, e_y, stage.t, cfg)?,
        };
        let mut buf = Vec::with_capacity(y.len());
        d.pack_into(&mut buf);
        out.copy_from_slice(&buf);
        Ok(())
    }
}

fn mrac_rhs<'a>(m: &'a PlantModel, cfg: &'a TunerConfig) -> impl FnMut(Stage, &[f64], &mut [f64]) -> Result<()> + 'a {
    let law = cfg.law;
    let n = m.state_dim();
    let pb = m.pb();
    move |stage: Stage, y: &[f64], out: &mut [f64]| -> Result<()> {
        let v = split_mrac(law, n, y)?;
        let z = m.command.eval(stage.segment_start);
        let u = -dot(&v.tuner.theta, v.x);
        let sys = SystemState { x: v.x.into(), xhat: v.xhat.into() };
        let d = plant_rhs(m, &sys, &v.tuner.theta, u, z, v.x)?;
        let e = sys.tracking_error();
        let dt = match law {
            Law::FirstOrder => first_order_mrac_rhs(&v.tuner, v.x, &e, &pb, cfg)?,
            _ => higher_order_mrac_rhs(&v.tuner, v.x, &e, &pb, cfg)?,
        };
        out[..n].copy_from_slice(&d.x);
        out[n..2 * n].copy_from_slice(&d.xhat);
        let mut buf = Vec::with_capacity(y.len() - 2 * n);
        dt.pack_into(&mut buf);
        out[2 * n..].copy_from_slice(&buf);
        Ok(())
    }
}

fn simulate_regression(m: &RegressionModel, spec: &RunSpec) -> Result<Trajectory> {
    let law = spec.tuner.law;
    let cfg = &spec.tuner;
    let n = m.theta_star.dim();
    let mut y0 = Vec::new();
    TunerState::initial(law, Vector::zeros(n), None).pack_into(&mut y0);

    let rhs = regression_rhs(m, cfg);

    let mut samples = Vec::new();
    let mut regret = RegretAccumulator::default();
    let observer = |t: f64, y: &[f64]| -> Result<()> {
        let s = TunerState::unpack(law, n, y)?;
        let phi = eval_feature(&m.feature, t);
        let e_y = output_error(&s.theta, &m.theta_star, &phi);
        let (v, bound, candidate) = match law {
            Law::FirstOrder => (first_order_regression_lyapunov(&s.theta, &m.theta_star, cfg.gamma)?, Some(-e_y * e_y), None),
            Law::HigherOrder => {
                let vt = s.vartheta.as_ref().expect("higher-order state carries a filter");
                let v = lyapunov_regression(&s.theta, vt, &m.theta_star, cfg.gamma)?;
                let bound = spec
                    .rate_bound
                    .then(|| lyapunov_regression_rate_bound(&s.theta, vt, &phi, e_y, cfg.gamma, cfg.beta));
                let gain = -cfg.beta * normalizing_signal(&phi, cfg.mu);
                let theta_dot: Vec<f64> = s.theta.iter().zip(vt.iter()).map(|(a, b)| gain * (a - b)).collect();
                let phi_dot = eval_feature_rate(&m.feature, t)?;
                let cand = wibisono_candidate_lyapunov(
                    &s.theta, &theta_dot, &m.theta_star, &phi, &phi_dot, e_y, cfg.gamma, cfg.beta, cfg.mu,
                )?;
                (v, bound, Some(cand))
            }
            Law::WibisonoBaseline => {
                let vel = s.theta_dot.as_ref().expect("baseline state carries a velocity");
                let phi_dot = eval_feature_rate(&m.feature, t)?;
                let cand = wibisono_candidate_lyapunov(
                    &s.theta, vel, &m.theta_star, &phi, &phi_dot, e_y, cfg.gamma, cfg.beta, cfg.mu,
                )?;
                (cand.v, None, None)
            }
        };
        samples.push(Sample {
            t,
            regret: regret.push(t, e_y * e_y),
            theta: s.theta,
            vartheta: s.vartheta,
            theta_dot: s.theta_dot,
            e_y: Some(e_y),
            mrac: None,
            phi,
            v,
            v_rate_bound: bound,
            candidate,
        });
        Ok(())
    };

    let threshold = spec.integration.divergence_threshold;
    let guard = |t: f64, y: &[f64]| {
        let phi = eval_feature(&m.feature, t);
        output_error(&y[..n], &m.theta_star, &phi).abs() > threshold
    };
    let result = integrate_guarded(rhs, 0.0, &y0, &spec.integration, observer, guard).map(|o| o.status);
    finish(law, result, samples)
}

struct MracView<'a> {
    x: &'a [f64],
    xhat: &'a [f64],
    tuner: TunerState,
}

fn split_mrac(law: Law, n: usize, y: &[f64]) -> Result<MracView<'_>> {
    Ok(MracView { x: &y[..n], xhat: &y[n..2 * n], tuner: TunerState::unpack(law, n, &y[2 * n..])? })
}

fn simulate_mrac(m: &PlantModel, spec: &RunSpec) -> Result<Trajectory> {
    let law = spec.tuner.law;
    if law == Law::WibisonoBaseline {
        return Err(Error::InvalidConfig("the baseline law is defined for regression only".into()));
    }
    let cfg = &spec.tuner;
    let n = m.state_dim();
    let pb = m.pb();
    let mut y0 = vec![0.0; 2 * n];
    TunerState::initial(law, Vector::zeros(n), None).pack_into(&mut y0);

    let rhs = mrac_rhs(m, cfg);

    let mut samples = Vec::new();
    let mut regret = RegretAccumulator::default();
    let observer = |t: f64, y: &[f64]| -> Result<()> {
        let v = split_mrac(law, n, y)?;
        let sys = SystemState { x: v.x.into(), xhat: v.xhat.into() };
        let e = sys.tracking_error();
        let phi = sys.x.clone();
        let (lyap, bound) = match law {
            Law::FirstOrder => (
                first_order_mrac_lyapunov(&v.tuner.theta, &m.theta_star, &e, &m.p, cfg.gamma)?,
                Some(-2.0 * e.norm_sq()),
            ),
            _ => {
                let vt = v.tuner.vartheta.as_ref().expect("higher-order state carries a filter");
                let lyap = lyapunov_mrac(&v.tuner.theta, vt, &m.theta_star, &e, &m.p, cfg.gamma)?;
                let bound = spec
                    .rate_bound
                    .then(|| lyapunov_mrac_rate_bound(&v.tuner.theta, vt, &phi, &e, &pb, cfg.gamma, cfg.beta));
                (lyap, bound)
            }
        };
        let u = -dot(&v.tuner.theta, v.x);
        samples.push(Sample {
            t,
            regret: regret.push(t, e.norm_sq()),
            theta: v.tuner.theta,
            vartheta: v.tuner.vartheta,
            theta_dot: None,
            e_y: None,
            mrac: Some(MracSample { e, x: sys.x, xhat: sys.xhat, u, z_cmd: m.command.eval(t) }),
            phi,
            v: lyap,
            v_rate_bound: bound,
            candidate: None,
        });
        Ok(())
    };

    let result = integrate_guarded(rhs, 0.0, &y0, &spec.integration, observer, |_, _| false).map(|o| o.status);
    finish(law, result, samples)
}

/// Inputs to the second-order form check, rebuilt from logged samples. The
/// samples must sit on a uniform grid.
pub fn form_samples(model: &DrawModel, traj: &Trajectory) -> Result<Vec<FormSample>> {
    traj.samples
        .iter()
        .map(|s| match model {
            DrawModel::Regression(m) => {
                let e_y = s.e_y.unwrap_or_else(|| output_error(&s.theta, &m.theta_star, &s.phi));
                Ok(FormSample {
                    theta: s.theta.clone(),
                    phi: s.phi.clone(),
                    phi_rate: eval_feature_rate(&m.feature, s.t)?,
                    grad: s.phi.scaled(e_y),
                })
            }
            DrawModel::Mrac(m) => {
                let ms = s.mrac.as_ref().ok_or_else(|| Error::InvalidConfig("MRAC sample without plant state".into()))?;
                let sys = SystemState { x: ms.x.clone(), xhat: ms.xhat.clone() };
                let d = plant_rhs(m, &sys, &s.theta, ms.u, ms.z_cmd, &ms.x)?;
                let eps = m.pb().dot(&ms.e);
                Ok(FormSample { theta: s.theta.clone(), phi: s.phi.clone(), phi_rate: d.x, grad: s.phi.scaled(eps) })
            }
        })
        .collect()
}
