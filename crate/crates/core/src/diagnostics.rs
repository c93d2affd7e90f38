//! Lyapunov functions, their derivative bounds, regret and signal norms,
//! evaluated on recorded trajectories.
//!
//! Anything that needs θ* lives here and in the simulator, never in the
//! update laws.

use crate::error::{check_dim, Error, Result};
use crate::integrator::RunStatus;
use crate::linalg::{is_positive_definite, Matrix, Vector};
use crate::tuners::{normalizing_signal, Law};

/// Default tail fraction for [`asymptotic_decay_check`].
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;
/// Default tolerance for [`asymptotic_decay_check`].
pub const DEFAULT_DECAY_TOL: f64 = 1e-2;
/// Relative slack for step-to-step Lyapunov increases, scaled by `1 + V(t₀)`.
pub const MONOTONE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MracSample {
    pub e: Vector,
    pub x: Vector,
    pub xhat: Vector,
    pub u: f64,
    pub z_cmd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub theta: Vector,
    pub vartheta: Option<Vector>,
    pub theta_dot: Option<Vector>,
    /// Output error; `None` on MRAC runs.
    pub e_y: Option<f64>,
    pub mrac: Option<MracSample>,
    pub phi: Vector,
    pub v: f64,
    pub v_rate_bound: Option<f64>,
    /// Kinetic-plus-potential candidate, logged on higher-order regression runs.
    pub candidate: Option<CandidateLyapunov>,
    pub regret: f64,
}

impl Sample {
    /// `|e_y|` for regression, `‖e‖` for MRAC.
    pub fn error_norm(&self) -> f64 {
        match (&self.mrac, self.e_y) {
            (Some(m), _) => m.e.norm(),
            (None, Some(e)) => e.abs(),
            (None, None) => 0.0,
        }
    }

    pub fn filter_gap_sq(&self) -> Option<f64> {
        self.vartheta.as_ref().map(|vt| (&self.theta - vt).norm_sq())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub law: Law,
    pub status: RunStatus,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::error_norm).collect()
    }

    pub fn lyapunov(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.v).collect()
    }

    pub fn v0(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.v)
    }

    pub fn final_regret(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.regret)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(1/γ)‖ϑ - θ*‖² + (1/γ)‖θ - ϑ‖²`
pub fn lyapunov_regression(theta: &[f64], vartheta: &[f64], theta_star: &[f64], gamma: f64) -> Result<f64> {
    check_dim(theta.len(), vartheta.len())?;
    check_dim(theta.len(), theta_star.len())?;
    Ok((sq_dist(vartheta, theta_star) + sq_dist(theta, vartheta)) / gamma)
}

/// `-(2β/γ)‖θ-ϑ‖² - e_y² - (|e_y| - 2‖θ-ϑ‖‖φ‖)²`, valid for `μ = 2γ/β`.
pub fn lyapunov_regression_rate_bound(
    theta: &[f64],
    vartheta: &[f64],
    phi: &[f64],
    e_y: f64,
    gamma: f64,
    beta: f64,
) -> f64 {
    let gap = sq_dist(theta, vartheta).sqrt();
    let phi_norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cross = e_y.abs() - 2.0 * gap * phi_norm;
    -(2.0 * beta / gamma) * gap * gap - e_y * e_y - cross * cross
}

/// Regression Lyapunov function plus `eᵀPe`.
pub fn lyapunov_mrac(
    theta: &[f64],
    vartheta: &[f64],
    theta_star: &[f64],
    e: &[f64],
    p: &Matrix,
    gamma: f64,
) -> Result<f64> {
    if !is_positive_definite(p).map_err(|_| Error::NotPositiveDefinite)? {
        return Err(Error::NotPositiveDefinite);
    }
    let pe = p.mul_vec(e)?;
    Ok(lyapunov_regression(theta, vartheta, theta_star, gamma)? + pe.dot(e))
}

/// `-(2β/γ)‖θ-ϑ‖² - ‖e‖² - (‖e‖ - 2‖Pb‖‖θ-ϑ‖‖φ‖)²`, valid for
/// `μ = 2γ‖Pb‖²/β` and `Q = 2I`.
pub fn lyapunov_mrac_rate_bound(
    theta: &[f64],
    vartheta: &[f64],
    phi: &[f64],
    e: &[f64],
    pb: &[f64],
    gamma: f64,
    beta: f64,
) -> f64 {
    let gap = sq_dist(theta, vartheta).sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let e_norm = norm(e);
    let cross = e_norm - 2.0 * norm(pb) * gap * norm(phi);
    -(2.0 * beta / gamma) * gap * gap - e_norm * e_norm - cross * cross
}

/// `θ̃ᵀθ̃ / (2γ)`, non-increasing along first-order regression runs.
pub fn first_order_regression_lyapunov(theta: &[f64], theta_star: &[f64], gamma: f64) -> Result<f64> {
    check_dim(theta.len(), theta_star.len())?;
    Ok(sq_dist(theta, theta_star) / (2.0 * gamma))
}

/// `eᵀPe + θ̃ᵀθ̃/γ`, non-increasing along first-order MRAC runs.
pub fn first_order_mrac_lyapunov(theta: &[f64], theta_star: &[f64], e: &[f64], p: &Matrix, gamma: f64) -> Result<f64> {
    check_dim(theta.len(), theta_star.len())?;
    let pe = p.mul_vec(e)?;
    Ok(pe.dot(e) + sq_dist(theta, theta_star) / gamma)
}

/// Trapezoid rule on a possibly non-uniform grid.
pub fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2).zip(ys.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}

/// Running trapezoid integral of the squared error, fed one sample at a time.
#[derive(Debug, Clone, Default)]
pub struct RegretAccumulator {
    last: Option<(f64, f64)>,
    total: f64,
}

impl RegretAccumulator {
    pub fn push(&mut self, t: f64, err_sq: f64) -> f64 {
        if let Some((t0, y0)) = self.last {
            self.total += 0.5 * (t - t0) * (y0 + err_sq);
        }
        self.last = Some((t, err_sq));
        self.total
    }
}

/// `∫ ‖error‖² dτ` over the logged samples.
pub fn continuous_regret(traj: &Trajectory) -> f64 {
    let sq: Vec<f64> = traj.error_norms().iter().map(|e| e * e).collect();
    trapezoid(&traj.times(), &sq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateLyapunov {
    pub v: f64,
    pub vdot: f64,
}

/// Kinetic-plus-potential candidate `½‖θ̃ + θ̇/(βN)‖² + (γ/(βN))·½e_y²` and its
/// closed-form derivative along the higher-order regression law. The
/// derivative has no definite sign once φ̇ ≠ 0.
#[allow(clippy::too_many_arguments)]
pub fn wibisono_candidate_lyapunov(
    theta: &[f64],
    theta_dot: &[f64],
    theta_star: &[f64],
    phi: &[f64],
    phi_dot: &[f64],
    e_y: f64,
    gamma: f64,
    beta: f64,
    mu: f64,
) -> Result<CandidateLyapunov> {
    let n = theta.len();
    for len in [theta_dot.len(), theta_star.len(), phi.len(), phi_dot.len()] {
        check_dim(n, len)?;
    }
    let norm = normalizing_signal(phi, mu);
    let damp = beta * norm;
    let shifted: f64 = (0..n).map(|i| (theta[i] - theta_star[i] + theta_dot[i] / damp).powi(2)).sum();
    let v = 0.5 * shifted + 0.5 * gamma / damp * e_y * e_y;
    let phi_phidot: f64 = phi.iter().zip(phi_dot).map(|(a, b)| a * b).sum();
    let err_phidot: f64 = (0..n).map(|i| (theta[i] - theta_star[i]) * phi_dot[i]).sum();
    let vdot = -gamma * e_y * e_y * (1.0 + mu * phi_phidot / (beta * norm * norm)) + gamma / damp * e_y * err_phidot;
    Ok(CandidateLyapunov { v, vdot })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpNorm {
    Two,
    Infinity,
}

/// L₂ (trapezoid) or L∞ (running max) norm of a sampled signal.
pub fn lp_norm(ts: &[f64], values: &[f64], p: LpNorm) -> f64 {
    match p {
        LpNorm::Two => {
            let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
            trapezoid(ts, &sq).sqrt()
        }
        LpNorm::Infinity => values.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// True iff `max |signal|` over the last `tail_fraction` of the time span is
/// at most `tol`.
pub fn asymptotic_decay_check(ts: &[f64], values: &[f64], tail_fraction: f64, tol: f64) -> bool {
    let (Some(&first), Some(&last)) = (ts.first(), ts.last()) else {
        return true;
    };
    let start = last - tail_fraction * (last - first);
    ts.iter().zip(values).filter(|(t, _)| **t >= start).all(|(_, v)| v.abs() <= tol)
}

/// First index where `V` rose by more than `MONOTONE_SLACK·(1 + V(t₀))`,
/// with the size of the rise.
pub fn monotone_violation(v: &[f64]) -> Option<(usize, f64)> {
    let v0 = *v.first()?;
    let slack = MONOTONE_SLACK * (1.0 + v0);
    v.windows(2)
        .enumerate()
        .find(|(_, w)| w[1] > w[0] + slack)
        .map(|(i, w)| (i + 1, w[1] - w[0]))
}

/// Largest `dV/dt - bound` over interior samples, with dV/dt from the
/// five-point central difference on a uniform grid. Stencils that touch a
/// breakpoint (a known input discontinuity) are skipped.
pub fn rate_bound_excess(ts: &[f64], v: &[f64], bound: &[f64], breakpoints: &[f64]) -> Option<f64> {
    if ts.len() < 5 {
        return None;
    }
    let h = ts[1] - ts[0];
    let mut worst: Option<f64> = None;
    for k in 2..ts.len() - 2 {
        let (lo, hi) = (ts[k - 2], ts[k + 2]);
        if breakpoints.iter().any(|&b| b > lo - 0.5 * h && b <= hi + 0.5 * h) {
            continue;
        }
        let dv = (v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2]) / (12.0 * h);
        let excess = dv - bound[k];
        worst = Some(worst.map_or(excess, |w: f64| w.max(excess)));
    }
    worst
}

/// `‖θ - ϑ‖²_{L₂}` by trapezoid; `None` unless the run carries a filter state.
pub fn filter_gap_l2_sq(traj: &Trajectory) -> Option<f64> {
    let gaps: Option<Vec<f64>> = traj.samples.iter().map(Sample::filter_gap_sq).collect();
    Some(trapezoid(&traj.times(), &gaps?))
}

/// Sign changes of `values` at or after `after`, ignoring samples smaller
/// than `deadband` in magnitude.
pub fn zero_crossings(ts: &[f64], values: &[f64], after: f64, deadband: f64) -> usize {
    let mut last_sign = 0.0;
    let mut count = 0;
    for (_, &v) in ts.iter().zip(values).filter(|(t, _)| **t >= after) {
        if v.abs() <= deadband {
            continue;
        }
        let s = v.signum();
        if last_sign != 0.0 && s != last_sign {
            count += 1;
        }
        last_sign = s;
    }
    count
}

/// Earliest sample time after which `|values|` stays below `tol` for the rest
/// of the record.
pub fn settling_time(ts: &[f64], values: &[f64], tol: f64) -> Option<f64> {
    match values.iter().rposition(|v| v.abs() >= tol) {
        None => ts.first().copied(),
        Some(i) if i + 1 < ts.len() => Some(ts[i + 1]),
        Some(_) => None,
    }
}
