//! Fixed-step classic Runge–Kutta 4 over a flat state vector.

use crate::error::{Error, Result};

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    pub step: f64,
    pub horizon: f64,
    pub log_every: usize,
    pub divergence_threshold: f64,
}

impl IntegrationConfig {
    pub fn new(step: f64, horizon: f64) -> Result<Self> {
        let cfg = IntegrationConfig {
            step,
            horizon,
            log_every: 1,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_log_every(mut self, log_every: usize) -> Self {
        self.log_every = log_every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.step) {
            return Err(Error::InvalidConfig(format!("horizon {} shorter than step", self.horizon)));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidConfig("log_every must be at least 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidConfig("divergence threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Smallest divisor of the step count that keeps the logged samples
    /// (initial one included) at or below `max_samples`, so the log grid is
    /// uniform and ends on the horizon.
    pub fn log_every_for(&self, max_samples: usize) -> usize {
        let n = self.total_steps().max(1);
        (1..=n)
            .find(|d| n % d == 0 && n / d < max_samples.max(2))
            .unwrap_or(n)
    }
}

/// Where a right-hand side is being evaluated.
///
/// `t` is the stage time. `segment_start` is the node the current step began
/// at; piecewise-constant inputs are sampled there so that a jump sitting on
/// a node never leaks into the step before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub t: f64,
    pub segment_start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged { t: f64 },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: RunStatus,
    pub steps_taken: usize,
    pub t_final: f64,
    pub state: Vec<f64>,
}

/// [`integrate_guarded`] without an extra divergence predicate.
pub fn integrate<F, O>(rhs: F, t0: f64, init: &[f64], cfg: &IntegrationConfig, observer: O) -> Result<Outcome>
where
    F: FnMut(Stage, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Result<()>,
{
    integrate_guarded(rhs, t0, init, cfg, observer, |_, _| false)
}

/// Integrates from `t0` for `cfg.horizon`, calling `observer(t, y)` at step 0
/// and every `log_every` steps. Stops with `Diverged` as soon as a state entry
/// is non-finite, exceeds the threshold in magnitude, or `diverged(t, y)`
/// says so; the offending state is not observed.
pub fn integrate_guarded<F, O, G>(
    mut rhs: F,
    t0: f64,
    init: &[f64],
    cfg: &IntegrationConfig,
    mut observer: O,
    diverged: G,
) -> Result<Outcome>
where
    F: FnMut(Stage, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Result<()>,
    G: Fn(f64, &[f64]) -> bool,
{
    cfg.validate()?;
    let n = init.len();
    let h = cfg.step;
    let steps = cfg.total_steps();
    let mut y = init.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];

    observer(t0, &y)?;
    let mut eval = |stage: Stage, y: &[f64], out: &mut [f64]| -> Result<()> {
        rhs(stage, y, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDerivative { t: stage.t });
        }
        Ok(())
    };

    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let at = |c: f64| Stage { t: t + c * h, segment_start: t };
        eval(at(0.0), &y, &mut k1)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        eval(at(0.5), &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        eval(at(0.5), &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        eval(at(1.0), &tmp, &mut k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        let t_next = t0 + (k + 1) as f64 * h;
        let blown = y.iter().any(|v| !v.is_finite() || v.abs() > cfg.divergence_threshold);
        if blown || diverged(t_next, &y) {
            return Ok(Outcome { status: RunStatus::Diverged { t: t_next }, steps_taken: k + 1, t_final: t_next, state: y });
        }
        if (k + 1) % cfg.log_every == 0 {
            observer(t_next, &y)?;
        }
    }
    Ok(Outcome { status: RunStatus::Completed, steps_taken: steps, t_final: t0 + steps as f64 * h, state: y })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservedOrder {
    Estimated(f64),
    /// Terminal states agree to rounding, so no order can be read off.
    NotApplicable,
}

/// Richardson estimate of the convergence order from terminal states at
/// three step sizes in geometric progression (coarsest first).
pub fn convergence_step_check<F>(
    mut rhs: F,
    t0: f64,
    init: &[f64],
    horizon: f64,
    steps: &[f64],
) -> Result<ObservedOrder>
where
    F: FnMut(Stage, &[f64], &mut [f64]) -> Result<()>,
{
    if steps.len() < 3 {
        return Err(Error::InvalidConfig("need at least three step sizes".into()));
    }
    let ratio = steps[0] / steps[1];
    for w in steps.windows(2) {
        if ((w[0] / w[1]) - ratio).abs() > 1e-9 * ratio || ratio <= 1.0 {
            return Err(Error::InvalidConfig("step sizes must shrink geometrically".into()));
        }
    }
    let mut finals = Vec::with_capacity(steps.len());
    for &h in steps {
        let cfg = IntegrationConfig::new(h, horizon)?;
        let out = integrate(&mut rhs, t0, init, &cfg, |_, _| Ok(()))?;
        if !out.status.is_completed() {
            return Err(Error::InvalidConfig(format!("run at step {h} diverged")));
        }
        finals.push(out.state);
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = finals.last().map_or(0.0, |y| y.iter().map(|v| v * v).sum::<f64>().sqrt());
    let floor = 64.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let n = finals.len();
    let coarse = dist(&finals[n - 3], &finals[n - 2]);
    let fine = dist(&finals[n - 2], &finals[n - 1]);
    if coarse <= floor || fine <= floor {
        return Ok(ObservedOrder::NotApplicable);
    }
    Ok(ObservedOrder::Estimated((coarse / fine).ln() / ratio.ln()))
}
