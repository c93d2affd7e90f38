//! Time-varying features φ(t) and reference commands.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// One channel `offset + amplitude * sin(omega * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub offset: f64,
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn constant(value: f64) -> Self {
        Sinusoid { offset: value, amplitude: 0.0, omega: 0.0, phase: 0.0 }
    }

    pub fn sin(offset: f64, amplitude: f64, omega: f64) -> Self {
        Sinusoid { offset, amplitude, omega, phase: 0.0 }
    }

    pub fn cos(offset: f64, amplitude: f64, omega: f64) -> Self {
        Sinusoid { offset, amplitude, omega, phase: std::f64::consts::FRAC_PI_2 }
    }

    fn value(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (self.omega * t + self.phase).sin()
    }

    fn rate(&self, t: f64) -> f64 {
        self.amplitude * self.omega * (self.omega * t + self.phase).cos()
    }
}

/// A step in a piecewise-constant profile: from `time` on the feature is `value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub time: f64,
    pub value: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSignal {
    /// Piecewise constant; `initial` holds before the first step. Steps are
    /// sorted by time and the new value applies at the step instant itself.
    Steps { initial: Vector, steps: Vec<Step> },
    SinusoidBank(Vec<Sinusoid>),
    /// φ = x, closed through the plant state. Not evaluable on its own.
    StateFeedback { dim: usize },
}

impl FeatureSignal {
    pub fn steps(initial: Vector, mut steps: Vec<Step>) -> Result<Self> {
        for s in &steps {
            if s.value.dim() != initial.dim() {
                return Err(Error::DimensionMismatch { expected: initial.dim(), got: s.value.dim() });
            }
            if !(s.time.is_finite() && s.time >= 0.0) {
                return Err(Error::InvalidConfig(format!("bad step time {}", s.time)));
            }
        }
        steps.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(FeatureSignal::Steps { initial, steps })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureSignal::Steps { initial, .. } => initial.dim(),
            FeatureSignal::SinusoidBank(ch) => ch.len(),
            FeatureSignal::StateFeedback { dim } => *dim,
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self, FeatureSignal::Steps { .. })
    }

    /// Step instants, empty for smooth kinds.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            FeatureSignal::Steps { steps, .. } => steps.iter().map(|s| s.time).collect(),
            _ => Vec::new(),
        }
    }

    /// Rounds every step instant to the nearest multiple of `step` past `t0`,
    /// computed as `t0 + k * step` so it coincides with integrator nodes.
    pub fn snapped_to_grid(&self, t0: f64, step: f64) -> Self {
        match self {
            FeatureSignal::Steps { initial, steps } => FeatureSignal::Steps {
                initial: initial.clone(),
                steps: steps
                    .iter()
                    .map(|s| Step { time: snap(s.time, t0, step), value: s.value.clone() })
                    .collect(),
            },
            other => other.clone(),
        }
    }
}

pub(crate) fn snap(t: f64, t0: f64, step: f64) -> f64 {
    let k = ((t - t0) / step).round().max(0.0);
    t0 + k * step
}

/// φ(t). State-feedback features evaluate to zero here; the simulator
/// substitutes the plant state.
pub fn eval_feature(sig: &FeatureSignal, t: f64) -> Vector {
    match sig {
        FeatureSignal::Steps { initial, steps } => steps
            .iter()
            .rev()
            .find(|s| t >= s.time)
            .map_or_else(|| initial.clone(), |s| s.value.clone()),
        FeatureSignal::SinusoidBank(ch) => ch.iter().map(|c| c.value(t)).collect::<Vec<_>>().into(),
        FeatureSignal::StateFeedback { dim } => Vector::zeros(*dim),
    }
}

/// φ̇(t), exact.
pub fn eval_feature_rate(sig: &FeatureSignal, t: f64) -> Result<Vector> {
    match sig {
        FeatureSignal::Steps { initial, .. } => Ok(Vector::zeros(initial.dim())),
        FeatureSignal::SinusoidBank(ch) => Ok(ch.iter().map(|c| c.rate(t)).collect::<Vec<_>>().into()),
        FeatureSignal::StateFeedback { .. } => Err(Error::NoAnalyticRate),
    }
}

/// Trapezoid approximation of `∫_t^{t+window} φ φᵀ dτ`.
pub fn pe_gram(sig: &FeatureSignal, t: f64, window: f64, quad_step: f64) -> Result<Matrix> {
    if !(window > 0.0 && quad_step > 0.0) {
        return Err(Error::InvalidConfig("window and quadrature step must be positive".into()));
    }
    let n = sig.dim();
    let intervals = (window / quad_step).ceil().max(1.0) as usize;
    let h = window / intervals as f64;
    let mut gram = Matrix::zeros(n, n);
    for k in 0..=intervals {
        let w = if k == 0 || k == intervals { 0.5 * h } else { h };
        let phi = eval_feature(sig, t + k as f64 * h);
        gram = gram.try_add(&Matrix::outer(&phi, &phi).scaled(w))?;
    }
    Ok(gram)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CommandSignal {
    Zero,
    /// `value` from `onset` on, zero before.
    ConstantAfter { onset: f64, value: f64 },
}

impl CommandSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            CommandSignal::Zero => 0.0,
            CommandSignal::ConstantAfter { onset, value } => {
                if t >= onset {
                    value
                } else {
                    0.0
                }
            }
        }
    }

    pub fn onset(&self) -> Option<f64> {
        match *self {
            CommandSignal::Zero => None,
            CommandSignal::ConstantAfter { onset, .. } => Some(onset),
        }
    }

    pub fn snapped_to_grid(&self, t0: f64, step: f64) -> Self {
        match *self {
            CommandSignal::Zero => CommandSignal::Zero,
            CommandSignal::ConstantAfter { onset, value } => {
                CommandSignal::ConstantAfter { onset: snap(onset, t0, step), value }
            }
        }
    }
}

/// `(1, 1 + a sin(ωt), 1 + a cos(ωt))`
pub fn offset_sinusoid_triple(amplitude: f64, omega: f64) -> FeatureSignal {
    FeatureSignal::SinusoidBank(vec![
        Sinusoid::constant(1.0),
        Sinusoid::sin(1.0, amplitude, omega),
        Sinusoid::cos(1.0, amplitude, omega),
    ])
}
