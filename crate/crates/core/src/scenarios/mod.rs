//! Named experiment configurations and the Monte-Carlo runner.

mod simulate;

pub use simulate::{draw_system, form_samples, simulate, DrawModel, Rhs, RunSpec};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::Trajectory;
use crate::error::{Error, Result};
use crate::integrator::IntegrationConfig;
use crate::linalg::Vector;
use crate::models::{build_f16_plant, RegressionModel};
use crate::signals::{offset_sinusoid_triple, CommandSignal, FeatureSignal, Sinusoid, Step};
use crate::tuners::{BaselineParams, Law, TunerConfig};

pub const DEFAULT_DRAWS: usize = 20;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_MAX_SAMPLES: usize = 5000;
pub const REGRESSION_HORIZON: f64 = 50.0;
pub const MRAC_HORIZON: f64 = 40.0;
/// Quantile levels of the shaded error bands.
pub const BAND_LEVELS: [f64; 3] = [0.025, 0.5, 0.975];

/// Feature profiles the regression scenarios are built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureProfile {
    /// Zero, then (1,1,1) at t = 0.1, then (2,-1,-2) at t = 25.
    TwoStep,
    /// Zero, then (1,1,1) at t = 0.1.
    StepOnly,
    /// (1, 1 + a sin ωt, 1 + a cos ωt)
    OffsetSinusoid { amplitude: f64, omega: f64 },
    /// (1, 1 + a sin ωt, 1)
    SingleSinusoid { amplitude: f64, omega: f64 },
}

impl FeatureProfile {
    pub fn kind(&self) -> &'static str {
        match self {
            FeatureProfile::TwoStep => "two-step",
            FeatureProfile::StepOnly => "step-only",
            FeatureProfile::OffsetSinusoid { .. } => "offset-sinusoid",
            FeatureProfile::SingleSinusoid { .. } => "single-sinusoid",
        }
    }

    pub fn signal(&self) -> FeatureSignal {
        let ones = Step { time: 0.1, value: [1.0, 1.0, 1.0].into() };
        match *self {
            FeatureProfile::TwoStep => FeatureSignal::Steps {
                initial: Vector::zeros(3),
                steps: vec![ones, Step { time: 25.0, value: [2.0, -1.0, -2.0].into() }],
            },
            FeatureProfile::StepOnly => FeatureSignal::Steps { initial: Vector::zeros(3), steps: vec![ones] },
            FeatureProfile::OffsetSinusoid { amplitude, omega } => offset_sinusoid_triple(amplitude, omega),
            FeatureProfile::SingleSinusoid { amplitude, omega } => FeatureSignal::SinusoidBank(vec![
                Sinusoid::constant(1.0),
                Sinusoid::sin(1.0, amplitude, omega),
                Sinusoid::constant(1.0),
            ]),
        }
    }
}

/// Members of the frequency-sweep family, by tag.
pub fn sweep_variants() -> Vec<(&'static str, FeatureProfile)> {
    use std::f64::consts::PI;
    vec![
        ("omega-2pi-50", FeatureProfile::OffsetSinusoid { amplitude: 3.0, omega: 2.0 * PI / 50.0 }),
        ("omega-1-3", FeatureProfile::OffsetSinusoid { amplitude: 3.0, omega: 1.0 / 3.0 }),
        ("omega-1", FeatureProfile::OffsetSinusoid { amplitude: 3.0, omega: 1.0 }),
        ("step-only", FeatureProfile::StepOnly),
        ("single-sinusoid", FeatureProfile::SingleSinusoid { amplitude: 3.0, omega: 1.0 }),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `theta_star` is the nominal parameter the draws perturb.
    Regression { theta_star: Vector, feature: FeatureProfile },
    /// F-16 short-period plant.
    Mrac { command: CommandSignal },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaStarLaw {
    /// Always the nominal parameter.
    Nominal,
    /// Nominal plus `Z ~ Unif([-h, h]^n)`.
    UniformBox { half_width: f64 },
    /// Nominal times a scalar `W ~ Unif([lo, hi])`, redrawn while the closed
    /// loop is not Hurwitz.
    UniformScale { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub draws: usize,
    pub seed: u64,
    pub theta_star_law: ThetaStarLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub model: ModelSpec,
    pub laws: Vec<Law>,
    pub gamma: f64,
    pub beta: f64,
    /// `None` picks the μ under which the Lyapunov rate bound holds.
    pub mu: Option<f64>,
    /// `None` means `C = γβ/4`.
    pub baseline_c: Option<f64>,
    pub baseline_p: f64,
    pub baseline_t_shift: f64,
    pub horizon: f64,
    pub step: f64,
    pub max_samples: usize,
    pub divergence_threshold: f64,
    pub monte_carlo: MonteCarlo,
    /// Variant tags of a sweep family; empty for a single scenario.
    pub sweep: Vec<String>,
}

impl ScenarioConfig {
    fn base(name: &str, description: &str, model: ModelSpec, laws: Vec<Law>, horizon: f64, law: ThetaStarLaw) -> Self {
        ScenarioConfig {
            name: name.into(),
            description: description.into(),
            model,
            laws,
            gamma: 0.1,
            beta: 1.0,
            mu: None,
            baseline_c: None,
            baseline_p: 2.0,
            baseline_t_shift: BaselineParams::DEFAULT_T_SHIFT,
            horizon,
            step: DEFAULT_STEP,
            max_samples: DEFAULT_MAX_SAMPLES,
            divergence_threshold: crate::integrator::DEFAULT_DIVERGENCE_THRESHOLD,
            monte_carlo: MonteCarlo { draws: DEFAULT_DRAWS, seed: 0, theta_star_law: law },
            sweep: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.laws.is_empty() {
            return bad(format!("{}: no update laws selected", self.name));
        }
        if self.monte_carlo.draws == 0 {
            return bad(format!("{}: draws must be at least 1", self.name));
        }
        if matches!(self.model, ModelSpec::Mrac { .. }) && self.laws.contains(&Law::WibisonoBaseline) {
            return bad(format!("{}: the baseline law is defined for regression only", self.name));
        }
        if self.max_samples < 2 {
            return bad("max_samples must be at least 2".into());
        }
        match (&self.model, self.monte_carlo.theta_star_law) {
            (ModelSpec::Mrac { .. }, ThetaStarLaw::UniformBox { .. }) => {
                return bad("MRAC draws scale the nominal gain; use a scale law".into())
            }
            (ModelSpec::Regression { .. }, ThetaStarLaw::UniformScale { .. }) => {
                return bad("regression draws perturb additively; use a box law".into())
            }
            (ModelSpec::Regression { theta_star, .. }, _) if theta_star.dim() != 3 => {
                return Err(Error::DimensionMismatch { expected: 3, got: theta_star.dim() })
            }
            _ => {}
        }
        self.integration()?;
        self.tuner(Law::FirstOrder, 1.0).map(|_| ())
    }

    pub fn is_sweep(&self) -> bool {
        !self.sweep.is_empty()
    }

    /// One config per sweep member, named `family.tag`; a plain scenario
    /// expands to itself.
    pub fn expand(&self) -> Result<Vec<ScenarioConfig>> {
        if !self.is_sweep() {
            return Ok(vec![self.clone()]);
        }
        let known = sweep_variants();
        self.sweep
            .iter()
            .map(|tag| {
                let (_, profile) = known
                    .iter()
                    .find(|(k, _)| k == tag)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep variant {tag}")))?;
                let ModelSpec::Regression { theta_star, .. } = &self.model else {
                    return Err(Error::InvalidConfig("sweeps vary the regression feature".into()));
                };
                Ok(ScenarioConfig {
                    name: format!("{}.{}", self.name, tag),
                    model: ModelSpec::Regression { theta_star: theta_star.clone(), feature: *profile },
                    sweep: Vec::new(),
                    ..self.clone()
                })
            })
            .collect()
    }

    pub fn integration(&self) -> Result<IntegrationConfig> {
        let mut cfg = IntegrationConfig::new(self.step, self.horizon)?;
        cfg.divergence_threshold = self.divergence_threshold;
        cfg.validate()?;
        let every = cfg.log_every_for(self.max_samples);
        Ok(cfg.with_log_every(every))
    }

    /// Tuner for `law`, with `default_mu` standing in when μ is not overridden.
    pub fn tuner(&self, law: Law, default_mu: f64) -> Result<TunerConfig> {
        let baseline = BaselineParams {
            p: self.baseline_p,
            c: self.baseline_c.unwrap_or(self.gamma * self.beta / 4.0),
            t_shift: self.baseline_t_shift,
        };
        if !(baseline.p > 0.0 && baseline.c > 0.0 && baseline.t_shift > 0.0) {
            return Err(Error::InvalidConfig("baseline p, C and time shift must be positive".into()));
        }
        Ok(TunerConfig::new(law, self.gamma, self.beta, self.mu.unwrap_or(default_mu))?.with_baseline(baseline))
    }
}

/// The four built-in experiments.
pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    let nominal: Vector = [1.0, -2.0, 5.0].into();
    let regression_laws = Law::ALL.to_vec();
    let box_law = ThetaStarLaw::UniformBox { half_width: 10.0 };
    let mut sweep = ScenarioConfig::base(
        "reg-freq-sweep",
        "regression under features of increasing time variation",
        ModelSpec::Regression {
            theta_star: nominal.clone(),
            feature: FeatureProfile::OffsetSinusoid { amplitude: 3.0, omega: 1.0 },
        },
        regression_laws.clone(),
        REGRESSION_HORIZON,
        box_law,
    );
    sweep.sweep = sweep_variants().into_iter().map(|(tag, _)| tag.to_string()).collect();
    vec![
        ScenarioConfig::base(
            "reg-two-step",
            "regression with a feature stepping to (1,1,1) then (2,-1,-2)",
            ModelSpec::Regression { theta_star: nominal.clone(), feature: FeatureProfile::TwoStep },
            regression_laws.clone(),
            REGRESSION_HORIZON,
            box_law,
        ),
        ScenarioConfig::base(
            "reg-pe",
            "regression with a persistently exciting sinusoidal feature",
            ModelSpec::Regression {
                theta_star: nominal,
                feature: FeatureProfile::OffsetSinusoid { amplitude: 3.0, omega: 1.0 },
            },
            regression_laws,
            REGRESSION_HORIZON,
            box_law,
        ),
        sweep,
        ScenarioConfig::base(
            "f16-mrac",
            "F-16 short-period pitch-rate tracking with a unit command at t=5",
            ModelSpec::Mrac { command: CommandSignal::ConstantAfter { onset: 5.0, value: 1.0 } },
            vec![Law::FirstOrder, Law::HigherOrder],
            MRAC_HORIZON,
            ThetaStarLaw::UniformScale { lo: -0.5, hi: 2.0 },
        ),
    ]
}

/// Looks up a built-in scenario or a member of a built-in sweep (`family.tag`).
pub fn find_builtin(name: &str) -> Option<ScenarioConfig> {
    let all = builtin_scenarios();
    if let Some(cfg) = all.iter().find(|c| c.name == name) {
        return Some(cfg.clone());
    }
    all.iter()
        .filter(|c| c.is_sweep())
        .filter_map(|c| c.expand().ok())
        .flatten()
        .find(|c| c.name == name)
}

/// The sampled truth of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawRecord {
    pub index: usize,
    pub theta_star: Vector,
    /// Gain scale `W`, MRAC only.
    pub scale: Option<f64>,
    /// Non-Hurwitz scale draws thrown away before this one.
    pub rejections: usize,
}

/// Samples every draw's truth up front, in draw order, from one seeded
/// ChaCha8 stream.
pub fn sample_draws(cfg: &ScenarioConfig) -> Result<Vec<DrawRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.monte_carlo.seed);
    let nominal: Vector = match &cfg.model {
        ModelSpec::Regression { theta_star, .. } => theta_star.clone(),
        ModelSpec::Mrac { .. } => crate::models::F16_THETA_STAR.into(),
    };
    (0..cfg.monte_carlo.draws)
        .map(|index| match cfg.monte_carlo.theta_star_law {
            ThetaStarLaw::Nominal => Ok(DrawRecord {
                index,
                theta_star: nominal.clone(),
                scale: matches!(cfg.model, ModelSpec::Mrac { .. }).then_some(1.0),
                rejections: 0,
            }),
            ThetaStarLaw::UniformBox { half_width } => {
                let dist = Uniform::new_inclusive(-half_width, half_width);
                let theta_star = nominal.iter().map(|c| c + dist.sample(&mut rng)).collect::<Vec<_>>().into();
                Ok(DrawRecord { index, theta_star, scale: None, rejections: 0 })
            }
            ThetaStarLaw::UniformScale { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::InvalidConfig(format!("empty scale range [{lo}, {hi}]")));
                }
                let dist = Uniform::new_inclusive(lo, hi);
                let mut rejections = 0;
                loop {
                    let w = dist.sample(&mut rng);
                    match build_f16_plant(w, CommandSignal::Zero) {
                        Ok(p) => {
                            return Ok(DrawRecord { index, theta_star: p.theta_star, scale: Some(w), rejections })
                        }
                        Err(Error::NotHurwitz) => rejections += 1,
                        Err(e) => return Err(e),
                    }
                    if rejections > 10_000 {
                        return Err(Error::InvalidConfig("scale range yields no stable closed loop".into()));
                    }
                }
            }
        })
        .collect()
}

/// Builds the model of one draw.
pub fn draw_model(cfg: &ScenarioConfig, draw: &DrawRecord) -> Result<DrawModel> {
    match &cfg.model {
        ModelSpec::Regression { feature, .. } => {
            Ok(DrawModel::Regression(RegressionModel::new(draw.theta_star.clone(), feature.signal())?))
        }
        ModelSpec::Mrac { command } => Ok(DrawModel::Mrac(build_f16_plant(draw.scale.unwrap_or(1.0), *command)?)),
    }
}

/// Runs `law` on one draw.
pub fn run_draw(cfg: &ScenarioConfig, draw: &DrawRecord, law: Law) -> Result<(Trajectory, TunerConfig)> {
    let model = draw_model(cfg, draw)?;
    let default_mu = model.default_mu(cfg.gamma, cfg.beta);
    let tuner = cfg.tuner(law, default_mu)?;
    let spec = RunSpec { tuner, integration: cfg.integration()?, rate_bound: cfg.mu.is_none() };
    Ok((simulate(&model, &spec)?, tuner))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Band {
    pub t: Vec<f64>,
    pub lo: Vec<f64>,
    pub median: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawResult {
    pub law: Law,
    /// One per draw, in draw order.
    pub trajectories: Vec<Trajectory>,
    /// μ in force per draw.
    pub mu: Vec<f64>,
    /// Error-norm band over the completed draws.
    pub band: Band,
    /// Every draw completed.
    pub stable: bool,
}

impl LawResult {
    pub fn final_regrets(&self) -> Vec<f64> {
        self.trajectories.iter().map(Trajectory::final_regret).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub draws: Vec<DrawRecord>,
    pub laws: Vec<LawResult>,
}

impl ScenarioResult {
    pub fn law(&self, law: Law) -> Option<&LawResult> {
        self.laws.iter().find(|l| l.law == law)
    }

    pub fn total_rejections(&self) -> usize {
        self.draws.iter().map(|d| d.rejections).sum()
    }
}

/// Runs every law on every draw. Draws run in parallel; results come back
/// in draw order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    if cfg.is_sweep() {
        return Err(Error::InvalidConfig(format!("{} is a sweep; run its members", cfg.name)));
    }
    let draws = sample_draws(cfg)?;
    let per_draw: Vec<Vec<(Trajectory, TunerConfig)>> = draws
        .par_iter()
        .map(|d| cfg.laws.iter().map(|&law| run_draw(cfg, d, law)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let laws = cfg
        .laws
        .iter()
        .enumerate()
        .map(|(k, &law)| {
            let (trajectories, mu): (Vec<_>, Vec<_>) = per_draw.iter().map(|runs| (runs[k].0.clone(), runs[k].1.mu)).unzip();
            let stable = trajectories.iter().all(|t| t.status.is_completed());
            let band = error_band(&trajectories);
            LawResult { law, trajectories, mu, band, stable }
        })
        .collect();
    Ok(ScenarioResult { config: cfg.clone(), draws, laws })
}

fn error_band(trajectories: &[Trajectory]) -> Band {
    let done: Vec<&Trajectory> = trajectories.iter().filter(|t| t.status.is_completed()).collect();
    let Some(first) = done.first() else {
        return Band::default();
    };
    let series: Vec<Vec<f64>> = done.iter().map(|t| t.error_norms()).collect();
    let [lo, median, hi] = quantile_band(&series, BAND_LEVELS);
    Band { t: first.times(), lo, median, hi }
}

/// Empirical quantile of sorted data, interpolating linearly between order
/// statistics at position `q (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise quantiles of equally sampled series.
pub fn quantile_band<const K: usize>(series: &[Vec<f64>], levels: [f64; K]) -> [Vec<f64>; K] {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut out: [Vec<f64>; K] = std::array::from_fn(|_| Vec::with_capacity(len));
    let mut column = Vec::with_capacity(series.len());
    for i in 0..len {
        column.clear();
        column.extend(series.iter().map(|s| s[i]));
        column.sort_by(f64::total_cmp);
        for (k, &q) in levels.iter().enumerate() {
            out[k].push(quantile_sorted(&column, q));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_builtins() {
        let names: Vec<String> = builtin_scenarios().into_iter().map(|c| c.name).collect();
        assert_eq!(names, ["reg-two-step", "reg-pe", "reg-freq-sweep", "f16-mrac"]);
        for c in builtin_scenarios() {
            c.validate().unwrap();
        }
    }

    #[test]
    fn sweep_expands_to_five_members() {
        let sweep = find_builtin("reg-freq-sweep").unwrap();
        let members = sweep.expand().unwrap();
        assert_eq!(members.len(), 5);
        assert!(members.iter().all(|m| !m.is_sweep()));
        let low = find_builtin("reg-freq-sweep.omega-2pi-50").unwrap();
        match low.model {
            ModelSpec::Regression { feature: FeatureProfile::OffsetSinusoid { omega, .. }, .. } => {
                assert!((omega - 2.0 * std::f64::consts::PI / 50.0).abs() < 1e-15)
            }
            _ => panic!("wrong profile"),
        }
    }

    #[test]
    fn nominal_draw_is_the_nominal_parameter() {
        let mut cfg = find_builtin("reg-pe").unwrap();
        cfg.monte_carlo.draws = 1;
        cfg.monte_carlo.theta_star_law = ThetaStarLaw::Nominal;
        assert_eq!(sample_draws(&cfg).unwrap()[0].theta_star.as_slice(), &[1.0, -2.0, 5.0]);

        let mut f16 = find_builtin("f16-mrac").unwrap();
        f16.monte_carlo.theta_star_law = ThetaStarLaw::Nominal;
        f16.monte_carlo.draws = 1;
        let d = &sample_draws(&f16).unwrap()[0];
        assert_eq!(d.theta_star.as_slice(), &crate::models::F16_THETA_STAR);
    }

    #[test]
    fn draws_are_seeded_and_in_range() {
        let cfg = find_builtin("reg-pe").unwrap();
        let a = sample_draws(&cfg).unwrap();
        assert_eq!(a, sample_draws(&cfg).unwrap());
        for d in &a {
            for (v, c) in d.theta_star.iter().zip([1.0, -2.0, 5.0]) {
                assert!((v - c).abs() <= 10.0);
            }
        }
        let mut other = cfg.clone();
        other.monte_carlo.seed = 1;
        assert_ne!(a, sample_draws(&other).unwrap());
    }

    #[test]
    fn scale_draws_reject_unstable_gains() {
        let mut cfg = find_builtin("f16-mrac").unwrap();
        cfg.monte_carlo.draws = 200;
        let draws = sample_draws(&cfg).unwrap();
        assert!(draws.iter().all(|d| d.scale.unwrap() > 0.0 && d.scale.unwrap() <= 2.0));
        // a fifth of the range is non-positive
        let rejected: usize = draws.iter().map(|d| d.rejections).sum();
        assert!(rejected > 10, "only {rejected} rejections");
    }

    #[test]
    fn mrac_excludes_baseline() {
        let mut cfg = find_builtin("f16-mrac").unwrap();
        cfg.laws.push(Law::WibisonoBaseline);
        assert!(cfg.validate().is_err());
        let mut cfg = find_builtin("reg-pe").unwrap();
        cfg.laws.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn quantile_examples() {
        let one = vec![vec![1.0, 2.0, 3.0]];
        let [lo, md, hi] = quantile_band(&one, BAND_LEVELS);
        assert_eq!((lo.clone(), md.clone()), (one[0].clone(), one[0].clone()));
        assert_eq!(hi, one[0]);

        let constant = vec![vec![4.0; 5]; 7];
        let bands = quantile_band(&constant, BAND_LEVELS);
        assert!(bands.iter().all(|b| b.iter().all(|&x| x == 4.0)));

        // order statistics 0..=100: position q·100
        let spread: Vec<Vec<f64>> = (0..=100).rev().map(|k| vec![k as f64]).collect();
        let [lo, md, hi] = quantile_band(&spread, BAND_LEVELS);
        assert_eq!(md[0], 50.0);
        assert!((lo[0] - 2.5).abs() < 1e-12 && (hi[0] - 97.5).abs() < 1e-12);
    }

    #[test]
    fn short_run_end_to_end() {
        let mut cfg = find_builtin("reg-two-step").unwrap();
        cfg.monte_carlo.draws = 3;
        cfg.horizon = 2.0;
        let res = run_scenario(&cfg).unwrap();
        assert_eq!(res.laws.len(), 3);
        for l in &res.laws {
            assert!(l.stable);
            assert_eq!(l.trajectories.len(), 3);
            assert_eq!(l.band.t.len(), l.trajectories[0].samples.len());
            for i in 0..l.band.t.len() {
                assert!(l.band.lo[i] <= l.band.median[i] && l.band.median[i] <= l.band.hi[i]);
            }
        }
        assert_eq!(res, run_scenario(&cfg).unwrap());
    }
}
