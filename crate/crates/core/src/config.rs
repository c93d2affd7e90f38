//! Flat `dotted.key = value` text for scenario configs.
//!
//! A file either names a built-in to start from (`scenario.base`) or a model
//! kind (`model.kind`), then overrides individual keys. Keys under
//! `manifest.`, `summary.` and `draw.` are ignored so a run manifest loads as
//! a config.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenarios::{find_builtin, FeatureProfile, ModelSpec, ScenarioConfig, ThetaStarLaw};
use crate::signals::CommandSignal;
use crate::tuners::Law;

const IGNORED_PREFIXES: [&str; 3] = ["manifest.", "summary.", "draw."];

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", i + 1)))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn num(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::InvalidConfig(format!("{key}: not a number: {v}")))?;
    if !x.is_finite() {
        return Err(Error::InvalidConfig(format!("{key}: must be finite")));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::InvalidConfig(format!("{key}: not a count: {v}")))
}

fn auto_or_num(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

pub fn parse_laws(v: &str) -> Result<Vec<Law>> {
    list(v).iter().map(|s| s.parse()).collect()
}

fn skeleton(kind: &str) -> Result<ScenarioConfig> {
    let base = match kind {
        "regression" => "reg-pe",
        "mrac" => "f16-mrac",
        other => return Err(Error::InvalidConfig(format!("model.kind: expected regression or mrac, got {other}"))),
    };
    Ok(find_builtin(base).expect("built-in skeleton exists"))
}

/// Builds a config from key/value pairs.
pub fn config_from_pairs(pairs: &[(String, String)]) -> Result<ScenarioConfig> {
    let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
    let mut cfg = match (get("scenario.base"), get("model.kind")) {
        (Some(base), _) => find_builtin(base).ok_or_else(|| Error::UnknownScenario(base.to_string()))?,
        (None, Some(kind)) => skeleton(kind)?,
        (None, None) => return Err(Error::InvalidConfig("config needs scenario.base or model.kind".into())),
    };
    for (k, v) in pairs {
        if k == "scenario.base" || IGNORED_PREFIXES.iter().any(|p| k.starts_with(p)) {
            continue;
        }
        apply_override(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    config_from_pairs(&parse_pairs(&text)?)
}

fn profile_parts(p: FeatureProfile) -> (&'static str, f64, f64) {
    match p {
        FeatureProfile::OffsetSinusoid { amplitude, omega } | FeatureProfile::SingleSinusoid { amplitude, omega } => {
            (p.kind(), amplitude, omega)
        }
        _ => (p.kind(), 3.0, 1.0),
    }
}

fn profile_from_parts(kind: &str, amplitude: f64, omega: f64) -> Result<FeatureProfile> {
    Ok(match kind {
        "two-step" => FeatureProfile::TwoStep,
        "step-only" => FeatureProfile::StepOnly,
        "offset-sinusoid" => FeatureProfile::OffsetSinusoid { amplitude, omega },
        "single-sinusoid" => FeatureProfile::SingleSinusoid { amplitude, omega },
        other => return Err(Error::InvalidConfig(format!("feature.kind: unknown profile {other}"))),
    })
}

/// Sets one key. Unknown keys are `BadOverrideKey`; bad values are
/// `InvalidConfig`.
pub fn apply_override(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<()> {
    let v = value;
    match key {
        "scenario.name" => cfg.name = v.to_string(),
        "scenario.description" => cfg.description = v.to_string(),
        "model.kind" => {
            let current = if matches!(cfg.model, ModelSpec::Regression { .. }) { "regression" } else { "mrac" };
            if v != current {
                return Err(Error::InvalidConfig(format!("model.kind is {current}; start from another scenario")));
            }
        }
        "model.theta_star" => match &mut cfg.model {
            ModelSpec::Regression { theta_star, .. } => {
                *theta_star = list(v).iter().map(|s| num(key, s)).collect::<Result<Vec<_>>>()?.into();
            }
            ModelSpec::Mrac { .. } => return Err(Error::BadOverrideKey(key.into())),
        },
        "feature.kind" | "feature.amplitude" | "feature.omega" => match &mut cfg.model {
            ModelSpec::Regression { feature, .. } => {
                let (mut kind, mut amp, mut omega) = profile_parts(*feature);
                match key {
                    "feature.kind" => kind = v,
                    "feature.amplitude" => amp = num(key, v)?,
                    _ => omega = num(key, v)?,
                }
                if key != "feature.kind" && matches!(*feature, FeatureProfile::TwoStep | FeatureProfile::StepOnly) {
                    return Err(Error::InvalidConfig(format!("{key} needs a sinusoidal feature.kind")));
                }
                *feature = profile_from_parts(kind, amp, omega)?;
            }
            ModelSpec::Mrac { .. } => return Err(Error::BadOverrideKey(key.into())),
        },
        "command.onset" | "command.value" => match &mut cfg.model {
            ModelSpec::Mrac { command } => {
                let (mut onset, mut val) = match *command {
                    CommandSignal::Zero => (0.0, 0.0),
                    CommandSignal::ConstantAfter { onset, value } => (onset, value),
                };
                if key == "command.onset" {
                    onset = num(key, v)?;
                } else {
                    val = num(key, v)?;
                }
                if onset < 0.0 {
                    return Err(Error::InvalidConfig("command.onset must be non-negative".into()));
                }
                *command = CommandSignal::ConstantAfter { onset, value: val };
            }
            ModelSpec::Regression { .. } => return Err(Error::BadOverrideKey(key.into())),
        },
        "laws" => cfg.laws = parse_laws(v)?,
        "tuner.gamma" => cfg.gamma = num(key, v)?,
        "tuner.beta" => cfg.beta = num(key, v)?,
        "tuner.mu" => cfg.mu = auto_or_num(key, v)?,
        "baseline.p" => cfg.baseline_p = num(key, v)?,
        "baseline.c" => cfg.baseline_c = auto_or_num(key, v)?,
        "baseline.t_shift" => cfg.baseline_t_shift = num(key, v)?,
        "sim.horizon" => cfg.horizon = num(key, v)?,
        "sim.step" => cfg.step = num(key, v)?,
        "sim.max_samples" => cfg.max_samples = count(key, v)?,
        "sim.divergence_threshold" => cfg.divergence_threshold = num(key, v)?,
        "monte_carlo.draws" => cfg.monte_carlo.draws = count(key, v)?,
        "monte_carlo.seed" => {
            cfg.monte_carlo.seed = v.parse().map_err(|_| Error::InvalidConfig(format!("{key}: not a seed: {v}")))?
        }
        "monte_carlo.theta_star_law" => {
            cfg.monte_carlo.theta_star_law = match v {
                "nominal" => ThetaStarLaw::Nominal,
                "uniform-box" => ThetaStarLaw::UniformBox { half_width: 10.0 },
                "uniform-scale" => ThetaStarLaw::UniformScale { lo: -0.5, hi: 2.0 },
                other => return Err(Error::InvalidConfig(format!("{key}: unknown law {other}"))),
            }
        }
        "monte_carlo.half_width" => match &mut cfg.monte_carlo.theta_star_law {
            ThetaStarLaw::UniformBox { half_width } => *half_width = num(key, v)?,
            _ => return Err(Error::InvalidConfig(format!("{key} applies to uniform-box only"))),
        },
        "monte_carlo.scale_lo" | "monte_carlo.scale_hi" => match &mut cfg.monte_carlo.theta_star_law {
            ThetaStarLaw::UniformScale { lo, hi } => {
                let x = num(key, v)?;
                if key.ends_with("lo") {
                    *lo = x;
                } else {
                    *hi = x;
                }
            }
            _ => return Err(Error::InvalidConfig(format!("{key} applies to uniform-scale only"))),
        },
        "sweep" => cfg.sweep = list(v),
        _ => return Err(Error::BadOverrideKey(key.into())),
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "auto".to_string(), |v| format!("{v:?}"))
}

/// Every key with its resolved value; feeding the result back through
/// [`config_from_pairs`] gives the same config.
pub fn config_to_pairs(cfg: &ScenarioConfig) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| out.push((k.to_string(), v));
    put("scenario.name", cfg.name.clone());
    put("scenario.description", cfg.description.clone());
    match &cfg.model {
        ModelSpec::Regression { theta_star, feature } => {
            put("model.kind", "regression".into());
            put("model.theta_star", theta_star.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","));
            let (kind, amp, omega) = profile_parts(*feature);
            put("feature.kind", kind.into());
            if matches!(feature, FeatureProfile::OffsetSinusoid { .. } | FeatureProfile::SingleSinusoid { .. }) {
                put("feature.amplitude", format!("{amp:?}"));
                put("feature.omega", format!("{omega:?}"));
            }
        }
        ModelSpec::Mrac { command } => {
            put("model.kind", "mrac".into());
            if let CommandSignal::ConstantAfter { onset, value } = command {
                put("command.onset", format!("{onset:?}"));
                put("command.value", format!("{value:?}"));
            }
        }
    }
    put("laws", cfg.laws.iter().map(|l| l.tag()).collect::<Vec<_>>().join(","));
    put("tuner.gamma", format!("{:?}", cfg.gamma));
    put("tuner.beta", format!("{:?}", cfg.beta));
    put("tuner.mu", fmt_opt(cfg.mu));
    put("baseline.p", format!("{:?}", cfg.baseline_p));
    put("baseline.c", fmt_opt(cfg.baseline_c));
    put("baseline.t_shift", format!("{:?}", cfg.baseline_t_shift));
    put("sim.horizon", format!("{:?}", cfg.horizon));
    put("sim.step", format!("{:?}", cfg.step));
    put("sim.max_samples", cfg.max_samples.to_string());
    put("sim.divergence_threshold", format!("{:?}", cfg.divergence_threshold));
    put("monte_carlo.draws", cfg.monte_carlo.draws.to_string());
    put("monte_carlo.seed", cfg.monte_carlo.seed.to_string());
    match cfg.monte_carlo.theta_star_law {
        ThetaStarLaw::Nominal => put("monte_carlo.theta_star_law", "nominal".into()),
        ThetaStarLaw::UniformBox { half_width } => {
            put("monte_carlo.theta_star_law", "uniform-box".into());
            put("monte_carlo.half_width", format!("{half_width:?}"));
        }
        ThetaStarLaw::UniformScale { lo, hi } => {
            put("monte_carlo.theta_star_law", "uniform-scale".into());
            put("monte_carlo.scale_lo", format!("{lo:?}"));
            put("monte_carlo.scale_hi", format!("{hi:?}"));
        }
    }
    put("sweep", cfg.sweep.join(","));
    out
}

pub fn render_pairs(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin_scenarios;

    #[test]
    fn builtins_round_trip() {
        for cfg in builtin_scenarios() {
            let text = render_pairs(&config_to_pairs(&cfg));
            let back = config_from_pairs(&parse_pairs(&text).unwrap()).unwrap();
            assert_eq!(back, cfg, "{text}");
        }
    }

    #[test]
    fn base_plus_overrides() {
        let text = "# tweak\nscenario.base = reg-pe\ntuner.beta = 10\nmonte_carlo.draws = 3\nlaws = ho, fo\n";
        let cfg = config_from_pairs(&parse_pairs(text).unwrap()).unwrap();
        assert_eq!(cfg.beta, 10.0);
        assert_eq!(cfg.monte_carlo.draws, 3);
        assert_eq!(cfg.laws, [Law::HigherOrder, Law::FirstOrder]);
        // C follows β unless pinned
        assert!((cfg.tuner(Law::WibisonoBaseline, 1.0).unwrap().baseline.c - 0.25).abs() < 1e-15);
    }

    #[test]
    fn manifest_sections_are_skipped() {
        let text = "scenario.base = f16-mrac\nmanifest.version = 0.1.0\nsummary.fo.status = completed\ndraw.0.scale = 1.2\n";
        assert!(config_from_pairs(&parse_pairs(text).unwrap()).is_ok());
    }

    #[test]
    fn bad_input() {
        let mut cfg = find_builtin("reg-pe").unwrap();
        assert_eq!(apply_override(&mut cfg, "tuner.nope", "1"), Err(Error::BadOverrideKey("tuner.nope".into())));
        assert!(matches!(apply_override(&mut cfg, "tuner.beta", "x"), Err(Error::InvalidConfig(_))));
        assert!(matches!(apply_override(&mut cfg, "command.onset", "1"), Err(Error::BadOverrideKey(_))));
        assert!(matches!(apply_override(&mut cfg, "model.kind", "mrac"), Err(Error::InvalidConfig(_))));
        assert!(parse_pairs("no equals sign").is_err());
        let unknown = config_from_pairs(&parse_pairs("scenario.base = nosuch").unwrap());
        assert_eq!(unknown, Err(Error::UnknownScenario("nosuch".into())));
    }

    #[test]
    fn feature_switch_keeps_frequency() {
        let mut cfg = find_builtin("reg-pe").unwrap();
        apply_override(&mut cfg, "feature.omega", "0.5").unwrap();
        apply_override(&mut cfg, "feature.kind", "single-sinusoid").unwrap();
        assert!(matches!(
            cfg.model,
            ModelSpec::Regression { feature: FeatureProfile::SingleSinusoid { omega, .. }, .. } if omega == 0.5
        ));
    }
}
