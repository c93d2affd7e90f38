//! `tvlearn list | run | verify`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{apply_override, load_config, parse_pairs};
use crate::error::{Error, Result};
use crate::output::write_result;
use crate::scenarios::{builtin_scenarios, find_builtin, run_scenario, ScenarioConfig};
use crate::verify::verify_dir;

/// Directory of extra `*.cfg` scenarios picked up by `list` and `run`.
pub const SCENARIO_DIR_ENV: &str = "TVLEARN_SCENARIO_DIR";

#[derive(Debug, Parser)]
#[command(name = "tvlearn", version, about = "Higher-order tuners for time-varying regression and adaptive control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List available scenarios.
    List,
    /// Run a scenario and write trajectories, bands and a manifest.
    Run(RunArgs),
    /// Re-check diagnostic invariants on a run directory.
    Verify {
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Built-in name, user scenario name, or path to a config file.
    pub scenario: String,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// A number, or `auto` for the value the Lyapunov bound assumes.
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Comma list of fo, ho, wib.
    #[arg(long)]
    pub laws: Option<String>,
    /// Output directory; defaults to runs/<scenario>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Any config key, e.g. `--set feature.omega=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn user_scenarios() -> Vec<(String, PathBuf)> {
    let Some(dir) = std::env::var_os(SCENARIO_DIR_ENV) else { return Vec::new() };
    let Ok(entries) = std::fs::read_dir(dir) else { return Vec::new() };
    let mut found: Vec<(String, PathBuf)> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
        .collect();
    found.sort();
    found
}

fn resolve(name: &str) -> Result<ScenarioConfig> {
    if let Some(cfg) = find_builtin(name) {
        return Ok(cfg);
    }
    if let Some((_, path)) = user_scenarios().into_iter().find(|(n, _)| n == name) {
        return load_config(&path);
    }
    let path = Path::new(name);
    if path.is_file() {
        return load_config(path);
    }
    Err(Error::UnknownScenario(name.to_string()))
}

fn apply_flags(cfg: &mut ScenarioConfig, a: &RunArgs) -> Result<()> {
    let flags = [
        ("monte_carlo.draws", a.draws.map(|v| v.to_string())),
        ("monte_carlo.seed", a.seed.map(|v| v.to_string())),
        ("tuner.beta", a.beta.map(|v| v.to_string())),
        ("tuner.gamma", a.gamma.map(|v| v.to_string())),
        ("tuner.mu", a.mu.clone()),
        ("sim.step", a.step.map(|v| v.to_string())),
        ("sim.horizon", a.horizon.map(|v| v.to_string())),
        ("laws", a.laws.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            apply_override(cfg, key, &v)?;
        }
    }
    for kv in &a.overrides {
        let pairs = parse_pairs(kv)?;
        let [(k, v)] = pairs.as_slice() else {
            return Err(Error::InvalidConfig(format!("--set expects KEY=VALUE, got {kv}")));
        };
        apply_override(cfg, k, v)?;
    }
    cfg.validate()
}

pub fn cmd_list(out: &mut dyn Write) -> std::io::Result<()> {
    for cfg in builtin_scenarios() {
        writeln!(out, "{:<16} {}", cfg.name, cfg.description)?;
        for member in cfg.expand().unwrap_or_default().iter().filter(|_| cfg.is_sweep()) {
            writeln!(out, "  {}", member.name)?;
        }
    }
    for (name, path) in user_scenarios() {
        writeln!(out, "{:<16} user scenario at {}", name, path.display())?;
    }
    Ok(())
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve(&a.scenario)?;
    apply_flags(&mut cfg, a)?;
    let root = a.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    for member in cfg.expand()? {
        let dir = if cfg.is_sweep() {
            root.join(member.name.rsplit('.').next().unwrap_or(&member.name))
        } else {
            root.clone()
        };
        let res = run_scenario(&member)?;
        let files = write_result(&res, &dir)?;
        let _ = writeln!(out, "{}: {} files in {}", member.name, files.len(), dir.display());
        for l in &res.laws {
            let done = l.trajectories.iter().filter(|t| t.status.is_completed()).count();
            let _ = writeln!(
                out,
                "  {:<4} {}/{} completed  {}",
                l.law.tag(),
                done,
                l.trajectories.len(),
                if l.stable { "stable" } else { "unstable" }
            );
        }
        if res.total_rejections() > 0 {
            let _ = writeln!(out, "  {} unstable gain draws rejected", res.total_rejections());
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match cli.command {
        Command::List => match cmd_list(out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                1
            }
        },
        Command::Run(a) => match cmd_run(&a, out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                2
            }
        },
        Command::Verify { dir } => match verify_dir(&dir) {
            Ok(report) => {
                let _ = write!(out, "{report}");
                if report.all_passed() {
                    0
                } else {
                    1
                }
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                2
            }
        },
    }
}
