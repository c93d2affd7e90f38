//! CSV and manifest files for a scenario run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{config_to_pairs, render_pairs};
use crate::diagnostics::{settling_time, zero_crossings, Sample, Trajectory};
use crate::error::{Error, Result};
use crate::integrator::RunStatus;
use crate::scenarios::{Band, LawResult, ModelSpec, ScenarioResult};
use crate::tuners::Law;

pub const MANIFEST_FILE: &str = "manifest.txt";
/// Error level used for the time-to-tolerance summary.
pub const SETTLING_TOL: f64 = 1e-2;
/// Magnitudes below this do not count as a sign in the oscillation metric.
pub const OSCILLATION_DEADBAND: f64 = 1e-6;

pub fn trajectory_file(law: Law, draw: usize) -> String {
    format!("{}_draw_{draw:03}.csv", law.tag())
}

pub fn band_file(law: Law) -> String {
    format!("band_{}.csv", law.tag())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// Header for a trajectory of `law` with parameter dimension `n`.
pub fn trajectory_header(law: Law, n: usize, mrac: bool) -> Vec<String> {
    let mut h = vec!["t".to_string(), "e_y".to_string()];
    h.extend(indexed("theta", n));
    if law == Law::HigherOrder {
        h.extend(indexed("vartheta", n));
    }
    if law == Law::WibisonoBaseline {
        h.extend(indexed("theta_dot", n));
    }
    h.extend(indexed("phi", n));
    h.extend(["V", "V_rate_bound"].map(String::from));
    if law == Law::HigherOrder && !mrac {
        h.extend(["V_cand", "Vdot_cand"].map(String::from));
    }
    h.push("regret".into());
    if mrac {
        h.extend(indexed("e", n));
        h.extend(indexed("x", n));
        h.extend(indexed("xhat", n));
        h.extend(["u", "z_cmd"].map(String::from));
    }
    h
}

fn row(law: Law, s: &Sample, mrac: bool) -> Vec<String> {
    let mut r = vec![num(s.t), num(s.e_y.unwrap_or_else(|| s.error_norm()))];
    r.extend(s.theta.iter().map(|&x| num(x)));
    if law == Law::HigherOrder {
        r.extend(s.vartheta.iter().flat_map(|v| v.iter().map(|&x| num(x))));
    }
    if law == Law::WibisonoBaseline {
        r.extend(s.theta_dot.iter().flat_map(|v| v.iter().map(|&x| num(x))));
    }
    r.extend(s.phi.iter().map(|&x| num(x)));
    r.push(num(s.v));
    r.push(opt(s.v_rate_bound));
    if law == Law::HigherOrder && !mrac {
        r.push(opt(s.candidate.map(|c| c.v)));
        r.push(opt(s.candidate.map(|c| c.vdot)));
    }
    r.push(num(s.regret));
    if let Some(m) = &s.mrac {
        for v in [&m.e, &m.x, &m.xhat] {
            r.extend(v.iter().map(|&x| num(x)));
        }
        r.push(num(m.u));
        r.push(num(m.z_cmd));
    }
    r
}

fn row_is_finite(r: &[String]) -> bool {
    r.iter().all(|c| c.is_empty() || c.parse::<f64>().is_ok_and(f64::is_finite))
}

/// Trajectory CSV text. Rows from the first non-finite value on are dropped.
pub fn trajectory_csv(traj: &Trajectory, mrac: bool) -> String {
    let n = traj.samples.first().map_or(0, |s| s.theta.dim());
    let mut out = trajectory_header(traj.law, n, mrac).join(",");
    out.push('\n');
    for s in &traj.samples {
        let r = row(traj.law, s, mrac);
        if !row_is_finite(&r) {
            break;
        }
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn band_csv(band: &Band) -> String {
    let mut out = String::from("t,lo,median,hi\n");
    for i in 0..band.t.len() {
        let _ = writeln!(out, "{},{},{},{}", num(band.t[i]), num(band.lo[i]), num(band.median[i]), num(band.hi[i]));
    }
    out
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    Some(crate::scenarios::quantile_sorted(&xs, 0.5))
}

/// Sign changes of the second tracking-error component after the command
/// onset; `None` for regression runs.
pub fn oscillation_count(traj: &Trajectory, onset: f64) -> Option<usize> {
    let e2: Option<Vec<f64>> = traj.samples.iter().map(|s| s.mrac.as_ref().map(|m| m.e[1])).collect();
    Some(zero_crossings(&traj.times(), &e2?, onset, OSCILLATION_DEADBAND))
}

fn status_str(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Completed => "completed",
        RunStatus::Diverged { .. } => "diverged",
    }
}

/// Manifest text: tool version, resolved config, per-draw truth and
/// per-law summary.
pub fn manifest_text(res: &ScenarioResult) -> String {
    let mut pairs: Vec<(String, String)> = vec![
        ("manifest.tool".into(), env!("CARGO_PKG_NAME").into()),
        ("manifest.version".into(), env!("CARGO_PKG_VERSION").into()),
    ];
    pairs.extend(config_to_pairs(&res.config));
    pairs.push(("manifest.rejections".into(), res.total_rejections().to_string()));
    let onset = match res.config.model {
        ModelSpec::Mrac { command } => command.onset(),
        ModelSpec::Regression { .. } => None,
    };
    for d in &res.draws {
        let key = |k: &str| format!("draw.{}.{k}", d.index);
        pairs.push((key("theta_star"), d.theta_star.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")));
        if let Some(w) = d.scale {
            pairs.push((key("scale"), format!("{w:?}")));
            pairs.push((key("rejections"), d.rejections.to_string()));
        }
        for l in &res.laws {
            let traj = &l.trajectories[d.index];
            let tag = l.law.tag();
            pairs.push((key(&format!("{tag}.status")), status_str(traj.status).into()));
            if let RunStatus::Diverged { t } = traj.status {
                pairs.push((key(&format!("{tag}.diverged_at")), format!("{t:?}")));
            }
            pairs.push((key(&format!("{tag}.mu")), format!("{:?}", l.mu[d.index])));
        }
    }
    for l in &res.laws {
        summary(&mut pairs, l, onset);
    }
    render_pairs(&pairs)
}

fn summary(pairs: &mut Vec<(String, String)>, l: &LawResult, onset: Option<f64>) {
    let tag = l.law.tag();
    let mut put = |k: &str, v: String| pairs.push((format!("summary.{tag}.{k}"), v));
    let done: Vec<&Trajectory> = l.trajectories.iter().filter(|t| t.status.is_completed()).collect();
    put("status", if l.stable { "stable" } else { "unstable" }.into());
    put("completed", format!("{}/{}", done.len(), l.trajectories.len()));
    let fmt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), |v| format!("{v:?}"));
    put("final_regret_median", fmt(median(done.iter().map(|t| t.final_regret()).collect())));
    put("v0_median", fmt(median(done.iter().map(|t| t.v0()).collect())));
    let settled: Vec<f64> =
        done.iter().filter_map(|t| settling_time(&t.times(), &t.error_norms(), SETTLING_TOL)).collect();
    put("settled", format!("{}/{}", settled.len(), done.len()));
    put("settling_time_median", fmt(median(settled)));
    if let Some(onset) = onset {
        let counts: Vec<f64> = done.iter().filter_map(|t| oscillation_count(t, onset)).map(|c| c as f64).collect();
        put("oscillations_median", fmt(median(counts)));
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::UnwritableOutput { path: path.to_path_buf(), reason: e.to_string() })
}

/// Writes every trajectory, band and the manifest under `dir`.
pub fn write_result(res: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::UnwritableOutput { path: dir.to_path_buf(), reason: e.to_string() })?;
    let mrac = matches!(res.config.model, ModelSpec::Mrac { .. });
    let mut written = Vec::new();
    for l in &res.laws {
        for (k, traj) in l.trajectories.iter().enumerate() {
            let p = dir.join(trajectory_file(l.law, k));
            write(&p, &trajectory_csv(traj, mrac))?;
            written.push(p);
        }
        let p = dir.join(band_file(l.law));
        write(&p, &band_csv(&l.band))?;
        written.push(p);
    }
    let p = dir.join(MANIFEST_FILE);
    write(&p, &manifest_text(res))?;
    written.push(p);
    Ok(written)
}

/// A CSV read back column-wise; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Column with every cell present.
    pub fn dense(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name)?.into_iter().collect()
    }

    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for i in 1.. {
            match self.dense(&format!("{prefix}_{i}")) {
                Some(c) => out.push(c),
                None => break,
            }
        }
        out
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let corrupt = |reason: String| Error::CorruptCsv { path: path.to_path_buf(), reason };
    let text = fs::read_to_string(path).map_err(|e| corrupt(e.to_string()))?;
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().ok_or_else(|| corrupt("empty file".into()))?.split(',').map(String::from).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(corrupt(format!("row {} has {} cells, header has {}", i + 1, cells.len(), header.len())));
        }
        let row = cells
            .iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .map(Some)
                        .ok_or_else(|| corrupt(format!("row {}: bad number {c}", i + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}
