use tvlearn::diagnostics::{asymptotic_decay_check, Trajectory, DEFAULT_DECAY_TOL, DEFAULT_TAIL_FRACTION};
use tvlearn::scenarios::{find_builtin, run_draw, run_scenario, sample_draws, ScenarioConfig, ThetaStarLaw};
use tvlearn::tuners::Law;

fn nominal(name: &str) -> ScenarioConfig {
    let mut cfg = find_builtin(name).unwrap();
    cfg.monte_carlo.draws = 1;
    cfg.monte_carlo.theta_star_law = ThetaStarLaw::Nominal;
    cfg
}

fn run(cfg: &ScenarioConfig, law: Law) -> Trajectory {
    let draw = &sample_draws(cfg).unwrap()[0];
    run_draw(cfg, draw, law).unwrap().0
}

/// First time after `after` at which |e_y| drops below `tol`.
fn first_below(traj: &Trajectory, after: f64, tol: f64) -> Option<f64> {
    traj.samples.iter().filter(|s| s.t > after).find(|s| s.error_norm() < tol).map(|s| s.t)
}

#[test]
fn two_step_ho_reaches_tolerance_before_fo() {
    let cfg = nominal("reg-two-step");
    let trajs: Vec<_> = cfg.laws.iter().map(|&l| (l, run(&cfg, l))).collect();
    for (law, t) in &trajs {
        assert!(t.status.is_completed(), "{law:?} {:?}", t.status);
    }
    let get = |law| &trajs.iter().find(|(l, _)| *l == law).unwrap().1;
    // error is exactly zero until the first feature step at t = 0.1
    let fo = first_below(get(Law::FirstOrder), 0.2, 1e-2).expect("fo never reaches 1e-2");
    let ho = first_below(get(Law::HigherOrder), 0.2, 1e-2).expect("ho never reaches 1e-2");
    assert!(ho < fo, "ho {ho} fo {fo}");
}

#[test]
fn pe_baseline_unstable_ho_stable() {
    let cfg = find_builtin("reg-pe").unwrap();
    let res = run_scenario(&cfg).unwrap();
    assert!(!res.law(Law::WibisonoBaseline).unwrap().stable);
    assert!(res.law(Law::HigherOrder).unwrap().stable);
    assert!(res.law(Law::FirstOrder).unwrap().stable);
}

#[test]
fn candidate_energy_rises_somewhere_on_pe() {
    let cfg = nominal("reg-pe");
    let traj = run(&cfg, Law::HigherOrder);
    let rising = traj.samples.iter().filter_map(|s| s.candidate).filter(|c| c.vdot > 0.0).count();
    assert!(rising > 0);
}

#[test]
fn candidate_derivative_matches_finite_difference() {
    let mut cfg = nominal("reg-pe");
    cfg.horizon = 10.0;
    cfg.max_samples = 10_000;
    let traj = run(&cfg, Law::HigherOrder);
    let ts = traj.times();
    let c: Vec<_> = traj.samples.iter().map(|s| s.candidate.unwrap()).collect();
    let scale = c.iter().map(|c| c.vdot.abs()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for i in 1..c.len() - 1 {
        let fd = (c[i + 1].v - c[i - 1].v) / (ts[i + 1] - ts[i - 1]);
        worst = worst.max((fd - c[i].vdot).abs());
    }
    assert!(worst <= 1e-4 * scale, "worst {worst:e} scale {scale:e}");
}

#[test]
fn f16_every_accepted_draw_decays() {
    let cfg = find_builtin("f16-mrac").unwrap();
    let res = run_scenario(&cfg).unwrap();
    let mut failures = Vec::new();
    for l in &res.laws {
        for (k, t) in l.trajectories.iter().enumerate() {
            if !asymptotic_decay_check(&t.times(), &t.error_norms(), DEFAULT_TAIL_FRACTION, DEFAULT_DECAY_TOL) {
                let n = t.samples.len();
                let tail = t.error_norms()[n * 4 / 5..].iter().fold(0.0f64, |a, b| a.max(*b));
                failures.push(format!("{} draw {k} W={:?} tail {tail:.3e}", l.law.tag(), res.draws[k].scale));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
