use kinbody::analysis::{detect_reversal, envelope_curves, verify_envelopes};
use kinbody::config::parse_config_str;
use kinbody::criteria::{classify, Side, DEFAULT_MARGINAL_TOL};
use kinbody::equilibrium::{f0_force, motion_class_params, solve_equilibrium, MotionMode};
use kinbody::montecarlo;
use kinbody::solver::fixed_point_solve;

const CONFIG: &str = r#"{
    "kernel": {"family": "gaussian_flux", "alpha": 1.0, "beta": 2.0, "dim": 3},
    "body": {"gamma": 0.05, "E": 0.02},
    "solver": {"n_steps": 1200, "t_max": 30.0},
    "mc": {"n_particles": 20000, "replicas": 4, "t_max": 1.0, "n_records": 10},
    "seed": 4
}"#;

#[test]
fn driven_body_relaxes_to_equilibrium() {
    let cfg = parse_config_str(CONFIG).unwrap();
    let kernel = cfg.kernel().unwrap();
    let body = cfg.body().unwrap();
    let v_inf = solve_equilibrium(&kernel, body, 10.0).unwrap();
    assert!(v_inf > 0.0);
    assert!((f0_force(&kernel, body, v_inf).unwrap() - 0.02).abs() < 1e-10);

    let class = classify(&kernel, v_inf, Side::Right, DEFAULT_MARGINAL_TOL).unwrap().class;
    let mode = class.mode().unwrap();
    assert_eq!(mode, MotionMode::Irreversal);
    let params = motion_class_params(&kernel, body, v_inf, mode).unwrap();
    let res = fixed_point_solve(&kernel, body, &params, &cfg.solver).unwrap();
    assert!(res.final_residual < cfg.solver.fp_tol);

    let times = res.trajectory.times();
    let v = &res.trajectory.values;
    assert_eq!(v[0], v_inf + body.gamma);
    assert!(!detect_reversal(&times, v, v_inf, 0.0).crossed);
    let env = verify_envelopes(&times, v, &params);
    assert!(env.class_ok && env.upper_ok, "{env:?}");
    let (lo, hi) = envelope_curves(&times, &params, env.fitted_constants);
    for i in 1..times.len() {
        assert!(lo[i] <= v[i] * (1.0 + 1e-12) && v[i] <= hi[i] * (1.0 + 1e-12), "t = {}", times[i]);
    }

    let mc = montecarlo::run(&kernel, body, v_inf, &cfg.mc, cfg.mc_seed()).unwrap();
    assert_eq!(mc.times.len(), 11);
    assert!(mc.bookkeeping < 1e-12);
    let rep = montecarlo::compare(&mc.times, &mc.mean, &mc.se, &times, v, v_inf);
    assert_eq!(rep.n_nodes, 11);
    assert!(rep.frac_within_3se >= 0.8, "{rep:?}");
}
