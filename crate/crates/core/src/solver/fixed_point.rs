use crate::equilibrium::{BodyConfig, MotionClassParams};
use crate::error::{Error, Result};
use crate::kernels::Kernel;

use super::fast::ResidualProfile;
use super::grid::TrajectoryGrid;
use super::integrate::iterate_map;
use super::membership::{check_class_membership, lipschitz_constant, MembershipReport};
use super::SolverConfig;

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Last iterate `V_W`.
    pub trajectory: TrajectoryGrid,
    pub iterations: usize,
    /// `sup |V_W - W|` at the last iteration.
    pub final_residual: f64,
    pub history: Vec<f64>,
    /// `R_W` of the last input trajectory.
    pub residual: ResidualProfile,
    pub params: MotionClassParams,
    pub membership: MembershipReport,
    pub integrator_gap: f64,
    pub warnings: Vec<String>,
}

/// `V_inf + gamma exp(-B0 t)` on `[0, t_max]`.
pub fn initial_guess(params: &MotionClassParams, t_max: f64, n_steps: usize) -> Result<TrajectoryGrid> {
    TrajectoryGrid::from_fn(t_max, n_steps, |t| params.v_inf + params.gamma * (-params.b0 * t).exp())
}

/// Picard iteration of `W -> V_W` from the exponential skeleton. Depth 0 drops
/// the recollision term entirely.
pub fn fixed_point_solve(
    kernel: &Kernel,
    body: &BodyConfig,
    params: &MotionClassParams,
    config: &SolverConfig,
) -> Result<SolveResult> {
    SolverConfig { depth_n: config.depth_n.max(1), ..config.clone() }.validate()?;
    body.validate()?;
    let t_max = config.t_max.unwrap_or(50.0 * params.t0);
    if !(t_max > 0.0) {
        return Err(Error::Config(format!("t_max = {t_max} must be positive")));
    }
    let mut w = initial_guess(params, t_max, config.n_steps)?;
    let mut history = Vec::new();
    let mut warnings = Vec::new();
    let gap_tol = 5.0 * w.dt * w.dt;
    for k in 1..=config.max_iter {
        let m = check_class_membership(&w, params);
        if !m.ok() {
            warnings.push(format!("iterate {} leaves the motion class: {m:?}", k - 1));
        }
        let out = iterate_map(&w, kernel, body, params, config)?;
        if out.integrator_gap > gap_tol {
            warnings.push(format!(
                "iterate {k}: integrators differ by {:.3e} > {gap_tol:.3e}",
                out.integrator_gap
            ));
        }
        let res = out.v.values.iter().zip(&w.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        history.push(res);
        if !res.is_finite() {
            break;
        }
        if res < config.fp_tol {
            let membership = check_class_membership(&out.v, params);
            if !membership.ok() {
                warnings.push(format!("fixed point leaves the motion class: {membership:?}"));
            }
            let g = params.gamma.powf(params.p + 1.0);
            let c_fit = out.residual.r.iter().fold(0.0f64, |a, r| a.max(r.abs())) / g;
            let lip = lipschitz_constant(kernel, body, params, c_fit)?;
            if membership.max_slope > lip {
                warnings.push(format!("discrete slope {:.3e} exceeds Lipschitz bound {lip:.3e}", membership.max_slope));
            }
            return Ok(SolveResult {
                trajectory: out.v,
                iterations: k,
                final_residual: res,
                history,
                residual: out.residual,
                params: params.clone(),
                membership,
                integrator_gap: out.integrator_gap,
                warnings,
            });
        }
        w = if config.damping == 1.0 {
            out.v
        } else {
            let values = w
                .values
                .iter()
                .zip(&out.v.values)
                .map(|(a, b)| a + config.damping * (b - a))
                .collect();
            TrajectoryGrid::new(t_max, values)?
        };
    }
    Err(Error::NonConvergence { history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{f0_force, motion_class_params, MotionMode};
    use crate::kernels::KernelSpec;

    fn setup() -> (Kernel, BodyConfig, MotionClassParams) {
        let k = Kernel::new(KernelSpec::gaussian_flux(1.0, 2.0, 1.0, 3)).unwrap();
        let body = BodyConfig::new(0.05, 0.0);
        let p = motion_class_params(&k, &body, 0.0, MotionMode::Irreversal).unwrap();
        (k, body, p)
    }

    #[test]
    fn depth_zero_matches_free_body_ode() {
        let (k, body, p) = setup();
        let cfg = SolverConfig { depth_n: 0, t_max: Some(6.0), n_steps: 600, ..Default::default() };
        let sol = fixed_point_solve(&k, &body, &p, &cfg).unwrap();
        assert!(sol.residual.r.iter().all(|&r| r == 0.0));
        assert_eq!(sol.trajectory.values[0], p.v_inf + p.gamma);
        // independent oracle: RK4 on V' = E - F0(V) with a much finer step
        let f = |v: f64| body.e_force - f0_force(&k, &body, v).unwrap();
        let (mut v, h) = (p.v_inf + p.gamma, 1e-3);
        for i in 0..6000 {
            if i % 10 == 0 {
                let got = sol.trajectory.values[i / 10];
                assert!((got - v).abs() <= 1e-6 * p.gamma, "t = {}: {got} vs {v}", i as f64 * h);
            }
            let k1 = f(v);
            let k2 = f(v + 0.5 * h * k1);
            let k3 = f(v + 0.5 * h * k2);
            let k4 = f(v + h * k3);
            v += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        }
    }

    #[test]
    fn non_convergence_carries_history() {
        let (k, body, p) = setup();
        let cfg = SolverConfig { max_iter: 1, fp_tol: 1e-300, t_max: Some(5.0), n_steps: 200, ..Default::default() };
        match fixed_point_solve(&k, &body, &p, &cfg) {
            Err(Error::NonConvergence { history }) => assert_eq!(history.len(), 1),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_settings_rejected() {
        let (k, body, p) = setup();
        let cfg = SolverConfig { damping: 0.0, ..Default::default() };
        assert!(matches!(fixed_point_solve(&k, &body, &p, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn initial_guess_is_the_skeleton() {
        let (_, _, p) = setup();
        let w = initial_guess(&p, 10.0, 100).unwrap();
        assert_eq!(w.values[0], p.v_inf + p.gamma);
        assert_eq!(w.values[100], p.v_inf + p.gamma * (-p.b0 * 10.0).exp());
    }
}
