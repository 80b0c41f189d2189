use rayon::prelude::*;

use crate::equilibrium::{f0_quotient, BodyConfig, MotionClassParams};
use crate::error::Result;
use crate::kernels::Kernel;

use super::fast::{ResidualProfile, ResidualSolver};
use super::grid::TrajectoryGrid;
use super::SolverConfig;

/// Offsets `D = V - V_inf` from `D' = -Q D - R`, `D(0) = gamma`, with the
/// integrating factor `exp(-int Q)` and the trapezoid rule on each cell.
pub fn integrate_factor(gamma: f64, dt: f64, q: &[f64], r: &[f64]) -> Vec<f64> {
    let mut d = Vec::with_capacity(q.len());
    d.push(gamma);
    for i in 0..q.len() - 1 {
        let e = (-0.5 * (q[i] + q[i + 1]) * dt).exp();
        let next = d[i] * e - 0.5 * dt * (r[i] * e + r[i + 1]);
        d.push(next);
    }
    d
}

/// Same equation by classical RK4 with `Q`, `R` linear inside each cell.
pub fn integrate_direct(gamma: f64, dt: f64, q: &[f64], r: &[f64], substeps: usize) -> Vec<f64> {
    let h = dt / substeps as f64;
    let mut d = Vec::with_capacity(q.len());
    d.push(gamma);
    let mut y = gamma;
    for i in 0..q.len() - 1 {
        let rhs = |x: f64, y: f64| {
            let f = x / dt;
            let qq = q[i] + (q[i + 1] - q[i]) * f;
            let rr = r[i] + (r[i + 1] - r[i]) * f;
            -qq * y - rr
        };
        for k in 0..substeps {
            let x = k as f64 * h;
            let k1 = rhs(x, y);
            let k2 = rhs(x + 0.5 * h, y + 0.5 * h * k1);
            let k3 = rhs(x + 0.5 * h, y + 0.5 * h * k2);
            let k4 = rhs(x + h, y + h * k3);
            y += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        }
        d.push(y);
    }
    d
}

#[derive(Debug, Clone)]
pub struct IterateOutput {
    /// `V_W` on the grid of `W`.
    pub v: TrajectoryGrid,
    pub residual: ResidualProfile,
    pub q: Vec<f64>,
    /// Sup-norm gap between the integrating-factor and RK4 solutions.
    pub integrator_gap: f64,
}

/// One application of the map `W -> V_W`.
pub fn iterate_map(
    w: &TrajectoryGrid,
    kernel: &Kernel,
    body: &BodyConfig,
    params: &MotionClassParams,
    config: &SolverConfig,
) -> Result<IterateOutput> {
    let solver = ResidualSolver::new(kernel, body, params.v_inf, config.depth_n, config.band_points, config.quad_tol);
    let residual = solver.compute(w)?;
    let q = quotients(kernel, body, params.v_inf, &w.values)?;
    Ok(finish(w, params, config, residual, q))
}

/// `Q(t_i)` for every node.
pub fn quotients(kernel: &Kernel, body: &BodyConfig, v_inf: f64, w: &[f64]) -> Result<Vec<f64>> {
    w.par_iter().map(|&x| f0_quotient(kernel, body, v_inf, x)).collect()
}

pub(super) fn finish(
    w: &TrajectoryGrid,
    params: &MotionClassParams,
    config: &SolverConfig,
    residual: ResidualProfile,
    q: Vec<f64>,
) -> IterateOutput {
    let d = integrate_factor(params.gamma, w.dt, &q, &residual.r);
    let rk = integrate_direct(params.gamma, w.dt, &q, &residual.r, config.ode_substeps);
    let integrator_gap = d.iter().zip(&rk).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let values = d.iter().map(|x| params.v_inf + x).collect();
    let v = TrajectoryGrid::new(w.t_max, values).expect("same grid");
    IterateOutput { v, residual, q, integrator_gap }
}
