use crate::analysis::verify_envelopes;
use crate::equilibrium::{f0_force, BodyConfig, MotionClassParams, MotionMode};
use crate::error::Result;
use crate::kernels::Kernel;

use super::grid::TrajectoryGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    /// `W(0) = V_inf + gamma`.
    pub w0_ok: bool,
    /// Non-increasing on `[0, t0]`.
    pub monotone_on_t0_ok: bool,
    /// The mode's envelopes hold with finite, nonnegative `A+` and `A-`.
    pub envelope_ok: bool,
    pub fitted_a_plus: f64,
    pub fitted_a_minus: f64,
    /// Largest discrete slope `|W(t_{i+1}) - W(t_i)| / dt`.
    pub max_slope: f64,
}

impl MembershipReport {
    pub fn ok(&self) -> bool {
        self.w0_ok && self.monotone_on_t0_ok && self.envelope_ok
    }
}

/// Checks the defining properties of the motion class for `params.mode`.
pub fn check_class_membership(traj: &TrajectoryGrid, params: &MotionClassParams) -> MembershipReport {
    let start = params.v_inf + params.gamma;
    let w0_ok = (traj.values[0] - start).abs() <= 1e-12 * start.abs().max(1.0);
    let slack = 1e-14 * params.gamma;
    let mut monotone_on_t0_ok = true;
    let mut max_slope = 0.0f64;
    for i in 0..traj.n_steps {
        let step = traj.values[i + 1] - traj.values[i];
        max_slope = max_slope.max(step.abs() / traj.dt);
        if traj.t(i + 1) <= params.t0 && step > slack {
            monotone_on_t0_ok = false;
        }
    }
    let env = verify_envelopes(&traj.times(), &traj.values, params);
    let (c, big_c) = env.fitted_constants;
    // A+ is the largest admissible constant, A- the smallest.
    let (fitted_a_plus, fitted_a_minus) = match params.mode {
        MotionMode::Irreversal => (c, big_c),
        MotionMode::Reversal => (big_c, c),
    };
    // rounding can leave a marginally negative fit on an admissible path
    let clamp = |a: f64| if env.class_ok { a.max(0.0) } else { a };
    MembershipReport {
        w0_ok,
        monotone_on_t0_ok,
        envelope_ok: env.class_ok,
        fitted_a_plus: clamp(fitted_a_plus),
        fitted_a_minus: clamp(fitted_a_minus),
        max_slope,
    }
}

/// `L = max{V_inf + 1, E + F0(V_inf + 1) + C gamma^(p+1)}` with `C` the observed
/// bound on `|R_W| / gamma^(p+1)`.
pub fn lipschitz_constant(kernel: &Kernel, body: &BodyConfig, params: &MotionClassParams, c_fit: f64) -> Result<f64> {
    let f = f0_force(kernel, body, params.v_inf + 1.0)?;
    let tail = c_fit * params.gamma.powf(params.p + 1.0);
    Ok((params.v_inf + 1.0).max(body.e_force + f + tail))
}
