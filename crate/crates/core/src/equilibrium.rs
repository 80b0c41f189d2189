//! Single-collision force `F0`, the equilibrium velocity and the constants of
//! the motion classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::quad::{self, Tolerance};

fn default_radius() -> f64 {
    0.5
}
fn default_length() -> f64 {
    1.0
}

/// Geometry and forcing of the cylinder. The spatial dimension comes from the
/// kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Axial length; only the particle simulation needs it.
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(rename = "E", default)]
    pub e_force: f64,
    pub gamma: f64,
}

impl BodyConfig {
    pub fn new(gamma: f64, e_force: f64) -> Self {
        Self { radius: default_radius(), length: default_length(), e_force, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("body.gamma = {} must lie in (0, 1)", self.gamma)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config("body.radius must be positive".into()));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::Config("body.length must be positive".into()));
        }
        if !(self.e_force >= 0.0 && self.e_force.is_finite()) {
            return Err(Error::Config(format!("body.E = {} must be >= 0", self.e_force)));
        }
        Ok(())
    }

    /// Area of one face: 1, `2r` or `pi r^2` for `d = 1, 2, 3`.
    pub fn face_area(&self, dim: u8) -> f64 {
        match dim {
            1 => 1.0,
            2 => 2.0 * self.radius,
            _ => std::f64::consts::PI * self.radius * self.radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    Irreversal,
    Reversal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClassParams {
    pub gamma: f64,
    pub v_inf: f64,
    pub b0: f64,
    pub b_inf: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub t0: f64,
    pub k0: f64,
    pub p: f64,
    pub d: u8,
    pub mode: MotionMode,
}

impl MotionClassParams {
    /// Decay exponent `d + p` of the recollision tail.
    pub fn tail_exponent(&self) -> f64 {
        self.d as f64 + self.p
    }
}

fn f0_tol() -> Tolerance {
    Tolerance::new(1e-14, 1e-12)
}

fn kink_breaks(kernel: &Kernel, centres: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for &k in kernel.a0_kinks() {
        for &c in centres {
            out.push((c - k).abs());
        }
    }
    out
}

/// `F0(w) = C int_0^inf l(y) [a0(w - y) - a0(w + y)] dy`.
pub fn f0_force(kernel: &Kernel, body: &BodyConfig, w: f64) -> Result<f64> {
    let c = body.face_area(kernel.dim());
    let breaks = kink_breaks(kernel, &[w]);
    let e = quad::integrate_half_line_with_breaks(
        |y| kernel.ell(y) * (kernel.a0(w - y) - kernel.a0(w + y)),
        0.0,
        &breaks,
        f0_tol(),
    )?;
    Ok(c * e.value)
}

/// `F0'(w) = C int_0^inf l(y) [a0'(w - y) - a0'(w + y)] dy`.
pub fn f0_derivative(kernel: &Kernel, body: &BodyConfig, w: f64) -> Result<f64> {
    let c = body.face_area(kernel.dim());
    let breaks = kink_breaks(kernel, &[w]);
    let e = quad::integrate_half_line_with_breaks(
        |y| kernel.ell(y) * (kernel.a0_prime(w - y) - kernel.a0_prime(w + y)),
        0.0,
        &breaks,
        f0_tol(),
    )?;
    Ok(c * e.value)
}

/// Difference quotient `(F0(w) - F0(v_inf)) / (w - v_inf)`, evaluated as one
/// integral of `a0` increments so that nearby arguments do not cancel. Falls
/// back to `F0'(v_inf)` within `1e-12` of the equilibrium.
pub fn f0_quotient(kernel: &Kernel, body: &BodyConfig, v_inf: f64, w: f64) -> Result<f64> {
    let dw = w - v_inf;
    if dw.abs() < 1e-12 {
        return f0_derivative(kernel, body, v_inf);
    }
    let c = body.face_area(kernel.dim());
    let breaks = kink_breaks(kernel, &[w, v_inf]);
    let e = quad::integrate_half_line_with_breaks(
        |y| {
            let num = kernel.a0_increment(v_inf - y, dw) - kernel.a0_increment(v_inf + y, dw);
            kernel.ell(y) * num / dw
        },
        0.0,
        &breaks,
        f0_tol(),
    )?;
    Ok(c * e.value)
}

/// Default upper end of the equilibrium search bracket.
pub const EQUILIBRIUM_BRACKET: f64 = 10.0;

/// Solves `F0(v_inf) = E` on `[0, v_max]`.
pub fn solve_equilibrium(kernel: &Kernel, body: &BodyConfig, v_max: f64) -> Result<f64> {
    let e = body.e_force;
    if !(e >= 0.0) {
        return Err(Error::Domain(format!("external force E = {e} must be >= 0")));
    }
    if e == 0.0 {
        return Ok(0.0);
    }
    let f = |v: f64| f0_force(kernel, body, v).map(|x| x - e);
    let (mut a, mut b) = (0.0, v_max);
    let (mut fa, mut fb) = (-e, f(b)?);
    if fb < 0.0 {
        return Err(Error::Bracket { e, f_max: fb + e });
    }
    while b - a > 1e-3 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm < 0.0 {
            (a, fa) = (m, fm);
        } else {
            (b, fb) = (m, fm);
        }
    }
    // Illinois-safeguarded secant
    let mut side = 0;
    for _ in 0..200 {
        let x = b - fb * (b - a) / (fb - fa);
        let x = if x > a && x < b { x } else { 0.5 * (a + b) };
        let fx = f(x)?;
        if fx.abs() <= 1e-12 * e.max(1.0) || b - a < 1e-15 * b.max(1.0) {
            return Ok(x);
        }
        if fx < 0.0 {
            (a, fa) = (x, fx);
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            (b, fb) = (x, fx);
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    let x = 0.5 * (a + b);
    let r = f(x)?.abs();
    if r <= 1e-10 {
        Ok(x)
    } else {
        Err(Error::Quadrature { estimate: r, tol: 1e-10 })
    }
}

/// Scans `F0'` on 64 points of `[v_inf - gamma, v_inf + gamma]` for `B0` and
/// `B_inf`, sets `t0` for the mode and `K0 = 1.5 / B0`.
pub fn motion_class_params(
    kernel: &Kernel,
    body: &BodyConfig,
    v_inf: f64,
    mode: MotionMode,
) -> Result<MotionClassParams> {
    let gamma = body.gamma;
    let n = 64;
    let mut b0 = f64::NEG_INFINITY;
    let mut b_inf = f64::INFINITY;
    for i in 0..n {
        let w = v_inf - gamma + 2.0 * gamma * i as f64 / (n - 1) as f64;
        let d = f0_derivative(kernel, body, w)?;
        b0 = b0.max(d);
        b_inf = b_inf.min(d);
    }
    if !(b_inf > 0.0) {
        return Err(Error::Domain(format!("degenerate kernel: min F0' = {b_inf} is not positive")));
    }
    let k0 = 1.5 / b0;
    let t0 = match mode {
        MotionMode::Irreversal => gamma.ln().abs(),
        MotionMode::Reversal => k0 * gamma.ln().abs(),
    };
    Ok(MotionClassParams {
        gamma,
        v_inf,
        b0,
        b_inf,
        a_plus: 1.0,
        a_minus: 1.0,
        t0,
        k0,
        p: kernel.p_declared(),
        d: kernel.dim(),
        mode,
    })
}
