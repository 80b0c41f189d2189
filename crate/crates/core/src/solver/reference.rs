//! Direct recursive evaluation of the boundary densities with adaptive
//! quadrature. Slow, but independent of the tabulated fast path it checks.

use crate::equilibrium::BodyConfig;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::quad::{self, Tolerance};

use super::grid::{face_band, transverse_weight, TrajectoryGrid};
use super::{Face, PrecollisionRecord};

fn tol(abs: f64) -> Tolerance {
    Tolerance { abs, rel: 1e-9, max_intervals: 600 }
}

/// First precollision of the incoming characteristic `u` at `face`, if any.
pub fn precollision(
    traj: &TrajectoryGrid,
    kernel: &Kernel,
    body: &BodyConfig,
    t: f64,
    face: Face,
    u: f64,
) -> Option<PrecollisionRecord> {
    let w = traj.value_at(t);
    let incoming = match face {
        Face::Left => u > w,
        Face::Right => u < w,
    };
    if !incoming {
        return None;
    }
    let tau = traj.first_precollision_time(t, u)?;
    Some(PrecollisionRecord {
        tau,
        u_x: u,
        transverse_weight: transverse_weight(kernel, body, t - tau),
        depth: 0,
        face,
    })
}

struct Ctx<'a> {
    traj: &'a TrajectoryGrid,
    kernel: &'a Kernel,
    body: &'a BodyConfig,
    abs: f64,
}

impl Ctx<'_> {
    fn f_minus(&self, t: f64, face: Face, u: f64, depth: usize) -> f64 {
        let a0 = self.kernel.a0(u);
        if depth == 0 {
            return a0;
        }
        match precollision(self.traj, self.kernel, self.body, t, face, u) {
            None => a0,
            Some(rec) => {
                let fp = self.f_plus(rec.tau, face, u, depth);
                rec.transverse_weight * fp + (1.0 - rec.transverse_weight) * a0
            }
        }
    }

    fn f_plus(&self, t: f64, face: Face, v: f64, depth: usize) -> f64 {
        let k = self.kernel;
        let w = self.traj.value_at(t);
        let x = v - w;
        let sign = match face {
            Face::Left => 1.0,
            Face::Right => -1.0,
        };
        let breaks: Vec<f64> = k.a0_kinks().iter().map(|c| sign * (c - w)).collect();
        let free = quad::integrate_half_line_with_breaks(
            |y| k.k(x, y) * k.a0(w + sign * y),
            0.0,
            &breaks,
            tol(self.abs),
        );
        let mut total = match free {
            Ok(e) => e.value,
            Err(_) => return f64::NAN,
        };
        if depth >= 2 {
            let (lo, hi) = match face_band(self.traj, t, face) {
                Ok(b) => b,
                Err(_) => return f64::NAN,
            };
            if hi > lo {
                let band = quad::integrate(
                    |u| k.k(x, u - w) * (self.f_minus(t, face, u, depth - 1) - k.a0(u)),
                    lo,
                    hi,
                    tol(self.abs),
                );
                match band {
                    Ok(e) => total += e.value,
                    Err(_) => return f64::NAN,
                }
            }
        }
        total
    }

    fn residual(&self, t: f64, face: Face, depth: usize) -> Result<f64> {
        if depth == 0 || t <= 0.0 {
            return Ok(0.0);
        }
        let (lo, hi) = face_band(self.traj, t, face)?;
        if !(hi > lo) {
            return Ok(0.0);
        }
        let w = self.traj.value_at(t);
        let k = self.kernel;
        let sign = match face {
            Face::Left => -1.0,
            Face::Right => 1.0,
        };
        let e = quad::integrate(
            |u| k.ell(u - w) * (self.f_minus(t, face, u, depth) - k.a0(u)),
            lo,
            hi,
            tol(self.abs),
        )?;
        Ok(sign * self.body.face_area(k.dim()) * e.value)
    }
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Quadrature { estimate: f64::INFINITY, tol: 0.0 })
    }
}

/// Horizontal factor of the incoming density at `face`, truncated at `depth`
/// nested boundary evaluations.
#[allow(clippy::too_many_arguments)]
pub fn f_minus(
    traj: &TrajectoryGrid,
    kernel: &Kernel,
    body: &BodyConfig,
    t: f64,
    face: Face,
    u: f64,
    depth: usize,
    abs_tol: f64,
) -> Result<f64> {
    finite(Ctx { traj, kernel, body, abs: abs_tol }.f_minus(t, face, u, depth))
}

/// Horizontal factor `a_+` of the outgoing density at `face`.
#[allow(clippy::too_many_arguments)]
pub fn f_plus_boundary(
    traj: &TrajectoryGrid,
    kernel: &Kernel,
    body: &BodyConfig,
    t: f64,
    face: Face,
    v: f64,
    depth: usize,
    abs_tol: f64,
) -> Result<f64> {
    if depth == 0 {
        return Err(Error::Domain("boundary density needs depth >= 1".into()));
    }
    finite(Ctx { traj, kernel, body, abs: abs_tol }.f_plus(t, face, v, depth))
}

/// `(r^L, r^R)` at time `t` by adaptive quadrature.
pub fn residual_force_faces(
    traj: &TrajectoryGrid,
    kernel: &Kernel,
    body: &BodyConfig,
    t: f64,
    depth: usize,
    abs_tol: f64,
) -> Result<(f64, f64)> {
    let ctx = Ctx { traj, kernel, body, abs: abs_tol };
    Ok((ctx.residual(t, Face::Left, depth)?, ctx.residual(t, Face::Right, depth)?))
}

/// `R_W(t) = r^L + r^R`.
pub fn residual_force(
    traj: &TrajectoryGrid,
    kernel: &Kernel,
    body: &BodyConfig,
    t: f64,
    depth: usize,
    abs_tol: f64,
) -> Result<f64> {
    let (l, r) = residual_force_faces(traj, kernel, body, t, depth, abs_tol)?;
    Ok(l + r)
}
