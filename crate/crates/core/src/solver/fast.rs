//! Tabulated evaluation of the residual force on a whole trajectory.
//!
//! Work is organised in passes over the grid, one per recursion level. Each
//! pass only reads the previous level, so nodes are independent and can be
//! evaluated in parallel without changing the floating-point result.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

use crate::equilibrium::BodyConfig;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::quad::{self, Tolerance};

use super::grid::{golden_max, TrajectoryGrid};
use super::Face;

const NW: usize = 65;
const NX: usize = 129;
const NV: usize = 65;
const PANEL: usize = 16;
const GRADING: f64 = 0.5;

fn lagrange4(t: f64) -> [f64; 4] {
    [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}

/// Start index and weights of a 4-point cubic stencil at fractional index `pos`.
fn stencil(pos: f64, n: usize) -> (usize, [f64; 4]) {
    let s = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    (s, lagrange4(pos - s as f64))
}

#[derive(Debug, Clone)]
struct Axis {
    lo: f64,
    h: f64,
    n: usize,
}

impl Axis {
    fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, h: (hi - lo) / (n - 1) as f64, n }
    }
    fn at(&self, i: usize) -> f64 {
        self.lo + self.h * i as f64
    }
    fn pos(&self, x: f64) -> f64 {
        (x - self.lo) / self.h
    }
}

/// `G(x, W) = int_{y >= 0} k(x, y) a0(W + s y) dy` on a grid, `s = +-1` by face.
struct Table {
    x: Axis,
    w: Axis,
    data: Vec<f64>,
}

impl Table {
    fn build(kernel: &Kernel, sign: f64, x: Axis, w: Axis, tol: Tolerance) -> Result<Self> {
        let rows: Vec<Result<Vec<f64>>> = (0..w.n)
            .into_par_iter()
            .map(|iw| {
                let wv = w.at(iw);
                let breaks: Vec<f64> = kernel.a0_kinks().iter().map(|c| sign * (c - wv)).collect();
                (0..x.n)
                    .map(|ix| {
                        let xv = x.at(ix);
                        quad::integrate_half_line_with_breaks(
                            |y| kernel.k(xv, y) * kernel.a0(wv + sign * y),
                            0.0,
                            &breaks,
                            tol,
                        )
                        .map(|e| e.value)
                    })
                    .collect()
            })
            .collect();
        let mut data = Vec::with_capacity(x.n * w.n);
        for r in rows {
            data.extend(r?);
        }
        Ok(Self { x, w, data })
    }

    fn eval(&self, xv: f64, wv: f64) -> f64 {
        let (sx, cx) = stencil(self.x.pos(xv), self.x.n);
        let (sw, cw) = stencil(self.w.pos(wv), self.w.n);
        let mut acc = 0.0;
        for (a, ca) in cw.iter().enumerate() {
            let row = &self.data[(sw + a) * self.x.n + sx..(sw + a) * self.x.n + sx + 4];
            acc += ca * (cx[0] * row[0] + cx[1] * row[1] + cx[2] * row[2] + cx[3] * row[3]);
        }
        acc
    }
}

/// One quadrature point of a precollision band.
#[derive(Debug, Clone, Copy)]
struct BandPoint {
    /// Absolute velocity.
    u: f64,
    tau: f64,
    /// Quadrature weight times transverse weight.
    qw: f64,
}

/// Residual force split by face.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProfile {
    pub r: Vec<f64>,
    pub r_l: Vec<f64>,
    pub r_r: Vec<f64>,
}

impl ResidualProfile {
    pub fn zeros(n: usize) -> Self {
        Self { r: vec![0.0; n], r_l: vec![0.0; n], r_r: vec![0.0; n] }
    }
}

pub struct ResidualSolver<'a> {
    kernel: &'a Kernel,
    body: &'a BodyConfig,
    v_inf: f64,
    depth: usize,
    /// Reference nodes and weights on `[-1, 1]`.
    gl: Vec<(f64, f64)>,
    panels: usize,
    quad_tol: f64,
}

/// Per-pass state: offset grid and interpolation tables.
struct Pass<'a> {
    s: &'a ResidualSolver<'a>,
    d: &'a TrajectoryGrid,
    tables: [Table; 2],
    v: Axis,
}

fn face_index(face: Face) -> usize {
    match face {
        Face::Left => 0,
        Face::Right => 1,
    }
}

fn sigma(face: Face) -> f64 {
    match face {
        Face::Left => 1.0,
        Face::Right => -1.0,
    }
}

impl<'a> ResidualSolver<'a> {
    pub fn new(kernel: &'a Kernel, body: &'a BodyConfig, v_inf: f64, depth: usize, band_points: usize, quad_tol: f64) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(PANEL).expect("nonzero"));
        let mut gl: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        gl.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { kernel, body, v_inf, depth, gl, panels: (band_points / PANEL).max(1), quad_tol }
    }

    /// `R_W` and its face split at every node of `traj` (absolute velocities).
    pub fn compute(&self, traj: &TrajectoryGrid) -> Result<ResidualProfile> {
        let n = traj.n_steps + 1;
        if self.depth == 0 {
            return Ok(ResidualProfile::zeros(n));
        }
        let d = traj.shifted(self.v_inf);
        let (dmin, dmax) = d
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let span = (dmax - dmin).max(1e-6);
        let pad = 0.05 * span;
        let wlo = self.v_inf + dmin - pad;
        let whi = self.v_inf + dmax + pad;
        let xr = span + 2.0 * pad;
        let tol = Tolerance::new(1e-3 * self.quad_tol, 1e-12);
        let left = Table::build(self.kernel, 1.0, Axis::new(-xr, xr, NX), Axis::new(wlo, whi, NW), tol)?;
        let right = Table::build(self.kernel, -1.0, Axis::new(-xr, xr, NX), Axis::new(wlo, whi, NW), tol)?;
        let pass = Pass { s: self, d: &d, tables: [left, right], v: Axis::new(wlo, whi, NV) };

        let mut corr: Option<[Vec<f64>; 2]> = None;
        for _level in 2..=self.depth {
            let rows: Vec<[[f64; NV]; 2]> = (0..n)
                .into_par_iter()
                .map(|j| [pass.corr_row(j, Face::Left, corr.as_ref()), pass.corr_row(j, Face::Right, corr.as_ref())])
                .collect();
            let mut l = Vec::with_capacity(n * NV);
            let mut r = Vec::with_capacity(n * NV);
            for row in rows {
                l.extend_from_slice(&row[0]);
                r.extend_from_slice(&row[1]);
            }
            corr = Some([l, r]);
        }
        let c = self.body.face_area(self.kernel.dim());
        let res: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|j| (c * pass.residual(j, Face::Left, corr.as_ref()), c * pass.residual(j, Face::Right, corr.as_ref())))
            .collect();
        let r_l: Vec<f64> = res.iter().map(|x| x.0).collect();
        let r_r: Vec<f64> = res.iter().map(|x| x.1).collect();
        let r = r_l.iter().zip(&r_r).map(|(a, b)| a + b).collect();
        if res.iter().any(|x| !x.0.is_finite() || !x.1.is_finite()) {
            return Err(Error::Domain("non-finite residual force".into()));
        }
        Ok(ResidualProfile { r, r_l, r_r })
    }
}

impl Pass<'_> {
    fn kernel(&self) -> &Kernel {
        self.s.kernel
    }

    /// Quadrature points of the incoming band of `face` at node `j`.
    fn band(&self, j: usize, face: Face) -> Vec<BandPoint> {
        if j == 0 {
            return Vec::new();
        }
        let d = self.d;
        let sg = sigma(face);
        let dt = d.dt;
        let tj = d.t(j);
        let dj = sg * d.values[j];
        // signed window sums S_i = int_{t_i}^{t_j} D and averages A_i
        let mut s = vec![0.0; j + 1];
        let mut m = vec![0.0; j + 1];
        m[j] = dj;
        let mut acc = 0.0;
        for i in (0..j).rev() {
            acc += 0.5 * dt * sg * (d.values[i] + d.values[i + 1]);
            s[i] = acc;
            let a = acc / (tj - d.t(i));
            m[i] = m[i + 1].max(a);
        }
        let avg_at = |i: usize, x: f64| -> f64 {
            let (di, dn) = (sg * d.values[i], sg * d.values[i + 1]);
            let a = (dn - di) / (2.0 * dt);
            let l = tj - d.t(i);
            if i + 1 == j {
                di + a * (dt + x)
            } else {
                (s[i] - di * x - a * x * x) / (l - x)
            }
        };
        // refined supremum
        let mut hi = m[0];
        let mut hi_at: Option<f64> = None;
        if m[0] > dj {
            let best = (0..j).rev().find(|&i| s[i] / (tj - d.t(i)) == m[0]).unwrap_or(0);
            let lo_s = if best > 0 { d.t(best - 1) } else { 0.0 };
            let hi_s = d.t(best + 1).min(tj);
            let f = |sv: f64| {
                if sv >= tj {
                    return dj;
                }
                let i = ((sv / dt).floor() as usize).min(j - 1);
                avg_at(i, sv - d.t(i))
            };
            let (sx, fx) = golden_max(f, lo_s, hi_s, 1e-13 * dt);
            if fx > hi {
                hi = fx;
                hi_at = Some(sx);
            }
        }
        let width = hi - dj;
        if !(width > 0.0) {
            return Vec::new();
        }
        let root = |u: f64| -> f64 {
            // largest i with m[i] >= u
            if m[0] < u {
                return hi_at.unwrap_or(0.0);
            }
            let (mut lo, mut up) = (0usize, j - 1);
            if m[up] >= u {
                lo = up;
            } else {
                while up - lo > 1 {
                    let mid = (lo + up) / 2;
                    if m[mid] >= u {
                        lo = mid;
                    } else {
                        up = mid;
                    }
                }
            }
            let i = lo;
            let di = sg * d.values[i];
            let dn = sg * d.values[i + 1];
            let a = (dn - di) / (2.0 * dt);
            let x = if i + 1 == j {
                if a != 0.0 {
                    (u - di) / a - dt
                } else {
                    0.0
                }
            } else {
                let l = tj - d.t(i);
                let g0 = s[i] - u * l;
                let b = u - di;
                let g = |x: f64| g0 + b * x - a * x * x;
                let qa = -a;
                let x = if qa.abs() * dt * dt <= 1e-14 * (b.abs() * dt + g0.abs()) {
                    if b != 0.0 {
                        -g0 / b
                    } else {
                        f64::NAN
                    }
                } else {
                    let disc = b * b - 4.0 * qa * g0;
                    if disc < 0.0 {
                        f64::NAN
                    } else {
                        let q = -0.5 * (b + b.signum() * disc.sqrt());
                        let r1 = q / qa;
                        let r2 = if q != 0.0 { g0 / q } else { f64::NAN };
                        let inside = |r: f64| r >= -1e-9 * dt && r <= dt * (1.0 + 1e-9);
                        if inside(r1) {
                            r1
                        } else if inside(r2) {
                            r2
                        } else {
                            f64::NAN
                        }
                    }
                };
                if x.is_finite() {
                    x
                } else {
                    let (mut lo, mut hi) = (0.0, dt);
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if g(mid) >= 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                }
            };
            d.t(i) + x.clamp(0.0, dt)
        };
        let mut out = Vec::with_capacity(self.s.panels * PANEL);
        let p = self.s.panels;
        let mut edges = Vec::with_capacity(p + 1);
        edges.push(0.0);
        for k in 1..=p {
            edges.push(width * GRADING.powi((p - k) as i32));
        }
        let kernel = self.kernel();
        for e in edges.windows(2) {
            let (a, b) = (e[0], e[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(x, wq) in &self.s.gl {
                let y = mid + half * x;
                let u_off = dj + y;
                let tau = root(u_off).min(tj);
                let w = super::grid::transverse_weight(kernel, self.s.body, tj - tau);
                let qw = wq * half * w;
                if qw > 0.0 {
                    out.push(BandPoint { u: self.s.v_inf + sg * u_off, tau, qw });
                }
            }
        }
        out
    }

    /// `T_l(tau, u)`: outgoing density of level `l` at `face`, from the base table
    /// plus the previous level's tabulated correction.
    fn outgoing(&self, face: Face, tau: f64, u: f64, corr: Option<&[Vec<f64>; 2]>) -> f64 {
        let w = self.s.v_inf + self.d.value_at(tau);
        let base = self.tables[face_index(face)].eval(u - w, w);
        match corr {
            None => base,
            Some(c) => {
                let c = &c[face_index(face)];
                let dt = self.d.dt;
                let i = ((tau / dt).floor() as usize).min(self.d.n_steps - 1);
                let f = (tau - self.d.t(i)) / dt;
                let (sv, cv) = stencil(self.v.pos(u), NV);
                let row = |r: usize| {
                    let o = r * NV + sv;
                    cv[0] * c[o] + cv[1] * c[o + 1] + cv[2] * c[o + 2] + cv[3] * c[o + 3]
                };
                base + (1.0 - f) * row(i) + f * row(i + 1)
            }
        }
    }

    fn corr_row(&self, j: usize, face: Face, prev: Option<&[Vec<f64>; 2]>) -> [f64; NV] {
        let mut out = [0.0; NV];
        let pts = self.band(j, face);
        if pts.is_empty() {
            return out;
        }
        let kernel = self.kernel();
        let wj = self.s.v_inf + self.d.values[j];
        let weights: Vec<(f64, f64)> = pts
            .iter()
            .map(|p| (p.u - wj, p.qw * (self.outgoing(face, p.tau, p.u, prev) - kernel.a0(p.u))))
            .collect();
        for (m, o) in out.iter_mut().enumerate() {
            let x = self.v.at(m) - wj;
            *o = weights.iter().map(|&(y, c)| c * kernel.k(x, y)).sum();
        }
        out
    }

    /// Face residual without the face-area factor.
    fn residual(&self, j: usize, face: Face, corr: Option<&[Vec<f64>; 2]>) -> f64 {
        let pts = self.band(j, face);
        let kernel = self.kernel();
        let wj = self.s.v_inf + self.d.values[j];
        let sum: f64 = pts
            .iter()
            .map(|p| p.qw * kernel.ell(p.u - wj) * (kernel.a0(p.u) - self.outgoing(face, p.tau, p.u, corr)))
            .sum();
        sigma(face) * sum
    }
}

#[cfg(test)]
mod tests {
    use super::super::reference::residual_force_faces;
    use super::*;
    use crate::kernels::KernelSpec;

    const G: f64 = 0.05;
    const V_INF: f64 = 0.2;

    /// Dips below `V_INF` after a while, so both faces see precollisions.
    fn wiggle() -> TrajectoryGrid {
        TrajectoryGrid::from_fn(8.0, 400, |t| V_INF + G * (-2.0 * t).exp() - 0.3 * G * G * t * (-0.5 * t).exp())
            .unwrap()
    }

    fn check_against_reference(spec: KernelSpec, depth: usize, nodes: &[usize], rel: f64) {
        let k = Kernel::new(spec).unwrap();
        let body = BodyConfig::new(G, 0.0);
        let w = wiggle();
        let fast = ResidualSolver::new(&k, &body, V_INF, depth, 256, 1e-10).compute(&w).unwrap();
        for &j in nodes {
            let (l, r) = residual_force_faces(&w, &k, &body, w.t(j), depth, 1e-15).unwrap();
            let scale = l.abs().max(r.abs());
            assert!((fast.r_l[j] - l).abs() <= rel * scale, "depth {depth} node {j}: {} vs {l}", fast.r_l[j]);
            assert!((fast.r_r[j] - r).abs() <= rel * scale, "depth {depth} node {j}: {} vs {r}", fast.r_r[j]);
            assert_eq!(fast.r[j], fast.r_l[j] + fast.r_r[j]);
        }
    }

    #[test]
    fn matches_reference_gaussian_flux() {
        for depth in [1, 2] {
            check_against_reference(KernelSpec::gaussian_flux(1.0, 0.5, 1.0, 3), depth, &[5, 40, 300, 400], 1e-5);
        }
    }

    #[test]
    fn matches_reference_width_coupled() {
        check_against_reference(KernelSpec::width_coupled(1.0, 1.0, 3), 1, &[40, 300], 1e-4);
    }

    #[test]
    fn right_face_quiet_while_decreasing() {
        let k = Kernel::new(KernelSpec::gaussian_flux(1.0, 2.0, 1.0, 3)).unwrap();
        let body = BodyConfig::new(G, 0.0);
        let w = TrajectoryGrid::from_fn(10.0, 500, |t| V_INF + G * (-2.4 * t).exp()).unwrap();
        let p = ResidualSolver::new(&k, &body, V_INF, 2, 256, 1e-10).compute(&w).unwrap();
        assert!(p.r_r.iter().all(|&x| x == 0.0));
        assert_eq!(p.r_l[0], 0.0);
        // the cooler body gains energy from recollisions: force opposes the motion
        assert!(p.r.iter().skip(1).all(|&x| x < 0.0));
    }

    #[test]
    fn depth_zero_is_free_streaming() {
        let k = Kernel::new(KernelSpec::gaussian_flux(1.0, 2.0, 1.0, 3)).unwrap();
        let body = BodyConfig::new(G, 0.0);
        let p = ResidualSolver::new(&k, &body, V_INF, 0, 256, 1e-10).compute(&wiggle()).unwrap();
        assert_eq!(p, ResidualProfile::zeros(401));
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let k = Kernel::new(KernelSpec::gaussian_flux(1.0, 0.5, 1.0, 3)).unwrap();
        let body = BodyConfig::new(G, 0.0);
        let s = ResidualSolver::new(&k, &body, V_INF, 2, 256, 1e-10);
        let run = |n: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| s.compute(&wiggle()).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
