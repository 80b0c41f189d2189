//! Uniform time grids with exact window averages of the piecewise-linear
//! interpolant, plus the precollision geometry built on them.

use crate::equilibrium::BodyConfig;
use crate::error::{Error, Result};
use crate::kernels::Kernel;

use super::Face;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGrid {
    pub t_max: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub values: Vec<f64>,
    /// Trapezoid prefix integrals, `cumsum[0] = 0`.
    pub cumsum: Vec<f64>,
}

impl TrajectoryGrid {
    pub fn new(t_max: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(t_max > 0.0) {
            return Err(Error::Domain("trajectory needs at least two nodes and t_max > 0".into()));
        }
        let n_steps = values.len() - 1;
        let dt = t_max / n_steps as f64;
        let mut cumsum = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumsum.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * dt * (w[0] + w[1]);
            cumsum.push(acc);
        }
        Ok(Self { t_max, n_steps, dt, values, cumsum })
    }

    pub fn from_fn(t_max: f64, n_steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dt = t_max / n_steps as f64;
        Self::new(t_max, (0..=n_steps).map(|i| f(i as f64 * dt)).collect())
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_max
        } else {
            i as f64 * self.dt
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.t(i)).collect()
    }

    /// Same grid with every value shifted by `-shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self::new(self.t_max, self.values.iter().map(|v| v - shift).collect()).expect("valid grid")
    }

    fn cell(&self, s: f64) -> (usize, f64) {
        let i = ((s / self.dt).floor().max(0.0) as usize).min(self.n_steps - 1);
        (i, s - i as f64 * self.dt)
    }

    /// Piecewise-linear value at `s`.
    pub fn value_at(&self, s: f64) -> f64 {
        let (i, x) = self.cell(s);
        let (a, b) = (self.values[i], self.values[i + 1]);
        a + (b - a) * (x / self.dt)
    }

    /// Exact integral of the piecewise-linear interpolant on `[0, s]`.
    pub fn cum_at(&self, s: f64) -> f64 {
        let (i, x) = self.cell(s);
        let (a, b) = (self.values[i], self.values[i + 1]);
        self.cumsum[i] + a * x + 0.5 * (b - a) * x * x / self.dt
    }

    /// `<W>_{s,t}`; the limit `s -> t` gives `W(t)`.
    pub fn window_average(&self, s: f64, t: f64) -> Result<f64> {
        let eps = 1e-12 * self.t_max;
        if !(s >= 0.0 && s <= t && t <= self.t_max + eps) {
            return Err(Error::OutOfRange(format!("window [{s}, {t}] outside [0, {}]", self.t_max)));
        }
        let t = t.min(self.t_max);
        let (is, xs) = self.cell(s);
        let (it, xt) = self.cell(t);
        if is == it {
            let (a, b) = (self.values[is], self.values[is + 1]);
            return Ok(a + (b - a) * (xs + xt) / (2.0 * self.dt));
        }
        // partial cells at both ends, whole cells in between
        // lengths taken from the node positions so that constants stay exact
        let piece = |i: usize, x0: f64, len: f64| {
            let (a, b) = (self.values[i], self.values[i + 1]);
            len * (a + (b - a) * (2.0 * x0 + len) / (2.0 * self.dt))
        };
        let head_len = self.t(is + 1) - s;
        let tail_len = t - self.t(it);
        let head = piece(is, xs, head_len);
        let tail = piece(it, 0.0, tail_len);
        let mid = self.cumsum[it] - self.cumsum[is + 1];
        let len = head_len + (self.t(it) - self.t(is + 1)) + tail_len;
        Ok((head + mid + tail) / len)
    }

    /// `inf` and `sup` of `<W>_{s,t}` over `s < t` (the limit `W(t)` included).
    pub fn precollision_band(&self, t: f64) -> Result<(f64, f64)> {
        if !(t > 0.0 && t <= self.t_max * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange(format!("band time {t}")));
        }
        let wt = self.value_at(t);
        let nodes: Vec<f64> = self.nodes_below(t);
        let avg = |s: f64| self.window_average(s, t).expect("in range");
        let mut lo = (wt, t);
        let mut hi = (wt, t);
        for &s in &nodes {
            let a = avg(s);
            if a < lo.0 {
                lo = (a, s);
            }
            if a > hi.0 {
                hi = (a, s);
            }
        }
        let bracket = |s: f64| ((s - self.dt).max(0.0), (s + self.dt).min(t));
        let tol = 1e-13 * self.dt;
        let hi_v = if hi.1 == t {
            hi.0
        } else {
            let (a, b) = bracket(hi.1);
            golden_max(avg, a, b, tol).1.max(hi.0)
        };
        let lo_v = if lo.1 == t {
            lo.0
        } else {
            let (a, b) = bracket(lo.1);
            (-golden_max(|s| -avg(s), a, b, tol).1).min(lo.0)
        };
        Ok((lo_v, hi_v))
    }

    /// Grid nodes strictly below `t`, in decreasing order.
    fn nodes_below(&self, t: f64) -> Vec<f64> {
        let top = (t / self.dt).ceil() as usize;
        let top = top.min(self.n_steps);
        (0..top).rev().map(|i| self.t(i)).filter(|&s| s < t).collect()
    }

    /// Largest `s` in `(0, t)` with `<W>_{s,t} = u`, scanning cells downward
    /// from `t` and bisecting the first sign change.
    pub fn first_precollision_time(&self, t: f64, u: f64) -> Option<f64> {
        if !(t > 0.0) {
            return None;
        }
        let phi = |s: f64| self.window_average(s, t).expect("in range") - u;
        let top = self.value_at(t) - u;
        if top == 0.0 {
            return None;
        }
        let mut prev = t;
        for s in self.nodes_below(t) {
            let f = phi(s);
            if f == 0.0 {
                return if s > 0.0 { Some(s) } else { None };
            }
            if f.signum() != top.signum() {
                let (mut a, mut b) = (s, prev);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if phi(m).signum() == top.signum() {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                let r = 0.5 * (a + b);
                return if r > 0.0 { Some(r) } else { None };
            }
            prev = s;
        }
        None
    }
}

/// Golden-section search for the maximum of `f` on `[a, b]`; returns `(x, f(x))`.
/// `tol` is floored at a few ulps of the endpoints.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let tol = tol.max(8.0 * f64::EPSILON * a.abs().max(b.abs()));
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let (x, fx) = if fc > fd { (c, fc) } else { (d, fd) };
    let (fa, fb) = (f(a), f(b));
    [(a, fa), (b, fb), (x, fx)].into_iter().fold((x, fx), |m, p| if p.1 > m.1 { p } else { m })
}

/// Mass of `b` on `|u_perp| <= 2r / gap`.
pub fn transverse_weight(kernel: &Kernel, body: &BodyConfig, gap: f64) -> f64 {
    if gap <= 0.0 {
        return 1.0;
    }
    kernel.b_ball_mass(2.0 * body.radius / gap)
}

/// Incoming half-band of `face` at `t`: `[W(t), sup]` on the left face,
/// `[inf, W(t)]` on the right.
pub fn face_band(traj: &TrajectoryGrid, t: f64, face: Face) -> Result<(f64, f64)> {
    let (lo, hi) = traj.precollision_band(t)?;
    let w = traj.value_at(t);
    Ok(match face {
        Face::Left => (w, hi.max(w)),
        Face::Right => (lo.min(w), w),
    })
}
