//! Particle ensemble and the event-driven body/gas update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equilibrium::BodyConfig;
use crate::error::{Error, Result};
use crate::kernels::Kernel;

use super::sampler::{reflect, sample_b, velocity_cutoff, velocity_nodes, TableSampler, TransverseMixture};
use super::MCConfig;

/// Relative snap distance for face crossings.
const SNAP: f64 = 1e-12;
const MAX_EVENTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
    /// Axially within the body, transversely outside it.
    Between,
}

/// Settings of a simulation that are not part of [`MCConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub v_inf: f64,
    pub v0: f64,
    /// Clamp the body at this velocity and only measure the force.
    pub static_velocity: Option<f64>,
    /// Remove particles after their first reflection.
    pub absorb_after_first_hit: bool,
}

impl Scenario {
    pub fn free(v_inf: f64, gamma: f64) -> Self {
        Self { v_inf, v0: v_inf + gamma, static_velocity: None, absorb_after_first_hit: false }
    }

    pub fn clamped(w: f64) -> Self {
        Self { v_inf: w, v0: w, static_velocity: Some(w), absorb_after_first_hit: false }
    }

    /// Scheduling bounds on the body velocity.
    pub fn bounds(&self, gamma: f64) -> (f64, f64) {
        match self.static_velocity {
            Some(w) => (w, w),
            None => (self.v_inf.min(self.v0) - gamma - 0.5, self.v_inf.max(self.v0) + 0.5),
        }
    }
}

/// One replica: the particles that can reach the body before `t_max`, the body
/// and the random stream.
#[derive(Debug, Clone)]
pub struct MCState {
    kernel: Kernel,
    body: BodyConfig,
    scenario: Scenario,
    pub t: f64,
    pub x_body: f64,
    pub v_body: f64,
    /// Summed momentum transferred to the body, `sum w (u_in - u_out)`.
    pub impulse: f64,
    pub n_collisions: u64,
    /// Weight of every particle.
    pub weight: f64,
    h: f64,
    n_steps: usize,
    step: usize,
    v_lo: f64,
    v_hi: f64,
    x: Vec<f64>,
    u: Vec<f64>,
    y: Vec<[f64; 2]>,
    w: Vec<[f64; 2]>,
    t_ref: Vec<f64>,
    side: Vec<Side>,
    active: Vec<bool>,
    u_initial: Vec<f64>,
    /// Per-particle transferred momentum.
    particle_impulse: Vec<f64>,
    buckets: Vec<Vec<u32>>,
    rng: ChaCha8Rng,
}

/// Entry and exit times of `y + w s` into the transverse cross-section.
fn cross_section_window(dim: u8, r: f64, y: [f64; 2], w: [f64; 2]) -> Option<(f64, f64)> {
    let (yy, wy, ww) = match dim {
        1 => return Some((f64::NEG_INFINITY, f64::INFINITY)),
        2 => (y[0] * y[0], y[0] * w[0], w[0] * w[0]),
        _ => (y[0] * y[0] + y[1] * y[1], y[0] * w[0] + y[1] * w[1], w[0] * w[0] + w[1] * w[1]),
    };
    let c = yy - r * r;
    if ww == 0.0 {
        return if c <= 0.0 { Some((f64::NEG_INFINITY, f64::INFINITY)) } else { None };
    }
    let disc = wy * wy - ww * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-wy - s) / ww, (-wy + s) / ww))
}

fn inside(dim: u8, r: f64, y: [f64; 2]) -> bool {
    match dim {
        1 => true,
        2 => y[0].abs() <= r,
        _ => y[0] * y[0] + y[1] * y[1] <= r * r,
    }
}

impl MCState {
    /// Samples the relevant part of the initial gas: every particle whose free
    /// path can meet the body before `t_max` while the body velocity stays in
    /// the scheduling bounds. `n_particles = 0` gives a free body.
    pub fn sample_initial(
        kernel: &Kernel,
        body: &BodyConfig,
        mc: &MCConfig,
        scenario: Scenario,
        seed: u64,
        replica: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replica);
        let dim = kernel.dim();
        let (v_lo, v_hi) = scenario.bounds(body.gamma);
        let t_max = mc.t_max;
        let half = 0.5 * body.length;
        let r = body.radius;
        let len = |u: f64| body.length + (u - v_lo).max(0.0) * t_max + (v_hi - u).max(0.0) * t_max;
        let cut = velocity_cutoff(kernel);
        let core = 4.0f64.max(v_lo.abs() + 1.0).max(v_hi.abs() + 1.0);
        let mut kinks = kernel.a0_kinks().to_vec();
        kinks.extend([v_lo, v_hi]);
        let nodes = velocity_nodes(cut, core, &kinks);
        let dens = nodes.iter().map(|&u| kernel.a0(u) * len(u)).collect();
        let table = TableSampler::new(nodes, dens)?;
        let mix = TransverseMixture::new(dim, r, t_max);
        let n = mc.n_particles;
        let weight = if n == 0 { 0.0 } else { mc.density_norm * table.total() * mix.total / n as f64 };

        let h = mc.dt_sub;
        let n_steps = (t_max / h).round().max(1.0) as usize;
        let mut st = Self {
            kernel: kernel.clone(),
            body: body.clone(),
            scenario,
            t: 0.0,
            x_body: 0.0,
            v_body: scenario.static_velocity.unwrap_or(scenario.v0),
            impulse: 0.0,
            n_collisions: 0,
            weight,
            h,
            n_steps,
            step: 0,
            v_lo,
            v_hi,
            x: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            w: Vec::with_capacity(n),
            t_ref: vec![0.0; n],
            side: Vec::with_capacity(n),
            active: Vec::with_capacity(n),
            u_initial: Vec::with_capacity(n),
            particle_impulse: vec![0.0; n],
            buckets: vec![Vec::new(); n_steps + 1],
            rng,
        };
        for _ in 0..n {
            let u = table.sample(&mut st.rng);
            let wv = mix.sample(&mut st.rng);
            let left = (u - v_lo).max(0.0) * t_max;
            let x = -half - left + len(u) * st.rng.random::<f64>();
            let y = st.stadium_point(wv, t_max);
            let side = if x < -half {
                Side::Left
            } else if x > half {
                Side::Right
            } else {
                Side::Between
            };
            // inside the body: no gas there
            let active = !(side == Side::Between && inside(dim, r, y));
            st.x.push(x);
            st.u.push(u);
            st.y.push(y);
            st.w.push(wv);
            st.side.push(side);
            st.active.push(active);
            st.u_initial.push(u);
        }
        for i in 0..n {
            if st.active[i] {
                st.schedule(i);
            }
        }
        Ok(st)
    }

    /// Uniform point of the set of transverse starts that meet the
    /// cross-section within `t_max` when moving with `w`.
    fn stadium_point(&mut self, w: [f64; 2], t_max: f64) -> [f64; 2] {
        let r = self.body.radius;
        match self.kernel.dim() {
            1 => [0.0, 0.0],
            2 => {
                let a = (-w[0] * t_max).min(0.0) - r;
                let b = (-w[0] * t_max).max(0.0) + r;
                [a + (b - a) * self.rng.random::<f64>(), 0.0]
            }
            _ => {
                let speed = w[0].hypot(w[1]);
                let l = speed * t_max;
                let disk = std::f64::consts::PI * r * r;
                let (ex, ey) = if speed > 0.0 { (-w[0] / speed, -w[1] / speed) } else { (1.0, 0.0) };
                if self.rng.random::<f64>() * (disk + 2.0 * r * l) < disk {
                    let rho = r * self.rng.random::<f64>().sqrt();
                    let th = std::f64::consts::TAU * self.rng.random::<f64>();
                    let (px, py) = (rho * th.cos(), rho * th.sin());
                    // forward half-disk sits at the far end of the stadium
                    let shift = if px * ex + py * ey > 0.0 { l } else { 0.0 };
                    [px + shift * ex, py + shift * ey]
                } else {
                    let s = l * self.rng.random::<f64>();
                    let q = r * (2.0 * self.rng.random::<f64>() - 1.0);
                    [s * ex - q * ey, s * ey + q * ex]
                }
            }
        }
    }

    pub fn n_particles(&self) -> usize {
        self.x.len()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn per_particle_impulse(&self) -> &[f64] {
        &self.particle_impulse
    }

    /// `(V - V(0)) - E t - sum w (u_in - u_out)`; zero up to rounding.
    pub fn bookkeeping_residual(&self) -> f64 {
        let gas: f64 = self.u.iter().zip(&self.u_initial).map(|(a, b)| self.weight * (a - b)).sum();
        match self.scenario.static_velocity {
            Some(_) => self.impulse + gas,
            None => (self.v_body - self.scenario.v0) - self.body.e_force * self.t + gas,
        }
    }

    /// Time `t_max` of the particle sampling region.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.h
    }

    fn face_positions(&self, s: f64) -> (f64, f64) {
        let xb = self.x_body + self.v_body * (s - self.t);
        (xb - 0.5 * self.body.length, xb + 0.5 * self.body.length)
    }

    /// Puts particle `i` in the bucket of the first step at which it may
    /// interact, or retires it.
    fn schedule(&mut self, i: usize) {
        let now = self.t;
        let dim = self.kernel.dim();
        let (a, b) = match cross_section_window(dim, self.body.radius, self.y[i], self.w[i]) {
            Some(ab) => ab,
            None => {
                self.active[i] = false;
                return;
            }
        };
        let dt_ref = now - self.t_ref[i];
        let (a, b) = (a - dt_ref, b - dt_ref);
        if b < 0.0 {
            self.active[i] = false;
            return;
        }
        let x = self.x[i] + self.u[i] * dt_ref;
        let u = self.u[i];
        let (lf, rf) = self.face_positions(now);
        let wait = match self.side[i] {
            Side::Left => {
                if u <= self.v_lo {
                    self.active[i] = false;
                    return;
                }
                let ax = ((lf - x).max(0.0)) / (u - self.v_lo);
                if ax > b {
                    self.active[i] = false;
                    return;
                }
                ax.max(a)
            }
            Side::Right => {
                if u >= self.v_hi {
                    self.active[i] = false;
                    return;
                }
                let ax = ((x - rf).max(0.0)) / (self.v_hi - u);
                if ax > b {
                    self.active[i] = false;
                    return;
                }
                ax.max(a)
            }
            Side::Between => {
                let speed = (u - self.v_lo).abs().max((u - self.v_hi).abs());
                let gap = (x - lf).min(rf - x).max(0.0);
                let exit = if speed > 0.0 { gap / speed } else { f64::INFINITY };
                exit.min(a.max(0.0))
            }
        };
        let k = ((now + wait.max(0.0)) / self.h).floor() as usize;
        let k = k.max(self.step);
        if k < self.n_steps {
            self.buckets[k].push(i as u32);
        }
    }

    /// Advances to `until` (rounded to the step grid).
    pub fn advance(&mut self, until: f64) -> Result<()> {
        let target = ((until / self.h).round() as usize).min(self.n_steps);
        while self.step < target {
            self.substep()?;
        }
        Ok(())
    }

    fn substep(&mut self) -> Result<()> {
        let k = self.step;
        let t_end = (k + 1) as f64 * self.h;
        let bucket = std::mem::take(&mut self.buckets[k]);
        let mut kick = 0.0;
        let mut resched = Vec::with_capacity(bucket.len());
        for &i in &bucket {
            let i = i as usize;
            if !self.active[i] {
                continue;
            }
            kick += self.move_particle(i, t_end);
            if self.active[i] {
                resched.push(i);
            }
        }
        let v_old = self.v_body;
        self.x_body += v_old * (t_end - self.t);
        self.t = t_end;
        self.step = k + 1;
        self.impulse += kick;
        if self.scenario.static_velocity.is_none() {
            self.v_body = v_old + self.body.e_force * self.h + kick;
            if !(self.v_body >= self.v_lo && self.v_body <= self.v_hi) {
                return Err(Error::VelocityBounds { v: self.v_body, lo: self.v_lo, hi: self.v_hi, t: self.t });
            }
        }
        for i in resched {
            self.schedule(i);
        }
        Ok(())
    }

    /// Moves particle `i` from its reference time to `t_end` with the body
    /// velocity frozen; returns the momentum given to the body.
    fn move_particle(&mut self, i: usize, t_end: f64) -> f64 {
        let dim = self.kernel.dim();
        let r = self.body.radius;
        let half = 0.5 * self.body.length;
        let vb = self.v_body;
        let t0 = self.t;
        let xb0 = self.x_body;
        // bring the particle to the start of the step
        let d = t0 - self.t_ref[i];
        self.x[i] += self.u[i] * d;
        self.y[i] = [self.y[i][0] + self.w[i][0] * d, self.y[i][1] + self.w[i][1] * d];
        self.t_ref[i] = t0;
        let mut s = t0;
        let mut kick = 0.0;
        for _ in 0..MAX_EVENTS {
            let rem = t_end - s;
            let xi = self.x[i] - (xb0 + vb * (s - t0));
            let rel = self.u[i] - vb;
            let tol = SNAP * half.max(xi.abs());
            let (event, next_side) = match self.side[i] {
                Side::Left | Side::Right => {
                    let left = self.side[i] == Side::Left;
                    let gap = if left { (-half - xi).max(0.0) } else { (xi - half).max(0.0) };
                    let closing = if left { rel } else { -rel };
                    if closing > 0.0 && gap <= closing * rem + tol {
                        ((gap / closing).min(rem), Side::Between)
                    } else {
                        (f64::INFINITY, self.side[i])
                    }
                }
                Side::Between => {
                    let exit = if rel > 0.0 {
                        (((half - xi) / rel).max(0.0), Side::Right)
                    } else if rel < 0.0 {
                        (((-half - xi) / rel).max(0.0), Side::Left)
                    } else {
                        (f64::INFINITY, Side::Between)
                    };
                    if let Some((a, b)) = cross_section_window(dim, r, self.y[i], self.w[i]) {
                        if b >= 0.0 && a.max(0.0) <= exit.0.min(rem) {
                            // lateral hit: no axial momentum exchange
                            self.active[i] = false;
                            return kick;
                        }
                    }
                    exit
                }
            };
            if event > rem {
                break;
            }
            s += event;
            self.x[i] += self.u[i] * event;
            self.y[i] = [self.y[i][0] + self.w[i][0] * event, self.y[i][1] + self.w[i][1] * event];
            self.t_ref[i] = s;
            let xb = xb0 + vb * (s - t0);
            match (self.side[i], next_side) {
                (Side::Left, Side::Between) | (Side::Right, Side::Between) => {
                    let left = self.side[i] == Side::Left;
                    self.x[i] = if left { xb - half } else { xb + half };
                    if inside(dim, r, self.y[i]) {
                        let u_in = self.u[i];
                        let u_out = reflect(&self.kernel, vb, u_in, &mut self.rng);
                        self.u[i] = u_out;
                        self.w[i] = sample_b(dim, &mut self.rng);
                        let j = self.weight * (u_in - u_out);
                        kick += j;
                        self.particle_impulse[i] += j;
                        self.n_collisions += 1;
                        if self.scenario.absorb_after_first_hit {
                            self.active[i] = false;
                            return kick;
                        }
                    } else {
                        self.side[i] = Side::Between;
                    }
                }
                (Side::Between, Side::Left) => {
                    self.x[i] = xb - half;
                    self.side[i] = Side::Left;
                }
                (Side::Between, Side::Right) => {
                    self.x[i] = xb + half;
                    self.side[i] = Side::Right;
                }
                _ => {}
            }
        }
        kick
    }
}
