//! Particle simulation of the body in a free-molecular gas, used as an
//! independent stochastic check of the deterministic solver.
//!
//! Only particles that can reach the body before `t_max` are simulated. With
//! body velocities confined to `[v_lo, v_hi]`, a particle with horizontal
//! velocity `u` can only meet a face if it starts within `(u - v_lo)+ t_max` to
//! the left or `(v_hi - u)+ t_max` to the right, and its transverse path crosses
//! the body's cross-section. That set is sampled exactly; all particles carry
//! the same weight.

mod sampler;
mod state;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{detect_reversal, ReversalReport};
use crate::equilibrium::BodyConfig;
use crate::error::{Error, Result};
use crate::kernels::Kernel;

pub use sampler::{emission_speed, reflect, sample_b, TableSampler, TransverseMixture};
pub use state::{MCState, Scenario};

fn default_n() -> usize {
    1_000_000
}
fn default_dt_sub() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    10.0
}
fn default_norm() -> f64 {
    1.0
}
fn default_replicas() -> usize {
    16
}
fn default_records() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCConfig {
    #[serde(default = "default_n")]
    pub n_particles: usize,
    /// Axial extent of a conventional box; only checked against the largest
    /// axial travel, since the sampled region is built from reachability.
    #[serde(default)]
    pub box_half_length: Option<f64>,
    /// Overrides the top-level seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_dt_sub")]
    pub dt_sub: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Phase-space density scale of the gas.
    #[serde(default = "default_norm")]
    pub density_norm: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Number of recorded time nodes after `t = 0`.
    #[serde(default = "default_records")]
    pub n_records: usize,
    #[serde(default)]
    pub absorb_after_first_hit: bool,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            n_particles: default_n(),
            box_half_length: None,
            seed: None,
            dt_sub: default_dt_sub(),
            t_max: default_t_max(),
            density_norm: default_norm(),
            replicas: default_replicas(),
            n_records: default_records(),
            absorb_after_first_hit: false,
        }
    }
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("mc.{m}")));
        if self.n_particles < 1 {
            return bad("n_particles must be >= 1");
        }
        if !(self.dt_sub > 0.0 && self.dt_sub.is_finite()) {
            return bad("dt_sub must be positive");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) || self.t_max < self.dt_sub {
            return bad("t_max must be positive and at least dt_sub");
        }
        if !(self.density_norm > 0.0 && self.density_norm.is_finite()) {
            return bad("density_norm must be positive");
        }
        if self.replicas < 1 {
            return bad("replicas must be >= 1");
        }
        if self.n_records < 1 {
            return bad("n_records must be >= 1");
        }
        Ok(())
    }

    /// Checks `box_half_length` against the axial travel of the fastest
    /// sampled particle and the body.
    pub fn check_box(&self, kernel: &Kernel, v0: f64) -> Result<()> {
        if let Some(l) = self.box_half_length {
            let need = (v0.abs() + sampler::velocity_cutoff(kernel)) * self.t_max;
            if !(l > need) {
                return Err(Error::Config(format!("mc.box_half_length = {l} must exceed {need}")));
            }
        }
        Ok(())
    }
}

/// Replica-averaged trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MCResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Standard error of the mean across replicas.
    pub se: Vec<f64>,
    /// Collisions up to each node, summed over replicas.
    pub n_collisions: Vec<u64>,
    /// `replicas[r][i]`: velocity of replica `r` at node `i`.
    pub replicas: Vec<Vec<f64>>,
    /// Largest bookkeeping residual over replicas.
    pub bookkeeping: f64,
}

fn record_times(mc: &MCConfig) -> Vec<f64> {
    (0..=mc.n_records).map(|k| mc.t_max * k as f64 / mc.n_records as f64).collect()
}

/// One replica: velocities and cumulative collision counts at the record nodes.
pub fn run_replica(
    kernel: &Kernel,
    body: &BodyConfig,
    mc: &MCConfig,
    scenario: Scenario,
    seed: u64,
    replica: u64,
) -> Result<(Vec<f64>, Vec<u64>, f64)> {
    let mut st = MCState::sample_initial(kernel, body, mc, scenario, seed, replica)?;
    let mut v = Vec::with_capacity(mc.n_records + 1);
    let mut c = Vec::with_capacity(mc.n_records + 1);
    for t in record_times(mc) {
        st.advance(t)?;
        v.push(st.v_body);
        c.push(st.n_collisions);
    }
    Ok((v, c, st.bookkeeping_residual().abs()))
}

/// Independent replicas on the current rayon pool, stream `r` for replica `r`,
/// reduced in replica order.
pub fn run(kernel: &Kernel, body: &BodyConfig, v_inf: f64, mc: &MCConfig, seed: u64) -> Result<MCResult> {
    mc.validate()?;
    body.validate()?;
    let scenario = Scenario {
        absorb_after_first_hit: mc.absorb_after_first_hit,
        ..Scenario::free(v_inf, body.gamma)
    };
    mc.check_box(kernel, scenario.v0)?;
    let out: Vec<(Vec<f64>, Vec<u64>, f64)> = (0..mc.replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(kernel, body, mc, scenario, seed, r))
        .collect::<Result<_>>()?;
    let times = record_times(mc);
    let n = mc.replicas as f64;
    let mut mean = vec![0.0; times.len()];
    let mut se = vec![0.0; times.len()];
    let mut n_collisions = vec![0u64; times.len()];
    for (i, m) in mean.iter_mut().enumerate() {
        // offsets from the first replica keep identical values exact
        let x0 = out[0].0[i];
        *m = x0 + out.iter().map(|o| o.0[i] - x0).sum::<f64>() / n;
        n_collisions[i] = out.iter().map(|o| o.1[i]).sum();
    }
    if mc.replicas > 1 {
        for (i, s) in se.iter_mut().enumerate() {
            let var = out.iter().map(|o| (o.0[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0);
            *s = (var / n).sqrt();
        }
    }
    let bookkeeping = out.iter().map(|o| o.2).fold(0.0, f64::max);
    Ok(MCResult { times, mean, se, n_collisions, replicas: out.into_iter().map(|o| o.0).collect(), bookkeeping })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticForce {
    pub mean: f64,
    pub se: f64,
    pub n_collisions: u64,
}

/// Force on a body held at velocity `w`, averaged over `[0, t_max]`, with the
/// standard error from the per-particle momentum transfers.
pub fn static_force(kernel: &Kernel, body: &BodyConfig, w: f64, mc: &MCConfig, seed: u64) -> Result<StaticForce> {
    mc.validate()?;
    let mut st = MCState::sample_initial(kernel, body, mc, Scenario::clamped(w), seed, 0)?;
    st.advance(mc.t_max)?;
    let t = st.horizon();
    let imp = st.per_particle_impulse();
    let n = imp.len() as f64;
    let mean_i = imp.iter().sum::<f64>() / n;
    let var = imp.iter().map(|x| (x - mean_i).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(StaticForce { mean: -n * mean_i / t, se: (n * var).sqrt() / t, n_collisions: st.n_collisions })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub max_z_score: f64,
    /// Fraction of nodes with `|z| <= 3`.
    pub frac_within_3se: f64,
    pub n_nodes: usize,
    pub class_agreement: bool,
    /// Sign changes of the MC mean that are significant node by node.
    pub mc_reversal: ReversalReport,
    pub det_reversal: ReversalReport,
    /// `|V - V_inf| / se` a node needs before its sign counts.
    pub z_threshold: f64,
}

/// Family-wise level of the MC reversal test.
pub const REVERSAL_TEST_LEVEL: f64 = 0.05;

/// `z` with `P(|Z| > z) = p` for a standard normal `Z`.
pub fn normal_two_sided_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid / std::f64::consts::SQRT_2) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Linear interpolation of `(xs, ys)` at `x`; `None` outside the range.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let i = xs.partition_point(|&t| t <= x).clamp(1, xs.len() - 1) - 1;
    let h = xs[i + 1] - xs[i];
    if h <= 0.0 {
        return Some(ys[i]);
    }
    let f = (x - xs[i]) / h;
    Some(ys[i] + f * (ys[i + 1] - ys[i]))
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Z-scores of the deterministic trajectory against the MC band on the MC
/// nodes (deterministic values interpolated), and the two reversal verdicts.
/// The MC verdict only counts nodes where `V - V_inf` differs from zero at
/// Bonferroni level [`REVERSAL_TEST_LEVEL`] over all nodes; its `t_cross`
/// is interpolated on the z-scores.
pub fn compare(
    mc_times: &[f64],
    mc_mean: &[f64],
    mc_se: &[f64],
    det_times: &[f64],
    det_values: &[f64],
    v_inf: f64,
) -> CompareReport {
    let mut zs = Vec::new();
    for ((&t, &m), &s) in mc_times.iter().zip(mc_mean).zip(mc_se) {
        if let Some(d) = interp(det_times, det_values, t) {
            zs.push(z_score(d - m, s).abs());
        }
    }
    let max_z_score = zs.iter().copied().fold(0.0, f64::max);
    let frac = if zs.is_empty() { 0.0 } else { zs.iter().filter(|z| **z <= 3.0).count() as f64 / zs.len() as f64 };
    let z_threshold = normal_two_sided_quantile(REVERSAL_TEST_LEVEL / mc_times.len().max(1) as f64);
    let z_sig: Vec<f64> = mc_mean.iter().zip(mc_se).map(|(&m, &s)| z_score(m - v_inf, s)).collect();
    let mc_reversal = detect_reversal(mc_times, &z_sig, 0.0, z_threshold);
    let det_reversal = detect_reversal(det_times, det_values, v_inf, 0.0);
    CompareReport {
        max_z_score,
        frac_within_3se: frac,
        n_nodes: zs.len(),
        class_agreement: mc_reversal.crossed == det_reversal.crossed,
        mc_reversal,
        det_reversal,
        z_threshold,
    }
}
