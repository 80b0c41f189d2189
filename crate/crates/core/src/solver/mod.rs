//! Deterministic solution of the coupled body–gas problem by fixed-point
//! iteration of `W -> V_W`, with recollision bookkeeping on both faces.

mod fast;
mod fixed_point;
mod grid;
mod integrate;
mod membership;
mod reference;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fast::{ResidualProfile, ResidualSolver};
pub use fixed_point::{fixed_point_solve, initial_guess, SolveResult};
pub use grid::{face_band, golden_max, transverse_weight, TrajectoryGrid};
pub use integrate::{integrate_direct, integrate_factor, iterate_map, IterateOutput};
pub use membership::{check_class_membership, lipschitz_constant, MembershipReport};
pub use reference::{f_minus, f_plus_boundary, precollision, residual_force, residual_force_faces};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Left,
    Right,
}

/// First precollision of a characteristic reaching `face` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecollisionRecord {
    pub tau: f64,
    pub u_x: f64,
    pub transverse_weight: f64,
    pub depth: usize,
    pub face: Face,
}

fn default_depth() -> usize {
    2
}
fn default_fp_tol() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    50
}
fn default_substeps() -> usize {
    4
}
fn default_quad_tol() -> f64 {
    1e-10
}
fn default_band_points() -> usize {
    256
}
fn default_steps() -> usize {
    20_000
}
fn default_damping() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Recollision truncation depth.
    #[serde(default = "default_depth", alias = "depth_N")]
    pub depth_n: usize,
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// RK4 substeps per grid cell in the cross-check integrator.
    #[serde(default = "default_substeps")]
    pub ode_substeps: usize,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    /// Composite Gauss rule size on the band; a multiple of 16.
    #[serde(default = "default_band_points")]
    pub band_points: usize,
    /// Grid horizon; `50 t0` when absent.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    /// Relaxation factor in `(0, 1]`.
    #[serde(default = "default_damping")]
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            depth_n: default_depth(),
            fp_tol: default_fp_tol(),
            max_iter: default_max_iter(),
            ode_substeps: default_substeps(),
            quad_tol: default_quad_tol(),
            band_points: default_band_points(),
            t_max: None,
            n_steps: default_steps(),
            damping: default_damping(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("solver.{m}")));
        if self.depth_n < 1 {
            return bad("depth_N must be >= 1");
        }
        if !(self.fp_tol > 0.0) {
            return bad("fp_tol must be positive");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1");
        }
        if self.ode_substeps < 1 {
            return bad("ode_substeps must be >= 1");
        }
        if !(self.quad_tol > 0.0) {
            return bad("quad_tol must be positive");
        }
        if self.band_points < 16 || !self.band_points.is_multiple_of(16) {
            return bad("band_points must be a positive multiple of 16");
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return bad("t_max must be positive");
            }
        }
        if self.n_steps < 10 {
            return bad("n_steps must be >= 10");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        Ok(())
    }
}
