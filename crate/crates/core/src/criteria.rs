//! Reversal / irreversal criteria and parameter sweeps over them.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::MotionMode;
use crate::error::{Error, Result};
use crate::kernels::{Family, Kernel, KernelSpec};
use crate::quad::{self, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Body starts above equilibrium, `V0 > V_inf`.
    Right,
    /// Body starts below equilibrium, `V0 < V_inf`.
    Left,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Right => "right",
            Side::Left => "left",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Reversal,
    Irreversal,
    Marginal,
}

impl Classification {
    pub fn mode(self) -> Option<MotionMode> {
        match self {
            Classification::Reversal => Some(MotionMode::Reversal),
            Classification::Irreversal => Some(MotionMode::Irreversal),
            Classification::Marginal => None,
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub integral: f64,
    pub threshold: f64,
    pub margin: f64,
    pub class: Classification,
    pub side: Side,
}

pub const DEFAULT_MARGINAL_TOL: f64 = 1e-9;

/// `int_0^inf k(0, z) a0(v_inf + z) dz` (right) or `int_0^inf k(0, z) a0(v_inf - z) dz` (left).
pub fn criterion_integral(kernel: &Kernel, v_inf: f64, side: Side) -> Result<f64> {
    if !(v_inf >= 0.0) {
        return Err(Error::Domain(format!("v_inf = {v_inf} must be >= 0")));
    }
    let sign = match side {
        Side::Right => 1.0,
        Side::Left => -1.0,
    };
    if kernel.family() == Family::PowerFamily && kernel.spec().beta <= -1.0 {
        // k(0, z) ~ |z|^beta is not integrable at the origin
        return Ok(f64::INFINITY);
    }
    let breaks: Vec<f64> = kernel.a0_kinks().iter().map(|k| sign * (k - v_inf)).collect();
    let e = quad::integrate_half_line_with_breaks(
        |z| kernel.k(0.0, z) * kernel.a0(v_inf + sign * z),
        0.0,
        &breaks,
        Tolerance::new(1e-13, 1e-13),
    )?;
    Ok(e.value)
}

pub fn classify(kernel: &Kernel, v_inf: f64, side: Side, tol: f64) -> Result<CriterionReport> {
    if !(tol > 0.0) {
        return Err(Error::Domain("marginal tolerance must be positive".into()));
    }
    let integral = criterion_integral(kernel, v_inf, side)?;
    let threshold = kernel.a0(v_inf);
    let margin = integral - threshold;
    let class = if margin > tol {
        Classification::Irreversal
    } else if margin < -tol {
        Classification::Reversal
    } else {
        Classification::Marginal
    };
    Ok(CriterionReport { integral, threshold, margin, class, side })
}

/// Axes of a sweep. Empty axes fall back to the template value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub v_inf: Vec<f64>,
    pub m: Vec<f64>,
    pub sides: Vec<Side>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub v_inf: f64,
    pub m: f64,
    pub side: Side,
    pub result: std::result::Result<CriterionReport, String>,
}

/// Classifies every grid point; rows come back in grid order for any `jobs`.
pub fn sweep(template: &KernelSpec, grid: &SweepGrid, tol: f64, jobs: usize) -> Result<Vec<SweepRow>> {
    let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let alphas = or(&grid.alpha, template.alpha);
    let betas = or(&grid.beta, template.beta);
    let v_infs = or(&grid.v_inf, 0.0);
    let ms = or(&grid.m, template.m);
    let sides = if grid.sides.is_empty() { vec![Side::Right] } else { grid.sides.clone() };
    let mut points = Vec::new();
    for &alpha in &alphas {
        for &beta in &betas {
            for &v_inf in &v_infs {
                for &m in &ms {
                    for &side in &sides {
                        points.push((alpha, beta, v_inf, m, side));
                    }
                }
            }
        }
    }
    let eval = |&(alpha, beta, v_inf, m, side): &(f64, f64, f64, f64, Side)| {
        let spec = KernelSpec { alpha, beta, m, c2: None, ..template.clone() };
        let result = Kernel::new(spec)
            .and_then(|k| classify(&k, v_inf, side, tol))
            .map_err(|e| e.to_string());
        SweepRow { alpha, beta, v_inf, m, side, result }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(|| points.par_iter().map(eval).collect()))
}
