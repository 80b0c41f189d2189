//! Collision-kernel families `K = k(v_x, u_x) b(v_perp)` and initial densities
//! `f0 = a0(v_x) b(v_perp)`.
//!
//! Every built-in horizontal kernel has the shape `k(v, u) = amp(u) exp(-rate(u) v^2)`,
//! which gives closed forms for the flux and second moments. The validation
//! routines deliberately go through adaptive quadrature instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `k = 2 beta |u| exp(-beta v^2)`, `a0 = c1 exp(-alpha u^2)`.
    GaussianFlux,
    /// `k = c2 exp(-v^2 / |u|)`, Gaussian `a0`.
    WidthCoupled,
    /// `k = c2 |u|^beta exp(-|u|^(beta - 1) v^2)`, `beta` in `[-1, 3)`.
    PowerFamily,
    /// Width-coupled kernel with the algebraic `a0 = c1 min(1, |u|^-m)`.
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transverse {
    #[default]
    StandardGaussian,
}

fn one() -> f64 {
    1.0
}
fn default_m() -> f64 {
    6.0
}
fn default_dim() -> u8 {
    3
}

/// Serializable description of a kernel family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: Family,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub c1: f64,
    /// Normalization of `k`; derived from mass conservation when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_dim")]
    pub dim: u8,
    #[serde(default)]
    pub transverse: Transverse,
}

impl KernelSpec {
    pub fn gaussian_flux(alpha: f64, beta: f64, c1: f64, dim: u8) -> Self {
        Self {
            family: Family::GaussianFlux,
            alpha,
            beta,
            c1,
            c2: None,
            m: default_m(),
            dim,
            transverse: Transverse::StandardGaussian,
        }
    }

    pub fn width_coupled(alpha: f64, c1: f64, dim: u8) -> Self {
        Self { family: Family::WidthCoupled, ..Self::gaussian_flux(alpha, 1.0, c1, dim) }
    }

    pub fn power_family(beta: f64, alpha: f64, dim: u8) -> Self {
        Self { family: Family::PowerFamily, ..Self::gaussian_flux(alpha, beta, 1.0, dim) }
    }

    pub fn tabulated(m: f64, c1: f64, dim: u8) -> Self {
        Self { family: Family::Tabulated, m, ..Self::gaussian_flux(1.0, 1.0, c1, dim) }
    }
}

/// A validated kernel with its normalization resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    spec: KernelSpec,
    c2: f64,
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        let bad = |what: &str| Err(Error::Domain(what.to_string()));
        if !(spec.alpha > 0.0 && spec.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(spec.c1 > 0.0 && spec.c1.is_finite()) {
            return bad("c1 must be positive");
        }
        if !(1..=3).contains(&spec.dim) {
            return bad("dim must be 1, 2 or 3");
        }
        match spec.family {
            Family::GaussianFlux if !(spec.beta > 0.0 && spec.beta.is_finite()) => {
                return bad("beta must be positive for gaussian_flux")
            }
            Family::PowerFamily if !(-1.0..3.0).contains(&spec.beta) => {
                return bad("beta must lie in [-1, 3) for power_family")
            }
            Family::Tabulated if !(spec.m > 4.0 && spec.m.is_finite()) => {
                return bad("m must exceed 4 for tabulated")
            }
            _ => {}
        }
        let c2 = match spec.family {
            Family::GaussianFlux => {
                let c2 = 2.0 * spec.beta;
                if let Some(given) = spec.c2 {
                    if given != c2 {
                        return bad("gaussian_flux requires c2 = 2 beta");
                    }
                }
                c2
            }
            Family::WidthCoupled | Family::Tabulated => spec.c2.unwrap_or(2.0),
            Family::PowerFamily => match spec.c2 {
                Some(c) => c,
                None => power_family_c2(spec.beta)?,
            },
        };
        if !(c2 > 0.0 && c2.is_finite()) {
            return bad("c2 must be positive");
        }
        Ok(Self { spec, c2 })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn dim(&self) -> u8 {
        self.spec.dim
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// The power-law exponent claimed by the family.
    pub fn p_declared(&self) -> f64 {
        match self.spec.family {
            Family::GaussianFlux => 1.0,
            Family::WidthCoupled | Family::Tabulated => 1.5,
            Family::PowerFamily => (3.0 - self.spec.beta) / 2.0,
        }
    }

    /// Amplitude of `k(., u)` at `v = 0`.
    pub fn amp(&self, u: f64) -> f64 {
        let u = u.abs();
        match self.spec.family {
            Family::GaussianFlux => self.c2 * u,
            Family::WidthCoupled | Family::Tabulated => self.c2,
            Family::PowerFamily => self.c2 * u.powf(self.spec.beta),
        }
    }

    /// Gaussian rate of `k(., u)` in `v`.
    pub fn rate(&self, u: f64) -> f64 {
        let u = u.abs();
        match self.spec.family {
            Family::GaussianFlux => self.spec.beta,
            Family::WidthCoupled | Family::Tabulated => 1.0 / u,
            Family::PowerFamily => u.powf(self.spec.beta - 1.0),
        }
    }

    /// Horizontal kernel factor `k(v_x, u_x)`.
    pub fn k(&self, v: f64, u: f64) -> f64 {
        let amp = self.amp(u);
        if v == 0.0 {
            return amp;
        }
        let e = (-self.rate(u) * v * v).exp();
        if e == 0.0 {
            0.0
        } else {
            amp * e
        }
    }

    /// Horizontal initial density `a0(u_x)`.
    pub fn a0(&self, u: f64) -> f64 {
        let s = &self.spec;
        match s.family {
            Family::Tabulated => {
                let a = u.abs();
                if a < 1.0 {
                    s.c1
                } else {
                    s.c1 * a.powf(-s.m)
                }
            }
            _ => s.c1 * (-s.alpha * u * u).exp(),
        }
    }

    /// `d a0 / du` (one-sided value at the kinks is irrelevant under an integral).
    pub fn a0_prime(&self, u: f64) -> f64 {
        let s = &self.spec;
        match s.family {
            Family::Tabulated => {
                let a = u.abs();
                if a < 1.0 {
                    0.0
                } else {
                    -s.m * u.signum() * s.c1 * a.powf(-s.m - 1.0)
                }
            }
            _ => -2.0 * s.alpha * u * self.a0(u),
        }
    }

    /// `a0(x + dx) - a0(x)` without cancellation for small `dx`.
    pub fn a0_increment(&self, x: f64, dx: f64) -> f64 {
        let s = &self.spec;
        match s.family {
            Family::Tabulated => {
                let y = x + dx;
                if x.abs() < 1.0 && y.abs() < 1.0 {
                    0.0
                } else if x.abs() >= 1.0 && y.abs() >= 1.0 && x.signum() == y.signum() {
                    let r = (-s.m * (dx / x).ln_1p()).exp_m1();
                    if r.is_finite() { self.a0(x) * r } else { self.a0(y) - self.a0(x) }
                } else {
                    self.a0(y) - self.a0(x)
                }
            }
            _ => {
                let a = self.a0(x);
                let r = (-s.alpha * dx * (2.0 * x + dx)).exp_m1();
                if a == 0.0 || !r.is_finite() {
                    self.a0(x + dx) - a
                } else {
                    a * r
                }
            }
        }
    }

    /// Points where `a0` is not smooth.
    pub fn a0_kinks(&self) -> &'static [f64] {
        match self.spec.family {
            Family::Tabulated => &[-1.0, 1.0],
            _ => &[],
        }
    }

    /// `int a0(u) du` over the real line.
    pub fn a0_mass(&self) -> f64 {
        let s = &self.spec;
        match s.family {
            Family::Tabulated => s.c1 * (2.0 + 2.0 / (s.m - 1.0)),
            _ => s.c1 * (std::f64::consts::PI / s.alpha).sqrt(),
        }
    }

    /// Second moment `m2(u) = int_{v >= 0} v^2 k(v, u) dv` in closed form.
    pub fn m2(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let r = self.rate(u);
        self.amp(u) * std::f64::consts::PI.sqrt() / (4.0 * r * r.sqrt())
    }

    /// `l(w) = w^2 + m2(w)`.
    pub fn ell(&self, w: f64) -> f64 {
        w * w + self.m2(w)
    }

    /// `m2` by adaptive quadrature; used by the validators.
    pub fn m2_quad(&self, u: f64, tol: Tolerance) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        let h = self.rate(u).sqrt().recip();
        let e = quad::integrate_half_line(|x| x * x * self.k(h * x, u), 0.0, tol)?;
        Ok(h * h * h * e.value)
    }

    /// `l` by adaptive quadrature.
    pub fn ell_quad(&self, w: f64, tol: Tolerance) -> Result<f64> {
        Ok(w * w + self.m2_quad(w, tol)?)
    }

    /// Outgoing flux `int_{v >= 0} v k(v, u) dv` by adaptive quadrature.
    pub fn flux_quad(&self, u: f64, tol: Tolerance) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        let h = self.rate(u).sqrt().recip();
        let e = quad::integrate_half_line(|x| x * self.k(h * x, u), 0.0, tol)?;
        Ok(h * h * e.value)
    }

    /// Transverse density `b` on `R^(d-1)`.
    pub fn b(&self, u_perp: &[f64]) -> f64 {
        debug_assert_eq!(u_perp.len() + 1, self.spec.dim as usize);
        let r2: f64 = u_perp.iter().map(|x| x * x).sum();
        (2.0 * std::f64::consts::PI).powf(-(u_perp.len() as f64) / 2.0) * (-0.5 * r2).exp()
    }

    /// Mass of `b` inside the ball `|u_perp| <= radius`.
    pub fn b_ball_mass(&self, radius: f64) -> f64 {
        match self.spec.dim {
            1 => 1.0,
            2 => {
                if radius.is_infinite() {
                    1.0
                } else {
                    libm::erf(radius / std::f64::consts::SQRT_2)
                }
            }
            _ => -libm::expm1(-0.5 * radius * radius),
        }
    }
}

fn power_family_c2(beta: f64) -> Result<f64> {
    let rate = 1.0f64.powf(beta - 1.0);
    let flux = quad::integrate_half_line(|v| v * (-rate * v * v).exp(), 0.0, Tolerance::new(1e-15, 1e-14))?;
    Ok(1.0 / flux.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassRow {
    pub u: f64,
    pub integral: f64,
    pub target: f64,
    pub abs_error: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassReport {
    pub rows: Vec<MassRow>,
    pub max_abs_error: f64,
    pub pass: bool,
}

/// Checks `int_{v >= 0} v k(v, u) dv = |u|` on each grid point.
pub fn check_mass_conservation(kernel: &Kernel, u_grid: &[f64], tol: f64) -> Result<MassReport> {
    if u_grid.is_empty() || !(tol > 0.0) {
        return Err(Error::Domain("mass check needs a nonempty grid and tol > 0".into()));
    }
    let qtol = Tolerance::new(1e-14, 1e-12);
    let mut rows = Vec::with_capacity(u_grid.len());
    let mut max_abs_error: f64 = 0.0;
    let mut pass = true;
    for &u in u_grid {
        let target = u.abs();
        match kernel.flux_quad(u, qtol) {
            Ok(integral) => {
                let abs_error = (integral - target).abs();
                max_abs_error = max_abs_error.max(abs_error);
                rows.push(MassRow { u, integral, target, abs_error, failure: None });
            }
            Err(e) => {
                pass = false;
                rows.push(MassRow {
                    u,
                    integral: f64::NAN,
                    target,
                    abs_error: f64::NAN,
                    failure: Some(e.to_string()),
                });
            }
        }
    }
    pass &= max_abs_error <= tol;
    Ok(MassReport { rows, max_abs_error, pass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawReport {
    pub p_est: f64,
    pub c_fit: f64,
    pub big_c_fit: f64,
    pub monotone_ok: bool,
    pub rms_residual: f64,
}

/// Residual tolerance (in log space) above which the kernel is not treated
/// as a power law near zero.
pub const POWER_LAW_RESIDUAL_TOL: f64 = 0.02;

/// Log-log regression of `m2(u)` on `u` in `[1e-4 gamma, gamma]`.
pub fn check_power_law(kernel: &Kernel, gamma: f64) -> Result<PowerLawReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain("gamma must lie in (0, 1)".into()));
    }
    let n = 40;
    let lo = (1e-4 * gamma).ln();
    let hi = gamma.ln();
    let tol = Tolerance::new(1e-300, 1e-11);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut m2s = Vec::with_capacity(n);
    for i in 0..n {
        let lu = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let u = lu.exp();
        let m2 = kernel.m2_quad(u, tol)?;
        if !(m2 > 0.0) {
            return Err(Error::Domain(format!("second moment vanishes at u = {u}")));
        }
        xs.push(lu);
        ys.push(m2.ln());
        m2s.push((u, m2));
    }
    let (slope, intercept) = crate::analysis::least_squares(&xs, &ys);
    let rms_residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    if rms_residual > POWER_LAW_RESIDUAL_TOL {
        return Err(Error::Domain(format!(
            "second moment is not a power law near 0 (rms log residual {rms_residual:.3e})"
        )));
    }
    let mut c_fit = f64::INFINITY;
    let mut big_c_fit: f64 = 0.0;
    for &(u, m2) in &m2s {
        let r = m2 / u.powf(slope);
        c_fit = c_fit.min(r);
        big_c_fit = big_c_fit.max(r);
    }
    // strictly decreasing on u < 0: m2(-u) must grow with u
    let mut monotone_ok = true;
    let mut prev = 0.0;
    for &(u, _) in &m2s {
        let m = kernel.m2_quad(-u, tol)?;
        if m <= prev {
            monotone_ok = false;
        }
        prev = m;
    }
    Ok(PowerLawReport { p_est: slope, c_fit, big_c_fit, monotone_ok, rms_residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessReport {
    pub sup_k: f64,
    pub dominated_ok: bool,
    pub dominating_integral: f64,
}

/// Grid estimate of `sup_{|u| <= gamma} sup_v k(v, u)` and a numeric check that
/// `M(z) = sup_{|v| < 2 gamma, |y| < gamma} k(v, z - y - v_inf) a0(z)` is integrable.
pub fn check_boundedness_and_domination(
    kernel: &Kernel,
    gamma: f64,
    v_inf: f64,
) -> Result<BoundednessReport> {
    if !(gamma > 0.0 && gamma < 1.0) || !(v_inf >= 0.0) {
        return Err(Error::Domain("need 0 < gamma < 1 and v_inf >= 0".into()));
    }
    let nu = 201;
    let nv = 201;
    let mut sup_k: f64 = 0.0;
    for i in 0..nu {
        let u = -gamma + 2.0 * gamma * i as f64 / (nu - 1) as f64;
        for j in 0..nv {
            let v = -5.0 + 10.0 * j as f64 / (nv - 1) as f64;
            sup_k = sup_k.max(kernel.k(v, u));
        }
    }
    let ng = 9;
    let big_m = |z: f64| {
        let mut s: f64 = 0.0;
        for i in 0..ng {
            let v = 2.0 * gamma * (-1.0 + 2.0 * i as f64 / (ng - 1) as f64);
            for j in 0..ng {
                let y = gamma * (-1.0 + 2.0 * j as f64 / (ng - 1) as f64);
                s = s.max(kernel.k(v, z - y - v_inf));
            }
        }
        s * kernel.a0(z)
    };
    let tol = Tolerance::new(1e-10, 1e-8);
    let mut breaks: Vec<f64> = kernel.a0_kinks().to_vec();
    breaks.extend([v_inf - gamma, v_inf, v_inf + gamma]);
    let span = |cut: f64| -> Result<f64> {
        Ok(quad::integrate_with_breaks(big_m, -cut, cut, &breaks, tol)?.value)
    };
    let sup_finite = sup_k.is_finite();
    let (dominating_integral, dominated_ok) = match (span(50.0), span(100.0)) {
        (Ok(a), Ok(b)) => (b, sup_finite && a.is_finite() && (b - a).abs() <= 1e-6 * b.abs().max(1.0)),
        _ => (f64::INFINITY, false),
    };
    Ok(BoundednessReport { sup_k, dominated_ok, dominating_integral })
}
