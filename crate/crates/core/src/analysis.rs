//! Reversal detection, tail-exponent fits and envelope checks on trajectories.

use crate::equilibrium::{MotionClassParams, MotionMode};
use crate::error::{Error, Result};

/// Ordinary least squares `y = slope x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversalReport {
    pub crossed: bool,
    pub t_cross: Option<f64>,
    pub n_crossings: usize,
}

/// Counts sign changes of `V - v_inf` between nodes whose magnitude exceeds
/// `noise_floor`.
pub fn detect_reversal(times: &[f64], values: &[f64], v_inf: f64, noise_floor: f64) -> ReversalReport {
    let d: Vec<f64> = values.iter().map(|v| v - v_inf).collect();
    let mut last: Option<(usize, f64)> = None;
    let mut n_crossings = 0;
    let mut t_cross = None;
    for (i, &x) in d.iter().enumerate() {
        if x.abs() <= noise_floor || x == 0.0 {
            continue;
        }
        let s = x.signum();
        if let Some((j, prev)) = last {
            if s != prev {
                n_crossings += 1;
                if t_cross.is_none() {
                    t_cross = (j..i).find(|&k| d[k] * d[k + 1] <= 0.0 && d[k] != d[k + 1]).map(|k| {
                        let f = d[k] / (d[k] - d[k + 1]);
                        times[k] + f * (times[k + 1] - times[k])
                    });
                }
            }
        }
        last = Some((i, s));
    }
    ReversalReport { crossed: n_crossings > 0, t_cross, n_crossings }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub window: (f64, f64),
    pub slope: f64,
    pub r_squared: f64,
    pub expected: f64,
}

/// Default fit window: `[max(5 t0, t_max / 5), t_max / 1.05]`, with the lower end
/// pulled down so the window spans a factor 5, but never below `t0 + 1`.
pub fn default_tail_window(t0: f64, t_max: f64) -> Result<(f64, f64)> {
    let hi = t_max / 1.05;
    let lo = (5.0 * t0).max(t_max / 5.0).min(hi / 5.0);
    if lo < t0 + 1.0 {
        return Err(Error::DegenerateWindow(format!(
            "t_max = {t_max} too short for a factor-5 window above t0 + 1 = {}",
            t0 + 1.0
        )));
    }
    Ok((lo, hi))
}

/// Slope of `ln |V - v_inf|` against `ln t` on `window`.
pub fn fit_tail_exponent(
    times: &[f64],
    values: &[f64],
    v_inf: f64,
    window: (f64, f64),
    expected: f64,
) -> Result<RateFit> {
    let (ta, tb) = window;
    if !(ta > 0.0 && tb >= 5.0 * ta * (1.0 - 1e-12)) {
        return Err(Error::DegenerateWindow(format!("[{ta}, {tb}] spans less than a factor 5")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sign = 0.0;
    for (&t, &v) in times.iter().zip(values) {
        if t < ta || t > tb {
            continue;
        }
        let d = v - v_inf;
        if d == 0.0 || (sign != 0.0 && d.signum() != sign) {
            return Err(Error::DegenerateWindow("sign change or zero inside the window".into()));
        }
        sign = d.signum();
        xs.push(t.ln());
        ys.push(d.abs().ln());
    }
    if xs.len() < 10 {
        return Err(Error::DegenerateWindow(format!("only {} nodes in the window", xs.len())));
    }
    let (slope, intercept) = least_squares(&xs, &ys);
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { window, slope, r_squared, expected })
}

/// Relative slack on the exponential part of the envelopes; `B0` and `B_inf`
/// come from a finite scan of `F0'`.
pub const ENVELOPE_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    /// Strict lower bound holds with a positive finite constant.
    pub lower_ok: bool,
    /// Strict upper bound holds with a positive finite constant.
    pub upper_ok: bool,
    /// `(c, C)`: magnitude of the power-law term in the bound that carries the
    /// `chi{t >= t0 + 1}` cut-off, then the one that does not. `c <= C` for
    /// consistent data in both modes.
    pub fitted_constants: (f64, f64),
    /// Both bounds hold with nonnegative constants (pure exponentials allowed).
    pub class_ok: bool,
    /// Reversal mode: first node where the upper envelope turns negative.
    pub crossover: Option<f64>,
    /// Reversal mode: `V < V_inf` at every node from the crossover on.
    pub negativity_ok: bool,
}

/// Fits the envelope constants of the mode's two-sided bound on `V - V_inf`.
/// Node `t = 0` is excluded.
pub fn verify_envelopes(times: &[f64], values: &[f64], params: &MotionClassParams) -> EnvelopeReport {
    let g = params.gamma.powf(params.p + 1.0);
    let q = params.tail_exponent();
    let cut = params.t0 + 1.0;
    let eps = ENVELOPE_REL_TOL;
    // `small` is the strict fit, `small_slack` allows the relative slack
    let mut small = f64::INFINITY;
    let mut small_slack = f64::INFINITY;
    let mut big = f64::NEG_INFINITY;
    let mut early_ok = true;
    let pts = times.iter().zip(values).filter(|(t, _)| **t > 0.0);
    for (&t, &v) in pts {
        let d = v - params.v_inf;
        // a few ulps of the absolute velocity survive the subtraction
        let ulps = 4.0 * f64::EPSILON * v.abs().max(params.v_inf.abs());
        let e0 = params.gamma * (-params.b0 * t).exp();
        let einf = params.gamma * (-params.b_inf * t).exp();
        // orient so that the cut-off bound reads `x >= e + c g t^-q`
        let (x, e_cut, e_far) = match params.mode {
            MotionMode::Irreversal => (d, e0, einf),
            MotionMode::Reversal => (-d, -einf, -e0),
        };
        let slack = eps * e_cut.abs() + ulps;
        if t >= cut {
            small = small.min((x - e_cut) * t.powf(q) / g);
            small_slack = small_slack.min((x - e_cut + slack) * t.powf(q) / g);
        } else if x < e_cut - slack {
            early_ok = false;
        }
        big = big.max((x - e_far - eps * e_far.abs() - ulps) * (1.0 + t).powf(q) / g);
    }
    // the far bound reads `x <= e_far + C g (1 + t)^-q`
    let big = big.max(0.0);
    let small_ok = early_ok && small.is_finite() && small > 0.0;
    let big_ok = big.is_finite();
    let class_ok = early_ok && small_slack.is_finite() && small_slack >= 0.0 && big_ok;
    let (lower_ok, upper_ok) = match params.mode {
        MotionMode::Irreversal => (small_ok, big_ok),
        MotionMode::Reversal => (big_ok, small_ok),
    };
    let (crossover, negativity_ok) = match params.mode {
        MotionMode::Irreversal => (None, true),
        MotionMode::Reversal if small_ok => {
            let crossover = times.iter().copied().find(|&t| {
                t >= cut && params.gamma * (-params.b_inf * t).exp() - small * g * t.powf(-q) < 0.0
            });
            let neg = crossover.is_some_and(|tc| {
                times.iter().zip(values).filter(|(t, _)| **t >= tc).all(|(_, v)| *v < params.v_inf)
            });
            (crossover, neg)
        }
        MotionMode::Reversal => (None, false),
    };
    EnvelopeReport { lower_ok, upper_ok, fitted_constants: (small, big), class_ok, crossover, negativity_ok }
}

/// Lower and upper envelope of `V` on `times` for fitted constants `(c, C)`
/// as reported by [`verify_envelopes`], including the relative slack used
/// in the fit. Negative or non-finite constants are replaced by zero.
pub fn envelope_curves(times: &[f64], params: &MotionClassParams, constants: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let fix = |x: f64| if x.is_finite() && x > 0.0 { x } else { 0.0 };
    let (c, big) = (fix(constants.0), fix(constants.1));
    let g = params.gamma.powf(params.p + 1.0);
    let q = params.tail_exponent();
    let cut = params.t0 + 1.0;
    let eps = ENVELOPE_REL_TOL;
    let mut lo = Vec::with_capacity(times.len());
    let mut hi = Vec::with_capacity(times.len());
    for &t in times {
        let e0 = params.gamma * (-params.b0 * t).exp();
        let einf = params.gamma * (-params.b_inf * t).exp();
        let (e_cut, e_far) = match params.mode {
            MotionMode::Irreversal => (e0, einf),
            MotionMode::Reversal => (-einf, -e0),
        };
        // bounds on the oriented deviation x, as in the fit
        let x_lo = if t >= cut { e_cut + c * g * t.powf(-q) } else { e_cut - eps * e_cut.abs() };
        let x_hi = e_far + eps * e_far.abs() + big * g * (1.0 + t).powf(-q);
        let (l, h) = match params.mode {
            MotionMode::Irreversal => (x_lo, x_hi),
            MotionMode::Reversal => (-x_hi, -x_lo),
        };
        lo.push(params.v_inf + l);
        hi.push(params.v_inf + h);
    }
    (lo, hi)
}
