//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals and half-lines.
//!
//! Half-lines `[a, inf)` are mapped onto `(0, 1]` with `v = a + (1 - s) / s`.
//! Integrals over several pieces share one global error budget, so the
//! refinement always splits the worst interval regardless of which piece it
//! belongs to.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// 7-point Gauss weights at XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Stopping rule: accept when the summed error estimate is below
/// `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn abs(abs: f64) -> Self {
        Self { abs, rel: 0.0, max_intervals: 4000 }
    }

    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_intervals: 4000 }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::abs(1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

#[derive(Clone, Copy)]
enum Map {
    Direct,
    HalfLine(f64),
}

struct Segment {
    lo: f64,
    hi: f64,
    map: Map,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn eval_mapped<F: Fn(f64) -> f64>(f: &F, map: Map, x: f64) -> f64 {
    match map {
        Map::Direct => f(x),
        Map::HalfLine(a) => {
            let v = a + (1.0 - x) / x;
            f(v) / (x * x)
        }
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, map: Map) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = eval_mapped(f, map, c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = eval_mapped(f, map, c - dx) + eval_mapped(f, map, c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn run<F: Fn(f64) -> f64>(f: &F, pieces: Vec<(f64, f64, Map)>, tol: Tolerance) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for (lo, hi, map) in pieces {
        if hi <= lo {
            continue;
        }
        let (value, error) = kronrod(f, lo, hi, map);
        evals += 15;
        heap.push(Segment { lo, hi, map, value, error });
    }
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Domain(format!("non-finite integrand (value {value})")));
        }
        if error <= tol.target(value) {
            return Ok(Estimate { value, error, evals });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature { estimate: error, tol: tol.target(value) });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            return Err(Error::Quadrature { estimate: error, tol: tol.target(value) });
        }
        for (lo, hi) in [(worst.lo, mid), (mid, worst.hi)] {
            let (value, error) = kronrod(f, lo, hi, worst.map);
            evals += 15;
            heap.push(Segment { lo, hi, map: worst.map, value, error });
        }
    }
}

/// Integral of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evals: 0 });
    }
    if b < a {
        let e = integrate(f, b, a, tol)?;
        return Ok(Estimate { value: -e.value, ..e });
    }
    run(&f, vec![(a, b, Map::Direct)], tol)
}

/// Integral of `f` over `[a, inf)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<Estimate> {
    run(&f, vec![(0.0, 1.0, Map::HalfLine(a))], tol)
}

/// Integral over `[a, inf)` with interior breakpoints where `f` has kinks.
/// Breakpoints outside `(a, inf)` are ignored.
pub fn integrate_half_line_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&b| b > a && b.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut pieces = Vec::with_capacity(pts.len() + 1);
    let mut lo = a;
    for &p in &pts {
        pieces.push((lo, p, Map::Direct));
        lo = p;
    }
    pieces.push((0.0, 1.0, Map::HalfLine(lo)));
    run(&f, pieces, tol)
}

/// Integral over `[a, b]` with interior breakpoints.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut pieces = Vec::with_capacity(pts.len() + 1);
    let mut lo = a;
    for &p in &pts {
        pieces.push((lo, p, Map::Direct));
        lo = p;
    }
    pieces.push((lo, b, Map::Direct));
    run(&f, pieces, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_exact() {
        let e = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, Tolerance::abs(1e-13)).unwrap();
        assert_abs_diff_eq!(e.value, 64.0 / 6.0 - 1.0 / 6.0 - 9.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_half_line() {
        let e = integrate_half_line(|x| (-x * x).exp(), 0.0, Tolerance::abs(1e-12)).unwrap();
        assert_abs_diff_eq!(e.value, std::f64::consts::PI.sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn algebraic_tail_with_break() {
        // |x - 1| kink plus x^-6 tail
        let f = |x: f64| if x < 1.0 { 1.0 } else { x.powi(-6) };
        let e = integrate_half_line_with_breaks(f, 0.0, &[1.0], Tolerance::abs(1e-12)).unwrap();
        assert_abs_diff_eq!(e.value, 1.2, epsilon = 1e-11);
    }

    #[test]
    fn sqrt_endpoint_singularity() {
        let e = integrate(|x: f64| x.sqrt(), 0.0, 1.0, Tolerance::abs(1e-11)).unwrap();
        assert_abs_diff_eq!(e.value, 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let a = integrate(|x: f64| x.cos(), 0.0, 1.0, Tolerance::default()).unwrap();
        let b = integrate(|x: f64| x.cos(), 1.0, 0.0, Tolerance::default()).unwrap();
        assert_eq!(a.value, -b.value);
    }

    #[test]
    fn divergent_reports_failure() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, Tolerance::abs(1e-10));
        assert!(r.is_err());
    }
}
