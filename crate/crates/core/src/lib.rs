//! Motion of a rigid body through a collisionless gas whose particles reflect
//! diffusely off its faces: reflection kernels, the reversal criterion, a
//! deterministic fixed-point solver for the body velocity and a Monte Carlo
//! particle simulation used as an independent check.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod criteria;
pub mod equilibrium;
pub mod error;
pub mod kernels;
pub mod montecarlo;
pub mod quad;
pub mod solver;

pub use error::{Error, Result};

/// Fixed 17-significant-digit format used in every CSV. Negative zero is
/// written as zero.
pub fn fmt_f64(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::fmt_f64;

    #[test]
    fn csv_format_round_trips() {
        for x in [0.1, -3.0e-300, 1.0 / 3.0, f64::MAX, 5e-324] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(-0.0), fmt_f64(0.0));
    }
}
