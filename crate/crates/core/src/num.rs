//! Scalar math helpers shared across the crate.
//!
//! Transcendental functions go through `libm` so the crate stays `no_std`
//! and results do not depend on the platform libm. The `sig9` helpers define
//! the canonical 9-significant-digit decimal grid used by every external
//! text format; values that pass through `quantize_sig9` survive a
//! serialize/parse round trip bit-for-bit.

use alloc::format;
use alloc::string::String;

pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// log(sigmoid(x)) without overflow for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -ln_1p(exp(-x))
    } else {
        x - ln_1p(exp(x))
    }
}

/// Formats with 9 significant digits in scientific notation.
///
/// This is the canonical number format of every file the workspace writes.
pub fn fmt_sig9(x: f64) -> String {
    format!("{:.8e}", x)
}

/// Rounds onto the 9-significant-digit grid of [`fmt_sig9`].
pub fn quantize_sig9(x: f64) -> f64 {
    // 9 significant decimal digits always parse back exactly, so
    // fmt(quantize(x)) == fmt9(x) and parse(fmt(q)) == q.
    fmt_sig9(x).parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_symmetry_and_known_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(abs(sigmoid(ln(3.0)) - 0.75) < 1e-12);
        for &x in &[-20.0, -3.0, -0.5, 0.7, 4.0, 30.0] {
            assert!(abs(sigmoid(x) + sigmoid(-x) - 1.0) < 1e-12);
            assert!(abs(exp(log_sigmoid(x)) - sigmoid(x)) < 1e-12);
        }
        assert!(sigmoid(800.0) == 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(log_sigmoid(-800.0).is_finite());
    }

    #[test]
    fn sig9_round_trip_is_stable() {
        let values = [0.0, -0.0, 0.5, 1.0 / 3.0, -1234.56789e12, 3.2e-17];
        for &v in &values {
            let q = quantize_sig9(v);
            let s1 = fmt_sig9(q);
            let reparsed: f64 = s1.parse().unwrap();
            assert_eq!(reparsed.to_bits(), q.to_bits());
            assert_eq!(fmt_sig9(reparsed), s1);
            // quantizing twice is a no-op
            assert_eq!(quantize_sig9(q).to_bits(), q.to_bits());
        }
    }
}
