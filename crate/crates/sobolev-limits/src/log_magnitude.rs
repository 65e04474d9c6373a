//! Positive magnitudes stored as `u = ln(1/x)`, so values far below the
//! smallest subnormal can still be compared and rescaled.

use std::cmp::Ordering;

/// The positive number `e^{-u}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMagnitude {
    u: f64,
}

impl LogMagnitude {
    /// Wraps `u = ln(1/x)`.
    ///
    /// # Panics
    /// If `u` is negative or not finite.
    pub fn from_neg_log(u: f64) -> Self {
        assert!(u.is_finite() && u >= 0.0, "log magnitude needs finite u >= 0, got {u}");
        Self { u }
    }

    /// Wraps a value in `(0, 1]`.
    ///
    /// # Panics
    /// If `x` is not in `(0, 1]`.
    pub fn from_value(x: f64) -> Self {
        assert!(x > 0.0 && x <= 1.0, "log magnitude needs x in (0, 1], got {x}");
        Self { u: -x.ln() }
    }

    /// `ln(1/x)`.
    pub fn neg_log(self) -> f64 {
        self.u
    }

    /// `ln x`.
    pub fn ln(self) -> f64 {
        -self.u
    }

    /// `ln ln(1/x)`; `-inf` at `x = 1`.
    pub fn log_neg_log(self) -> f64 {
        self.u.ln()
    }

    /// `log10 x`.
    pub fn log10(self) -> f64 {
        -self.u / std::f64::consts::LN_10
    }

    /// The value as `f64`, or `None` when it is below the smallest normal number.
    pub fn value(self) -> Option<f64> {
        let x = (-self.u).exp();
        (x >= f64::MIN_POSITIVE).then_some(x)
    }

    /// The value as `f64`, flushed to zero when unrepresentable.
    pub fn value_or_zero(self) -> f64 {
        (-self.u).exp()
    }

    pub fn is_representable(self) -> bool {
        self.value().is_some()
    }

    /// `x * e^{delta}`, clamped at 1.
    pub fn scale_exp(self, delta: f64) -> Self {
        Self { u: (self.u - delta).max(0.0) }
    }

    /// `x^p` for `p > 0`.
    pub fn powf(self, p: f64) -> Self {
        assert!(p > 0.0, "exponent must be positive");
        Self { u: self.u * p }
    }

    /// `x * y`.
    pub fn product(self, other: Self) -> Self {
        Self { u: self.u + other.u }
    }

    /// `min(x, y)`.
    pub fn min(self, other: Self) -> Self {
        if self.u >= other.u {
            self
        } else {
            other
        }
    }
}

impl PartialOrd for LogMagnitude {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        other.u.partial_cmp(&self.u)
    }
}
