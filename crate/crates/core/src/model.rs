//! Linear decision model and score calibration.

use crate::error::{Error, Result};

/// Maps raw decision values to confidences in `(0, 1)`.
///
/// The map is a logistic `s = 1 / (1 + exp(-scale * f))` with `scale > 0`,
/// so it is strictly increasing and sends `f = 0` to `0.5`. The default
/// scale of 1 is parameter-free; a fitted slope can be plugged in via
/// [`Calibration::with_scale`] without breaking either invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    scale: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration { scale: 1.0 }
    }
}

impl Calibration {
    pub fn with_scale(scale: f64) -> Result<Calibration> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::Config(format!(
                "calibration scale must be positive, got {scale}"
            )));
        }
        Ok(Calibration { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Confidence for a raw decision value. Numerically stable on both
    /// tails: never overflows and never returns exactly 0 or 1 for
    /// finite input unless the exponent underflows.
    pub fn confidence(&self, decision: f64) -> f64 {
        let x = self.scale * decision;
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }
}

/// Linear classifier `f(x) = w . x + b` plus its calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub calibration: Calibration,
}

impl LinearModel {
    pub fn new(w: Vec<f64>, b: f64) -> LinearModel {
        LinearModel {
            w,
            b,
            calibration: Calibration::default(),
        }
    }

    /// Raw decision value with a dimension check.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                got: x.len(),
            });
        }
        Ok(self.raw_decision(x))
    }

    /// Raw decision value; callers must guarantee `x.len() == w.len()`.
    pub(crate) fn raw_decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
