//! Run configuration for the self-paced training loop.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How the initial pace threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Lambda0 {
    /// Use this value directly.
    Explicit(f64),
    /// Take the given percentile of the per-instance hinge losses under
    /// the initial model, floored at `delta_lambda`. The default of 10
    /// makes the first selection roughly the easiest decile.
    Percentile(f64),
}

/// Inner solver knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Relative duality gap at which training stops.
    pub tol: f64,
    /// Hard cap on optimization passes (one pass is a sweep of pair
    /// updates over the active set).
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            tol: 1e-6,
            max_passes: 1000,
        }
    }
}

/// All knobs of a training run.
///
/// The defaults mirror the reference setup: 50 outer iterations, pace
/// increment 0.02, class costs 0.5 / 0.01, confidence threshold 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplConfig {
    pub max_iter: usize,
    pub delta_lambda: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub lambda0: Lambda0,
    /// Confidence cut for turning calibrated shot scores into predicted
    /// evidence regions. Strictly "higher than".
    pub threshold: f64,
    /// Annotation-score cut for ground-truth regions. Inclusive, so a
    /// single-annotator track of 1s survives `gt_threshold = 1.0`.
    pub gt_threshold: f64,
    /// Keep at least one positively labeled instance in every positive
    /// bag by flipping the bag's highest-scoring instance if needed.
    pub enforce_positive_bag: bool,
    /// Allow instances of negative bags to take positive pseudo-labels.
    /// Off clamps them to negative after every label update.
    pub allow_negative_bag_flips: bool,
    pub rng_seed: u64,
    pub svm: SvmParams,
}

impl Default for SplConfig {
    fn default() -> Self {
        SplConfig {
            max_iter: 50,
            delta_lambda: 0.02,
            c_plus: 0.5,
            c_minus: 0.01,
            lambda0: Lambda0::Percentile(10.0),
            threshold: 0.5,
            gt_threshold: 0.5,
            enforce_positive_bag: true,
            allow_negative_bag_flips: true,
            rng_seed: 0,
            svm: SvmParams::default(),
        }
    }
}

impl SplConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
            Ok(())
        }
        positive("delta_lambda", self.delta_lambda)?;
        positive("c_plus", self.c_plus)?;
        positive("c_minus", self.c_minus)?;
        positive("svm.tol", self.svm.tol)?;
        match self.lambda0 {
            Lambda0::Explicit(v) => positive("lambda0", v)?,
            Lambda0::Percentile(p) => {
                if !(p > 0.0 && p <= 100.0) {
                    return Err(Error::Config(format!(
                        "lambda0 percentile must be in (0, 100], got {p}"
                    )));
                }
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.gt_threshold > 0.0 && self.gt_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "gt_threshold must be in (0, 1], got {}",
                self.gt_threshold
            )));
        }
        Ok(())
    }

    /// Cost attached to a pseudo-label class.
    pub fn cost_for(&self, label: crate::data::Label) -> f64 {
        if label.is_positive() {
            self.c_plus
        } else {
            self.c_minus
        }
    }

    /// Short hex digest of the full config, stored in model files so a
    /// model can be traced back to the run that produced it.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(16);
        for byte in hash.iter().take(8) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SplConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_knobs() {
        let mut c = SplConfig::default();
        c.delta_lambda = 0.0;
        assert!(c.validate().is_err());

        let mut c = SplConfig::default();
        c.threshold = 1.0;
        assert!(c.validate().is_err());

        let mut c = SplConfig::default();
        c.gt_threshold = 1.0;
        assert!(c.validate().is_ok(), "inclusive gt cut allows 1.0");

        let mut c = SplConfig::default();
        c.lambda0 = Lambda0::Explicit(-0.1);
        assert!(c.validate().is_err());

        let mut c = SplConfig::default();
        c.lambda0 = Lambda0::Percentile(0.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = SplConfig::default();
        let mut b = SplConfig::default();
        assert_eq!(a.digest(), b.digest());
        b.c_plus = 0.7;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);
    }
}
