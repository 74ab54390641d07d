//! Video bags, shot instances and the validated dataset container.
//!
//! A dataset is a list of bags (videos). Each bag carries a binary event
//! label and an ordered list of shots; each shot has a time interval in
//! seconds and a feature vector of per-concept scores in `[0, 1]`.

use crate::error::{Error, Result};

/// Binary instance / bag label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// +1.0 or -1.0, the sign used in margins and hinge losses.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    /// Parses the on-disk encoding, which is a bare `1` or `-1`.
    pub fn from_signum(v: i64) -> Result<Label> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::Validation(format!(
                "label must be 1 or -1, got {other}"
            ))),
        }
    }
}

/// One temporally localized shot inside a bag.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotInstance {
    /// Position of the shot within its bag, in temporal order.
    pub shot_index: usize,
    /// Interval start in seconds.
    pub t_start: f64,
    /// Interval end in seconds, strictly greater than `t_start`.
    pub t_end: f64,
    /// Concept scores, each in `[0, 1]`.
    pub features: Vec<f64>,
}

impl ShotInstance {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// A video: an ordered, non-overlapping sequence of shots plus the
/// bag-level label for the event under consideration.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoBag {
    pub bag_id: String,
    pub event_label: Label,
    pub shots: Vec<ShotInstance>,
}

impl VideoBag {
    /// Start of the first shot and end of the last one.
    pub fn span(&self) -> (f64, f64) {
        let first = self.shots.first().map(|s| s.t_start).unwrap_or(0.0);
        let last = self.shots.last().map(|s| s.t_end).unwrap_or(0.0);
        (first, last)
    }
}

/// Validated collection of bags with a consistent feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    bags: Vec<VideoBag>,
    feature_dim: usize,
    total_instances: usize,
}

impl Dataset {
    /// Validates and wraps a list of bags. Rejects empty input, duplicate
    /// bag ids, empty bags, inconsistent feature dimensions, features
    /// outside `[0, 1]`, non-positive-length shots and overlapping or
    /// unsorted shots. Touching shots (`t_end == next t_start`) are fine.
    pub fn new(bags: Vec<VideoBag>) -> Result<Dataset> {
        if bags.is_empty() {
            return Err(Error::Validation("no bags".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut feature_dim = None;
        let mut total_instances = 0;
        for bag in &bags {
            if !seen.insert(bag.bag_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate bag id {:?}",
                    bag.bag_id
                )));
            }
            if bag.shots.is_empty() {
                return Err(Error::Validation(format!(
                    "bag {:?} has no shots",
                    bag.bag_id
                )));
            }
            let mut prev_end = f64::NEG_INFINITY;
            for (k, shot) in bag.shots.iter().enumerate() {
                if shot.shot_index != k {
                    return Err(Error::Validation(format!(
                        "bag {:?}: shot_index {} at position {}",
                        bag.bag_id, shot.shot_index, k
                    )));
                }
                if !shot.t_start.is_finite()
                    || !shot.t_end.is_finite()
                    || shot.t_end <= shot.t_start
                {
                    return Err(Error::Validation(format!(
                        "bag {:?} shot {}: bad interval [{}, {})",
                        bag.bag_id, k, shot.t_start, shot.t_end
                    )));
                }
                if shot.t_start < prev_end {
                    return Err(Error::Validation(format!(
                        "bag {:?} shot {}: overlaps previous shot",
                        bag.bag_id, k
                    )));
                }
                prev_end = shot.t_end;
                let dim = *feature_dim.get_or_insert(shot.features.len());
                if shot.features.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: shot.features.len(),
                    });
                }
                if shot.features.is_empty() {
                    return Err(Error::Validation(format!(
                        "bag {:?} shot {}: empty feature vector",
                        bag.bag_id, k
                    )));
                }
                if let Some(bad) = shot.features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::Validation(format!(
                        "bag {:?} shot {}: feature {} outside [0, 1]",
                        bag.bag_id, k, bad
                    )));
                }
                total_instances += 1;
            }
        }
        Ok(Dataset {
            bags,
            feature_dim: feature_dim.unwrap_or(0),
            total_instances,
        })
    }

    pub fn bags(&self) -> &[VideoBag] {
        &self.bags
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn total_instances(&self) -> usize {
        self.total_instances
    }

    pub fn has_both_classes(&self) -> bool {
        let mut pos = false;
        let mut neg = false;
        for bag in &self.bags {
            match bag.event_label {
                Label::Positive => pos = true,
                Label::Negative => neg = true,
            }
        }
        pos && neg
    }

    /// Flattened view: for every instance, `(bag index, shot index)` in
    /// bag order then temporal order. Pseudo-label and weight vectors are
    /// indexed by position in this list.
    pub fn instance_index(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.total_instances);
        for (b, bag) in self.bags.iter().enumerate() {
            for s in 0..bag.shots.len() {
                out.push((b, s));
            }
        }
        out
    }

    /// Half-open flat-index range covered by each bag.
    pub fn bag_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.bags.len());
        let mut start = 0;
        for bag in &self.bags {
            let end = start + bag.shots.len();
            out.push(start..end);
            start = end;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shot(k: usize, t0: f64, t1: f64, features: Vec<f64>) -> ShotInstance {
        ShotInstance {
            shot_index: k,
            t_start: t0,
            t_end: t1,
            features,
        }
    }

    fn bag(id: &str, label: Label, shots: Vec<ShotInstance>) -> VideoBag {
        VideoBag {
            bag_id: id.into(),
            event_label: label,
            shots,
        }
    }

    #[test]
    fn accepts_well_formed_bags() {
        let d = Dataset::new(vec![
            bag(
                "a",
                Label::Positive,
                vec![
                    shot(0, 0.0, 2.0, vec![0.1, 0.9]),
                    shot(1, 2.0, 4.0, vec![0.3, 0.2]),
                ],
            ),
            bag("b", Label::Negative, vec![shot(0, 0.0, 3.0, vec![0.5, 0.5])]),
        ])
        .unwrap();
        assert_eq!(d.bags().len(), 2);
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.total_instances(), 3);
        assert!(d.has_both_classes());
        assert_eq!(d.instance_index(), vec![(0, 0), (0, 1), (1, 0)]);
        assert_eq!(d.bag_ranges(), vec![0..2, 2..3]);
    }

    #[test]
    fn rejects_feature_outside_unit_interval() {
        let err = Dataset::new(vec![bag(
            "a",
            Label::Positive,
            vec![shot(0, 0.0, 1.0, vec![1.5])],
        )])
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_overlapping_shots() {
        let err = Dataset::new(vec![bag(
            "a",
            Label::Positive,
            vec![
                shot(0, 0.0, 2.0, vec![0.1]),
                shot(1, 1.5, 3.0, vec![0.1]),
            ],
        )])
        .unwrap_err();
        assert!(err.to_string().contains("overlaps"), "{err}");
    }

    #[test]
    fn touching_shots_are_allowed() {
        assert!(Dataset::new(vec![bag(
            "a",
            Label::Positive,
            vec![
                shot(0, 0.0, 2.0, vec![0.1]),
                shot(1, 2.0, 3.0, vec![0.1]),
            ],
        )])
        .is_ok());
    }

    #[test]
    fn rejects_empty_input() {
        let err = Dataset::new(vec![]).unwrap_err();
        assert!(err.to_string().contains("no bags"));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let err = Dataset::new(vec![bag(
            "a",
            Label::Positive,
            vec![
                shot(0, 0.0, 1.0, vec![0.1, 0.2]),
                shot(1, 1.0, 2.0, vec![0.1]),
            ],
        )])
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn rejects_zero_length_shot() {
        let err = Dataset::new(vec![bag(
            "a",
            Label::Positive,
            vec![shot(0, 1.0, 1.0, vec![0.1])],
        )])
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}
