//! Temporal annotations as step functions over seconds.
//!
//! Human judges mark evidence intervals per video; several judges give
//! several tracks. A single track becomes a step function (overlaps
//! within one track resolve to the strongest mark), and tracks combine
//! by pointwise averaging, so a region marked by half the judges carries
//! value 0.5. Time not covered by any segment has value zero.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Piecewise-constant function of time. Stored segments are sorted,
/// disjoint, positive-length and carry values in (0, 1]; everything
/// outside them is zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepTrack {
    segments: Vec<(f64, f64, f64)>,
}

impl StepTrack {
    /// Builds one judge's track from raw `(start, end, score)` marks.
    /// Overlapping marks keep the maximum score at each instant.
    pub fn from_segments(raw: &[(f64, f64, f64)]) -> Result<StepTrack> {
        for &(a, b, s) in raw {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Validation(format!(
                    "annotation interval [{a}, {b}) is not finite"
                )));
            }
            if b < a {
                return Err(Error::Validation(format!(
                    "annotation interval [{a}, {b}) has negative length"
                )));
            }
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(Error::Validation(format!(
                    "annotation score {s} outside [0, 1]"
                )));
            }
        }
        let cuts = breakpoints(raw.iter().map(|&(a, b, _)| (a, b)));
        let mut segments = Vec::new();
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let value = raw
                .iter()
                .filter(|&&(a, b, _)| a <= lo && hi <= b)
                .map(|&(_, _, s)| s)
                .fold(0.0f64, f64::max);
            push_segment(&mut segments, lo, hi, value);
        }
        Ok(StepTrack { segments })
    }

    /// Pointwise arithmetic mean of several tracks. An instant a track
    /// does not cover contributes zero for that track.
    pub fn average(tracks: &[StepTrack]) -> StepTrack {
        if tracks.is_empty() {
            return StepTrack::default();
        }
        let cuts = breakpoints(
            tracks
                .iter()
                .flat_map(|t| t.segments.iter().map(|&(a, b, _)| (a, b))),
        );
        let mut segments = Vec::new();
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mid = 0.5 * (lo + hi);
            let sum: f64 = tracks.iter().map(|t| t.value_at(mid)).sum();
            push_segment(&mut segments, lo, hi, sum / tracks.len() as f64);
        }
        StepTrack { segments }
    }

    /// Value of the step function at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .find(|&&(a, b, _)| a <= t && t < b)
            .map(|&(_, _, s)| s)
            .unwrap_or(0.0)
    }

    /// Merged intervals where the value reaches `threshold` (inclusive).
    pub fn regions_at_least(&self, threshold: f64) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &(a, b, s) in &self.segments {
            if s >= threshold {
                match out.last_mut() {
                    Some(last) if last.1 == a => last.1 = b,
                    _ => out.push((a, b)),
                }
            }
        }
        out
    }

    /// Sorted disjoint `(start, end, value)` segments with nonzero value.
    pub fn segments(&self) -> &[(f64, f64, f64)] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

fn breakpoints(intervals: impl Iterator<Item = (f64, f64)>) -> Vec<f64> {
    let mut cuts: Vec<f64> = intervals.flat_map(|(a, b)| [a, b]).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    cuts.dedup();
    cuts
}

fn push_segment(segments: &mut Vec<(f64, f64, f64)>, lo: f64, hi: f64, value: f64) {
    if hi <= lo || value <= 0.0 {
        return;
    }
    match segments.last_mut() {
        Some(last) if last.1 == lo && last.2 == value => last.1 = hi,
        _ => segments.push((lo, hi, value)),
    }
}

/// Averaged annotation tracks keyed by bag id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    tracks: BTreeMap<String, StepTrack>,
}

impl AnnotationSet {
    pub fn insert(&mut self, bag_id: String, track: StepTrack) -> Result<()> {
        if self.tracks.contains_key(&bag_id) {
            return Err(Error::Validation(format!(
                "duplicate annotation for bag {bag_id}"
            )));
        }
        self.tracks.insert(bag_id, track);
        Ok(())
    }

    pub fn get(&self, bag_id: &str) -> Option<&StepTrack> {
        self.tracks.get(bag_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &StepTrack)> {
        self.tracks.iter()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unanimous_judges_average_to_one() {
        let tracks: Vec<StepTrack> = (0..8)
            .map(|_| StepTrack::from_segments(&[(2.0, 5.0, 1.0)]).unwrap())
            .collect();
        let avg = StepTrack::average(&tracks);
        assert_eq!(avg.segments(), &[(2.0, 5.0, 1.0)]);
    }

    #[test]
    fn half_support_averages_to_half() {
        let mut tracks: Vec<StepTrack> = (0..4)
            .map(|_| StepTrack::from_segments(&[(2.0, 5.0, 1.0)]).unwrap())
            .collect();
        tracks.extend((0..4).map(|_| StepTrack::default()));
        let avg = StepTrack::average(&tracks);
        assert_eq!(avg.segments(), &[(2.0, 5.0, 0.5)]);
    }

    #[test]
    fn staggered_judges_average_by_breakpoints() {
        let t1 = StepTrack::from_segments(&[(0.0, 4.0, 1.0)]).unwrap();
        let t2 = StepTrack::from_segments(&[(2.0, 6.0, 1.0)]).unwrap();
        let avg = StepTrack::average(&[t1, t2]);
        assert_eq!(
            avg.segments(),
            &[(0.0, 2.0, 0.5), (2.0, 4.0, 1.0), (4.0, 6.0, 0.5)]
        );
    }

    #[test]
    fn overlap_within_one_track_keeps_the_stronger_mark() {
        let t = StepTrack::from_segments(&[(0.0, 4.0, 0.4), (2.0, 6.0, 0.8)]).unwrap();
        assert_abs_diff_eq!(t.value_at(1.0), 0.4);
        assert_abs_diff_eq!(t.value_at(3.0), 0.8);
        assert_abs_diff_eq!(t.value_at(5.0), 0.8);
        assert_eq!(t.value_at(6.0), 0.0, "end is exclusive");
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(StepTrack::from_segments(&[(3.0, 2.0, 1.0)]).is_err());
        assert!(StepTrack::from_segments(&[(0.0, 1.0, 1.5)]).is_err());
        assert!(StepTrack::from_segments(&[(0.0, 1.0, -0.1)]).is_err());
        assert!(StepTrack::from_segments(&[(f64::NAN, 1.0, 0.5)]).is_err());
    }

    #[test]
    fn zero_length_marks_vanish() {
        let t = StepTrack::from_segments(&[(2.0, 2.0, 1.0)]).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn threshold_regions_are_inclusive_and_merged() {
        let t1 = StepTrack::from_segments(&[(0.0, 2.0, 1.0), (2.0, 4.0, 1.0)]).unwrap();
        let t2 = StepTrack::from_segments(&[(0.0, 4.0, 1.0), (6.0, 8.0, 1.0)]).unwrap();
        let avg = StepTrack::average(&[t1, t2]);
        assert_eq!(avg.regions_at_least(1.0), vec![(0.0, 4.0)]);
        assert_eq!(avg.regions_at_least(0.5), vec![(0.0, 4.0), (6.0, 8.0)]);
        assert_eq!(avg.regions_at_least(0.51), vec![(0.0, 4.0)]);
    }

    #[test]
    fn annotation_set_rejects_duplicates() {
        let mut set = AnnotationSet::default();
        set.insert("v1".into(), StepTrack::default()).unwrap();
        assert!(set.insert("v1".into(), StepTrack::default()).is_err());
    }
}
