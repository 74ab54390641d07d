//! Evidence localization and its scoring.
//!
//! A trained model scores every shot; shots above threshold merge into
//! predicted temporal regions, which are compared with annotated
//! regions by interval overlap. Two scores are reported per bag: the
//! Jaccard-style percentage overlap `o / (p + g - o)` and the Dice-style
//! F1 `2o / (p + g)`, both over durations in seconds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, StepTrack};
use crate::data::VideoBag;
use crate::error::{Error, Result};
use crate::model::LinearModel;

/// Sorted, disjoint `[start, end)` intervals for one bag.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    bag_id: String,
    regions: Vec<(f64, f64)>,
}

impl RegionSet {
    /// Normalizes arbitrary finite intervals: drops empty ones, sorts,
    /// and merges overlapping or abutting neighbors.
    pub fn new(bag_id: impl Into<String>, mut intervals: Vec<(f64, f64)>) -> Result<RegionSet> {
        for &(a, b) in &intervals {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Validation(format!(
                    "region [{a}, {b}) is not finite"
                )));
            }
        }
        intervals.retain(|&(a, b)| b > a);
        intervals.sort_by(|x, y| x.partial_cmp(y).expect("finite intervals"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Ok(RegionSet {
            bag_id: bag_id.into(),
            regions: merged,
        })
    }

    pub fn bag_id(&self) -> &str {
        &self.bag_id
    }

    pub fn regions(&self) -> &[(f64, f64)] {
        &self.regions
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Total covered duration in seconds.
    pub fn total_length(&self) -> f64 {
        self.regions.iter().map(|(a, b)| b - a).sum()
    }

    /// Duration shared with another set.
    pub fn intersection_length(&self, other: &RegionSet) -> f64 {
        let mut total = 0.0;
        let mut rhs = other.regions.iter().peekable();
        for &(a, b) in &self.regions {
            while let Some(&&(c, d)) = rhs.peek() {
                let lo = a.max(c);
                let hi = b.min(d);
                if hi > lo {
                    total += hi - lo;
                }
                // Advance whichever interval ends first.
                if d <= b {
                    rhs.next();
                } else {
                    break;
                }
            }
        }
        total
    }
}

/// Calibrated per-shot confidences for one bag, aligned with its shots.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredShots {
    pub bag_id: String,
    pub scores: Vec<f64>,
}

/// Maps raw decision values to `[0, 1]` confidences with the model's
/// calibration. Thresholding the output at 0.5 is the same as
/// thresholding the decision at zero.
pub fn calibrate(model: &LinearModel, decisions: &[f64]) -> Vec<f64> {
    decisions
        .iter()
        .map(|&f| model.calibration.confidence(f))
        .collect()
}

/// Scores every shot of a bag with the model, calibrated.
pub fn score_bag(model: &LinearModel, bag: &VideoBag) -> Result<ScoredShots> {
    let mut scores = Vec::with_capacity(bag.shots.len());
    for shot in &bag.shots {
        scores.push(model.calibration.confidence(model.decision(&shot.features)?));
    }
    Ok(ScoredShots {
        bag_id: bag.bag_id.clone(),
        scores,
    })
}

/// Union of shot intervals whose confidence exceeds the threshold
/// (strictly), abutting shots merged.
pub fn regions_from_scores(
    shots: &ScoredShots,
    bag: &VideoBag,
    threshold: f64,
) -> Result<RegionSet> {
    if shots.bag_id != bag.bag_id {
        return Err(Error::Alignment(format!(
            "scores for bag {} applied to bag {}",
            shots.bag_id, bag.bag_id
        )));
    }
    if shots.scores.len() != bag.shots.len() {
        return Err(Error::Alignment(format!(
            "bag {}: {} scores for {} shots",
            bag.bag_id,
            shots.scores.len(),
            bag.shots.len()
        )));
    }
    let intervals = bag
        .shots
        .iter()
        .zip(&shots.scores)
        .filter(|(_, &s)| s > threshold)
        .map(|(shot, _)| (shot.t_start, shot.t_end))
        .collect();
    RegionSet::new(bag.bag_id.clone(), intervals)
}

/// Intervals where the averaged annotation reaches the threshold
/// (inclusively, so unanimous marks survive a threshold of 1).
pub fn regions_from_annotation(
    bag_id: impl Into<String>,
    track: &StepTrack,
    gt_threshold: f64,
) -> Result<RegionSet> {
    RegionSet::new(bag_id, track.regions_at_least(gt_threshold))
}

/// Overlap ratio `o / (p + g - o)` over durations. Two empty sets agree
/// perfectly (1); exactly one empty set scores 0.
pub fn pct_overlap(p: &RegionSet, g: &RegionSet) -> f64 {
    let o = p.intersection_length(g);
    let denom = p.total_length() + g.total_length() - o;
    if denom <= 0.0 {
        1.0
    } else {
        o / denom
    }
}

/// Dice score `2o / (p + g)`, with the same empty-set conventions.
pub fn f1_score(p: &RegionSet, g: &RegionSet) -> f64 {
    let o = p.intersection_length(g);
    let denom = p.total_length() + g.total_length();
    if denom <= 0.0 {
        1.0
    } else {
        2.0 * o / denom
    }
}

/// Weighted per-shot mean of several aligned score lists. Empty weights
/// mean uniform.
pub fn late_fusion(score_lists: &[ScoredShots], weights: &[f64]) -> Result<ScoredShots> {
    let first = score_lists
        .first()
        .ok_or_else(|| Error::Alignment("late fusion needs at least one score list".into()))?;
    let uniform = vec![1.0; score_lists.len()];
    let weights = if weights.is_empty() { &uniform } else { weights };
    if weights.len() != score_lists.len() {
        return Err(Error::Alignment(format!(
            "{} weights for {} score lists",
            weights.len(),
            score_lists.len()
        )));
    }
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::Validation("fusion weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Validation("fusion weights must not all be zero".into()));
    }
    for list in score_lists {
        if list.bag_id != first.bag_id || list.scores.len() != first.scores.len() {
            return Err(Error::Alignment(format!(
                "fusion inputs disagree on bag {} vs {}",
                first.bag_id, list.bag_id
            )));
        }
    }
    let scores = (0..first.scores.len())
        .map(|k| {
            score_lists
                .iter()
                .zip(weights)
                .map(|(list, &w)| w * list.scores[k])
                .sum::<f64>()
                / total
        })
        .collect();
    Ok(ScoredShots {
        bag_id: first.bag_id.clone(),
        scores,
    })
}

/// Per-event evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub event_id: String,
    pub pct_overlap: f64,
    pub f1: f64,
    pub n_bags: usize,
}

/// Scores for every evaluated event plus their macro average.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub per_event: Vec<EventScore>,
    pub average: Option<EventScore>,
    /// Events or bags skipped for lack of annotations.
    pub warnings: Vec<String>,
}

/// Predictions for one event: per-bag scored shots, aligned to the bags
/// they score.
pub struct EventPredictions<'a> {
    pub event_id: String,
    pub bags: Vec<(&'a VideoBag, ScoredShots)>,
}

/// Compares per-event predictions against annotations: bag scores are
/// macro-averaged within an event, events macro-averaged into the
/// `average` row. Bags without annotation are skipped with a warning;
/// events with no annotated bag are omitted with a warning.
pub fn evaluate(
    predictions: &[EventPredictions<'_>],
    annotations: &AnnotationSet,
    threshold: f64,
    gt_threshold: f64,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for event in predictions {
        let mut overlaps = Vec::new();
        let mut f1s = Vec::new();
        for (bag, scores) in &event.bags {
            let Some(track) = annotations.get(&bag.bag_id) else {
                report.warnings.push(format!(
                    "event {}: bag {} has no annotation, skipped",
                    event.event_id, bag.bag_id
                ));
                continue;
            };
            let p = regions_from_scores(scores, bag, threshold)?;
            let g = regions_from_annotation(bag.bag_id.clone(), track, gt_threshold)?;
            overlaps.push(pct_overlap(&p, &g));
            f1s.push(f1_score(&p, &g));
        }
        if overlaps.is_empty() {
            report.warnings.push(format!(
                "event {}: no annotated bags, omitted",
                event.event_id
            ));
            continue;
        }
        let n = overlaps.len();
        report.per_event.push(EventScore {
            event_id: event.event_id.clone(),
            pct_overlap: overlaps.iter().sum::<f64>() / n as f64,
            f1: f1s.iter().sum::<f64>() / n as f64,
            n_bags: n,
        });
    }
    if !report.per_event.is_empty() {
        let n = report.per_event.len() as f64;
        report.average = Some(EventScore {
            event_id: "average".to_string(),
            pct_overlap: report.per_event.iter().map(|e| e.pct_overlap).sum::<f64>() / n,
            f1: report.per_event.iter().map(|e| e.f1).sum::<f64>() / n,
            n_bags: report.per_event.iter().map(|e| e.n_bags).sum(),
        });
    }
    Ok(report)
}

/// Indices of the `k` largest per-feature contributions `w_d * x_d` to a
/// shot's decision value, largest first. Surfaces which concepts drove
/// an evidence call.
pub fn top_contributing_features(model: &LinearModel, features: &[f64], k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = model
        .w
        .iter()
        .zip(features)
        .map(|(w, x)| w * x)
        .enumerate()
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite contributions"));
    scored.into_iter().take(k).map(|(d, _)| d).collect()
}

#[derive(Debug, Serialize)]
struct ReportRow<'a> {
    event_id: &'a str,
    pct_overlap: f64,
    f1: f64,
}

/// Writes the per-event table plus the average row as CSV.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in &report.per_event {
        writer.serialize(ReportRow {
            event_id: &row.event_id,
            pct_overlap: row.pct_overlap,
            f1: row.f1,
        })?;
    }
    if let Some(avg) = &report.average {
        writer.serialize(ReportRow {
            event_id: "average",
            pct_overlap: avg.pct_overlap,
            f1: avg.f1,
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// One bag's predictions as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub bag_id: String,
    pub event: String,
    pub shots: Vec<PredictedShot>,
    pub regions: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top_features: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedShot {
    pub t: [f64; 2],
    pub score: f64,
}

impl PredictionRecord {
    /// Assembles the on-disk record for one bag.
    pub fn build(
        event: &str,
        bag: &VideoBag,
        scores: &ScoredShots,
        threshold: f64,
        top_features: Option<Vec<Vec<usize>>>,
    ) -> Result<PredictionRecord> {
        let regions = regions_from_scores(scores, bag, threshold)?;
        Ok(PredictionRecord {
            bag_id: bag.bag_id.clone(),
            event: event.to_string(),
            shots: bag
                .shots
                .iter()
                .zip(&scores.scores)
                .map(|(shot, &score)| PredictedShot {
                    t: [shot.t_start, shot.t_end],
                    score,
                })
                .collect(),
            regions: regions.regions().iter().map(|&(a, b)| [a, b]).collect(),
            top_features,
        })
    }
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Validation(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads prediction dumps back, keyed by `(event, bag)`.
pub fn load_predictions(path: &Path) -> Result<BTreeMap<(String, String), PredictionRecord>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)?;
    let mut out = BTreeMap::new();
    for (k, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: k + 1,
            msg: e.to_string(),
        })?;
        let key = (record.event.clone(), record.bag_id.clone());
        if out.insert(key, record).is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: k + 1,
                msg: "duplicate (event, bag) prediction".to_string(),
            });
        }
    }
    Ok(out)
}
