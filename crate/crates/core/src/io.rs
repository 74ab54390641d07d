//! On-disk formats: dataset and annotation JSONL, model JSON.
//!
//! Datasets arrive as one JSON object per line, one line per bag. The
//! same record type round-trips back out, so generated corpora and
//! loaded corpora are interchangeable. Parse failures name the file and
//! line they came from.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, StepTrack};
use crate::data::{Dataset, Label, ShotInstance, VideoBag};
use crate::error::{Error, Result};
use crate::model::{Calibration, LinearModel};

/// One shot as stored on disk: `[start, end)` in seconds plus the
/// concept-score vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub t: [f64; 2],
    pub x: Vec<f64>,
}

/// One bag as stored on disk. `labels` holds bag-level event labels,
/// +1 present / -1 absent; events not listed count as absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagRecord {
    pub bag_id: String,
    pub labels: BTreeMap<String, i32>,
    pub shots: Vec<ShotRecord>,
}

/// One judge's marks for one bag: a list of tracks, each a list of
/// scored intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub bag_id: String,
    pub tracks: Vec<Vec<SegmentRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub t: [f64; 2],
    pub s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    w: Vec<f64>,
    b: f64,
    calibration: CalibrationFile,
    config_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationFile {
    scale: f64,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: k + 1,
            msg: e.to_string(),
        })?;
        out.push((k + 1, value));
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Validation(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads raw bag records without binding them to an event.
pub fn load_bag_records(path: &Path) -> Result<Vec<BagRecord>> {
    let records = read_jsonl::<BagRecord>(path)?;
    for (line, record) in &records {
        for (event, value) in &record.labels {
            if *value != 1 && *value != -1 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: *line,
                    msg: format!("label for event {event} must be +1 or -1, got {value}"),
                });
            }
        }
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

pub fn save_bag_records(path: &Path, records: &[BagRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// Every event id mentioned anywhere in the records, sorted.
pub fn event_ids(records: &[BagRecord]) -> Vec<String> {
    let mut ids: Vec<String> = records
        .iter()
        .flat_map(|r| r.labels.keys().cloned())
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Binds records to one event: bags labeled +1 for it become positive,
/// everything else (explicit -1 or unlabeled) becomes negative.
pub fn into_dataset(records: Vec<BagRecord>, event_id: &str) -> Result<Dataset> {
    let bags = records
        .into_iter()
        .map(|record| {
            let label = match record.labels.get(event_id) {
                Some(1) => Label::Positive,
                Some(-1) | None => Label::Negative,
                Some(other) => {
                    return Err(Error::Validation(format!(
                        "bag {}: label {other} for event {event_id} is not +1 or -1",
                        record.bag_id
                    )))
                }
            };
            let shots = record
                .shots
                .into_iter()
                .enumerate()
                .map(|(k, s)| ShotInstance {
                    shot_index: k,
                    t_start: s.t[0],
                    t_end: s.t[1],
                    features: s.x,
                })
                .collect();
            Ok(VideoBag {
                bag_id: record.bag_id,
                event_label: label,
                shots,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(bags)
}

/// Loads and validates a dataset for one event.
pub fn load_dataset(path: &Path, event_id: &str) -> Result<Dataset> {
    into_dataset(load_bag_records(path)?, event_id)
}

/// Loads annotations, averaging each bag's judge tracks pointwise.
pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let mut set = AnnotationSet::default();
    for (line, record) in read_jsonl::<AnnotationRecord>(path)? {
        let located = |e: Error| match e {
            Error::Validation(msg) => Error::Parse {
                path: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        };
        let tracks = record
            .tracks
            .iter()
            .map(|track| {
                let segs: Vec<(f64, f64, f64)> =
                    track.iter().map(|seg| (seg.t[0], seg.t[1], seg.s)).collect();
                StepTrack::from_segments(&segs)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(located)?;
        set.insert(record.bag_id, StepTrack::average(&tracks))
            .map_err(located)?;
    }
    Ok(set)
}

pub fn save_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// Writes a trained model with the digest of the configuration that
/// produced it.
pub fn save_model(path: &Path, model: &LinearModel, config_digest: &str) -> Result<()> {
    let file = ModelFile {
        w: model.w.clone(),
        b: model.b,
        calibration: CalibrationFile {
            scale: model.calibration.scale(),
        },
        config_digest: config_digest.to_string(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &file).map_err(|e| Error::Validation(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Reads a model back, returning it with the stored config digest.
pub fn load_model(path: &Path) -> Result<(LinearModel, String)> {
    let file = File::open(path)?;
    let parsed: ModelFile =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })?;
    if parsed.w.iter().any(|v| !v.is_finite()) || !parsed.b.is_finite() {
        return Err(Error::Validation(format!(
            "model file {} contains non-finite coefficients",
            path.display()
        )));
    }
    let mut model = LinearModel::new(parsed.w, parsed.b);
    model.calibration = Calibration::with_scale(parsed.calibration.scale)?;
    Ok((model, parsed.config_digest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn write(path: &Path, contents: &str) {
        std::fs::write(path, contents).unwrap();
    }

    #[test]
    fn loads_well_formed_two_bag_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write(
            &path,
            concat!(
                r#"{"bag_id":"v1","labels":{"E001":1},"shots":[{"t":[0.0,2.0],"x":[0.1,0.9]},{"t":[2.0,4.0],"x":[0.2,0.8]},{"t":[4.0,6.0],"x":[0.3,0.7]}]}"#,
                "\n",
                r#"{"bag_id":"v2","labels":{"E001":-1},"shots":[{"t":[0.0,3.0],"x":[0.5,0.5]},{"t":[3.0,5.0],"x":[0.6,0.4]}]}"#,
                "\n",
            ),
        );
        let ds = load_dataset(&path, "E001").unwrap();
        assert_eq!(ds.bags().len(), 2);
        assert_eq!(ds.total_instances(), 5);
        assert_eq!(ds.bags()[0].event_label, Label::Positive);
        assert_eq!(ds.bags()[1].event_label, Label::Negative);
    }

    #[test]
    fn unlabeled_event_defaults_to_negative() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write(
            &path,
            concat!(
                r#"{"bag_id":"v1","labels":{"E001":1},"shots":[{"t":[0,2],"x":[0.1]}]}"#,
                "\n",
                r#"{"bag_id":"bg","labels":{},"shots":[{"t":[0,2],"x":[0.4]}]}"#,
                "\n",
            ),
        );
        let ds = load_dataset(&path, "E001").unwrap();
        assert_eq!(ds.bags()[1].event_label, Label::Negative);
        let other = load_dataset(&path, "E999").unwrap();
        assert!(other.bags().iter().all(|b| b.event_label == Label::Negative));
    }

    #[test]
    fn empty_file_reports_no_bags() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write(&path, "");
        let err = load_dataset(&path, "E001").unwrap_err();
        assert!(err.to_string().contains("no bags"), "got: {err}");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write(
            &path,
            concat!(
                r#"{"bag_id":"v1","labels":{"E001":1},"shots":[{"t":[0,2],"x":[0.1]}]}"#,
                "\n",
                r#"{"bag_id":"v2", BROKEN"#,
                "\n",
            ),
        );
        match load_dataset(&path, "E001") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_feature_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write(
            &path,
            concat!(
                r#"{"bag_id":"v1","labels":{"E001":1},"shots":[{"t":[0,2],"x":[1.5]}]}"#,
                "\n",
            ),
        );
        assert!(matches!(
            load_dataset(&path, "E001"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn non_binary_label_is_rejected_with_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write(
            &path,
            concat!(
                r#"{"bag_id":"v1","labels":{"E001":2},"shots":[{"t":[0,2],"x":[0.5]}]}"#,
                "\n",
            ),
        );
        match load_dataset(&path, "E001") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("+1 or -1"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn annotations_average_across_tracks() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        write(
            &path,
            concat!(
                r#"{"bag_id":"v1","tracks":[[{"t":[0,4],"s":1.0}],[{"t":[2,6],"s":1.0}]]}"#,
                "\n",
            ),
        );
        let set = load_annotations(&path).unwrap();
        let track = set.get("v1").unwrap();
        assert_eq!(
            track.segments(),
            &[(0.0, 2.0, 0.5), (2.0, 4.0, 1.0), (4.0, 6.0, 0.5)]
        );
    }

    #[test]
    fn negative_length_annotation_is_rejected_with_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        write(
            &path,
            concat!(
                r#"{"bag_id":"v1","tracks":[[{"t":[5,2],"s":1.0}]]}"#,
                "\n",
            ),
        );
        match load_annotations(&path) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("negative length"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn model_round_trips_with_digest() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = LinearModel::new(vec![0.25, -1.5], 0.125);
        save_model(&path, &model, "abcdef0123456789").unwrap();
        let (loaded, digest) = load_model(&path).unwrap();
        assert_eq!(loaded.w, model.w);
        assert_eq!(loaded.b, model.b);
        assert_eq!(digest, "abcdef0123456789");
    }

    prop_compose! {
        fn arb_shot()(n in 1usize..4, seed in 0u64..1000) -> ShotRecord {
            let vals: Vec<f64> = (0..n).map(|k| {
                ((seed + k as u64 * 7) % 101) as f64 / 100.0
            }).collect();
            ShotRecord { t: [0.0, 1.0], x: vals }
        }
    }

    prop_compose! {
        fn arb_bag(id: usize)(
            shots in prop::collection::vec(arb_shot(), 1..5),
            positive in any::<bool>(),
        ) -> BagRecord {
            let dim = shots[0].x.len();
            let shots: Vec<ShotRecord> = shots
                .into_iter()
                .enumerate()
                .map(|(k, mut s)| {
                    s.x.resize(dim, 0.5);
                    s.t = [2.0 * k as f64, 2.0 * k as f64 + 2.0];
                    s
                })
                .collect();
            let mut labels = BTreeMap::new();
            labels.insert("E001".to_string(), if positive { 1 } else { -1 });
            BagRecord { bag_id: format!("bag{id}"), labels, shots }
        }
    }

    proptest! {
        #[test]
        fn dataset_files_round_trip(mut bags in prop::collection::vec(arb_bag(0), 1..6)) {
            let dim = bags[0].shots[0].x.len();
            for (k, bag) in bags.iter_mut().enumerate() {
                bag.bag_id = format!("bag{k}");
                for s in &mut bag.shots { s.x.resize(dim, 0.5); }
            }
            let dir = tempdir().unwrap();
            let path = dir.path().join("data.jsonl");
            save_bag_records(&path, &bags).unwrap();
            let loaded = load_bag_records(&path).unwrap();
            prop_assert_eq!(loaded, bags);
        }
    }

    proptest! {
        #[test]
        fn corrupted_shot_times_are_rejected(flip in 0.0f64..10.0) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("data.jsonl");
            // Second shot starts before the first ends.
            let overlap_start = 1.9 - (flip % 1.9);
            let line = format!(
                r#"{{"bag_id":"v1","labels":{{"E001":1}},"shots":[{{"t":[0,2],"x":[0.5]}},{{"t":[{overlap_start},4],"x":[0.5]}}]}}"#
            );
            write(&path, &line);
            prop_assert!(load_dataset(&path, "E001").is_err());
        }
    }
}
