//! Batch front end for the evidence library: generate corpora, train
//! per-event models, evaluate against annotations, fuse views.
//!
//! Exit codes: 0 success, 1 data error, 2 usage or config error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use evidence_core::recount::{
    evaluate, late_fusion, load_predictions, score_bag, top_contributing_features,
    write_predictions, write_report_csv, EventPredictions, PredictionRecord, ScoredShots,
};
use evidence_core::spl::write_history_csv;
use evidence_core::synth::{self, SynthSpec};
use evidence_core::{
    basic_mil_fit, io, spl_fit, Dataset, Error, Label, Lambda0, LinearModel, Result, ShotInstance,
    SplConfig, SplRun, VideoBag,
};

/// Feature indices reported per shot in prediction dumps.
const TOP_FEATURES: usize = 3;

#[derive(Parser)]
#[command(name = "evidence", version, about = "Weakly supervised evidence discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per event and write model + history files.
    Train(TrainArgs),
    /// Score a dataset with trained models and report PctOverlap / F1.
    Eval(EvalArgs),
    /// Merge prediction dumps from several views into one.
    Fuse(FuseArgs),
    /// Generate a synthetic corpus with planted evidence.
    Synth(SynthArgs),
}

/// Training knobs. Flags override the config file, which overrides the
/// built-in defaults.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    /// TOML file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    delta_lambda: Option<f64>,
    #[arg(long)]
    c_plus: Option<f64>,
    #[arg(long)]
    c_minus: Option<f64>,
    /// Fixed initial pace threshold.
    #[arg(long, conflicts_with = "lambda0_percentile")]
    lambda0: Option<f64>,
    /// Percentile of initial losses taken as the starting pace.
    #[arg(long)]
    lambda0_percentile: Option<f64>,
    /// Confidence cut for predicted evidence regions.
    #[arg(long)]
    threshold: Option<f64>,
    /// Annotation cut for ground-truth regions.
    #[arg(long)]
    gt_threshold: Option<f64>,
    #[arg(long)]
    enforce_positive_bag: Option<bool>,
    #[arg(long)]
    allow_negative_flips: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

/// The config-file mirror of [`ConfigFlags`].
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    max_iter: Option<usize>,
    delta_lambda: Option<f64>,
    c_plus: Option<f64>,
    c_minus: Option<f64>,
    lambda0: Option<f64>,
    lambda0_percentile: Option<f64>,
    threshold: Option<f64>,
    gt_threshold: Option<f64>,
    enforce_positive_bag: Option<bool>,
    allow_negative_flips: Option<bool>,
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Bag records, JSONL.
    #[arg(long)]
    data: PathBuf,
    /// Events to train, comma separated. Default: every event present.
    #[arg(long, value_delimiter = ',')]
    events: Vec<String>,
    /// Directory receiving {event}.model.json and {event}.history.csv.
    #[arg(long)]
    out: PathBuf,
    /// "mil" trains the single-pass baseline instead of the full loop.
    #[arg(long, value_parser = ["mil"])]
    baseline: Option<String>,
    /// Worker pool size for per-event jobs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    config: ConfigFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Bag records to score: one path, or one per --models directory.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Directories of {event}.model.json files; several mean views,
    /// fused before scoring.
    #[arg(long, required = true)]
    models: Vec<PathBuf>,
    /// Annotation records, JSONL.
    #[arg(long)]
    annotations: PathBuf,
    /// Report CSV destination.
    #[arg(long)]
    report: PathBuf,
    /// Events to score. Default: every model in the first directory.
    #[arg(long, value_delimiter = ',')]
    events: Vec<String>,
    /// View weights: "uniform" or comma-separated numbers.
    #[arg(long, default_value = "uniform")]
    fuse: String,
    /// Also dump per-shot scores and regions to this JSONL path.
    #[arg(long)]
    dump_predictions: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigFlags,
}

#[derive(Args)]
struct FuseArgs {
    /// Prediction dumps to merge, one per view.
    #[arg(long, required = true)]
    predictions: Vec<PathBuf>,
    /// View weights: "uniform" or comma-separated numbers.
    #[arg(long, default_value = "uniform")]
    weights: String,
    /// Fused prediction dump destination.
    #[arg(long)]
    out: PathBuf,
    /// Confidence cut for the fused regions.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pos: usize,
    #[arg(long, default_value_t = 500)]
    neg: usize,
    #[arg(long, default_value_t = 15)]
    shots_min: usize,
    #[arg(long, default_value_t = 25)]
    shots_max: usize,
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long, default_value_t = 0.2)]
    evidence_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    contamination: f64,
    #[arg(long, default_value_t = 0.25)]
    separation: f64,
    #[arg(long, default_value_t = 0.12)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory receiving data.jsonl, annotations.jsonl, truth.jsonl.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Fuse(args) => cmd_fuse(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

/// Attaches the file path to bare I/O errors; keeps the error class.
fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Validation(format!("{}: {io}", path.display())),
        other => other,
    }
}

fn resolve_config(flags: &ConfigFlags) -> Result<SplConfig> {
    let mut cfg = SplConfig::default();
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let file: FileConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if file.lambda0.is_some() && file.lambda0_percentile.is_some() {
            return Err(Error::Config(format!(
                "{}: lambda0 and lambda0_percentile are mutually exclusive",
                path.display()
            )));
        }
        apply_file(&mut cfg, &file);
    }
    apply_flags(&mut cfg, flags);
    cfg.validate()?;
    Ok(cfg)
}

fn apply_file(cfg: &mut SplConfig, file: &FileConfig) {
    if let Some(v) = file.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = file.delta_lambda {
        cfg.delta_lambda = v;
    }
    if let Some(v) = file.c_plus {
        cfg.c_plus = v;
    }
    if let Some(v) = file.c_minus {
        cfg.c_minus = v;
    }
    if let Some(v) = file.lambda0 {
        cfg.lambda0 = Lambda0::Explicit(v);
    }
    if let Some(v) = file.lambda0_percentile {
        cfg.lambda0 = Lambda0::Percentile(v);
    }
    if let Some(v) = file.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = file.gt_threshold {
        cfg.gt_threshold = v;
    }
    if let Some(v) = file.enforce_positive_bag {
        cfg.enforce_positive_bag = v;
    }
    if let Some(v) = file.allow_negative_flips {
        cfg.allow_negative_bag_flips = v;
    }
    if let Some(v) = file.seed {
        cfg.rng_seed = v;
    }
}

fn apply_flags(cfg: &mut SplConfig, flags: &ConfigFlags) {
    if let Some(v) = flags.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = flags.delta_lambda {
        cfg.delta_lambda = v;
    }
    if let Some(v) = flags.c_plus {
        cfg.c_plus = v;
    }
    if let Some(v) = flags.c_minus {
        cfg.c_minus = v;
    }
    if let Some(v) = flags.lambda0 {
        cfg.lambda0 = Lambda0::Explicit(v);
    }
    if let Some(v) = flags.lambda0_percentile {
        cfg.lambda0 = Lambda0::Percentile(v);
    }
    if let Some(v) = flags.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = flags.gt_threshold {
        cfg.gt_threshold = v;
    }
    if let Some(v) = flags.enforce_positive_bag {
        cfg.enforce_positive_bag = v;
    }
    if let Some(v) = flags.allow_negative_flips {
        cfg.allow_negative_bag_flips = v;
    }
    if let Some(v) = flags.seed {
        cfg.rng_seed = v;
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = resolve_config(&args.config)?;
    if args.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let records = io::load_bag_records(&args.data).map_err(|e| located(&args.data, e))?;
    let events = if args.events.is_empty() {
        io::event_ids(&records)
    } else {
        args.events.clone()
    };
    if events.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no event labels found",
            args.data.display()
        )));
    }
    fs::create_dir_all(&args.out)?;
    let mil = args.baseline.as_deref() == Some("mil");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let runs: Vec<Result<SplRun>> = pool.install(|| {
        use rayon::prelude::*;
        events
            .par_iter()
            .map(|event| {
                let ds = io::into_dataset(records.clone(), event)?;
                if mil {
                    basic_mil_fit(&ds, &config)
                } else {
                    spl_fit(&ds, &config)
                }
            })
            .collect()
    });
    let digest = config.digest();
    for (event, run) in events.iter().zip(runs) {
        let run = run?;
        let model_path = args.out.join(format!("{event}.model.json"));
        let history_path = args.out.join(format!("{event}.history.csv"));
        io::save_model(&model_path, &run.model, &digest)?;
        write_history_csv(&history_path, &run.history)?;
        let last = run.history.last();
        println!(
            "trained {event}: {} iterations, {} selected, {} positive labels",
            run.history.len(),
            last.map_or(0, |r| r.n_selected),
            last.map_or(0, |r| r.n_pos_labels),
        );
    }
    println!("wrote {} model(s) to {}", events.len(), args.out.display());
    Ok(())
}

/// Models for every requested event in one view directory.
fn load_view_models(dir: &Path, events: &[String]) -> Result<BTreeMap<String, LinearModel>> {
    let mut models = BTreeMap::new();
    for event in events {
        let path = dir.join(format!("{event}.model.json"));
        let (model, _digest) = io::load_model(&path).map_err(|e| located(&path, e))?;
        models.insert(event.clone(), model);
    }
    Ok(models)
}

/// Event names found as {event}.model.json in a directory, sorted.
fn discover_events(dir: &Path) -> Result<Vec<String>> {
    let mut events = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::Validation(format!("{}: {e}", dir.display())))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".model.json") {
            events.push(stem.to_string());
        }
    }
    events.sort();
    Ok(events)
}

fn parse_weights(spec: &str, n_views: usize) -> Result<Vec<f64>> {
    if spec == "uniform" {
        return Ok(Vec::new());
    }
    let weights: Vec<f64> = spec
        .split(',')
        .map(|w| {
            w.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("weight {w:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if weights.len() != n_views {
        return Err(Error::Config(format!(
            "{} weights given for {n_views} views",
            weights.len()
        )));
    }
    Ok(weights)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let config = resolve_config(&args.config)?;
    let n_views = args.models.len();
    if args.data.len() != 1 && args.data.len() != n_views {
        return Err(Error::Config(format!(
            "{} data paths given for {n_views} model directories; pass one shared path or one per view",
            args.data.len()
        )));
    }
    let weights = parse_weights(&args.fuse, n_views)?;
    let annotations = io::load_annotations(&args.annotations)?;
    let events = if args.events.is_empty() {
        discover_events(&args.models[0])?
    } else {
        args.events.clone()
    };
    if events.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no models found",
            args.models[0].display()
        )));
    }
    let view_records: Vec<Vec<io::BagRecord>> = args
        .data
        .iter()
        .map(|path| io::load_bag_records(path).map_err(|e| located(path, e)))
        .collect::<Result<_>>()?;
    let view_models: Vec<BTreeMap<String, LinearModel>> = args
        .models
        .iter()
        .map(|dir| load_view_models(dir, &events))
        .collect::<Result<_>>()?;

    // Per event: the first view's dataset carries the bag structure; the
    // kept indices point at its annotated bags.
    let mut held: Vec<(String, Dataset, Vec<usize>, Vec<ScoredShots>)> = Vec::new();
    let mut dump = Vec::new();
    for event in &events {
        let ds0 = io::into_dataset(view_records[0].clone(), event)?;
        let kept: Vec<usize> = (0..ds0.bags().len())
            .filter(|&i| annotations.get(&ds0.bags()[i].bag_id).is_some())
            .collect();
        let mut fused = Vec::with_capacity(kept.len());
        let mut view_datasets = Vec::new();
        for v in 1..n_views {
            let records = view_records.get(v).unwrap_or(&view_records[0]).clone();
            view_datasets.push(io::into_dataset(records, event)?);
        }
        for &i in &kept {
            let bag = &ds0.bags()[i];
            let mut per_view = vec![score_bag(&view_models[0][event.as_str()], bag)?];
            for (v, ds) in view_datasets.iter().enumerate() {
                let other = ds
                    .bags()
                    .iter()
                    .find(|b| b.bag_id == bag.bag_id)
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "bag {} missing from view {}",
                            bag.bag_id,
                            v + 1
                        ))
                    })?;
                per_view.push(score_bag(&view_models[v + 1][event.as_str()], other)?);
            }
            let scores = if n_views == 1 {
                per_view.pop().expect("one view scored")
            } else {
                late_fusion(&per_view, &weights)?
            };
            if args.dump_predictions.is_some() {
                let top = (n_views == 1).then(|| {
                    let model = &view_models[0][event.as_str()];
                    bag.shots
                        .iter()
                        .map(|s| top_contributing_features(model, &s.features, TOP_FEATURES))
                        .collect()
                });
                dump.push(PredictionRecord::build(
                    event,
                    bag,
                    &scores,
                    config.threshold,
                    top,
                )?);
            }
            fused.push(scores);
        }
        held.push((event.clone(), ds0, kept, fused));
    }
    let predictions: Vec<EventPredictions> = held
        .iter()
        .map(|(event, ds0, kept, fused)| EventPredictions {
            event_id: event.clone(),
            bags: kept
                .iter()
                .zip(fused)
                .map(|(&i, scores)| (&ds0.bags()[i], scores.clone()))
                .collect(),
        })
        .collect();
    let report = evaluate(&predictions, &annotations, config.threshold, config.gt_threshold)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    write_report_csv(&args.report, &report)?;
    if let Some(path) = &args.dump_predictions {
        write_predictions(path, &dump)?;
    }
    match &report.average {
        Some(avg) => println!(
            "PctOverlap {:.4} F1 {:.4} over {} event(s), {} bag(s)",
            avg.pct_overlap,
            avg.f1,
            report.per_event.len(),
            avg.n_bags
        ),
        None => println!("no annotated bags scored"),
    }
    println!("wrote {}", args.report.display());
    Ok(())
}

/// A bag skeleton good enough to re-derive regions from dumped shots.
fn bag_from_record(record: &PredictionRecord) -> VideoBag {
    VideoBag {
        bag_id: record.bag_id.clone(),
        event_label: Label::Positive,
        shots: record
            .shots
            .iter()
            .enumerate()
            .map(|(i, shot)| ShotInstance {
                shot_index: i,
                t_start: shot.t[0],
                t_end: shot.t[1],
                features: Vec::new(),
            })
            .collect(),
    }
}

fn cmd_fuse(args: FuseArgs) -> Result<()> {
    let weights = parse_weights(&args.weights, args.predictions.len())?;
    let mut views = Vec::with_capacity(args.predictions.len());
    for path in &args.predictions {
        views.push(load_predictions(path).map_err(|e| located(path, e))?);
    }
    let (first, rest) = views.split_first().expect("at least one dump required");
    for (path, view) in args.predictions[1..].iter().zip(rest) {
        if view.len() != first.len() || !view.keys().eq(first.keys()) {
            return Err(Error::Validation(format!(
                "{}: prediction dumps disagree on the (event, bag) set",
                path.display()
            )));
        }
    }
    let mut fused_records = Vec::with_capacity(first.len());
    for (key, base) in first {
        let mut scored = Vec::with_capacity(views.len());
        for view in &views {
            let record = &view[key];
            if record.shots.len() != base.shots.len()
                || record
                    .shots
                    .iter()
                    .zip(&base.shots)
                    .any(|(a, b)| a.t != b.t)
            {
                return Err(Error::Validation(format!(
                    "bag {} has mismatched shots across dumps",
                    base.bag_id
                )));
            }
            scored.push(ScoredShots {
                bag_id: base.bag_id.clone(),
                scores: record.shots.iter().map(|s| s.score).collect(),
            });
        }
        let fused = late_fusion(&scored, &weights)?;
        let bag = bag_from_record(base);
        fused_records.push(PredictionRecord::build(
            &key.0,
            &bag,
            &fused,
            args.threshold,
            None,
        )?);
    }
    write_predictions(&args.out, &fused_records)?;
    println!(
        "fused {} view(s) over {} bag(s) into {}",
        views.len(),
        fused_records.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_pos_bags: args.pos,
        n_neg_bags: args.neg,
        shots_per_bag: (args.shots_min, args.shots_max),
        feature_dim: args.dim,
        evidence_rate: args.evidence_rate,
        contamination_rate: args.contamination,
        class_separation: args.separation,
        noise_sigma: args.noise_sigma,
        rng_seed: args.seed,
    };
    let out = synth::generate(&spec)?;
    fs::create_dir_all(&args.out)?;
    io::save_bag_records(&args.out.join("data.jsonl"), &out.records)?;
    io::save_annotations(&args.out.join("annotations.jsonl"), &out.annotations)?;
    let truth_path = args.out.join("truth.jsonl");
    {
        use std::io::Write;
        let mut file = std::io::BufWriter::new(fs::File::create(&truth_path)?);
        for record in &out.truth {
            serde_json::to_writer(&mut file, record)
                .map_err(|e| Error::Validation(format!("truth record: {e}")))?;
            writeln!(file)?;
        }
    }
    let n_shots: usize = out.truth.iter().map(|t| t.is_evidence.len()).sum();
    let planted: usize = out
        .truth
        .iter()
        .map(|t| t.is_evidence.iter().filter(|&&e| e).count())
        .sum();
    println!(
        "wrote {} bags ({} positive), {} shots, {} evidence shots to {}",
        out.records.len(),
        args.pos,
        n_shots,
        planted,
        args.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let flags = ConfigFlags {
            max_iter: Some(3),
            c_minus: Some(0.25),
            lambda0: Some(0.4),
            ..ConfigFlags::default()
        };
        let cfg = resolve_config(&flags).unwrap();
        assert_eq!(cfg.max_iter, 3);
        assert_eq!(cfg.c_minus, 0.25);
        assert_eq!(cfg.lambda0, Lambda0::Explicit(0.4));
        assert_eq!(cfg.delta_lambda, 0.02);
    }

    #[test]
    fn config_file_sits_between_defaults_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "max_iter = 7\nthreshold = 0.6\n").unwrap();
        let flags = ConfigFlags {
            config: Some(path),
            threshold: Some(0.7),
            ..ConfigFlags::default()
        };
        let cfg = resolve_config(&flags).unwrap();
        assert_eq!(cfg.max_iter, 7);
        assert_eq!(cfg.threshold, 0.7);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "max_iters = 7\n").unwrap();
        let flags = ConfigFlags {
            config: Some(path),
            ..ConfigFlags::default()
        };
        assert!(matches!(resolve_config(&flags), Err(Error::Config(_))));
    }

    #[test]
    fn conflicting_lambda0_keys_in_file_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "lambda0 = 0.1\nlambda0_percentile = 20.0\n").unwrap();
        let flags = ConfigFlags {
            config: Some(path),
            ..ConfigFlags::default()
        };
        assert!(matches!(resolve_config(&flags), Err(Error::Config(_))));
    }

    #[test]
    fn weight_parsing_accepts_uniform_and_lists() {
        assert_eq!(parse_weights("uniform", 3).unwrap(), Vec::<f64>::new());
        assert_eq!(parse_weights("1, 2,0.5", 3).unwrap(), vec![1.0, 2.0, 0.5]);
        assert!(parse_weights("1,2", 3).is_err());
        assert!(parse_weights("a,b,c", 3).is_err());
    }

    #[test]
    fn invalid_config_values_surface_as_config_errors() {
        let flags = ConfigFlags {
            c_plus: Some(-1.0),
            ..ConfigFlags::default()
        };
        assert!(matches!(resolve_config(&flags), Err(Error::Config(_))));
    }
}
