//! Development harness: runs the full pipeline at the acceptance-test
//! scale and prints timings and scores. Not part of the test suite.

use std::time::Instant;

use evidence_core::recount::{self, EventPredictions};
use evidence_core::synth::{self, SynthSpec};
use evidence_core::{basic_mil_fit, spl_fit, AnnotationSet, SplConfig, StepTrack};

fn train_spec(seed: u64, n_neg: usize, separation: f64) -> SynthSpec {
    SynthSpec {
        n_pos_bags: 10,
        n_neg_bags: n_neg,
        shots_per_bag: (20, 20),
        feature_dim: 20,
        evidence_rate: 0.3,
        contamination_rate: 0.05,
        class_separation: separation,
        noise_sigma: 0.1,
        rng_seed: seed,
    }
}

fn eval_run(
    model: &evidence_core::LinearModel,
    test: &synth::SynthOutput,
    threshold: f64,
) -> (f64, f64) {
    let ds = test.dataset().unwrap();
    let mut annotations = AnnotationSet::default();
    for ann in &test.annotations {
        let tracks: Vec<StepTrack> = ann
            .tracks
            .iter()
            .map(|t| {
                let segs: Vec<(f64, f64, f64)> =
                    t.iter().map(|s| (s.t[0], s.t[1], s.s)).collect();
                StepTrack::from_segments(&segs).unwrap()
            })
            .collect();
        annotations
            .insert(ann.bag_id.clone(), StepTrack::average(&tracks))
            .unwrap();
    }
    let bags = ds
        .bags()
        .iter()
        .map(|bag| (bag, recount::score_bag(model, bag).unwrap()))
        .collect();
    let report = recount::evaluate(
        &[EventPredictions {
            event_id: "E001".into(),
            bags,
        }],
        &annotations,
        threshold,
        0.5,
    )
    .unwrap();
    let row = &report.per_event[0];
    (row.pct_overlap, row.f1)
}

fn main() {
    let arg = |k: usize| std::env::args().nth(k);
    let seed: u64 = arg(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let n_neg: usize = arg(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let separation: f64 = arg(3).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let clamp_neg: bool = arg(4).map(|s| s == "1").unwrap_or(false);
    let lambda0: Option<f64> = arg(5).and_then(|s| s.parse().ok());

    let t0 = Instant::now();
    let train = synth::generate(&train_spec(seed, n_neg, separation)).unwrap();
    let test = synth::generate(&SynthSpec {
        n_pos_bags: 20,
        n_neg_bags: 0,
        rng_seed: seed + 1000,
        ..train_spec(seed, n_neg, separation)
    })
    .unwrap();
    let ds = train.dataset().unwrap();
    println!(
        "generated: {} bags, {} instances in {:?}",
        ds.bags().len(),
        ds.total_instances(),
        t0.elapsed()
    );

    let config = SplConfig {
        allow_negative_bag_flips: !clamp_neg,
        lambda0: match lambda0 {
            Some(x) => evidence_core::Lambda0::Explicit(x),
            None => SplConfig::default().lambda0,
        },
        ..SplConfig::default()
    };
    let t1 = Instant::now();
    let run = spl_fit(&ds, &config).unwrap();
    println!(
        "spl_fit: {} iterations in {:?} (early_exit={}, sep={separation}, clamp={clamp_neg})",
        run.history.len(),
        t1.elapsed(),
        run.early_exit
    );
    for r in &run.history {
        println!(
            "  it {:2} lambda {:.3} selected {:5} pos {:5} flips {:4} degen {} obj {:.3}",
            r.iter, r.lambda, r.n_selected, r.n_pos_labels, r.n_flips, r.svm_degenerate, r.objective
        );
    }

    let (po, f1) = eval_run(&run.model, &test, config.threshold);
    println!("SPL     test: PctOverlap {po:.4} F1 {f1:.4}");

    let t2 = Instant::now();
    let mil = basic_mil_fit(&ds, &config).unwrap();
    let (mpo, mf1) = eval_run(&mil.model, &test, config.threshold);
    println!(
        "MIL     test: PctOverlap {mpo:.4} F1 {mf1:.4} ({:?})",
        t2.elapsed()
    );

    // Per-iteration score trace on the test split.
    let mut trace = Vec::new();
    for r in &run.history {
        let (p, _) = eval_run(&r.model, &test, config.threshold);
        trace.push(p);
    }
    let s: Vec<String> = trace.iter().map(|p| format!("{p:.3}")).collect();
    println!("trace: {}", s.join(" "));
    println!("total {:?}", t0.elapsed());
}
