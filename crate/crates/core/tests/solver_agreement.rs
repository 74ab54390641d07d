//! Cross-checks the production pair solver against the reference
//! projected-gradient solver on randomized weighted problems.

use evidence_core::{primal_objective, qp_oracle, train_weighted_svm, Label, WeightedSample};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_problem(rng: &mut ChaCha8Rng) -> Vec<WeightedSample> {
    let n = rng.gen_range(4..=40);
    let dim = rng.gen_range(1..=8);
    let mut samples: Vec<WeightedSample> = (0..n)
        .map(|_| {
            let feats: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let label = if rng.gen_bool(0.5) {
                Label::Positive
            } else {
                Label::Negative
            };
            let cost = if rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(0.01..2.0)
            };
            WeightedSample::new(feats, label, cost)
        })
        .collect();
    // Guarantee an active sample from each class so the problem is
    // non-degenerate by construction.
    samples[0] = WeightedSample::new(vec![0.9; dim], Label::Positive, 0.5);
    samples[1] = WeightedSample::new(vec![0.1; dim], Label::Negative, 0.5);
    samples
}

#[test]
fn pair_solver_matches_reference_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..40 {
        let samples = random_problem(&mut rng);
        let fast = train_weighted_svm(&samples, 1e-8, 10_000).unwrap();
        let slow = qp_oracle(&samples).unwrap();
        let p_fast = primal_objective(&samples, &fast.model).unwrap();
        let p_slow = primal_objective(&samples, &slow.model).unwrap();
        let rel = (p_fast - p_slow).abs() / p_fast.abs().max(1.0);
        assert!(
            rel <= 1e-6,
            "case {case}: objectives diverge, fast {p_fast} vs reference {p_slow} (rel {rel})"
        );
        assert!(
            p_fast <= p_slow + 1e-6 * p_slow.abs().max(1.0),
            "case {case}: pair solver should never be meaningfully worse"
        );
    }
}
