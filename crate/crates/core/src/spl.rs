//! Self-paced instance labeling.
//!
//! Training alternates two moves over a weakly labeled bag dataset:
//! fit a cost-weighted SVM to the currently selected instances, then let
//! the new model revise per-instance pseudo-labels and re-select which
//! instances count as easy (hinge loss under the pace threshold). The
//! threshold grows by a fixed step each iteration, so the model starts
//! from the few confident instances and gradually admits harder ones.
//! Initial labels are inherited from bag labels: every shot of a
//! positive video starts positive, every background shot negative.

use std::path::Path;

use serde::Serialize;

use crate::config::{Lambda0, SplConfig};
use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::svm::{hinge_loss, train_weighted_svm_warm, WeightedSample};

/// Mutable per-instance training state, flat over `(bag, shot)` pairs in
/// dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplState {
    pub labels: Vec<Label>,
    pub selected: Vec<bool>,
    pub lambda: f64,
    pub iteration: usize,
}

impl SplState {
    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|&&v| v).count()
    }

    pub fn n_positive_labels(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }
}

/// Everything recorded about one iteration. The objective snapshots
/// bracket each sub-step (all evaluated at the iteration's threshold),
/// which is what lets tests check the alternating descent directly.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub lambda: f64,
    pub n_selected: usize,
    pub n_pos_labels: usize,
    pub n_flips: usize,
    /// Objective after the full iteration (train, labels, weights).
    pub objective: f64,
    /// Objective entering the iteration, before the SVM retrain.
    pub objective_start: f64,
    pub objective_after_train: f64,
    /// After the per-instance sign rule, before bag constraints.
    pub objective_after_labels_free: f64,
    pub objective_after_labels: f64,
    /// Model trained this iteration.
    pub model: LinearModel,
    /// True when the selected set was single-class and the constant
    /// fallback model was used.
    pub svm_degenerate: bool,
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct SplRun {
    pub config: SplConfig,
    pub state: SplState,
    pub model: LinearModel,
    pub history: Vec<IterationRecord>,
    /// True when the loop stopped before `max_iter` because nothing
    /// could change anymore.
    pub early_exit: bool,
}

/// Bag-inherited labels, full selection, and the initial model trained
/// on them. The pace threshold starts at the configured explicit value
/// or at the configured percentile of the initial hinge losses (floored
/// at the pace step so the first selection is never empty by fiat).
pub fn init_pseudo_labels(dataset: &Dataset, config: &SplConfig) -> Result<(SplState, LinearModel)> {
    let init = Initialized::build(dataset, config)?;
    Ok((init.state, init.model))
}

struct Initialized {
    state: SplState,
    model: LinearModel,
    samples: Vec<WeightedSample>,
    alphas: Vec<f64>,
    degenerate: bool,
}

impl Initialized {
    fn build(dataset: &Dataset, config: &SplConfig) -> Result<Initialized> {
        config.validate()?;
        if !dataset.has_both_classes() {
            return Err(Error::SingleClassDataset);
        }
        let mut samples = Vec::with_capacity(dataset.total_instances());
        for bag in dataset.bags() {
            for shot in &bag.shots {
                samples.push(WeightedSample::new(
                    shot.features.clone(),
                    bag.event_label,
                    config.cost_for(bag.event_label),
                ));
            }
        }
        let mut alphas = vec![0.0; samples.len()];
        let solution = train_weighted_svm_warm(&samples, &config.svm, &mut alphas)?;

        let lambda = match config.lambda0 {
            Lambda0::Explicit(value) => value,
            Lambda0::Percentile(pct) => {
                let mut losses: Vec<f64> = samples
                    .iter()
                    .map(|s| hinge_loss(s.label, solution.model.raw_decision(&s.features)))
                    .collect();
                percentile(&mut losses, pct).max(config.delta_lambda)
            }
        };

        let state = SplState {
            labels: samples.iter().map(|s| s.label).collect(),
            selected: vec![true; samples.len()],
            lambda,
            iteration: 0,
        };
        Ok(Initialized {
            state,
            model: solution.model,
            samples,
            alphas,
            degenerate: solution.degenerate,
        })
    }
}

/// Order statistic used for the initial pace threshold: the smallest
/// value covering `pct` percent of the data, so `pct = 10` over ten
/// distinct losses returns the lowest one.
pub(crate) fn percentile(values: &mut [f64], pct: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    let rank = ((pct / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

fn decisions(model: &LinearModel, dataset: &Dataset) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dataset.total_instances());
    for bag in dataset.bags() {
        for shot in &bag.shots {
            out.push(model.decision(&shot.features)?);
        }
    }
    Ok(out)
}

/// Per-instance sign rule: each pseudo-label becomes the sign of the
/// decision value; an exact zero keeps the previous label. Returns the
/// number of flips.
fn sign_rule(labels: &mut [Label], decisions: &[f64]) -> usize {
    let mut flips = 0;
    for (label, &f) in labels.iter_mut().zip(decisions) {
        let next = if f > 0.0 {
            Label::Positive
        } else if f < 0.0 {
            Label::Negative
        } else {
            *label
        };
        if next != *label {
            *label = next;
            flips += 1;
        }
    }
    flips
}

/// Bag-level corrections after the free sign rule: positive bags must
/// keep at least one positive instance (their best-scoring shot is
/// forced back if needed), and negative bags may be barred from
/// acquiring positives at all.
fn apply_bag_constraints(
    labels: &mut [Label],
    decisions: &[f64],
    dataset: &Dataset,
    config: &SplConfig,
) -> usize {
    let mut flips = 0;
    for (bag, range) in dataset.bags().iter().zip(dataset.bag_ranges()) {
        match bag.event_label {
            Label::Negative if !config.allow_negative_bag_flips => {
                for k in range {
                    if labels[k] != Label::Negative {
                        labels[k] = Label::Negative;
                        flips += 1;
                    }
                }
            }
            Label::Positive if config.enforce_positive_bag => {
                let has_positive = range.clone().any(|k| labels[k] == Label::Positive);
                if !has_positive {
                    let best = range
                        .clone()
                        .max_by(|&a, &b| {
                            decisions[a]
                                .partial_cmp(&decisions[b])
                                .expect("finite decisions")
                        })
                        .expect("bags are non-empty");
                    labels[best] = Label::Positive;
                    flips += 1;
                }
            }
            _ => {}
        }
    }
    flips
}

/// Full label update for one iteration: sign rule then bag constraints.
/// Returns the net number of changed labels.
pub fn update_labels(
    state: &mut SplState,
    model: &LinearModel,
    dataset: &Dataset,
    config: &SplConfig,
) -> Result<usize> {
    let f = decisions(model, dataset)?;
    let before = state.labels.clone();
    sign_rule(&mut state.labels, &f);
    apply_bag_constraints(&mut state.labels, &f, dataset, config);
    Ok(net_flips(&before, &state.labels))
}

fn net_flips(before: &[Label], after: &[Label]) -> usize {
    before.iter().zip(after).filter(|(a, b)| a != b).count()
}

/// Re-selects instances: selected exactly when the hinge loss under the
/// current model and labels is strictly below the pace threshold.
/// Returns how many selections changed.
pub fn update_weights(state: &mut SplState, model: &LinearModel, dataset: &Dataset) -> Result<usize> {
    let f = decisions(model, dataset)?;
    let mut changed = 0;
    for (k, sel) in state.selected.iter_mut().enumerate() {
        let keep = hinge_loss(state.labels[k], f[k]) < state.lambda;
        if keep != *sel {
            *sel = keep;
            changed += 1;
        }
    }
    Ok(changed)
}

/// The value the alternating steps jointly minimize: the regularized
/// cost-weighted hinge loss over selected instances, minus the pace
/// reward for selecting them.
pub fn objective(
    state: &SplState,
    model: &LinearModel,
    dataset: &Dataset,
    config: &SplConfig,
) -> Result<f64> {
    let f = decisions(model, dataset)?;
    let mut total = 0.5 * model.w.iter().map(|v| v * v).sum::<f64>();
    for (k, &sel) in state.selected.iter().enumerate() {
        if sel {
            total += config.cost_for(state.labels[k]) * hinge_loss(state.labels[k], f[k]);
            total -= state.lambda;
        }
    }
    Ok(total)
}

/// Runs the full self-paced loop.
pub fn spl_fit(dataset: &Dataset, config: &SplConfig) -> Result<SplRun> {
    let mut init = Initialized::build(dataset, config)?;
    let mut model = init.model.clone();
    let state = &mut init.state;
    let samples = &mut init.samples;
    let mut history = Vec::new();
    let mut early_exit = false;
    let lambda_last = state.lambda + config.delta_lambda * config.max_iter.saturating_sub(1) as f64;

    for iter in 1..=config.max_iter {
        let objective_start = objective(state, &model, dataset, config)?;

        // (1) Retrain on the selected instances. An empty selection
        // would leave the solver nothing to fit; the previous model
        // stands for this iteration and the growing threshold will
        // repopulate the selection.
        let mut svm_degenerate = false;
        if state.selected.iter().any(|&v| v) {
            for (k, s) in samples.iter_mut().enumerate() {
                s.label = state.labels[k];
                s.cost = if state.selected[k] {
                    config.cost_for(state.labels[k])
                } else {
                    0.0
                };
            }
            let solution = train_weighted_svm_warm(samples, &config.svm, &mut init.alphas)?;
            model = solution.model;
            svm_degenerate = solution.degenerate;
        }
        let objective_after_train = objective(state, &model, dataset, config)?;

        // (2) Label update: free sign rule, then bag constraints.
        let f = decisions(&model, dataset)?;
        let before = state.labels.clone();
        sign_rule(&mut state.labels, &f);
        let objective_after_labels_free = objective(state, &model, dataset, config)?;
        apply_bag_constraints(&mut state.labels, &f, dataset, config);
        let objective_after_labels = objective(state, &model, dataset, config)?;
        let n_flips = net_flips(&before, &state.labels);

        // (3) Selection update at the current threshold.
        let n_weight_changes = update_weights(state, &model, dataset)?;
        let objective_final = objective(state, &model, dataset, config)?;

        history.push(IterationRecord {
            iter,
            lambda: state.lambda,
            n_selected: state.n_selected(),
            n_pos_labels: state.n_positive_labels(),
            n_flips,
            objective: objective_final,
            objective_start,
            objective_after_train,
            objective_after_labels_free,
            objective_after_labels,
            model: model.clone(),
            svm_degenerate,
        });

        // (4) Advance the pace.
        state.lambda += config.delta_lambda;
        state.iteration = iter;

        // Nothing changed and no future threshold can admit a new
        // instance: every remaining iteration would be identical.
        if n_flips == 0 && n_weight_changes == 0 && iter < config.max_iter {
            let saturated = state
                .selected
                .iter()
                .enumerate()
                .filter(|(_, &sel)| !sel)
                .all(|(k, _)| hinge_loss(state.labels[k], f[k]) >= lambda_last);
            if saturated {
                early_exit = true;
                break;
            }
        }
    }

    Ok(SplRun {
        config: config.clone(),
        state: init.state,
        model,
        history,
        early_exit,
    })
}

/// Baseline without self-pacing: bag-inherited labels, everything
/// selected, a single SVM fit, no updates.
pub fn basic_mil_fit(dataset: &Dataset, config: &SplConfig) -> Result<SplRun> {
    let mut init = Initialized::build(dataset, config)?;
    init.state.iteration = 1;
    let obj = objective(&init.state, &init.model, dataset, config)?;
    let record = IterationRecord {
        iter: 1,
        lambda: init.state.lambda,
        n_selected: init.state.n_selected(),
        n_pos_labels: init.state.n_positive_labels(),
        n_flips: 0,
        objective: obj,
        objective_start: obj,
        objective_after_train: obj,
        objective_after_labels_free: obj,
        objective_after_labels: obj,
        model: init.model.clone(),
        svm_degenerate: init.degenerate,
    };
    Ok(SplRun {
        config: config.clone(),
        state: init.state,
        model: init.model,
        history: vec![record],
        early_exit: false,
    })
}

#[derive(Serialize)]
struct HistoryRow {
    iter: usize,
    lambda: f64,
    n_selected: usize,
    n_pos_labels: usize,
    n_flips: usize,
    objective: f64,
}

/// Writes the per-iteration history as CSV.
pub fn write_history_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for r in history {
        writer
            .serialize(HistoryRow {
                iter: r.iter,
                lambda: r.lambda,
                n_selected: r.n_selected,
                n_pos_labels: r.n_pos_labels,
                n_flips: r.n_flips,
                objective: r.objective,
            })
            .map_err(|e| Error::Validation(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
