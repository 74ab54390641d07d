//! Cost-weighted linear SVM trained in the dual.
//!
//! The problem solved is
//!
//! ```text
//! min over (w, b):  0.5 * |w|^2  +  sum_i  c_i * max(0, 1 - y_i * (w . x_i + b))
//! ```
//!
//! with one box constraint `0 <= alpha_i <= c_i` per sample in the dual
//! and the usual equality constraint `sum_i y_i * alpha_i = 0` coming from
//! the unregularized bias. Keeping the bias out of the regularizer matters
//! here: the self-paced outer loop measures progress against exactly this
//! primal value, so the inner solver must not quietly optimize a different
//! one (as folding the bias into the feature vector would).
//!
//! Optimization is two-coordinate descent on maximal violating pairs with
//! periodic shrinking of bound variables, the standard decomposition for
//! this dual. The bias is recovered by an exact line search: for fixed `w`
//! the objective is piecewise linear in `b`, so a breakpoint sweep finds a
//! true minimizer (midpoint of the optimal interval when it is flat).
//! Training stops when the relative duality gap drops below `tol`.

pub mod oracle;

use crate::config::SvmParams;
use crate::data::Label;
use crate::error::{Error, Result};
use crate::model::{dot, LinearModel};

/// One training sample: features, current pseudo-label and its cost.
/// A zero cost removes the sample from the problem entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub features: Vec<f64>,
    pub label: Label,
    pub cost: f64,
}

impl WeightedSample {
    pub fn new(features: Vec<f64>, label: Label, cost: f64) -> WeightedSample {
        WeightedSample {
            features,
            label,
            cost,
        }
    }
}

/// Everything a training call produces besides the model itself.
#[derive(Debug, Clone)]
pub struct SvmSolution {
    pub model: LinearModel,
    /// Dual variables aligned with the input samples; zero for samples
    /// with zero cost.
    pub alphas: Vec<f64>,
    /// Sweep-equivalents consumed (total pair updates / active size).
    pub passes: usize,
    /// Relative duality gap at termination.
    pub duality_gap: f64,
    /// True when the active set was single-class and the fallback
    /// constant model `(w = 0, b = label)` was returned.
    pub degenerate: bool,
}

/// Hinge loss `max(0, 1 - y * f)`.
pub fn hinge_loss(label: Label, decision: f64) -> f64 {
    (1.0 - label.sign() * decision).max(0.0)
}

/// Primal objective of the weighted problem at a given model. Samples
/// with zero cost contribute nothing, matching the solver's view.
pub fn primal_objective(samples: &[WeightedSample], model: &LinearModel) -> Result<f64> {
    let mut loss = 0.0;
    for s in samples {
        if s.features.len() != model.w.len() {
            return Err(Error::DimensionMismatch {
                expected: model.w.len(),
                got: s.features.len(),
            });
        }
        if s.cost != 0.0 {
            loss += s.cost * hinge_loss(s.label, model.raw_decision(&s.features));
        }
    }
    Ok(0.5 * dot(&model.w, &model.w) + loss)
}

/// Trains the weighted SVM from scratch.
pub fn train_weighted_svm(
    samples: &[WeightedSample],
    tol: f64,
    max_passes: usize,
) -> Result<SvmSolution> {
    let mut alphas = vec![0.0; samples.len()];
    train_weighted_svm_warm(samples, &SvmParams { tol, max_passes }, &mut alphas)
}

/// Trains starting from a previous dual solution. `alphas` is clamped to
/// the current boxes and repaired onto the equality constraint before
/// optimization, so any content is a legal starting point. The self-paced
/// loop uses this to make consecutive retrains nearly free.
pub(crate) fn train_weighted_svm_warm(
    samples: &[WeightedSample],
    params: &SvmParams,
    alphas: &mut Vec<f64>,
) -> Result<SvmSolution> {
    if !params.tol.is_finite() || params.tol <= 0.0 {
        return Err(Error::Config(format!(
            "svm tol must be positive, got {}",
            params.tol
        )));
    }
    let dim = validate_samples(samples)?;
    let active = ActiveSet::build(samples, dim)?;
    alphas.resize(samples.len(), 0.0);

    let mut pos = false;
    let mut neg = false;
    for &t in &active.idx {
        match samples[t].label {
            Label::Positive => pos = true,
            Label::Negative => neg = true,
        }
    }
    if !(pos && neg) {
        // Single-class active set: every labeling with margin >= 1 and
        // minimal |w| is the constant model at the shared label.
        alphas.iter_mut().for_each(|a| *a = 0.0);
        let b = if pos { 1.0 } else { -1.0 };
        return Ok(SvmSolution {
            model: LinearModel::new(vec![0.0; dim], b),
            alphas: alphas.clone(),
            passes: 0,
            duality_gap: 0.0,
            degenerate: true,
        });
    }

    let mut a: Vec<f64> = active
        .idx
        .iter()
        .map(|&t| alphas[t].clamp(0.0, samples[t].cost))
        .collect();
    repair_equality(&mut a, &active);

    let outcome = solve_pairs(&active, params, &mut a);

    alphas.iter_mut().for_each(|v| *v = 0.0);
    for (k, &t) in active.idx.iter().enumerate() {
        alphas[t] = a[k];
    }
    Ok(SvmSolution {
        model: LinearModel::new(outcome.w, outcome.b),
        alphas: alphas.clone(),
        passes: outcome.passes,
        duality_gap: outcome.gap,
        degenerate: false,
    })
}

fn validate_samples(samples: &[WeightedSample]) -> Result<usize> {
    let mut dim = None;
    for s in samples {
        let d = *dim.get_or_insert(s.features.len());
        if s.features.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.features.len(),
            });
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        if !s.cost.is_finite() || s.cost < 0.0 {
            return Err(Error::Validation(format!(
                "sample cost must be finite and non-negative, got {}",
                s.cost
            )));
        }
    }
    Ok(dim.unwrap_or(0))
}

/// Flattened cost-bearing subset of the training samples.
struct ActiveSet {
    /// Positions in the original slice.
    idx: Vec<usize>,
    /// Row-major features, `idx.len() * dim`.
    x: Vec<f64>,
    y: Vec<f64>,
    c: Vec<f64>,
    /// Cached squared norms (the diagonal of the Gram matrix).
    norms: Vec<f64>,
    dim: usize,
}

impl ActiveSet {
    fn build(samples: &[WeightedSample], dim: usize) -> Result<ActiveSet> {
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&t| samples[t].cost > 0.0)
            .collect();
        if idx.is_empty() {
            return Err(Error::NoActiveSamples);
        }
        let mut x = Vec::with_capacity(idx.len() * dim);
        let mut y = Vec::with_capacity(idx.len());
        let mut c = Vec::with_capacity(idx.len());
        let mut norms = Vec::with_capacity(idx.len());
        for &t in &idx {
            let s = &samples[t];
            x.extend_from_slice(&s.features);
            y.push(s.label.sign());
            c.push(s.cost);
            norms.push(dot(&s.features, &s.features));
        }
        Ok(ActiveSet {
            idx,
            x,
            y,
            c,
            norms,
            dim,
        })
    }

    fn len(&self) -> usize {
        self.idx.len()
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim..(k + 1) * self.dim]
    }
}

/// Restores `sum_i y_i a_i = 0` after warm-start clamping by draining
/// excess mass from the heavier side in index order.
fn repair_equality(a: &mut [f64], active: &ActiveSet) {
    let mut s: f64 = a.iter().zip(&active.y).map(|(ai, yi)| ai * yi).sum();
    if s == 0.0 {
        return;
    }
    let heavy = if s > 0.0 { 1.0 } else { -1.0 };
    for k in 0..a.len() {
        if s.abs() <= 0.0 {
            break;
        }
        if active.y[k] == heavy && a[k] > 0.0 {
            let take = a[k].min(s.abs());
            a[k] -= take;
            s -= heavy * take;
        }
    }
    // Anything left is floating-point dust; zeroing the smaller side
    // entirely would cost more than it fixes.
}

struct SolveOutcome {
    w: Vec<f64>,
    b: f64,
    gap: f64,
    passes: usize,
}

fn solve_pairs(active: &ActiveSet, params: &SvmParams, a: &mut [f64]) -> SolveOutcome {
    let n = active.len();
    let mut w = weight_vector(active, a);
    let mut work: Vec<usize> = (0..n).collect();
    let budget = params.max_passes.saturating_mul(n).max(1);
    let check_every = n.min(1000).max(1);

    let mut updates = 0usize;
    let mut since_check = 0usize;
    let mut best = full_check(active, a, &mut w);
    if best.converged(params.tol) {
        return SolveOutcome {
            w,
            b: best.b,
            gap: best.rel_gap,
            passes: 0,
        };
    }

    loop {
        let picked = select_pair(active, a, &w, &work);
        let stalled = match picked {
            Some((i, j, violation)) if violation >= 1e-12 => {
                apply_pair_update(active, a, &mut w, i, j);
                updates += 1;
                since_check += 1;
                false
            }
            _ => true,
        };

        if stalled || since_check >= check_every || updates >= budget {
            since_check = 0;
            best = full_check(active, a, &mut w);
            if best.converged(params.tol) || updates >= budget {
                break;
            }
            if stalled {
                if work.len() == n {
                    // No violating pair anywhere: the dual cannot move.
                    break;
                }
                work = (0..n).collect();
            } else {
                shrink(active, a, &w, &best, &mut work);
            }
        }
    }

    SolveOutcome {
        w,
        b: best.b,
        gap: best.rel_gap,
        passes: updates.div_ceil(n),
    }
}

fn weight_vector(active: &ActiveSet, a: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; active.dim];
    for k in 0..active.len() {
        let coeff = a[k] * active.y[k];
        if coeff != 0.0 {
            for (wv, xv) in w.iter_mut().zip(active.row(k)) {
                *wv += coeff * xv;
            }
        }
    }
    w
}

/// Membership in the "can increase" / "can decrease" index sets of the
/// pair-selection rule.
fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y < 0.0 && a < c) || (y > 0.0 && a > 0.0)
}

/// Scans the working set for the maximal violating pair. Returns the pair
/// and its violation `m - M`, where each side's score is the bias the
/// sample "wants" (`y_t - w . x_t`).
fn select_pair(
    active: &ActiveSet,
    a: &[f64],
    w: &[f64],
    work: &[usize],
) -> Option<(usize, usize, f64)> {
    let mut best_up: Option<(usize, f64)> = None;
    let mut best_low: Option<(usize, f64)> = None;
    for &k in work {
        let ib = active.y[k] - dot(w, active.row(k));
        if in_up(active.y[k], a[k], active.c[k]) && best_up.map_or(true, |(_, v)| ib > v) {
            best_up = Some((k, ib));
        }
        if in_low(active.y[k], a[k], active.c[k]) && best_low.map_or(true, |(_, v)| ib < v) {
            best_low = Some((k, ib));
        }
    }
    match (best_up, best_low) {
        (Some((i, m)), Some((j, mm))) => Some((i, j, m - mm)),
        _ => None,
    }
}

/// Exact minimization of the dual restricted to the chosen pair, moving
/// along the direction that keeps the equality constraint satisfied.
fn apply_pair_update(active: &ActiveSet, a: &mut [f64], w: &mut [f64], i: usize, j: usize) {
    let (yi, yj) = (active.y[i], active.y[j]);
    let kij = dot(active.row(i), active.row(j));
    let curvature = (active.norms[i] + active.norms[j] - 2.0 * kij).max(1e-12);
    let ib_i = yi - dot(w, active.row(i));
    let ib_j = yj - dot(w, active.row(j));
    let mut d = (ib_i - ib_j) / curvature;
    let cap_i = if yi > 0.0 { active.c[i] - a[i] } else { a[i] };
    let cap_j = if yj > 0.0 { a[j] } else { active.c[j] - a[j] };
    d = d.min(cap_i).min(cap_j);
    if d <= 0.0 {
        return;
    }
    a[i] = (a[i] + yi * d).clamp(0.0, active.c[i]);
    a[j] = (a[j] - yj * d).clamp(0.0, active.c[j]);
    let (ri, rj) = (i * active.dim, j * active.dim);
    for k in 0..active.dim {
        w[k] += d * (active.x[ri + k] - active.x[rj + k]);
    }
}

struct CheckPoint {
    b: f64,
    rel_gap: f64,
    /// Bias implied by the best unshrunk-up candidate, for shrinking.
    m: f64,
    /// Same for the low side.
    low: f64,
}

impl CheckPoint {
    fn converged(&self, tol: f64) -> bool {
        self.rel_gap <= tol
    }
}

/// Recomputes `w` from the duals (killing incremental drift), finds the
/// exact bias, and measures the duality gap over the whole active set.
fn full_check(active: &ActiveSet, a: &[f64], w: &mut Vec<f64>) -> CheckPoint {
    *w = weight_vector(active, a);
    let n = active.len();
    let mut margins = Vec::with_capacity(n);
    for k in 0..n {
        margins.push(dot(w, active.row(k)));
    }
    let b = optimal_bias(&margins, &active.y, &active.c);

    let w_sq = dot(w, w);
    let mut loss = 0.0;
    let mut dual_lin = 0.0;
    let mut m = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for k in 0..n {
        let y = active.y[k];
        loss += active.c[k] * (1.0 - y * (margins[k] + b)).max(0.0);
        dual_lin += a[k];
        let ib = y - margins[k];
        if in_up(y, a[k], active.c[k]) {
            m = m.max(ib);
        }
        if in_low(y, a[k], active.c[k]) {
            low = low.min(ib);
        }
    }
    let primal = 0.5 * w_sq + loss;
    let dual = dual_lin - 0.5 * w_sq;
    let rel_gap = (primal - dual) / primal.abs().max(1.0);
    CheckPoint { b, rel_gap, m, low }
}

fn shrink(active: &ActiveSet, a: &[f64], w: &[f64], cp: &CheckPoint, work: &mut Vec<usize>) {
    if !cp.m.is_finite() || !cp.low.is_finite() {
        return;
    }
    let margin = (0.1 * (cp.m - cp.low)).max(1e-9);
    work.retain(|&k| {
        let y = active.y[k];
        let up = in_up(y, a[k], active.c[k]);
        let lo = in_low(y, a[k], active.c[k]);
        if up && lo {
            return true; // free variable, always kept
        }
        let ib = y - dot(w, active.row(k));
        if up {
            ib >= cp.low - margin
        } else if lo {
            ib <= cp.m + margin
        } else {
            false // zero-width box, nothing to optimize
        }
    });
    if work.len() < 2 {
        *work = (0..active.len()).collect();
    }
}

/// Exact 1-D minimizer of `sum_i c_i * max(0, 1 - y_i (m_i + b))` over
/// `b`. The function is convex piecewise linear; sweeping breakpoints in
/// order finds where the slope crosses zero. On a flat optimal interval
/// the midpoint is returned, which keeps symmetric toy problems at the
/// natural centered bias.
fn optimal_bias(margins: &[f64], y: &[f64], c: &[f64]) -> f64 {
    let mut events: Vec<(f64, f64)> = margins
        .iter()
        .zip(y)
        .zip(c)
        .map(|((&m, &yi), &ci)| (yi - m, ci))
        .collect();
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite breakpoints"));
    let mut slope: f64 = -y
        .iter()
        .zip(c)
        .filter(|(yi, _)| **yi > 0.0)
        .map(|(_, ci)| ci)
        .sum::<f64>();
    for (k, &(beta, ck)) in events.iter().enumerate() {
        slope += ck;
        if slope > 0.0 {
            return beta;
        }
        if slope == 0.0 {
            let next = events.get(k + 1).map(|&(nb, _)| nb).unwrap_or(beta);
            return 0.5 * (beta + next);
        }
    }
    // Unreachable with both classes present; a safe default otherwise.
    events.last().map(|&(beta, _)| beta).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(features: Vec<f64>, label: Label, cost: f64) -> WeightedSample {
        WeightedSample::new(features, label, cost)
    }

    #[test]
    fn hinge_matches_definition() {
        assert_eq!(hinge_loss(Label::Positive, 1.0), 0.0);
        assert_eq!(hinge_loss(Label::Positive, 0.0), 1.0);
        assert_abs_diff_eq!(hinge_loss(Label::Negative, 0.3), 1.3, epsilon = 1e-15);
        assert_eq!(hinge_loss(Label::Negative, -2.0), 0.0);
    }

    #[test]
    fn separable_pair_recovers_unit_margin() {
        let samples = vec![
            sample(vec![1.0], Label::Positive, 10.0),
            sample(vec![-1.0], Label::Negative, 10.0),
        ];
        let sol = train_weighted_svm(&samples, 1e-8, 1000).unwrap();
        assert_abs_diff_eq!(sol.model.w[0], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(sol.model.b, 0.0, epsilon = 1e-3);
        assert!(!sol.degenerate);
        assert!(sol.duality_gap <= 1e-8);
    }

    #[test]
    fn zero_cost_samples_change_nothing() {
        let base = vec![
            sample(vec![0.9, 0.1], Label::Positive, 0.5),
            sample(vec![0.2, 0.8], Label::Negative, 0.5),
            sample(vec![0.4, 0.3], Label::Positive, 2.0),
            sample(vec![0.1, 0.2], Label::Negative, 1.0),
        ];
        let mut padded = base.clone();
        padded.insert(1, sample(vec![0.99, 0.99], Label::Positive, 0.0));
        padded.push(sample(vec![0.0, 0.0], Label::Negative, 0.0));
        let a = train_weighted_svm(&base, 1e-8, 1000).unwrap();
        let b = train_weighted_svm(&padded, 1e-8, 1000).unwrap();
        assert_eq!(a.model.w, b.model.w, "identical sweep, bit-identical w");
        assert_eq!(a.model.b, b.model.b);
        assert_eq!(b.alphas[1], 0.0);
        assert_eq!(b.alphas[5], 0.0);
    }

    #[test]
    fn one_class_active_set_degenerates() {
        let samples = vec![
            sample(vec![0.3], Label::Positive, 1.0),
            sample(vec![0.6], Label::Positive, 2.0),
            sample(vec![0.9], Label::Negative, 0.0),
        ];
        let sol = train_weighted_svm(&samples, 1e-6, 100).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.model.w, vec![0.0]);
        assert_eq!(sol.model.b, 1.0);

        let flipped: Vec<_> = samples
            .iter()
            .map(|s| sample(s.features.clone(), s.label.flipped(), s.cost))
            .collect();
        let sol = train_weighted_svm(&flipped, 1e-6, 100).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.model.b, -1.0);
    }

    #[test]
    fn all_zero_costs_error() {
        let samples = vec![
            sample(vec![0.3], Label::Positive, 0.0),
            sample(vec![0.6], Label::Negative, 0.0),
        ];
        assert!(matches!(
            train_weighted_svm(&samples, 1e-6, 100),
            Err(Error::NoActiveSamples)
        ));
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let samples = vec![
            sample(vec![0.3, 0.1], Label::Positive, 1.0),
            sample(vec![0.6], Label::Negative, 1.0),
        ];
        assert!(matches!(
            train_weighted_svm(&samples, 1e-6, 100),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dual_variables_stay_in_their_boxes() {
        let mut rng_state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            // xorshift is plenty for test fixtures
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..25 {
            let n = 3 + (next() * 20.0) as usize;
            let dim = 1 + (next() * 4.0) as usize;
            let samples: Vec<WeightedSample> = (0..n)
                .map(|k| {
                    let feats: Vec<f64> = (0..dim).map(|_| next()).collect();
                    let label = if k % 2 == 0 {
                        Label::Positive
                    } else {
                        Label::Negative
                    };
                    sample(feats, label, 0.05 + next())
                })
                .collect();
            let sol = train_weighted_svm(&samples, 1e-6, 1000).unwrap();
            for (alpha, s) in sol.alphas.iter().zip(&samples) {
                assert!(
                    *alpha >= -1e-12 && *alpha <= s.cost + 1e-12,
                    "alpha {alpha} outside [0, {}]",
                    s.cost
                );
            }
            let feas: f64 = sol
                .alphas
                .iter()
                .zip(&samples)
                .map(|(a, s)| a * s.label.sign())
                .sum();
            assert!(feas.abs() < 1e-9, "equality constraint violated: {feas}");
        }
    }

    #[test]
    fn symmetric_overlap_centers_bias() {
        // Both classes at the origin with equal cost: w must vanish and
        // the flat bias interval [-1, 1] resolves to its midpoint.
        let samples = vec![
            sample(vec![0.0, 0.0], Label::Positive, 1.0),
            sample(vec![0.0, 0.0], Label::Negative, 1.0),
        ];
        let sol = train_weighted_svm(&samples, 1e-8, 1000).unwrap();
        assert_eq!(sol.model.w, vec![0.0, 0.0]);
        assert_abs_diff_eq!(sol.model.b, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn primal_objective_counts_weighted_violations() {
        let samples = vec![
            sample(vec![0.0], Label::Positive, 2.0),
            sample(vec![0.0], Label::Negative, 0.5),
            sample(vec![1.0], Label::Positive, 0.0),
        ];
        let model = LinearModel::new(vec![3.0], 0.0);
        // 0.5 * 9 + 2 * max(0, 1 - 0) + 0.5 * max(0, 1 + 0) + nothing
        let obj = primal_objective(&samples, &model).unwrap();
        assert_abs_diff_eq!(obj, 4.5 + 2.0 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn warm_start_from_stale_duals_is_safe() {
        let samples = vec![
            sample(vec![0.9, 0.2], Label::Positive, 0.7),
            sample(vec![0.1, 0.8], Label::Negative, 0.7),
            sample(vec![0.6, 0.5], Label::Positive, 0.3),
        ];
        let cold = train_weighted_svm(&samples, 1e-10, 2000).unwrap();
        // Deliberately infeasible garbage to exercise clamp + repair.
        let mut stale = vec![5.0, 0.0, 123.0];
        let warm =
            train_weighted_svm_warm(&samples, &SvmParams { tol: 1e-10, max_passes: 2000 }, &mut stale)
                .unwrap();
        let p_cold = primal_objective(&samples, &cold.model).unwrap();
        let p_warm = primal_objective(&samples, &warm.model).unwrap();
        assert_abs_diff_eq!(p_cold, p_warm, epsilon = 1e-8);
    }
}
