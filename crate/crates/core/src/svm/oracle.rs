//! Reference solver for the weighted SVM dual, deliberately built on a
//! different method than the production path: accelerated projected
//! gradient descent with an exact bisection projection onto the feasible
//! set (box intersected with the label hyperplane). Slow and simple, it
//! exists so tests can cross-check the pair solver against independently
//! computed optima. Capped at a small problem size on purpose.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::model::{dot, LinearModel};
use crate::svm::{SvmSolution, WeightedSample};

/// Largest problem the reference solver accepts.
pub const ORACLE_LIMIT: usize = 200;

const GAP_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 300_000;

/// Solves the same problem as [`crate::svm::train_weighted_svm`] by a
/// different route. Errors on problems larger than [`ORACLE_LIMIT`].
pub fn qp_oracle(samples: &[WeightedSample]) -> Result<SvmSolution> {
    if samples.len() > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            n: samples.len(),
            limit: ORACLE_LIMIT,
        });
    }
    let dim = super::validate_samples(samples)?;
    let idx: Vec<usize> = (0..samples.len())
        .filter(|&t| samples[t].cost > 0.0)
        .collect();
    if idx.is_empty() {
        return Err(Error::NoActiveSamples);
    }
    let pos = idx.iter().any(|&t| samples[t].label == Label::Positive);
    let neg = idx.iter().any(|&t| samples[t].label == Label::Negative);
    if !(pos && neg) {
        return Ok(SvmSolution {
            model: LinearModel::new(vec![0.0; dim], if pos { 1.0 } else { -1.0 }),
            alphas: vec![0.0; samples.len()],
            passes: 0,
            duality_gap: 0.0,
            degenerate: true,
        });
    }

    let n = idx.len();
    let x: Vec<&[f64]> = idx.iter().map(|&t| samples[t].features.as_slice()).collect();
    let y: Vec<f64> = idx.iter().map(|&t| samples[t].label.sign()).collect();
    let c: Vec<f64> = idx.iter().map(|&t| samples[t].cost).collect();

    // Gradient Lipschitz bound: max absolute row sum of the Gram matrix
    // (labels only flip signs, so they cannot enlarge it).
    let mut lip: f64 = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| dot(x[i], x[j]).abs()).sum();
        lip = lip.max(row);
    }
    let step = 1.0 / lip.max(1e-12);

    let mut alpha = vec![0.0; n];
    let mut momentum = alpha.clone();
    let mut t = 1.0f64;
    let mut f_prev = f64::INFINITY;
    let mut result: Option<(Vec<f64>, f64, f64)> = None;
    let mut iters = 0usize;

    for k in 0..MAX_ITERS {
        iters = k;
        // grad_i = y_i * (w(momentum) . x_i) - 1
        let w_m = weight_from(&momentum, &y, &x, dim);
        let mut target = Vec::with_capacity(n);
        for i in 0..n {
            let g = y[i] * dot(&w_m, x[i]) - 1.0;
            target.push(momentum[i] - step * g);
        }
        let next = project_feasible(&target, &y, &c);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let ratio = (t - 1.0) / t_next;
        let mut new_momentum = Vec::with_capacity(n);
        for i in 0..n {
            new_momentum.push(next[i] + ratio * (next[i] - alpha[i]));
        }

        let w_next = weight_from(&next, &y, &x, dim);
        let f_next = 0.5 * dot(&w_next, &w_next) - next.iter().sum::<f64>();
        if f_next > f_prev {
            // Momentum overshot: restart it from the current point.
            new_momentum.copy_from_slice(&next);
            t = 1.0;
        } else {
            t = t_next;
        }
        f_prev = f_next;
        alpha = next;
        momentum = new_momentum;

        if k % 100 == 0 || k + 1 == MAX_ITERS {
            let (b, gap) = certify(&alpha, &w_next, &y, &c, &x);
            if gap <= GAP_TOL {
                result = Some((w_next, b, gap));
                break;
            }
            result = Some((w_next, b, gap));
        }
    }

    let (w, b, gap) = result.expect("at least one certification ran");
    let mut alphas = vec![0.0; samples.len()];
    for (k, &t) in idx.iter().enumerate() {
        alphas[t] = alpha[k];
    }
    Ok(SvmSolution {
        model: LinearModel::new(w, b),
        alphas,
        passes: iters,
        duality_gap: gap,
        degenerate: false,
    })
}

fn weight_from(alpha: &[f64], y: &[f64], x: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    for i in 0..alpha.len() {
        let coeff = alpha[i] * y[i];
        if coeff != 0.0 {
            for (wv, xv) in w.iter_mut().zip(x[i]) {
                *wv += coeff * xv;
            }
        }
    }
    w
}

/// Euclidean projection onto `{a : 0 <= a <= c, sum_i y_i a_i = 0}` by
/// bisection on the hyperplane multiplier. The per-coordinate solution is
/// `clamp(v_i + mu * y_i, 0, c_i)` with the constraint sum monotone
/// nondecreasing in `mu`, so bisection converges unconditionally.
fn project_feasible(v: &[f64], y: &[f64], c: &[f64]) -> Vec<f64> {
    let reach = v
        .iter()
        .fold(0.0f64, |m, &vi| m.max(vi.abs()))
        + c.iter().fold(0.0f64, |m, &ci| m.max(ci))
        + 1.0;
    let mut lo = -reach;
    let mut hi = reach;
    let constraint = |mu: f64| -> f64 {
        v.iter()
            .zip(y)
            .zip(c)
            .map(|((&vi, &yi), &ci)| yi * (vi + mu * yi).clamp(0.0, ci))
            .sum()
    };
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if constraint(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    v.iter()
        .zip(y)
        .zip(c)
        .map(|((&vi, &yi), &ci)| (vi + mu * yi).clamp(0.0, ci))
        .collect()
}

/// Bias from the optimality window of the duals (midpoint of the bracket
/// formed by unbounded coordinates), then the relative duality gap at
/// that bias. Independent of the production solver's breakpoint sweep.
fn certify(alpha: &[f64], w: &[f64], y: &[f64], c: &[f64], x: &[&[f64]]) -> (f64, f64) {
    let n = alpha.len();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut margins = Vec::with_capacity(n);
    for i in 0..n {
        let m = dot(w, x[i]);
        margins.push(m);
        let ib = y[i] - m;
        let can_up = (y[i] > 0.0 && alpha[i] < c[i]) || (y[i] < 0.0 && alpha[i] > 0.0);
        let can_down = (y[i] < 0.0 && alpha[i] < c[i]) || (y[i] > 0.0 && alpha[i] > 0.0);
        if can_up {
            lo = lo.max(ib);
        }
        if can_down {
            hi = hi.min(ib);
        }
    }
    let b = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    };
    let w_sq = dot(w, w);
    let loss: f64 = (0..n)
        .map(|i| c[i] * (1.0 - y[i] * (margins[i] + b)).max(0.0))
        .sum();
    let primal = 0.5 * w_sq + loss;
    let dual = alpha.iter().sum::<f64>() - 0.5 * w_sq;
    (b, (primal - dual) / primal.abs().max(1.0))
}
