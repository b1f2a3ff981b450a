//! Euclidean projection onto the capped simplex `{p >= 0, sum(p) <= cap}`.
//!
//! [`project_capped_simplex`] is the general O(n log n) sort-and-threshold
//! routine. [`project_nonpositive_shift`] is the closed form that applies when a
//! feasible point is moved by a componentwise nonpositive shift. [`qp_oracle`]
//! is a brute-force grid search kept for cross-checking the other two.

use crate::error::{Error, Result};
use crate::types::PowerVector;

/// Projects `point` onto `{p >= 0, sum(p) <= cap}`.
///
/// Rejects non-finite components and a negative or non-finite cap. A zero cap
/// yields the zero vector.
pub fn project_capped_simplex(point: &[f64], cap: f64) -> Result<PowerVector> {
    check_finite(point)?;
    if !(cap.is_finite() && cap >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "projection cap must be finite and nonnegative, got {cap}"
        )));
    }
    let clipped: Vec<f64> = point.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    // Feasible points that picked up rounding noise in a previous projection are
    // returned unchanged.
    if total <= cap + 1e-12 * cap.max(1.0) {
        return Ok(PowerVector::from_vec_unchecked(clipped));
    }
    let lambda = simplex_threshold(&clipped, cap);
    Ok(PowerVector::from_vec_unchecked(
        clipped.iter().map(|&v| (v - lambda).max(0.0)).collect(),
    ))
}

/// Threshold `lambda` such that `sum(max(y_i - lambda, 0)) = cap`, for `y >= 0`
/// with `sum(y) > cap`.
fn simplex_threshold(y: &[f64], cap: f64) -> f64 {
    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    // The largest component always stays in the support.
    let mut prefix = sorted[0];
    let mut lambda = sorted[0] - cap;
    for (k, &u) in sorted.iter().enumerate().skip(1) {
        prefix += u;
        let candidate = (prefix - cap) / (k + 1) as f64;
        if u - candidate > 0.0 {
            lambda = candidate;
        } else {
            break;
        }
    }
    lambda
}

/// Closed-form projection of `prev + shift` when `prev` is feasible and every
/// shift component is nonpositive: `max(prev_i + shift_i, 0)`.
pub fn project_nonpositive_shift(prev: &PowerVector, shift: &[f64]) -> Result<PowerVector> {
    if prev.len() != shift.len() {
        return Err(Error::Precondition(format!(
            "dimension mismatch: power has {} components, shift has {}",
            prev.len(),
            shift.len()
        )));
    }
    check_finite(shift)?;
    if let Some((i, &b)) = shift.iter().enumerate().find(|(_, &b)| b > 0.0) {
        return Err(Error::Precondition(format!(
            "shift component {i} is positive ({b}); use the general projection"
        )));
    }
    Ok(PowerVector::from_vec_unchecked(
        prev.as_slice()
            .iter()
            .zip(shift)
            .map(|(&p, &b)| (p + b).max(0.0))
            .collect(),
    ))
}

/// KKT residual of `projected` as the projection of `point` onto the capped
/// simplex. Zero (up to rounding) iff `projected` is the exact projection.
pub fn kkt_residual(point: &[f64], projected: &[f64], cap: f64) -> f64 {
    let total: f64 = projected.iter().sum();
    let primal = projected
        .iter()
        .map(|&p| (-p).max(0.0))
        .fold((total - cap).max(0.0), f64::max);
    let support: Vec<f64> = point
        .iter()
        .zip(projected)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&x, &p)| x - p)
        .collect();
    // Off the cap face the multiplier must vanish.
    let lambda = if total < cap - 1e-12 || support.is_empty() {
        0.0
    } else {
        support.iter().sum::<f64>() / support.len() as f64
    };
    let stationarity = point
        .iter()
        .zip(projected)
        .map(|(&x, &p)| (p - (x - lambda).max(0.0)).abs())
        .fold(0.0, f64::max);
    let complementarity = (lambda * (total - cap)).abs();
    primal + stationarity + complementarity + (-lambda).max(0.0)
}

/// Grid-search minimizer of `||p - point||^2` over `{p >= 0, sum(p) <= cap}`.
///
/// The first `n - 1` coordinates range over a grid whose step is at most
/// `resolution` and divides `cap`; the last coordinate is minimized exactly for
/// each grid point. A coarse pass is refined around its best cell. Only
/// `n <= 3` is supported.
pub fn qp_oracle(point: &[f64], cap: f64, resolution: f64) -> Result<PowerVector> {
    let n = point.len();
    if n == 0 || n > 3 {
        return Err(Error::Unsupported(format!(
            "grid oracle handles 1 to 3 dimensions, got {n}"
        )));
    }
    check_finite(point)?;
    if !cap.is_finite() || cap <= 0.0 || resolution.is_nan() || resolution <= 0.0 {
        return Err(Error::InvalidParameter(
            "grid oracle needs a positive cap and resolution".into(),
        ));
    }
    let steps = (cap / resolution).ceil().max(1.0) as i64;
    let h = cap / steps as f64;
    let factor = (steps / 200).max(1);
    let dims = n - 1;

    let objective = |idx: &[i64]| -> (f64, Vec<f64>) {
        let mut p: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        let used: f64 = p.iter().sum();
        let last = point[n - 1].clamp(0.0, (cap - used).max(0.0));
        p.push(last);
        let d = p.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
        (d, p)
    };

    let full = vec![(0, steps); dims];
    let coarse = grid_search(&full, factor, steps, &objective);
    let window: Vec<(i64, i64)> = coarse
        .iter()
        .map(|&i| ((i - 4 * factor).max(0), (i + 4 * factor).min(steps)))
        .collect();
    let fine = grid_search(&window, 1, steps, &objective);
    let (_, p) = objective(&fine);
    PowerVector::new(p)
}

/// Exhaustive search over integer index boxes with `sum(idx) <= budget`.
fn grid_search<F>(bounds: &[(i64, i64)], stride: i64, budget: i64, objective: &F) -> Vec<i64>
where
    F: Fn(&[i64]) -> (f64, Vec<f64>),
{
    let mut best = (f64::INFINITY, vec![0; bounds.len()]);
    let mut idx = vec![0i64; bounds.len()];
    visit(bounds, stride, budget, 0, &mut idx, objective, &mut best);
    best.1
}

fn visit<F>(
    bounds: &[(i64, i64)],
    stride: i64,
    budget: i64,
    depth: usize,
    idx: &mut Vec<i64>,
    objective: &F,
    best: &mut (f64, Vec<i64>),
) where
    F: Fn(&[i64]) -> (f64, Vec<f64>),
{
    if depth == bounds.len() {
        let (d, _) = objective(idx);
        if d < best.0 {
            *best = (d, idx.clone());
        }
        return;
    }
    let used: i64 = idx[..depth].iter().sum();
    let (lo, hi) = bounds[depth];
    let mut i = lo;
    while i <= hi.min(budget - used) {
        idx[depth] = i;
        visit(bounds, stride, budget, depth + 1, idx, objective, best);
        i += stride;
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        Some((index, &value)) => Err(Error::NonFinite { index, value }),
        None => Ok(()),
    }
}
