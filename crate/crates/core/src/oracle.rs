//! Genie upper bound and hindsight comparator.
//!
//! Both maximize an empirical average utility `(1/N) sum_k U(p; state_k)` over
//! `{p >= 0, sum(p) <= min(p_max, mean_energy)}` by projected gradient ascent.
//! Sample sums are reduced in fixed-size chunks and combined in chunk order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::projection::project_capped_simplex;
use crate::types::{PowerVector, SystemState};
use crate::utility::Utility;

const CHUNK: usize = 8192;

#[derive(Debug, Clone)]
pub struct AscentOptions {
    pub max_iters: usize,
    /// Stop once the gradient mapping norm drops below this.
    pub tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AscentSolution {
    pub power: PowerVector,
    /// Empirical average utility at `power`.
    pub value: f64,
    pub gradient_mapping_norm: f64,
    pub iterations: usize,
}

/// Sampled deterministic upper-bound problem.
#[derive(Debug, Clone)]
pub struct OracleProblem {
    pub states: Vec<SystemState>,
    /// Mean harvested energy per slot (analytic when the process provides it).
    pub mean_energy: f64,
    pub p_max: f64,
    /// Largest value each channel component can take.
    pub channel_support_max: Vec<f64>,
}

impl OracleProblem {
    pub fn feasible_cap(&self) -> f64 {
        self.p_max.min(self.mean_energy)
    }
}

/// Solves the sample-average upper-bound program, returning `p*` and `U*`.
pub fn solve_upper_bound<U: Utility + ?Sized>(
    problem: &OracleProblem,
    utility: &U,
    opts: &AscentOptions,
) -> Result<AscentSolution> {
    if problem.states.is_empty() {
        return Err(Error::InvalidParameter(
            "oracle needs at least one sample".into(),
        ));
    }
    let cap = problem.feasible_cap();
    if cap.is_nan() || cap <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "feasible cap min(p_max, mean energy) must be positive, got {cap}"
        )));
    }
    maximize_average(
        utility,
        &problem.states,
        &problem.channel_support_max,
        cap,
        opts,
    )
}

/// Best fixed power vector in hindsight for a realized trace, restricted to
/// `sum(q) <= min(p_max, mean_energy)`.
pub fn best_fixed_hindsight<U: Utility + ?Sized>(
    trace: &[SystemState],
    mean_energy: f64,
    p_max: f64,
    channel_support_max: &[f64],
    utility: &U,
    opts: &AscentOptions,
) -> Result<AscentSolution> {
    if trace.is_empty() {
        return Err(Error::InvalidParameter("hindsight trace is empty".into()));
    }
    maximize_average(
        utility,
        trace,
        channel_support_max,
        p_max.min(mean_energy),
        opts,
    )
}

/// Average utility of a fixed power vector over a set of states.
pub fn average_utility<U: Utility + ?Sized>(
    utility: &U,
    power: &[f64],
    states: &[SystemState],
) -> f64 {
    let partial: Vec<f64> = states
        .par_chunks(CHUNK)
        .map(|chunk| chunk.iter().map(|s| utility.value(power, s)).sum::<f64>())
        .collect();
    partial.iter().sum::<f64>() / states.len() as f64
}

fn average_gradient<U: Utility + ?Sized>(
    utility: &U,
    power: &[f64],
    states: &[SystemState],
) -> Vec<f64> {
    let n = power.len();
    let partial: Vec<Vec<f64>> = states
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            for s in chunk {
                utility.accumulate_gradient(power, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for part in partial {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    let scale = 1.0 / states.len() as f64;
    total.iter_mut().for_each(|t| *t *= scale);
    total
}

/// Projected gradient ascent on the empirical average of `utility` over
/// `states`, constrained to the capped simplex with the given cap.
///
/// A trial step `h` from `p` to `q` is accepted when the secant curvature
/// `<grad(p) - grad(q), q - p>` is at most `|q - p|^2 / h`; otherwise `h` is
/// halved. The step doubles after every accepted iteration. The test uses
/// gradient differences rather than objective values, which lose all precision
/// close to the optimum. With `L` the utility's curvature bound the step never
/// drops below `1/L`, and convergence is measured by the gradient mapping at
/// the fixed step `1/L`. Without a bound the reference step is 1.
pub fn maximize_average<U: Utility + ?Sized>(
    utility: &U,
    states: &[SystemState],
    channel_support_max: &[f64],
    cap: f64,
    opts: &AscentOptions,
) -> Result<AscentSolution> {
    let n = channel_support_max.len();
    if states.iter().any(|s| s.dim() != n) {
        return Err(Error::InvalidParameter(
            "state dimension does not match channel support".into(),
        ));
    }
    if cap <= 0.0 {
        let power = PowerVector::zeros(n);
        let value = average_utility(utility, power.as_slice(), states);
        return Ok(AscentSolution {
            power,
            value,
            gradient_mapping_norm: 0.0,
            iterations: 0,
        });
    }
    let safe_step = utility
        .curvature_bound(channel_support_max)
        .filter(|&l| l > 0.0)
        .map(|l| 1.0 / l);
    let ref_step = safe_step.unwrap_or(1.0);
    let min_step = safe_step.unwrap_or(0.0);
    let mut step = ref_step;
    let mut p = PowerVector::from_vec_unchecked(vec![cap / n as f64; n]);
    let mut grad = average_gradient(utility, p.as_slice(), states);
    let mut mapping_norm = f64::INFINITY;

    let ascend = |p: &PowerVector, grad: &[f64], step: f64| -> Result<PowerVector> {
        let target: Vec<f64> = p
            .as_slice()
            .iter()
            .zip(grad)
            .map(|(x, g)| x + step * g)
            .collect();
        project_capped_simplex(&target, cap)
    };

    for iter in 0..opts.max_iters {
        let reference = ascend(&p, &grad, ref_step)?;
        mapping_norm = dist(reference.as_slice(), p.as_slice()) / ref_step;
        if mapping_norm < opts.tol {
            let value = average_utility(utility, p.as_slice(), states);
            return Ok(AscentSolution {
                power: p,
                value,
                gradient_mapping_norm: mapping_norm,
                iterations: iter,
            });
        }
        loop {
            let next = ascend(&p, &grad, step)?;
            let next_grad = average_gradient(utility, next.as_slice(), states);
            let mut move_sq = 0.0;
            let mut curvature = 0.0;
            for i in 0..n {
                let d = next[i] - p[i];
                move_sq += d * d;
                curvature += (grad[i] - next_grad[i]) * d;
            }
            if curvature * step <= move_sq || step <= min_step {
                p = next;
                grad = next_grad;
                step *= 2.0;
                break;
            }
            step = (step * 0.5).max(min_step);
            if step < 1e-16 {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    gradient_mapping_norm: mapping_norm,
                    last_iterate: p.into_inner(),
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        gradient_mapping_norm: mapping_norm,
        last_iterate: p.into_inner(),
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}
