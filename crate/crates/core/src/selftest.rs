//! Fast built-in sanity checks, exposed through the CLI `selftest` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{DriftPlusPenalty, PowerController};
use crate::environment::{BatteryState, ChannelProcess, EnergyProcess, StateGenerator, Truncation};
use crate::projection::{
    kkt_residual, project_capped_simplex, project_nonpositive_shift, qp_oracle,
};
use crate::types::{derive_algorithm_params, derive_params, PowerVector, SystemState};
use crate::utility::{water_filling, LogUtility, Utility};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-5.0..10.0)).collect()
}

/// Trial counts for [`projection_suite`].
#[derive(Debug, Clone)]
pub struct ProjectionSuite {
    pub seed: u64,
    /// Random inputs per dimension for the exact-projection properties.
    pub trials: usize,
    pub dims: Vec<usize>,
    /// Random inputs per dimension for the grid-oracle comparison.
    pub oracle_trials: usize,
    pub oracle_dims: Vec<usize>,
    pub oracle_resolution: f64,
    pub oracle_tolerance: f64,
}

impl Default for ProjectionSuite {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 10_000,
            dims: vec![1, 2, 5, 10],
            oracle_trials: 1_000,
            oracle_dims: vec![2, 3],
            oracle_resolution: 1e-3,
            oracle_tolerance: 2e-3,
        }
    }
}

pub fn run_all() -> Vec<CheckResult> {
    let mut out = vec![recommended_capacity()];
    out.extend(projection_suite(&ProjectionSuite::default()));
    out.push(water_filling_optimality());
    out.push(controller_invariants());
    out
}

fn recommended_capacity() -> CheckResult {
    let got = derive_params(2, 5.0, 3.0, &[4.0, 4.0])
        .and_then(|pp| derive_algorithm_params(&pp, 40.0, 1))
        .map(|ap| ap.recommended_capacity);
    match got {
        Ok(c) => check(
            "recommended capacity",
            c == 685.0,
            format!("{c} (expected 685)"),
        ),
        Err(e) => check("recommended capacity", false, e.to_string()),
    }
}

/// Property checks for the capped-simplex projection: idempotence,
/// non-expansiveness, KKT residual, the nonpositive-shift closed form, and
/// agreement with the grid oracle.
pub fn projection_suite(cfg: &ProjectionSuite) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failures = [0usize; 4];
    let mut worst = [0.0f64; 4];
    let mut errors = 0usize;
    for &n in &cfg.dims {
        for _ in 0..cfg.trials {
            let cap = rng.random_range(0.0..6.0);
            let x = random_point(&mut rng, n);
            let y = random_point(&mut rng, n);
            let (Ok(px), Ok(py)) = (
                project_capped_simplex(&x, cap),
                project_capped_simplex(&y, cap),
            ) else {
                errors += 1;
                continue;
            };
            let idem = project_capped_simplex(px.as_slice(), cap)
                .map(|ppx| dist(ppx.as_slice(), px.as_slice()))
                .unwrap_or(f64::INFINITY);
            let expansion = dist(px.as_slice(), py.as_slice()) - dist(&x, &y);
            let kkt = kkt_residual(&x, px.as_slice(), cap);

            let prev: Vec<f64> = {
                let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let scale = if total > cap { cap / total } else { 1.0 };
                raw.iter().map(|v| v * scale).collect()
            };
            let shift: Vec<f64> = (0..n).map(|_| -rng.random_range(0.0..2.0)).collect();
            let moved: Vec<f64> = prev.iter().zip(&shift).map(|(p, s)| p + s).collect();
            let closed = PowerVector::new(prev)
                .and_then(|p| project_nonpositive_shift(&p, &shift))
                .and_then(|fast| {
                    project_capped_simplex(&moved, cap)
                        .map(|full| dist(fast.as_slice(), full.as_slice()))
                })
                .unwrap_or(f64::INFINITY);

            for (k, (v, tol)) in [
                (idem, 1e-12),
                (expansion, 1e-12),
                (kkt, 1e-9),
                (closed, 1e-12),
            ]
            .into_iter()
            .enumerate()
            {
                worst[k] = worst[k].max(v);
                failures[k] += usize::from(v.is_nan() || v > tol);
            }
        }
    }
    let total = cfg.trials * cfg.dims.len();
    let names = [
        "projection idempotence",
        "projection non-expansiveness",
        "projection KKT residual",
        "nonpositive shift closed form",
    ];
    let mut out: Vec<CheckResult> = names
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            check(
                name,
                failures[k] == 0 && errors == 0,
                format!(
                    "{} of {total} failed, worst {:.1e}",
                    failures[k] + errors,
                    worst[k]
                ),
            )
        })
        .collect();

    for &n in &cfg.oracle_dims {
        let mut worst = 0.0f64;
        let mut failed = 0usize;
        for _ in 0..cfg.oracle_trials {
            let x = random_point(&mut rng, n);
            let cap = rng.random_range(0.5..5.0);
            let d = project_capped_simplex(&x, cap)
                .and_then(|p| {
                    qp_oracle(&x, cap, cfg.oracle_resolution)
                        .map(|q| dist(p.as_slice(), q.as_slice()))
                })
                .unwrap_or(f64::INFINITY);
            worst = worst.max(d);
            failed += usize::from(d.is_nan() || d > cfg.oracle_tolerance);
        }
        out.push(check(
            &format!("grid oracle agreement n={n}"),
            failed == 0,
            format!(
                "{failed} of {} failed, worst distance {worst:.1e}",
                cfg.oracle_trials
            ),
        ));
    }
    out
}

fn water_filling_optimality() -> CheckResult {
    let u = LogUtility;
    let s = SystemState::new(0.0, vec![0.45, 1.2]);
    let p = water_filling(&s.channel, 5.0);
    let best = u.value(p.as_slice(), &s);
    let mut grid_best = f64::MIN;
    for i in 0..=5000 {
        let p1 = 5.0 * i as f64 / 5000.0;
        grid_best = grid_best.max(u.value(&[p1, 5.0 - p1], &s));
    }
    check(
        "water-filling optimality",
        best >= grid_best - 1e-9,
        format!("water-filling {best:.6}, grid {grid_best:.6}"),
    )
}

fn controller_invariants() -> CheckResult {
    let name = "controller invariants";
    let energy = EnergyProcess::Uniform { lo: 0.0, hi: 3.0 };
    let channel = ChannelProcess::IidTruncatedRayleigh {
        sigma: vec![0.5, 1.0],
        lo: 0.0,
        hi: 4.0,
        truncation: Truncation::Condition,
    };
    let setup = derive_params(2, 5.0, 3.0, &[4.0, 4.0]).and_then(|pp| {
        let ap = derive_algorithm_params(&pp, 10.0, 1)?;
        let gen = StateGenerator::new(energy, channel, 7, 0)?;
        let battery = BatteryState::new(ap.recommended_capacity, ap.recommended_capacity)?;
        Ok((pp, ap, gen, battery))
    });
    let (pp, ap, mut gen, mut battery) = match setup {
        Ok(s) => s,
        Err(e) => return check(name, false, e.to_string()),
    };
    let e_max = battery.capacity;
    let mut ctl = DriftPlusPenalty::new(pp.clone(), ap.clone(), LogUtility);
    let mut worst_identity = 0.0f64;
    let mut min_q = 0.0f64;
    for _ in 0..2000 {
        let p = ctl.current_power().clone();
        if p.total() > pp.p_max + 1e-9 {
            return check(
                name,
                false,
                format!("power total {} above p_max", p.total()),
            );
        }
        let state = gen.next_state();
        battery = match battery.step(&p, state.energy_arrival) {
            Ok(b) => b,
            Err(e) => return check(name, false, e.to_string()),
        };
        if let Err(e) = ctl.end_of_slot(&state, &p, &battery) {
            return check(name, false, e.to_string());
        }
        let q = ctl.queue();
        min_q = min_q.min(q);
        worst_identity = worst_identity.max((battery.level - (q + e_max)).abs());
    }
    check(
        name,
        min_q >= -ap.q_lower - 1e-9 && worst_identity < 1e-9,
        format!(
            "min Q {min_q:.3} (bound {}), identity error {worst_identity:.1e}",
            -ap.q_lower
        ),
    )
}
