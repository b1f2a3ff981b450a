use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{BatterySpec, ControllerSpec, ExperimentConfig};
use crate::controller::{
    enforce_availability, DriftPlusPenalty, OutdatedArgmaxBaseline, PowerController,
    ProjectedGradientBaseline,
};
use crate::environment::{BatteryState, StateGenerator};
use crate::error::{Error, Result};
use crate::oracle::{best_fixed_hindsight, AscentOptions};
use crate::types::{SlotRecord, TOL};
use crate::utility::Utility;

/// Runs folded per parallel batch; bounds memory to a few traces at a time.
const BATCH: u64 = 32;

pub const CSV_HEADER: &str = "slot,mean_avg_utility,stderr,mean_Q,mean_E,violations,scaled_count";

/// Cross-replication statistics for one recorded slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub slot: u64,
    /// Mean over runs of the running average `(1/t) sum_{tau <= t} U`.
    pub mean_avg_utility: f64,
    pub stderr: f64,
    pub mean_queue: f64,
    pub mean_battery: f64,
    /// Runs whose battery left `[0, capacity]` at this slot.
    pub violations: u64,
    /// Runs whose allocation was scaled down at this slot.
    pub scaled_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub replications: u64,
    pub horizon: u64,
    pub final_mean_avg_utility: f64,
    pub final_stderr: f64,
    /// Smallest virtual queue value seen in any run.
    pub min_queue: Option<f64>,
    pub q_lower: Option<f64>,
    pub max_scaled_per_run: u64,
    pub total_scaled: u64,
    pub total_violations: u64,
    /// Largest `|E - (Q + E_max)|` over all slots (theorem3 runs with `t0 = 1`).
    pub max_identity_error: Option<f64>,
    pub upper_bound: Option<f64>,
    /// Lower envelope on the running average at the horizon, given `U*`.
    pub envelope: Option<f64>,
    /// Mean and standard error of the per-run hindsight benchmark.
    pub hindsight_mean: Option<f64>,
    pub hindsight_stderr: Option<f64>,
}

/// Lower bound `U* - V p_max^2/(2t) - B/(2Vt) - (D^2 + B)/(2V)` on the running
/// average expected utility at slot `t`.
pub fn performance_envelope(u_star: f64, v: f64, p_max: f64, b: f64, d_norm: f64, t: f64) -> f64 {
    u_star - v * p_max * p_max / (2.0 * t) - b / (2.0 * v * t) - (d_norm * d_norm + b) / (2.0 * v)
}

/// Per-run trace, reduced to the recorded slots.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub run_id: u64,
    pub slots: Vec<u64>,
    pub avg_utility: Vec<f64>,
    pub queue: Vec<f64>,
    pub battery: Vec<f64>,
    pub violations: Vec<bool>,
    pub scaled: Vec<bool>,
    pub min_queue: Option<f64>,
    pub scaled_total: u64,
    pub violations_total: u64,
    pub max_identity_error: Option<f64>,
    pub hindsight: Option<f64>,
}

fn build_controller(cfg: &ExperimentConfig) -> Result<Box<dyn PowerController>> {
    let pp = cfg.problem_params()?;
    let utility = cfg.utility();
    Ok(match &cfg.controller {
        ControllerSpec::Alg1 { .. } => {
            let ap = cfg.algorithm_params()?.expect("alg1 has parameters");
            Box::new(DriftPlusPenalty::new(pp, ap, utility).with_queue_feed(cfg.scale_down_mode))
        }
        ControllerSpec::Baseline1 { gamma } => Box::new(ProjectedGradientBaseline::new(
            pp.n, pp.p_max, *gamma, utility,
        )),
        ControllerSpec::Baseline2 => Box::new(OutdatedArgmaxBaseline::new(pp.n, pp.p_max, utility)),
    })
}

fn initial_battery(cfg: &ExperimentConfig) -> Result<BatteryState> {
    match &cfg.battery {
        BatterySpec::Theorem3 => {
            let cap = cfg
                .algorithm_params()?
                .ok_or_else(|| Error::Config("theorem3 battery requires alg1".into()))?
                .recommended_capacity;
            BatteryState::new(cap, cap)
        }
        BatterySpec::Fixed { capacity, initial } => BatteryState::new(*initial, *capacity),
    }
}

/// Simulates one replication. When `records` is given, every slot is appended
/// to it.
pub fn run_replication(
    cfg: &ExperimentConfig,
    run_id: u64,
    mut records: Option<&mut Vec<SlotRecord>>,
) -> Result<RunTrace> {
    let pp = cfg.problem_params()?;
    let ap = cfg.algorithm_params()?;
    let utility = cfg.utility();
    let theorem3 = matches!(cfg.battery, BatterySpec::Theorem3);
    let check_identity = theorem3 && ap.as_ref().is_some_and(|a| a.delay_t0 == 1);
    let stride = cfg.sample_stride();

    let mut generator = StateGenerator::new(
        cfg.environment.energy.clone(),
        cfg.environment.channel.clone(),
        cfg.master_seed,
        run_id,
    )?;
    let mut controller = build_controller(cfg)?;
    let mut battery = initial_battery(cfg)?;
    let capacity = battery.capacity;
    let fail = |slot: u64, what: String| Error::InvariantViolation { run_id, slot, what };

    let mut trace = RunTrace {
        run_id,
        slots: Vec::new(),
        avg_utility: Vec::new(),
        queue: Vec::new(),
        battery: Vec::new(),
        violations: Vec::new(),
        scaled: Vec::new(),
        min_queue: None,
        scaled_total: 0,
        violations_total: 0,
        max_identity_error: check_identity.then_some(0.0),
        hindsight: None,
    };
    let mut channel_trace = Vec::new();
    let mut cumulative = 0.0;

    for slot in 1..=cfg.horizon {
        let issued = controller.current_power().clone();
        let (applied, scaled) = if theorem3 {
            if issued.total() > battery.level + TOL {
                return Err(fail(
                    slot,
                    format!(
                        "energy availability fault: issued {} with {} stored",
                        issued.total(),
                        battery.level
                    ),
                ));
            }
            (issued, false)
        } else {
            enforce_availability(&issued, &battery)
        };
        let state = generator.next_state();
        let u = utility.value(applied.as_slice(), &state);
        cumulative += u;
        battery = battery
            .step(&applied, state.energy_arrival)
            .map_err(|e| fail(slot, e.to_string()))?;
        controller.end_of_slot(&state, &applied, &battery)?;

        let queue = controller.virtual_queue();
        if let Some(q) = queue {
            if q > 0.0 {
                return Err(fail(slot, format!("virtual queue is positive ({q})")));
            }
            let q_lower = ap.as_ref().map_or(f64::INFINITY, |a| a.q_lower);
            if q < -q_lower - TOL {
                return Err(fail(
                    slot,
                    format!("virtual queue {q} below -Q^l = {}", -q_lower),
                ));
            }
            trace.min_queue = Some(trace.min_queue.map_or(q, |m: f64| m.min(q)));
            if check_identity {
                let err = (battery.level - (q + capacity)).abs();
                if err > TOL {
                    return Err(fail(
                        slot,
                        format!(
                            "battery {} differs from Q + E_max = {}",
                            battery.level,
                            q + capacity
                        ),
                    ));
                }
                let m = trace.max_identity_error.get_or_insert(0.0);
                *m = m.max(err);
            }
        }
        let violated = !(battery.level >= 0.0 && battery.level <= capacity);
        trace.violations_total += violated as u64;
        trace.scaled_total += scaled as u64;

        if stride == 1 || slot == 1 || slot % stride == 0 || slot == cfg.horizon {
            trace.slots.push(slot);
            trace.avg_utility.push(cumulative / slot as f64);
            trace.queue.push(queue.unwrap_or(0.0));
            trace.battery.push(battery.level);
            trace.violations.push(violated);
            trace.scaled.push(scaled);
        }
        if cfg.hindsight {
            channel_trace.push(state.clone());
        }
        if let Some(rec) = records.as_deref_mut() {
            rec.push(SlotRecord {
                run_id,
                slot,
                power: applied,
                utility: u,
                virtual_queue: queue.unwrap_or(0.0),
                battery: battery.level,
                state,
                scaled_down: scaled,
            });
        }
    }

    if cfg.hindsight {
        let sol = best_fixed_hindsight(
            &channel_trace,
            cfg.mean_energy(),
            pp.p_max,
            &cfg.environment.channel.support_max(),
            &utility,
            &AscentOptions::default(),
        )?;
        trace.hindsight = Some(sol.value);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
        }
    }
}

/// Folds run traces into per-slot statistics strictly in `run_id` order,
/// whatever order the traces arrive in.
#[derive(Debug, Default)]
pub struct Aggregator {
    next_run: u64,
    waiting: BTreeMap<u64, RunTrace>,
    slots: Vec<u64>,
    utility: Vec<Welford>,
    queue_sum: Vec<f64>,
    battery_sum: Vec<f64>,
    violations: Vec<u64>,
    scaled: Vec<u64>,
    min_queue: Option<f64>,
    max_scaled_per_run: u64,
    total_scaled: u64,
    total_violations: u64,
    max_identity_error: Option<f64>,
    hindsight: Welford,
    any_hindsight: bool,
}

impl Aggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, trace: RunTrace) {
        self.waiting.insert(trace.run_id, trace);
        while let Some(trace) = self.waiting.remove(&self.next_run) {
            self.fold(trace);
            self.next_run += 1;
        }
    }

    fn fold(&mut self, t: RunTrace) {
        if self.slots.is_empty() {
            let k = t.slots.len();
            self.slots = t.slots.clone();
            self.utility = vec![Welford::default(); k];
            self.queue_sum = vec![0.0; k];
            self.battery_sum = vec![0.0; k];
            self.violations = vec![0; k];
            self.scaled = vec![0; k];
        }
        for i in 0..self.slots.len() {
            self.utility[i].push(t.avg_utility[i]);
            self.queue_sum[i] += t.queue[i];
            self.battery_sum[i] += t.battery[i];
            self.violations[i] += t.violations[i] as u64;
            self.scaled[i] += t.scaled[i] as u64;
        }
        if let Some(q) = t.min_queue {
            self.min_queue = Some(self.min_queue.map_or(q, |m: f64| m.min(q)));
        }
        if let Some(e) = t.max_identity_error {
            self.max_identity_error = Some(self.max_identity_error.map_or(e, |m: f64| m.max(e)));
        }
        self.max_scaled_per_run = self.max_scaled_per_run.max(t.scaled_total);
        self.total_scaled += t.scaled_total;
        self.total_violations += t.violations_total;
        if let Some(h) = t.hindsight {
            self.hindsight.push(h);
            self.any_hindsight = true;
        }
    }

    /// Number of runs folded so far.
    pub fn folded(&self) -> u64 {
        self.next_run
    }

    pub fn rows(&self) -> Vec<AggregateRow> {
        let r = self.next_run.max(1) as f64;
        (0..self.slots.len())
            .map(|i| AggregateRow {
                slot: self.slots[i],
                mean_avg_utility: self.utility[i].mean,
                stderr: self.utility[i].stderr(),
                mean_queue: self.queue_sum[i] / r,
                mean_battery: self.battery_sum[i] / r,
                violations: self.violations[i],
                scaled_count: self.scaled[i],
            })
            .collect()
    }
}

/// Runs every replication and returns per-slot aggregates plus a summary.
///
/// Runs execute in parallel batches but are folded in `run_id` order, so the
/// output depends only on the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<AggregateRow>, Summary)> {
    cfg.validate()?;
    let mut agg = Aggregator::new();
    let mut start = 0;
    while start < cfg.replications {
        let end = (start + BATCH).min(cfg.replications);
        let traces: Vec<RunTrace> = (start..end)
            .into_par_iter()
            .map(|run| run_replication(cfg, run, None))
            .collect::<Result<_>>()?;
        for t in traces {
            agg.add(t);
        }
        start = end;
    }
    let rows = agg.rows();
    let last = rows.last().expect("horizon >= 1");
    let pp = cfg.problem_params()?;
    let ap = cfg.algorithm_params()?;
    let envelope = match (cfg.upper_bound, cfg.v_param()) {
        (Some(u), Some(v)) => Some(performance_envelope(
            u,
            v,
            pp.p_max,
            pp.b_const,
            pp.d_norm,
            last.slot as f64,
        )),
        _ => None,
    };
    let summary = Summary {
        name: cfg.name.clone(),
        replications: cfg.replications,
        horizon: cfg.horizon,
        final_mean_avg_utility: last.mean_avg_utility,
        final_stderr: last.stderr,
        min_queue: agg.min_queue,
        q_lower: ap.map(|a| a.q_lower),
        max_scaled_per_run: agg.max_scaled_per_run,
        total_scaled: agg.total_scaled,
        total_violations: agg.total_violations,
        max_identity_error: agg.max_identity_error,
        upper_bound: cfg.upper_bound,
        envelope,
        hindsight_mean: agg.any_hindsight.then_some(agg.hindsight.mean),
        hindsight_stderr: agg.any_hindsight.then(|| agg.hindsight.stderr()),
    };
    Ok((rows, summary))
}

pub fn write_csv<W: Write>(mut out: W, rows: &[AggregateRow]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.slot,
            r.mean_avg_utility,
            r.stderr,
            r.mean_queue,
            r.mean_battery,
            r.violations,
            r.scaled_count
        )?;
    }
    Ok(())
}
