//! Bundled experiment suites, one per figure.
//!
//! Figures 1-4 use i.i.d. states (uniform energy on `[0, 3]`, truncated
//! Rayleigh channels with `sigma = 0.5` and `sigma = 1` on `[0, 4]`); figures
//! 5-8 repeat them with a two-state Markov channel.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{
    BatterySpec, ControllerSpec, EnvironmentSpec, ExperimentConfig, OutputSpec, ProblemSpec,
    SCHEMA_VERSION,
};
use super::run::{run_experiment, AggregateRow, Summary};
use super::svg::{LineChart, Series};
use super::upper_bound_for;
use crate::controller::QueueFeed;
use crate::environment::{ChannelProcess, EnergyProcess, Truncation};
use crate::error::{Error, Result};

pub const FIGURE_SEED: u64 = 2018;

#[derive(Debug, Clone)]
pub struct FigureOptions {
    pub replications: u64,
    pub horizon: u64,
    /// Samples for the reference-line oracle; zero skips the reference line.
    pub oracle_samples: usize,
    pub master_seed: u64,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            replications: 200,
            horizon: 5000,
            oracle_samples: 1_000_000,
            master_seed: FIGURE_SEED,
        }
    }
}

pub fn iid_environment() -> EnvironmentSpec {
    EnvironmentSpec {
        energy: EnergyProcess::Uniform { lo: 0.0, hi: 3.0 },
        channel: ChannelProcess::IidTruncatedRayleigh {
            sigma: vec![0.5, 1.0],
            lo: 0.0,
            hi: 4.0,
            truncation: Truncation::Condition,
        },
    }
}

pub fn markov_environment() -> EnvironmentSpec {
    EnvironmentSpec {
        energy: EnergyProcess::Uniform { lo: 0.0, hi: 3.0 },
        channel: ChannelProcess::Markov {
            states: vec![vec![0.45, 1.2], vec![1.0, 0.2]],
            transition: vec![vec![1.0 / 15.0, 14.0 / 15.0], vec![2.0 / 3.0, 1.0 / 3.0]],
            initial_state: None,
        },
    }
}

/// Config template for the two-subband setup with `p_max = 5`.
pub fn base_config(
    name: &str,
    environment: EnvironmentSpec,
    controller: ControllerSpec,
    battery: BatterySpec,
    opts: &FigureOptions,
) -> ExperimentConfig {
    ExperimentConfig {
        schema: SCHEMA_VERSION,
        name: name.to_string(),
        master_seed: opts.master_seed,
        replications: opts.replications,
        horizon: opts.horizon,
        problem: ProblemSpec {
            p_max: 5.0,
            e_max: None,
            d_per_coord: None,
        },
        environment,
        controller,
        battery,
        scale_down_mode: QueueFeed::Issued,
        outputs: OutputSpec::default(),
        upper_bound: None,
        hindsight: false,
    }
}

#[derive(Debug, Clone)]
pub struct FigureSpec {
    pub id: u8,
    pub title: String,
    pub curves: Vec<(String, ExperimentConfig)>,
}

/// Curve configurations for figure `id` (1 to 8).
pub fn figure_spec(id: u8, opts: &FigureOptions) -> Result<FigureSpec> {
    let (markov, kind) = match id {
        1..=4 => (false, id),
        5..=8 => (true, id - 4),
        _ => return Err(Error::Config(format!("figure id must be 1..8, got {id}"))),
    };
    let env = || {
        if markov {
            markov_environment()
        } else {
            iid_environment()
        }
    };
    let system = if markov { "non-i.i.d." } else { "i.i.d." };
    let alg1 = |v: f64, t0: usize| ControllerSpec::Alg1 { v, t0 };
    let fixed = |capacity: f64| BatterySpec::Fixed {
        capacity,
        initial: 0.0,
    };
    let tag = format!("fig{id}");
    let (title, curves): (String, Vec<(String, ExperimentConfig)>) = match kind {
        1 => (
            format!("Algorithm 1 with E[0] = E_max = Q^l + p_max, {system} system"),
            [5.0, 10.0, 20.0, 40.0]
                .iter()
                .map(|&v| {
                    let label = format!("V={v}");
                    let cfg = base_config(
                        &format!("{tag}_{label}"),
                        env(),
                        alg1(v, 1),
                        BatterySpec::Theorem3,
                        opts,
                    );
                    (label, cfg)
                })
                .collect(),
        ),
        2 => (
            format!("Algorithm 1 with V=40 for different E_max, {system} system"),
            [10.0, 20.0, 50.0]
                .iter()
                .map(|&cap| {
                    let label = format!("E_max={cap}");
                    let cfg = base_config(
                        &format!("{tag}_{label}"),
                        env(),
                        alg1(40.0, 1),
                        fixed(cap),
                        opts,
                    );
                    (label, cfg)
                })
                .collect(),
        ),
        3 => (
            format!("Algorithm 1 with observation delay, {system} system"),
            [1usize, 5, 10]
                .iter()
                .map(|&t0| {
                    let label = format!("t0={t0}");
                    let cfg = base_config(
                        &format!("{tag}_{label}"),
                        env(),
                        alg1(40.0, t0),
                        fixed(20.0),
                        opts,
                    );
                    (label, cfg)
                })
                .collect(),
        ),
        _ => (
            format!("Algorithm 1 versus baselines, {system} system"),
            vec![
                (
                    "Algorithm 1".to_string(),
                    base_config(
                        &format!("{tag}_alg1"),
                        env(),
                        alg1(50.0, 1),
                        fixed(10.0),
                        opts,
                    ),
                ),
                (
                    "Baseline 1".to_string(),
                    base_config(
                        &format!("{tag}_baseline1"),
                        env(),
                        ControllerSpec::Baseline1 { gamma: 1.0 / 50.0 },
                        fixed(10.0),
                        opts,
                    ),
                ),
                (
                    "Baseline 2".to_string(),
                    base_config(
                        &format!("{tag}_baseline2"),
                        env(),
                        ControllerSpec::Baseline2,
                        fixed(10.0),
                        opts,
                    ),
                ),
            ],
        ),
    };
    Ok(FigureSpec { id, title, curves })
}

#[derive(Debug, Clone)]
pub struct FigureCurve {
    pub label: String,
    pub rows: Vec<AggregateRow>,
    pub summary: Summary,
}

#[derive(Debug, Clone)]
pub struct FigureResult {
    pub id: u8,
    pub curves: Vec<FigureCurve>,
    pub reference: Option<f64>,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

/// Runs every curve of figure `id`, writing `figure<id>.csv` and
/// `figure<id>.svg` into `outdir`.
pub fn run_figure_suite(id: u8, outdir: &Path, opts: &FigureOptions) -> Result<FigureResult> {
    let spec = figure_spec(id, opts)?;
    let reference = if opts.oracle_samples > 0 {
        let first = &spec.curves[0].1;
        Some(upper_bound_for(first, opts.oracle_samples)?.value)
    } else {
        None
    };
    let mut curves = Vec::with_capacity(spec.curves.len());
    for (label, mut cfg) in spec.curves {
        cfg.upper_bound = reference;
        let (rows, summary) = run_experiment(&cfg)?;
        curves.push(FigureCurve {
            label,
            rows,
            summary,
        });
    }

    std::fs::create_dir_all(outdir)?;
    let csv_path = outdir.join(format!("figure{id}.csv"));
    let svg_path = outdir.join(format!("figure{id}.svg"));
    let mut out = BufWriter::new(File::create(&csv_path)?);
    writeln!(
        out,
        "curve,slot,mean_avg_utility,stderr,mean_Q,mean_E,violations,scaled_count"
    )?;
    for c in &curves {
        for r in &c.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.label,
                r.slot,
                r.mean_avg_utility,
                r.stderr,
                r.mean_queue,
                r.mean_battery,
                r.violations,
                r.scaled_count
            )?;
        }
    }
    out.flush()?;

    let chart = LineChart {
        title: format!("Figure {id}: {}", spec.title),
        x_label: "slot t".into(),
        y_label: "running average of expected utility".into(),
        series: curves
            .iter()
            .map(|c| Series {
                label: c.label.clone(),
                points: c
                    .rows
                    .iter()
                    .map(|r| (r.slot as f64, r.mean_avg_utility))
                    .collect(),
            })
            .collect(),
        reference: reference.map(|u| ("U*".to_string(), u)),
    };
    std::fs::write(&svg_path, chart.render())?;
    Ok(FigureResult {
        id,
        curves,
        reference,
        csv_path,
        svg_path,
    })
}
