//! Experiment configuration, Monte Carlo runner, and figure output.

pub mod config;
pub mod figures;
pub mod run;
pub mod svg;

pub use config::{
    BatterySpec, ControllerSpec, EnvironmentSpec, ExperimentConfig, OutputSpec, ProblemSpec,
    SCHEMA_VERSION,
};
pub use figures::{figure_spec, run_figure_suite, FigureOptions, FigureResult, FigureSpec};
pub use run::{
    performance_envelope, run_experiment, run_replication, write_csv, AggregateRow, Aggregator,
    RunTrace, Summary, CSV_HEADER,
};
pub use svg::{LineChart, Series};

use crate::environment::StateGenerator;
use crate::error::Result;
use crate::oracle::{solve_upper_bound, AscentOptions, AscentSolution, OracleProblem};
use crate::types::SystemState;

/// Run id reserved for oracle sampling, disjoint from replication ids.
pub const ORACLE_RUN_ID: u64 = u64::MAX;

/// `n` consecutive states from the config's environment on the oracle stream.
pub fn sample_states(
    env: &EnvironmentSpec,
    master_seed: u64,
    n: usize,
) -> Result<Vec<SystemState>> {
    let mut gen = StateGenerator::new(
        env.energy.clone(),
        env.channel.clone(),
        master_seed,
        ORACLE_RUN_ID,
    )?;
    Ok((0..n).map(|_| gen.next_state()).collect())
}

/// Sample-average upper bound `U*` for the config's environment, using the
/// analytic mean energy.
pub fn upper_bound_for(cfg: &ExperimentConfig, samples: usize) -> Result<AscentSolution> {
    let problem = OracleProblem {
        states: sample_states(&cfg.environment, cfg.master_seed, samples)?,
        mean_energy: cfg.mean_energy(),
        p_max: cfg.problem.p_max,
        channel_support_max: cfg.environment.channel.support_max(),
    };
    solve_upper_bound(&problem, &cfg.utility(), &AscentOptions::default())
}
