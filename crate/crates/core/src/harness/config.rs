use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::QueueFeed;
use crate::environment::{ChannelProcess, EnergyProcess};
use crate::error::{Error, Result};
use crate::types::{derive_algorithm_params, derive_params, AlgorithmParams, ProblemParams};
use crate::utility::{LogUtility, Utility};

pub const SCHEMA_VERSION: u32 = 1;

/// One experiment: `replications` seeded runs of `horizon` slots each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub name: String,
    pub master_seed: u64,
    pub replications: u64,
    pub horizon: u64,
    pub problem: ProblemSpec,
    pub environment: EnvironmentSpec,
    pub controller: ControllerSpec,
    pub battery: BatterySpec,
    #[serde(default)]
    pub scale_down_mode: QueueFeed,
    #[serde(default)]
    pub outputs: OutputSpec,
    /// Known upper bound `U*`, enables the performance envelope in the summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_bound: Option<f64>,
    /// Compute each run's best fixed allocation in hindsight.
    #[serde(default)]
    pub hindsight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub p_max: f64,
    /// Defaults to the energy process's support maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_max: Option<f64>,
    /// Overrides the subgradient bounds derived from the channel support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_per_coord: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub energy: EnergyProcess,
    pub channel: ChannelProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    Alg1 {
        v: f64,
        #[serde(default = "default_t0")]
        t0: usize,
    },
    Baseline1 {
        gamma: f64,
    },
    Baseline2,
}

fn default_t0() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BatterySpec {
    /// Capacity `Q^l + p_max`, starting full. No scaling is applied; any
    /// shortfall is an energy-availability fault.
    Theorem3,
    /// Given capacity and initial level; infeasible allocations are scaled down.
    Fixed { capacity: f64, initial: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_stride: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.replications < 1 || self.horizon < 1 {
            return Err(Error::Config(
                "replications and horizon must be at least 1".into(),
            ));
        }
        self.environment.energy.validate()?;
        self.environment.channel.validate()?;
        let pp = self.problem_params()?;
        if self.environment.energy.support_max() > pp.e_max + 1e-12 {
            return Err(Error::Config(format!(
                "energy process exceeds e_max = {}",
                pp.e_max
            )));
        }
        match &self.controller {
            ControllerSpec::Alg1 { .. } => {
                self.algorithm_params()?;
            }
            ControllerSpec::Baseline1 { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::Config(format!(
                        "gamma must be positive, got {gamma}"
                    )));
                }
            }
            ControllerSpec::Baseline2 => {}
        }
        match &self.battery {
            BatterySpec::Theorem3 => {
                if !matches!(self.controller, ControllerSpec::Alg1 { .. }) {
                    return Err(Error::Config(
                        "theorem3 battery sizing requires the alg1 controller".into(),
                    ));
                }
            }
            BatterySpec::Fixed { capacity, initial } => {
                if !(capacity.is_finite()
                    && *capacity >= 0.0
                    && *initial >= 0.0
                    && initial <= capacity)
                {
                    return Err(Error::Config(format!(
                        "fixed battery needs 0 <= initial <= capacity, got {initial} / {capacity}"
                    )));
                }
            }
        }
        if self.outputs.sample_stride == Some(0) {
            return Err(Error::Config("sample_stride must be positive".into()));
        }
        Ok(())
    }

    pub fn utility(&self) -> LogUtility {
        LogUtility
    }

    pub fn problem_params(&self) -> Result<ProblemParams> {
        let channel = &self.environment.channel;
        let n = channel.dim();
        let e_max = self
            .problem
            .e_max
            .unwrap_or_else(|| self.environment.energy.support_max());
        let d = match &self.problem.d_per_coord {
            Some(d) => d.clone(),
            None => self.utility().subgradient_bounds(&channel.support_max()),
        };
        derive_params(n, self.problem.p_max, e_max, &d)
    }

    /// Parameters of the alg1 controller; `None` for baselines.
    pub fn algorithm_params(&self) -> Result<Option<AlgorithmParams>> {
        match &self.controller {
            ControllerSpec::Alg1 { v, t0 } => {
                let pp = self.problem_params()?;
                Ok(Some(derive_algorithm_params(&pp, *v, *t0)?))
            }
            _ => Ok(None),
        }
    }

    /// `V` of the controller, if it has one.
    pub fn v_param(&self) -> Option<f64> {
        match &self.controller {
            ControllerSpec::Alg1 { v, .. } => Some(*v),
            _ => None,
        }
    }

    pub fn sample_stride(&self) -> u64 {
        self.outputs
            .sample_stride
            .unwrap_or(if self.horizon <= 10_000 { 1 } else { 10 })
    }

    pub fn mean_energy(&self) -> f64 {
        self.environment.energy.mean()
    }
}
