//! System-state generators and the physical battery.
//!
//! Every replication owns two ChaCha substreams, one for energy arrivals and
//! one for the channel, keyed by `(master_seed, run_id)` with the stream id
//! selecting the substream. Energy samples therefore do not depend on which
//! channel process is configured.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PowerVector, SystemState};

const ENERGY_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;

/// Deterministic RNG for one `(master_seed, run_id, stream_id)` triple.
pub fn substream(master_seed: u64, run_id: u64, stream_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&run_id.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream_id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyProcess {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Constant {
        value: f64,
    },
    /// Discrete distribution over `values` with probabilities `probs`.
    Table {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl EnergyProcess {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnergyProcess::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= *lo && lo <= hi) {
                    return Err(Error::Config(format!(
                        "uniform energy needs 0 <= lo <= hi, got [{lo}, {hi}]"
                    )));
                }
            }
            EnergyProcess::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::Config(format!(
                        "constant energy must be nonnegative, got {value}"
                    )));
                }
            }
            EnergyProcess::Table { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::Config(
                        "energy table needs matching nonempty values and probs".into(),
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0))
                    || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0))
                {
                    return Err(Error::Config(
                        "energy table entries must be nonnegative".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "energy table probabilities sum to {total}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            EnergyProcess::Uniform { lo, hi } => 0.5 * (lo + hi),
            EnergyProcess::Constant { value } => *value,
            EnergyProcess::Table { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    /// Largest possible arrival (`e_max`).
    pub fn support_max(&self) -> f64 {
        match self {
            EnergyProcess::Uniform { hi, .. } => *hi,
            EnergyProcess::Constant { value } => *value,
            EnergyProcess::Table { values, .. } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EnergyProcess::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            EnergyProcess::Constant { value } => *value,
            EnergyProcess::Table { values, probs } => values[pick(probs, rng.random())],
        }
    }
}

/// How a Rayleigh draw is confined to its window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Sample the distribution conditioned on the window (inverse CDF).
    #[default]
    Condition,
    /// Sample the untruncated distribution and clamp into the window.
    Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelProcess {
    /// Independent truncated Rayleigh fading per subband.
    IidTruncatedRayleigh {
        sigma: Vec<f64>,
        lo: f64,
        hi: f64,
        #[serde(default)]
        truncation: Truncation,
    },
    /// Finite-state Markov chain over channel vectors. Row `i` of `transition`
    /// holds the probabilities of moving from state `i`.
    Markov {
        states: Vec<Vec<f64>>,
        transition: Vec<Vec<f64>>,
        /// Pinned starting state; drawn from the stationary law when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_state: Option<usize>,
    },
}

impl ChannelProcess {
    pub fn dim(&self) -> usize {
        match self {
            ChannelProcess::IidTruncatedRayleigh { sigma, .. } => sigma.len(),
            ChannelProcess::Markov { states, .. } => states.first().map_or(0, Vec::len),
        }
    }

    /// Per-subband maximum channel value.
    pub fn support_max(&self) -> Vec<f64> {
        match self {
            ChannelProcess::IidTruncatedRayleigh { sigma, hi, .. } => vec![*hi; sigma.len()],
            ChannelProcess::Markov { states, .. } => (0..self.dim())
                .map(|i| states.iter().map(|s| s[i]).fold(0.0, f64::max))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelProcess::IidTruncatedRayleigh { sigma, lo, hi, .. } => {
                if sigma.is_empty() || sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::Config("rayleigh sigma must be positive".into()));
                }
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= *lo && lo < hi) {
                    return Err(Error::Config(format!(
                        "rayleigh window needs 0 <= lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            ChannelProcess::Markov {
                states,
                transition,
                initial_state,
            } => {
                let k = states.len();
                if k == 0 || transition.len() != k {
                    return Err(Error::Config(
                        "markov chain needs one transition row per state".into(),
                    ));
                }
                let n = states[0].len();
                if n == 0 || states.iter().any(|s| s.len() != n) {
                    return Err(Error::Config("markov states must share a dimension".into()));
                }
                if states
                    .iter()
                    .flatten()
                    .any(|v| !(v.is_finite() && *v >= 0.0))
                {
                    return Err(Error::Config(
                        "markov channel values must be nonnegative".into(),
                    ));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != k || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                        return Err(Error::Config(format!("bad transition row {i}")));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > 1e-12 {
                        return Err(Error::Config(format!("transition row {i} sums to {total}")));
                    }
                }
                if let Some(s) = initial_state {
                    if *s >= k {
                        return Err(Error::Config(format!("initial state {s} out of range")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stationary distribution `pi` of a row-stochastic matrix (`pi P = pi`),
/// solved by Gaussian elimination with one balance equation replaced by
/// `sum(pi) = 1`.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = transition.len();
    // Rows of (P^T - I), last row replaced by ones.
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|r| {
            let mut row: Vec<f64> = (0..k)
                .map(|c| transition[c][r] - if r == c { 1.0 } else { 0.0 })
                .collect();
            row.push(0.0);
            row
        })
        .collect();
    a[k - 1] = vec![1.0; k + 1];
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Config(
                "transition matrix has no unique stationary distribution".into(),
            ));
        }
        a.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                let pivot_row = a[col].clone();
                for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    Ok((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn rayleigh_cdf(x: f64, sigma: f64) -> f64 {
    -(-x * x / (2.0 * sigma * sigma)).exp_m1()
}

fn rayleigh_inverse_cdf(y: f64, sigma: f64) -> f64 {
    sigma * (-2.0 * (-y).ln_1p()).sqrt()
}

/// Sequential generator of `SystemState`s for one replication.
#[derive(Debug, Clone)]
pub struct StateGenerator {
    energy: EnergyProcess,
    channel: ChannelProcess,
    energy_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
    markov_state: Option<usize>,
    slot: u64,
}

impl StateGenerator {
    pub fn new(
        energy: EnergyProcess,
        channel: ChannelProcess,
        master_seed: u64,
        run_id: u64,
    ) -> Result<Self> {
        energy.validate()?;
        channel.validate()?;
        Ok(Self {
            energy,
            channel,
            energy_rng: substream(master_seed, run_id, ENERGY_STREAM),
            channel_rng: substream(master_seed, run_id, CHANNEL_STREAM),
            markov_state: None,
            slot: 0,
        })
    }

    /// Index of the slot the next call to [`next_state`](Self::next_state) produces.
    pub fn next_slot(&self) -> u64 {
        self.slot + 1
    }

    /// Current Markov chain state, once the first channel sample has been drawn.
    pub fn markov_state(&self) -> Option<usize> {
        self.markov_state
    }

    pub fn next_state(&mut self) -> SystemState {
        self.slot += 1;
        let energy_arrival = self.energy.sample(&mut self.energy_rng);
        let channel = self.next_channel();
        SystemState {
            energy_arrival,
            channel,
        }
    }

    fn next_channel(&mut self) -> Vec<f64> {
        let rng = &mut self.channel_rng;
        match &self.channel {
            ChannelProcess::IidTruncatedRayleigh {
                sigma,
                lo,
                hi,
                truncation,
            } => sigma
                .iter()
                .map(|&s| {
                    let u: f64 = rng.random();
                    match truncation {
                        Truncation::Condition => {
                            let (a, b) = (rayleigh_cdf(*lo, s), rayleigh_cdf(*hi, s));
                            rayleigh_inverse_cdf(a + u * (b - a), s).clamp(*lo, *hi)
                        }
                        Truncation::Clip => rayleigh_inverse_cdf(u, s).clamp(*lo, *hi),
                    }
                })
                .collect(),
            ChannelProcess::Markov {
                states,
                transition,
                initial_state,
            } => {
                let next = match self.markov_state {
                    None => match initial_state {
                        Some(s) => *s,
                        // Validation guarantees a well-formed chain; a chain
                        // without a unique stationary law starts in state 0.
                        None => stationary_distribution(transition)
                            .map(|pi| pick(&pi, rng.random()))
                            .unwrap_or(0),
                    },
                    Some(cur) => pick(&transition[cur], rng.random()),
                };
                self.markov_state = Some(next);
                states[next].clone()
            }
        }
    }
}

/// Physical battery: stored energy and capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub level: f64,
    pub capacity: f64,
}

impl BatteryState {
    pub fn new(level: f64, capacity: f64) -> Result<Self> {
        if !(capacity.is_finite() && capacity >= 0.0 && level >= 0.0 && level <= capacity) {
            return Err(Error::InvalidParameter(format!(
                "battery level {level} must lie in [0, {capacity}]"
            )));
        }
        Ok(Self { level, capacity })
    }

    /// Draws `applied` from the battery, then stores `arrival`, clamping at
    /// capacity. Fails if the draw exceeds the stored energy.
    pub fn step(&self, applied: &PowerVector, arrival: f64) -> Result<Self> {
        let used = applied.total();
        if used > self.level + crate::types::TOL {
            return Err(Error::EnergyAvailability {
                requested: used,
                available: self.level,
            });
        }
        let level = (self.level - used + arrival).min(self.capacity).max(0.0);
        Ok(Self {
            level,
            capacity: self.capacity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> PowerVector {
        PowerVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn battery_examples() {
        let b = BatteryState::new(10.0, 10.0).unwrap();
        assert_eq!(b.step(&pv(&[1.0, 1.0]), 0.5).unwrap().level, 8.5);
        let b = BatteryState::new(5.0, 5.0).unwrap();
        assert_eq!(b.step(&pv(&[0.0, 0.0]), 3.0).unwrap().level, 5.0);
        let b = BatteryState::new(2.0, 10.0).unwrap();
        assert_eq!(b.step(&pv(&[1.5, 0.5]), 0.0).unwrap().level, 0.0);
    }

    #[test]
    fn battery_fault_on_overdraw() {
        let b = BatteryState::new(1.0, 10.0).unwrap();
        assert!(matches!(
            b.step(&pv(&[1.0, 0.5]), 3.0),
            Err(Error::EnergyAvailability { .. })
        ));
        assert!(BatteryState::new(11.0, 10.0).is_err());
        assert!(BatteryState::new(-1.0, 10.0).is_err());
    }

    #[test]
    fn degenerate_processes() {
        let mut g = StateGenerator::new(
            EnergyProcess::Constant { value: 1.5 },
            ChannelProcess::Markov {
                states: vec![vec![1.0, 1.0]],
                transition: vec![vec![1.0]],
                initial_state: None,
            },
            7,
            0,
        )
        .unwrap();
        for _ in 0..100 {
            assert_eq!(g.next_state(), SystemState::new(1.5, vec![1.0, 1.0]));
        }
        assert_eq!(g.next_slot(), 101);
    }

    #[test]
    fn stationary_two_state_chain() {
        // pi_1 = (2/3) / (14/15 + 2/3) = 10/24.
        let pi =
            stationary_distribution(&[vec![1.0 / 15.0, 14.0 / 15.0], vec![2.0 / 3.0, 1.0 / 3.0]])
                .unwrap();
        assert!((pi[0] - 10.0 / 24.0).abs() < 1e-12);
        assert!((pi[1] - 14.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn reproducible_and_stream_independent() {
        let energy = EnergyProcess::Uniform { lo: 0.0, hi: 3.0 };
        let rayleigh = ChannelProcess::IidTruncatedRayleigh {
            sigma: vec![0.5, 1.0],
            lo: 0.0,
            hi: 4.0,
            truncation: Truncation::Condition,
        };
        let markov = ChannelProcess::Markov {
            states: vec![vec![0.45, 1.2], vec![1.0, 0.2]],
            transition: vec![vec![1.0 / 15.0, 14.0 / 15.0], vec![2.0 / 3.0, 1.0 / 3.0]],
            initial_state: None,
        };
        let draw = |c: &ChannelProcess, run| {
            let mut g = StateGenerator::new(energy.clone(), c.clone(), 42, run).unwrap();
            (0..500).map(|_| g.next_state()).collect::<Vec<_>>()
        };
        let a = draw(&rayleigh, 3);
        assert_eq!(a, draw(&rayleigh, 3));
        assert_ne!(a, draw(&rayleigh, 4));
        let b = draw(&markov, 3);
        let ea: Vec<u64> = a.iter().map(|s| s.energy_arrival.to_bits()).collect();
        let eb: Vec<u64> = b.iter().map(|s| s.energy_arrival.to_bits()).collect();
        assert_eq!(ea, eb);
    }

    #[test]
    fn config_validation() {
        assert!(EnergyProcess::Uniform { lo: 2.0, hi: 1.0 }
            .validate()
            .is_err());
        assert!(EnergyProcess::Table {
            values: vec![1.0, 2.0],
            probs: vec![0.5, 0.6]
        }
        .validate()
        .is_err());
        assert!(ChannelProcess::Markov {
            states: vec![vec![1.0], vec![2.0]],
            transition: vec![vec![0.5, 0.4], vec![0.5, 0.5]],
            initial_state: None,
        }
        .validate()
        .is_err());
        assert!(ChannelProcess::IidTruncatedRayleigh {
            sigma: vec![0.0],
            lo: 0.0,
            hi: 4.0,
            truncation: Truncation::Clip,
        }
        .validate()
        .is_err());
    }

    #[test]
    fn table_energy_mean_and_support() {
        let e = EnergyProcess::Table {
            values: vec![0.0, 2.0],
            probs: vec![0.25, 0.75],
        };
        assert_eq!(e.mean(), 1.5);
        assert_eq!(e.support_max(), 2.0);
    }
}
