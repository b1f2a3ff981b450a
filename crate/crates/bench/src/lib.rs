//! Deterministic inputs shared by the kernel benchmarks.

use ehpc_core::harness::figures::iid_environment;
use ehpc_core::harness::sample_states;
use ehpc_core::SystemState;

pub const SEED: u64 = 99;

/// `n` i.i.d. states from the two-subband benchmark environment.
pub fn iid_states(n: usize) -> Vec<SystemState> {
    sample_states(&iid_environment(), SEED, n).expect("valid bundled environment")
}

/// A dense point with mixed signs whose positive part exceeds `cap`.
pub fn projection_input(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| ((i * 7919 % 101) as f64 / 101.0) * 4.0 - 1.0)
        .collect()
}
