//! Shared domain vocabulary: power allocations, per-slot system states, and the
//! constants derived from the problem and algorithm parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used by feasibility and identity checks.
pub const TOL: f64 = 1e-9;

/// A nonnegative per-subband power allocation.
///
/// Membership in the capped set `{p >= 0, sum(p) <= p_max}` depends on the
/// cap in force, so it is checked with [`PowerVector::is_feasible`] rather than
/// stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        for (index, &value) in components.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
            if value < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "power component {index} is negative ({value})"
                )));
            }
        }
        Ok(Self(components))
    }

    /// Caller guarantees every component is finite and nonnegative.
    pub(crate) fn from_vec_unchecked(components: Vec<f64>) -> Self {
        debug_assert!(components.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self(components)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_feasible(&self, cap: f64, tol: f64) -> bool {
        self.0.iter().all(|&v| v >= -tol) && self.total() <= cap + tol
    }
}

impl std::ops::Index<usize> for PowerVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One slot's realization: harvested energy plus the channel vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub energy_arrival: f64,
    pub channel: Vec<f64>,
}

impl SystemState {
    pub fn new(energy_arrival: f64, channel: Vec<f64>) -> Self {
        Self {
            energy_arrival,
            channel,
        }
    }

    pub fn dim(&self) -> usize {
        self.channel.len()
    }
}

/// Problem constants: dimension, caps, and the subgradient bounds of the utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub n: usize,
    pub p_max: f64,
    pub e_max: f64,
    /// Per-coordinate subgradient bounds `D_i`.
    pub d_per_coord: Vec<f64>,
    /// `sqrt(sum D_i^2)`.
    pub d_norm: f64,
    pub d_max: f64,
    /// `max(e_max, p_max)^2`.
    pub b_const: f64,
}

/// Builds [`ProblemParams`] for the log utility, whose tight subgradient bound on
/// coordinate `i` is the channel support maximum (attained at `p_i = 0`).
pub fn derive_params(
    n: usize,
    p_max: f64,
    e_max: f64,
    channel_support_max: &[f64],
) -> Result<ProblemParams> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if channel_support_max.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} channel support bounds, got {}",
            channel_support_max.len()
        )));
    }
    positive("p_max", p_max)?;
    positive("e_max", e_max)?;
    for (i, &d) in channel_support_max.iter().enumerate() {
        positive(&format!("channel_support_max[{i}]"), d)?;
    }
    let d_per_coord = channel_support_max.to_vec();
    let d_norm = d_per_coord.iter().map(|d| d * d).sum::<f64>().sqrt();
    let d_max = d_per_coord.iter().copied().fold(f64::MIN, f64::max);
    let b = e_max.max(p_max);
    Ok(ProblemParams {
        n,
        p_max,
        e_max,
        d_per_coord,
        d_norm,
        d_max,
        b_const: b * b,
    })
}

/// Algorithm parameter `V`, the virtual queue floor `Q^l` and the battery size
/// that guarantees energy availability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    pub v_param: f64,
    /// `ceil(V) * (D_max + 2 p_max + e_max)`.
    pub q_lower: f64,
    /// `q_lower + p_max`.
    pub recommended_capacity: f64,
    pub delay_t0: usize,
}

pub fn derive_algorithm_params(pp: &ProblemParams, v: f64, t0: usize) -> Result<AlgorithmParams> {
    positive("V", v)?;
    if t0 < 1 {
        return Err(Error::InvalidParameter(
            "observation delay t0 must be at least 1".into(),
        ));
    }
    let q_lower = v.ceil() * (pp.d_max + 2.0 * pp.p_max + pp.e_max);
    Ok(AlgorithmParams {
        v_param: v,
        q_lower,
        recommended_capacity: q_lower + pp.p_max,
        delay_t0: t0,
    })
}

/// Per-slot trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub run_id: u64,
    pub slot: u64,
    pub power: PowerVector,
    pub utility: f64,
    /// Zero for controllers without a virtual queue.
    pub virtual_queue: f64,
    pub battery: f64,
    pub state: SystemState,
    pub scaled_down: bool,
}

fn positive(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn params_two_subband_setup() {
        let pp = derive_params(2, 5.0, 3.0, &[4.0, 4.0]).unwrap();
        assert_eq!(pp.d_per_coord, vec![4.0, 4.0]);
        assert_eq!(pp.d_max, 4.0);
        assert!(close(pp.d_norm, 32f64.sqrt(), 1e-12));
        assert!(close(pp.d_norm, 5.6569, 1e-4));
        assert_eq!(pp.b_const, 25.0);
    }

    #[test]
    fn params_unit_case() {
        let pp = derive_params(1, 1.0, 1.0, &[1.0]).unwrap();
        assert_eq!((pp.d_norm, pp.d_max, pp.b_const), (1.0, 1.0, 1.0));
    }

    #[test]
    fn params_three_subbands() {
        let pp = derive_params(3, 2.0, 4.0, &[1.0, 2.0, 3.0]).unwrap();
        assert!(close(pp.d_norm, 14f64.sqrt(), 1e-12));
        assert_eq!(pp.d_max, 3.0);
        assert_eq!(pp.b_const, 16.0);
    }

    #[test]
    fn params_reject_bad_input() {
        assert!(derive_params(2, 0.0, 3.0, &[4.0, 4.0]).is_err());
        assert!(derive_params(2, 5.0, -1.0, &[4.0, 4.0]).is_err());
        assert!(derive_params(2, 5.0, 3.0, &[4.0]).is_err());
        assert!(derive_params(2, 5.0, 3.0, &[4.0, 0.0]).is_err());
        assert!(derive_params(0, 5.0, 3.0, &[]).is_err());
        assert!(derive_params(1, f64::NAN, 3.0, &[1.0]).is_err());
    }

    #[test]
    fn queue_floor_and_capacity() {
        let pp = derive_params(2, 5.0, 3.0, &[4.0, 4.0]).unwrap();
        let ap = derive_algorithm_params(&pp, 40.0, 1).unwrap();
        assert_eq!(ap.q_lower, 680.0);
        assert_eq!(ap.recommended_capacity, 685.0);

        let ap = derive_algorithm_params(&pp, 10.5, 1).unwrap();
        assert_eq!(ap.q_lower, 187.0);

        let unit = derive_params(1, 1.0, 1.0, &[1.0]).unwrap();
        let ap = derive_algorithm_params(&unit, 1.0, 1).unwrap();
        assert_eq!((ap.q_lower, ap.recommended_capacity), (4.0, 5.0));
    }

    #[test]
    fn algorithm_params_reject_bad_input() {
        let pp = derive_params(1, 1.0, 1.0, &[1.0]).unwrap();
        assert!(derive_algorithm_params(&pp, 0.0, 1).is_err());
        assert!(derive_algorithm_params(&pp, -3.0, 1).is_err());
        assert!(derive_algorithm_params(&pp, 1.0, 0).is_err());
    }

    #[test]
    fn power_vector_validation() {
        assert!(PowerVector::new(vec![1.0, -0.1]).is_err());
        assert!(matches!(
            PowerVector::new(vec![f64::NAN]),
            Err(Error::NonFinite { index: 0, .. })
        ));
        let p = PowerVector::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(p.total(), 3.0);
        assert!(p.is_feasible(3.0, 0.0));
        assert!(!p.is_feasible(2.9, 1e-9));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn derived_constants_hold(
                p_max in 0.01f64..100.0,
                e_max in 0.01f64..100.0,
                d in proptest::collection::vec(0.01f64..50.0, 1..8),
                v in 0.01f64..500.0,
            ) {
                let pp = derive_params(d.len(), p_max, e_max, &d).unwrap();
                let b = e_max.max(p_max);
                prop_assert_eq!(pp.b_const, b * b);
                let sq: f64 = d.iter().map(|x| x * x).sum();
                prop_assert!((pp.d_norm * pp.d_norm - sq).abs() <= 1e-12 * sq.max(1.0));
                let ap = derive_algorithm_params(&pp, v, 1).unwrap();
                let gap = ap.recommended_capacity - ap.q_lower;
                prop_assert!((gap - p_max).abs() <= 1e-12 * ap.recommended_capacity);
            }

            #[test]
            fn queue_floor_monotone(
                p_max in 0.01f64..50.0,
                e_max in 0.01f64..50.0,
                d in 0.01f64..50.0,
                v in 0.01f64..200.0,
                bump in 0.0f64..10.0,
            ) {
                let base = derive_params(1, p_max, e_max, &[d]).unwrap();
                let q = derive_algorithm_params(&base, v, 1).unwrap().q_lower;
                let q_v = derive_algorithm_params(&base, v + bump, 1).unwrap().q_lower;
                let q_p = derive_algorithm_params(&derive_params(1, p_max + bump, e_max, &[d]).unwrap(), v, 1).unwrap().q_lower;
                let q_e = derive_algorithm_params(&derive_params(1, p_max, e_max + bump, &[d]).unwrap(), v, 1).unwrap().q_lower;
                let q_d = derive_algorithm_params(&derive_params(1, p_max, e_max, &[d + bump]).unwrap(), v, 1).unwrap().q_lower;
                prop_assert!(q_v >= q && q_p >= q && q_e >= q && q_d >= q);
            }
        }
    }
}
