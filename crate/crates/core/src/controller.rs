//! Power controllers.
//!
//! All controllers follow the same slot protocol: [`PowerController::current_power`]
//! is the allocation issued for the running slot, and
//! [`PowerController::end_of_slot`] reveals that slot's state, after which the
//! controller decides the next allocation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::environment::BatteryState;
use crate::error::{Error, Result};
use crate::projection::{project_capped_simplex, project_nonpositive_shift};
use crate::types::{AlgorithmParams, PowerVector, ProblemParams, SystemState};
use crate::utility::Utility;

pub trait PowerController: Send {
    /// Allocation issued for the current slot, before any battery scaling.
    fn current_power(&self) -> &PowerVector;

    /// Ends the current slot. `applied` is what was actually drawn from the
    /// battery and `battery` is the battery after the slot.
    fn end_of_slot(
        &mut self,
        state: &SystemState,
        applied: &PowerVector,
        battery: &BatteryState,
    ) -> Result<()>;

    /// Virtual queue value, for controllers that keep one.
    fn virtual_queue(&self) -> Option<f64> {
        None
    }
}

/// Which power enters the virtual queue update when the battery scaled the
/// issued allocation down.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueFeed {
    #[default]
    Issued,
    Applied,
}

/// Scales `proposed` down to the stored energy when it asks for more.
/// Returns the allocation to apply and whether scaling happened.
pub fn enforce_availability(proposed: &PowerVector, battery: &BatteryState) -> (PowerVector, bool) {
    let total = proposed.total();
    if total <= battery.level || total == 0.0 {
        return (proposed.clone(), false);
    }
    let ratio = battery.level / total;
    let scaled = proposed
        .as_slice()
        .iter()
        .map(|&p| (p * ratio).max(0.0))
        .collect();
    (PowerVector::from_vec_unchecked(scaled), true)
}

#[derive(Debug, Clone)]
struct Observation {
    state: SystemState,
    issued: PowerVector,
    applied: PowerVector,
}

/// Virtual-queue-aided online gradient controller.
///
/// At the end of slot `t` it observes the slot `t - t0 + 1` state, updates
///
/// ```text
/// Q <- min(Q + e - sum(p_obs), 0)
/// p[t+1] = Proj{ p_obs + grad U(p_obs; state) / V + Q / V^2 }
/// ```
///
/// and issues zero power for the first `t0` slots.
#[derive(Debug, Clone)]
pub struct DriftPlusPenalty<U> {
    problem: ProblemParams,
    params: AlgorithmParams,
    utility: U,
    feed: QueueFeed,
    queue: f64,
    current: PowerVector,
    pending: VecDeque<Observation>,
}

impl<U: Utility> DriftPlusPenalty<U> {
    pub fn new(problem: ProblemParams, params: AlgorithmParams, utility: U) -> Self {
        let n = problem.n;
        Self {
            pending: VecDeque::with_capacity(params.delay_t0),
            problem,
            params,
            utility,
            feed: QueueFeed::Issued,
            queue: 0.0,
            current: PowerVector::zeros(n),
        }
    }

    pub fn with_queue_feed(mut self, feed: QueueFeed) -> Self {
        self.feed = feed;
        self
    }

    pub fn queue(&self) -> f64 {
        self.queue
    }

    pub fn params(&self) -> &AlgorithmParams {
        &self.params
    }

    /// One observe-and-update step on an already-paired (state, power)
    /// observation. Returns the next allocation.
    pub fn observe_and_step(
        &mut self,
        observed: &SystemState,
        observed_power: &PowerVector,
    ) -> Result<PowerVector> {
        self.update(observed, observed_power, observed_power)
    }

    fn update(
        &mut self,
        observed: &SystemState,
        base: &PowerVector,
        queue_power: &PowerVector,
    ) -> Result<PowerVector> {
        if observed.dim() != self.problem.n || base.len() != self.problem.n {
            return Err(Error::Precondition(format!(
                "expected dimension {}, got state {} and power {}",
                self.problem.n,
                observed.dim(),
                base.len()
            )));
        }
        self.queue = (self.queue + observed.energy_arrival - queue_power.total()).min(0.0);
        let v = self.params.v_param;
        let drift = self.queue / (v * v);
        let shift: Vec<f64> = self
            .utility
            .gradient(base.as_slice(), observed)
            .into_iter()
            .map(|g| g / v + drift)
            .collect();
        if shift.iter().all(|&b| b <= 0.0) {
            project_nonpositive_shift(base, &shift)
        } else {
            let target: Vec<f64> = base
                .as_slice()
                .iter()
                .zip(&shift)
                .map(|(p, b)| p + b)
                .collect();
            project_capped_simplex(&target, self.problem.p_max)
        }
    }
}

impl<U: Utility> PowerController for DriftPlusPenalty<U> {
    fn current_power(&self) -> &PowerVector {
        &self.current
    }

    fn end_of_slot(
        &mut self,
        state: &SystemState,
        applied: &PowerVector,
        _battery: &BatteryState,
    ) -> Result<()> {
        self.pending.push_back(Observation {
            state: state.clone(),
            issued: self.current.clone(),
            applied: applied.clone(),
        });
        self.current = if self.pending.len() >= self.params.delay_t0 {
            let obs = self.pending.pop_front().expect("nonempty buffer");
            let queue_power = match self.feed {
                QueueFeed::Issued => &obs.issued,
                QueueFeed::Applied => &obs.applied,
            };
            self.update(&obs.state, &obs.issued, queue_power)?
        } else {
            PowerVector::zeros(self.problem.n)
        };
        Ok(())
    }

    fn virtual_queue(&self) -> Option<f64> {
        Some(self.queue)
    }
}

/// Online gradient step projected onto the battery-limited set
/// `{p >= 0, sum(p) <= min(p_max, E)}`.
#[derive(Debug, Clone)]
pub struct ProjectedGradientBaseline<U> {
    p_max: f64,
    step: f64,
    utility: U,
    current: PowerVector,
}

impl<U: Utility> ProjectedGradientBaseline<U> {
    pub fn new(n: usize, p_max: f64, step: f64, utility: U) -> Self {
        Self {
            p_max,
            step,
            utility,
            current: PowerVector::zeros(n),
        }
    }

    pub fn step(&self, observed: &SystemState, battery: &BatteryState) -> Result<PowerVector> {
        let cap = self.p_max.min(battery.level).max(0.0);
        let grad = self.utility.gradient(self.current.as_slice(), observed);
        let target: Vec<f64> = self
            .current
            .as_slice()
            .iter()
            .zip(grad)
            .map(|(p, g)| p + self.step * g)
            .collect();
        project_capped_simplex(&target, cap)
    }
}

impl<U: Utility> PowerController for ProjectedGradientBaseline<U> {
    fn current_power(&self) -> &PowerVector {
        &self.current
    }

    fn end_of_slot(
        &mut self,
        state: &SystemState,
        _applied: &PowerVector,
        battery: &BatteryState,
    ) -> Result<()> {
        self.current = self.step(state, battery)?;
        Ok(())
    }
}

/// Plays the maximizer of the most recently observed utility over the
/// battery-limited set.
#[derive(Debug, Clone)]
pub struct OutdatedArgmaxBaseline<U> {
    p_max: f64,
    utility: U,
    current: PowerVector,
}

impl<U: Utility> OutdatedArgmaxBaseline<U> {
    pub fn new(n: usize, p_max: f64, utility: U) -> Self {
        Self {
            p_max,
            utility,
            current: PowerVector::zeros(n),
        }
    }

    pub fn step(&self, observed: &SystemState, battery: &BatteryState) -> PowerVector {
        self.utility
            .maximize(observed, self.p_max.min(battery.level).max(0.0))
    }
}

impl<U: Utility> PowerController for OutdatedArgmaxBaseline<U> {
    fn current_power(&self) -> &PowerVector {
        &self.current
    }

    fn end_of_slot(
        &mut self,
        state: &SystemState,
        _applied: &PowerVector,
        battery: &BatteryState,
    ) -> Result<()> {
        self.current = self.step(state, battery);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{derive_algorithm_params, derive_params};
    use crate::utility::LogUtility;

    fn pv(v: &[f64]) -> PowerVector {
        PowerVector::new(v.to_vec()).unwrap()
    }

    fn controller(v: f64, t0: usize) -> DriftPlusPenalty<LogUtility> {
        let pp = derive_params(2, 5.0, 3.0, &[4.0, 4.0]).unwrap();
        let ap = derive_algorithm_params(&pp, v, t0).unwrap();
        DriftPlusPenalty::new(pp, ap, LogUtility)
    }

    #[test]
    fn starts_at_origin_with_empty_queue() {
        let c = controller(10.0, 1);
        assert_eq!(c.queue(), 0.0);
        assert_eq!(c.current_power().as_slice(), &[0.0, 0.0]);
        let state = SystemState::new(1.0, vec![2.0, 3.0]);
        assert_eq!(LogUtility.value(c.current_power().as_slice(), &state), 0.0);
    }

    #[test]
    fn first_step_hand_trace() {
        // Q' = min(0 + 1 - 0, 0) = 0; target = (1/10) [4, 4] = [0.4, 0.4].
        let mut c = controller(10.0, 1);
        let next = c
            .observe_and_step(&SystemState::new(1.0, vec![4.0, 4.0]), &pv(&[0.0, 0.0]))
            .unwrap();
        assert_eq!(c.queue(), 0.0);
        assert!((next[0] - 0.4).abs() < 1e-15 && (next[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn deep_queue_drives_power_to_zero() {
        // Q = -100 with zero gradient: shift = -100/100 = -1 per coordinate.
        let mut c = controller(10.0, 1);
        c.queue = -100.0;
        let next = c
            .observe_and_step(&SystemState::new(2.0, vec![0.0, 0.0]), &pv(&[1.0, 1.0]))
            .unwrap();
        assert_eq!(c.queue(), -100.0);
        assert_eq!(next.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn queue_clamps_at_zero() {
        let mut c = controller(10.0, 1);
        c.queue = -0.5;
        c.observe_and_step(&SystemState::new(3.0, vec![1.0, 1.0]), &pv(&[0.25, 0.25]))
            .unwrap();
        assert_eq!(c.queue(), 0.0);
    }

    #[test]
    fn delayed_controller_issues_zeros_first() {
        let mut c = controller(10.0, 5);
        let battery = BatteryState::new(10.0, 10.0).unwrap();
        let state = SystemState::new(1.0, vec![4.0, 4.0]);
        let mut issued = vec![c.current_power().clone()];
        for _ in 0..6 {
            let p = c.current_power().clone();
            c.end_of_slot(&state, &p, &battery).unwrap();
            issued.push(c.current_power().clone());
        }
        for p in &issued[..5] {
            assert_eq!(p.as_slice(), &[0.0, 0.0]);
        }
        assert!(issued[5].total() > 0.0);
    }

    #[test]
    fn scale_down_examples() {
        let b = BatteryState::new(3.0, 10.0).unwrap();
        let (p, scaled) = enforce_availability(&pv(&[3.0, 3.0]), &b);
        assert!(scaled);
        assert_eq!(p.as_slice(), &[1.5, 1.5]);

        let b = BatteryState::new(5.0, 10.0).unwrap();
        let (p, scaled) = enforce_availability(&pv(&[1.0, 0.0]), &b);
        assert!(!scaled);
        assert_eq!(p.as_slice(), &[1.0, 0.0]);

        let b = BatteryState::new(0.0, 10.0).unwrap();
        let (p, scaled) = enforce_availability(&pv(&[0.0, 0.0]), &b);
        assert!(!scaled);
        assert_eq!(p.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn projected_gradient_baseline_caps_at_battery() {
        // From p = 0 with gradient [4, 4] and step 1 the target is [4, 4].
        let state = SystemState::new(0.0, vec![4.0, 4.0]);
        let base = ProjectedGradientBaseline::new(2, 5.0, 1.0, LogUtility);
        let p = base
            .step(&state, &BatteryState::new(2.0, 10.0).unwrap())
            .unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);

        let p = base
            .step(&state, &BatteryState::new(10.0, 10.0).unwrap())
            .unwrap();
        let plain = project_capped_simplex(&[4.0, 4.0], 5.0).unwrap();
        assert_eq!(p, plain);

        let p = base
            .step(&state, &BatteryState::new(0.0, 10.0).unwrap())
            .unwrap();
        assert_eq!(p.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn argmax_baseline_uses_battery_cap() {
        let base = OutdatedArgmaxBaseline::new(2, 5.0, LogUtility);
        let p = base.step(
            &SystemState::new(0.0, vec![1.0, 1.0]),
            &BatteryState::new(2.0, 10.0).unwrap(),
        );
        assert!((p[0] - 1.0).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9);
        let p = base.step(
            &SystemState::new(0.0, vec![4.0, 0.0]),
            &BatteryState::new(3.0, 10.0).unwrap(),
        );
        assert!((p[0] - 3.0).abs() < 1e-9 && p[1] == 0.0);
        let p = base.step(
            &SystemState::new(0.0, vec![0.0, 0.0]),
            &BatteryState::new(3.0, 10.0).unwrap(),
        );
        assert_eq!(p.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn applied_feed_uses_scaled_power() {
        let mut issued = controller(10.0, 1);
        let mut applied = controller(10.0, 1).with_queue_feed(QueueFeed::Applied);
        issued.current = pv(&[1.0, 1.0]);
        applied.current = pv(&[1.0, 1.0]);
        let battery = BatteryState::new(1.0, 10.0).unwrap();
        let state = SystemState::new(0.0, vec![1.0, 1.0]);
        let used = pv(&[0.5, 0.5]);
        issued.end_of_slot(&state, &used, &battery).unwrap();
        applied.end_of_slot(&state, &used, &battery).unwrap();
        assert_eq!(issued.queue(), -2.0);
        assert_eq!(applied.queue(), -1.0);
    }
}
