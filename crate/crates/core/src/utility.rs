//! Concave per-slot utilities and their subgradients.

use crate::oracle::{self, AscentOptions};
use crate::types::{PowerVector, SystemState};

/// A utility `U(p; state)` that is concave in `p` for every state.
pub trait Utility: Send + Sync {
    fn value(&self, power: &[f64], state: &SystemState) -> f64;

    /// A subgradient (the gradient when differentiable) with respect to `power`.
    fn gradient(&self, power: &[f64], state: &SystemState) -> Vec<f64>;

    /// Adds the gradient at `power` into `out`.
    fn accumulate_gradient(&self, power: &[f64], state: &SystemState, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(self.gradient(power, state)) {
            *o += g;
        }
    }

    /// Per-coordinate bounds `D_i` on `|dU/dp_i|` over the feasible set when
    /// channel component `i` never exceeds `channel_support_max[i]`.
    fn subgradient_bounds(&self, channel_support_max: &[f64]) -> Vec<f64>;

    /// Upper bound on the curvature (largest Hessian eigenvalue magnitude) over
    /// the same domain, if known. Used to pick a safe ascent step.
    fn curvature_bound(&self, _channel_support_max: &[f64]) -> Option<f64> {
        None
    }

    /// Maximizer of `U(.; state)` over `{p >= 0, sum(p) <= cap}`.
    fn maximize(&self, state: &SystemState, cap: f64) -> PowerVector {
        let support: Vec<f64> = state.channel.iter().map(|s| s.max(1e-12)).collect();
        let states = std::slice::from_ref(state);
        oracle::maximize_average(self, states, &support, cap, &AscentOptions::default())
            .map(|sol| sol.power)
            .unwrap_or_else(|e| match e {
                crate::Error::NonConvergence { last_iterate, .. } => {
                    PowerVector::from_vec_unchecked(last_iterate)
                }
                _ => PowerVector::zeros(state.dim()),
            })
    }
}

/// Sum-rate utility `sum_i ln(1 + p_i s_i)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogUtility;

impl Utility for LogUtility {
    fn value(&self, power: &[f64], state: &SystemState) -> f64 {
        power
            .iter()
            .zip(&state.channel)
            .map(|(&p, &s)| (p * s).ln_1p())
            .sum()
    }

    fn gradient(&self, power: &[f64], state: &SystemState) -> Vec<f64> {
        power
            .iter()
            .zip(&state.channel)
            .map(|(&p, &s)| s / (1.0 + p * s))
            .collect()
    }

    fn accumulate_gradient(&self, power: &[f64], state: &SystemState, out: &mut [f64]) {
        for ((o, &p), &s) in out.iter_mut().zip(power).zip(&state.channel) {
            *o += s / (1.0 + p * s);
        }
    }

    fn subgradient_bounds(&self, channel_support_max: &[f64]) -> Vec<f64> {
        channel_support_max.to_vec()
    }

    fn curvature_bound(&self, channel_support_max: &[f64]) -> Option<f64> {
        Some(
            channel_support_max
                .iter()
                .map(|s| s * s)
                .fold(0.0, f64::max),
        )
    }

    fn maximize(&self, state: &SystemState, cap: f64) -> PowerVector {
        water_filling(&state.channel, cap)
    }
}

/// Water-filling maximizer of `sum_i ln(1 + p_i s_i)` subject to
/// `sum(p) <= cap`: `p_i = max(w - 1/s_i, 0)` with the level `w` found by
/// bisection so the cap is met. Dead subbands (`s_i <= 0`) get no power.
pub fn water_filling(channel: &[f64], cap: f64) -> PowerVector {
    let n = channel.len();
    if cap <= 0.0 || channel.iter().all(|&s| s <= 0.0) {
        return PowerVector::zeros(n);
    }
    let alloc = |level: f64| -> Vec<f64> {
        channel
            .iter()
            .map(|&s| {
                if s > 0.0 {
                    (level - 1.0 / s).max(0.0)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let min_inv = channel
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| 1.0 / s)
        .fold(f64::INFINITY, f64::min);
    let mut lo = min_inv;
    let mut hi = min_inv + cap;
    // w is the reciprocal of the cap multiplier. `lo` always keeps the total
    // under the cap.
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        let total: f64 = alloc(mid).iter().sum();
        if total > cap {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    PowerVector::from_vec_unchecked(alloc(lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn st(channel: &[f64]) -> SystemState {
        SystemState::new(0.0, channel.to_vec())
    }

    #[test]
    fn value_examples() {
        let u = LogUtility;
        assert_eq!(u.value(&[0.0, 0.0], &st(&[3.0, 1.0])), 0.0);
        assert!((u.value(&[1.0, 1.0], &st(&[E - 1.0, E - 1.0])) - 2.0).abs() < 1e-12);
        // ln(2.125) + ln(4), computed independently.
        let expected = 2.125f64.ln() + 4f64.ln();
        let got = u.value(&[2.5, 2.5], &st(&[0.45, 1.2]));
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 2.1401).abs() < 1e-4);
    }

    #[test]
    fn gradient_examples() {
        let u = LogUtility;
        assert_eq!(u.gradient(&[0.0, 0.0], &st(&[4.0, 4.0])), vec![4.0, 4.0]);
        let g = u.gradient(&[5.0, 0.0], &st(&[1.0, 2.0]));
        assert!((g[0] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g[1], 2.0);
    }

    #[test]
    fn water_filling_examples() {
        let p = water_filling(&[1.0, 1.0], 2.0);
        assert!((p[0] - 1.0).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9);
        let p = water_filling(&[4.0, 0.0], 3.0);
        assert!((p[0] - 3.0).abs() < 1e-9 && p[1] == 0.0);
        assert_eq!(water_filling(&[0.0, 0.0], 3.0).as_slice(), &[0.0, 0.0]);
        assert_eq!(water_filling(&[1.0, 2.0], 0.0).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn water_filling_matches_grid() {
        // Brute force over the cap face p1 + p2 = 5 (log utility is increasing,
        // so the cap is active) at resolution 1e-3.
        let s = [0.45, 1.2];
        let u = LogUtility;
        let state = st(&s);
        let mut best = (f64::MIN, 0.0);
        for i in 0..=5000 {
            let p1 = i as f64 * 1e-3;
            let v = u.value(&[p1, 5.0 - p1], &state);
            if v > best.0 {
                best = (v, p1);
            }
        }
        let p = water_filling(&s, 5.0);
        assert!((p[0] - best.1).abs() <= 1e-3, "{p:?} vs {}", best.1);
        assert!((p.total() - 5.0).abs() < 1e-9);
        assert!(p.total() <= 5.0);
    }

    #[test]
    fn default_maximize_agrees_with_water_filling() {
        struct Plain;
        impl Utility for Plain {
            fn value(&self, p: &[f64], s: &SystemState) -> f64 {
                LogUtility.value(p, s)
            }
            fn gradient(&self, p: &[f64], s: &SystemState) -> Vec<f64> {
                LogUtility.gradient(p, s)
            }
            fn subgradient_bounds(&self, m: &[f64]) -> Vec<f64> {
                m.to_vec()
            }
        }
        let state = st(&[0.45, 1.2, 2.0]);
        let a = Plain.maximize(&state, 4.0);
        let b = water_filling(&state.channel, 4.0);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-5, "{a:?} vs {b:?}");
        }
    }

    fn simplex_point(raw: Vec<f64>, cap: f64) -> Vec<f64> {
        let total: f64 = raw.iter().sum();
        if total > cap {
            raw.iter().map(|v| v * cap / total).collect()
        } else {
            raw
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn gradient_matches_central_differences(
            p in proptest::collection::vec(0.01f64..2.4, 2),
            s in proptest::collection::vec(0.0f64..4.0, 2),
        ) {
            let u = LogUtility;
            let state = st(&s);
            let g = u.gradient(&p, &state);
            let h = 1e-6;
            for i in 0..2 {
                let mut up = p.clone();
                let mut dn = p.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (u.value(&up, &state) - u.value(&dn, &state)) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0));
                prop_assert!(g[i] >= 0.0 && g[i] <= s[i] + 1e-15);
            }
        }

        #[test]
        fn concave_on_feasible_set(
            a in proptest::collection::vec(0.0f64..5.0, 2),
            b in proptest::collection::vec(0.0f64..5.0, 2),
            s in proptest::collection::vec(0.0f64..4.0, 2),
            alpha in 0.001f64..0.999,
        ) {
            let (a, b) = (simplex_point(a, 5.0), simplex_point(b, 5.0));
            let u = LogUtility;
            let state = st(&s);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
            let lhs = u.value(&mid, &state);
            let rhs = alpha * u.value(&a, &state) + (1.0 - alpha) * u.value(&b, &state);
            prop_assert!(lhs >= rhs - 1e-9);
        }

        #[test]
        fn lipschitz_with_declared_bound(
            a in proptest::collection::vec(0.0f64..5.0, 2),
            b in proptest::collection::vec(0.0f64..5.0, 2),
            s in proptest::collection::vec(0.0f64..4.0, 2),
        ) {
            let (a, b) = (simplex_point(a, 5.0), simplex_point(b, 5.0));
            let u = LogUtility;
            let d = u.subgradient_bounds(&[4.0, 4.0]);
            let d_norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dist = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let state = st(&s);
            prop_assert!((u.value(&a, &state) - u.value(&b, &state)).abs() <= d_norm * dist + 1e-9);
        }
    }
}
