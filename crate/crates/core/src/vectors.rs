//! Value vectors over state-action pairs, stationary policies, and the two
//! metrics they are compared in.

use std::ops::Deref;

use crate::error::{domain, Result};

/// Strictly positive vector on the exponential-utility scale, indexed `s * A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityVector(Vec<f64>);

/// Finite vector on the certainty-equivalent (reward) scale, indexed `s * A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct QVector(Vec<f64>);

impl UtilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(domain(format!(
                "utility entry {i} = {v} is not a positive finite number"
            )));
        }
        Ok(Self(values))
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    /// Exponentiates log-utilities. Entries above `ln f64::MAX` saturate to `+inf`.
    pub fn from_log(log_values: &[f64]) -> Self {
        Self(log_values.iter().map(|v| v.exp()).collect())
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| *v > 0.0));
        Self(values)
    }

    pub fn ln(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.ln()).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl QVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(domain(format!("Q entry {i} = {v} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for UtilityVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for QVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-state distribution over actions, stored row-major `s * A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = probs.len();
        let num_actions = probs.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(domain("a policy needs at least one state and one action"));
        }
        let mut flat = Vec::with_capacity(num_states * num_actions);
        for (s, row) in probs.iter().enumerate() {
            if row.len() != num_actions {
                return Err(domain(format!("policy row {s} has length {}", row.len())));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(domain(format!(
                    "policy row {s} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > crate::mdp::ROW_SUM_TOLERANCE {
                return Err(domain(format!("policy row {s} sums to {sum}")));
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            num_states,
            num_actions,
            probs: flat,
        })
    }

    /// Deterministic policy choosing `actions[s]` at state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        if actions.is_empty() || num_actions == 0 {
            return Err(domain("a policy needs at least one state and one action"));
        }
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(domain(format!("action {a} at state {s} is out of range")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Ok(Self {
            num_states: actions.len(),
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    /// The chosen action per state, if every row is one-hot.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.num_states)
            .map(|s| {
                let row = self.row(s);
                let a = row.iter().position(|&p| p == 1.0)?;
                row.iter()
                    .enumerate()
                    .all(|(b, &p)| b == a || p == 0.0)
                    .then_some(a)
            })
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.actions().is_some()
    }
}

/// Thompson (sup-log) metric `max_i |ln x1_i − ln x2_i|` on positive vectors.
pub fn sup_log_distance(x1: &[f64], x2: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(domain(format!(
            "length mismatch: {} vs {}",
            x1.len(),
            x2.len()
        )));
    }
    let mut d = 0.0_f64;
    for (i, (&a, &b)) in x1.iter().zip(x2).enumerate() {
        if !(a > 0.0 && b > 0.0) {
            return Err(domain(format!(
                "entry {i} is not strictly positive ({a}, {b})"
            )));
        }
        d = d.max((a.ln() - b.ln()).abs());
    }
    Ok(d)
}

/// `max_i |q1_i − q2_i|`.
pub fn linf_distance(q1: &[f64], q2: &[f64]) -> Result<f64> {
    if q1.len() != q2.len() {
        return Err(domain(format!(
            "length mismatch: {} vs {}",
            q1.len(),
            q2.len()
        )));
    }
    Ok(q1
        .iter()
        .zip(q2)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sup_log_basic_values() {
        let x = [0.3, 2.0, 7.5];
        assert_eq!(sup_log_distance(&x, &x).unwrap(), 0.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        assert!((sup_log_distance(&scaled, &x).unwrap() - 3.0_f64.ln()).abs() < 1e-15);
        // (1,2) vs (2,1): both coordinates differ by ln 2
        let d = sup_log_distance(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert_eq!(d, std::f64::consts::LN_2);
    }

    #[test]
    fn sup_log_rejects_nonpositive_and_mismatched() {
        assert!(sup_log_distance(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(sup_log_distance(&[1.0, -2.0], &[1.0, 1.0]).is_err());
        assert!(sup_log_distance(&[1.0], &[1.0, 1.0]).is_err());
        assert!(UtilityVector::new(vec![1.0, 0.0]).is_err());
        assert!(UtilityVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn linf_values() {
        assert_eq!(linf_distance(&[0.0, 0.0], &[1.0, -3.0]).unwrap(), 3.0);
        assert_eq!(linf_distance(&[4.0, 2.0], &[4.0, 2.0]).unwrap(), 0.0);
        assert!(QVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn deterministic_policy_round_trip() {
        let pi = StationaryPolicy::deterministic(&[1, 0, 2], 3).unwrap();
        assert_eq!(pi.actions(), Some(vec![1, 0, 2]));
        assert!(!StationaryPolicy::uniform(2, 2).is_deterministic());
        assert!(StationaryPolicy::deterministic(&[3], 3).is_err());
        assert!(StationaryPolicy::new(vec![vec![0.5, 0.6]]).is_err());
    }

    fn positive_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(1e-3f64..1e3, len)
    }

    proptest! {
        #[test]
        fn sup_log_is_a_metric(
            (a, b, c) in (1usize..12).prop_flat_map(|n| (positive_vec(n), positive_vec(n), positive_vec(n)))
        ) {
            let ab = sup_log_distance(&a, &b).unwrap();
            let ba = sup_log_distance(&b, &a).unwrap();
            let bc = sup_log_distance(&b, &c).unwrap();
            let ac = sup_log_distance(&a, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(sup_log_distance(&a, &a).unwrap(), 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }

        #[test]
        fn linf_matches_elementwise_loop(
            (a, b) in (1usize..16).prop_flat_map(|n| (
                proptest::collection::vec(-1e3f64..1e3, n),
                proptest::collection::vec(-1e3f64..1e3, n),
            ))
        ) {
            let mut oracle = 0.0_f64;
            for i in 0..a.len() {
                let d = (a[i] - b[i]).abs();
                if d > oracle {
                    oracle = d;
                }
            }
            prop_assert_eq!(linf_distance(&a, &b).unwrap(), oracle);
        }
    }
}
