//! Finite MDPs with a uniform action count.
//!
//! State-action pairs are flattened as `idx = s * A + a`, and transition rows
//! as `(s * A + a) * S + s'`. Every vector type in the crate uses the same
//! layout, so CSV output indexed by `idx` is stable across runs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};

/// Absolute tolerance on transition-row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A finite MDP `(S, A, P, r, γ)` together with the risk parameter `θ`.
///
/// Construction only checks shapes. Probability and parameter constraints are
/// reported by [`TabularMdp::validate`] and never silently repaired.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    discount: f64,
    risk: f64,
}

/// One failed constraint found by [`TabularMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    ProbabilityRange {
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    Discount(f64),
    Risk(f64),
    NonFiniteReward {
        state: usize,
        action: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => {
                write!(f, "row P[{state}][{action}][.] sums to {sum:e}, not 1")
            }
            Violation::ProbabilityRange {
                state,
                action,
                next_state,
                value,
            } => write!(
                f,
                "P[{state}][{action}][{next_state}] = {value:e} is outside [0, 1]"
            ),
            Violation::Discount(g) => write!(f, "discount {g} is not in [0, 1)"),
            Violation::Risk(t) => write!(f, "risk parameter {t} is not strictly positive"),
            Violation::NonFiniteReward {
                state,
                action,
                value,
            } => {
                write!(f, "reward r[{state}][{action}] = {value} is not finite")
            }
        }
    }
}

/// Result of [`TabularMdp::validate`]; empty iff every invariant holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl TabularMdp {
    /// Builds an MDP from nested `transitions[s][a][s']` and `rewards[s][a]`.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        discount: f64,
        risk: f64,
    ) -> Result<Self> {
        let num_states = transitions.len();
        if num_states == 0 {
            return Err(domain("an MDP needs at least one state"));
        }
        let num_actions = transitions[0].len();
        if num_actions == 0 {
            return Err(domain("an MDP needs at least one action"));
        }
        if rewards.len() != num_states {
            return Err(domain(format!(
                "rewards has {} rows, expected {num_states}",
                rewards.len()
            )));
        }
        let mut flat_p = Vec::with_capacity(num_states * num_actions * num_states);
        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        for (s, (rows, rs)) in transitions.iter().zip(&rewards).enumerate() {
            if rows.len() != num_actions || rs.len() != num_actions {
                return Err(domain(format!(
                    "state {s} has {} transition rows and {} rewards, expected {num_actions}",
                    rows.len(),
                    rs.len()
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != num_states {
                    return Err(domain(format!(
                        "row P[{s}][{a}] has length {}, expected {num_states}",
                        row.len()
                    )));
                }
                flat_p.extend_from_slice(row);
            }
            flat_r.extend_from_slice(rs);
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions: flat_p,
            rewards: flat_r,
            discount,
            risk,
        })
    }

    /// Like [`TabularMdp::new`] but also rejects MDPs whose validation report is non-empty.
    pub fn new_validated(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        discount: f64,
        risk: f64,
    ) -> Result<Self> {
        let mdp = Self::new(transitions, rewards, discount, risk)?;
        mdp.ensure_valid()?;
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of state-action pairs, `S * A`.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    #[inline]
    pub fn index(&self, state: usize, action: usize) -> usize {
        state * self.num_actions + action
    }

    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = self.index(state, action) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[self.index(state, action)]
    }

    /// Rewards in flat `s * A + a` order.
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// The user-facing risk parameter `θ`.
    pub fn risk(&self) -> f64 {
        self.risk
    }

    /// The internal exponent `θ̂ = θ / γ` used by `F` and `F_π`.
    pub fn risk_hat(&self) -> f64 {
        self.risk / self.discount
    }

    /// `‖r‖_∞ = max |r(s, a)|`.
    pub fn reward_sup_norm(&self) -> f64 {
        self.rewards.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    pub fn transitions_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| self.transition_row(s, a).to_vec())
                    .collect()
            })
            .collect()
    }

    pub fn rewards_nested(&self) -> Vec<Vec<f64>> {
        self.rewards
            .chunks(self.num_actions)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Checks every invariant and reports each failure with its index.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.transition_row(s, a);
                for (sp, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        violations.push(Violation::ProbabilityRange {
                            state: s,
                            action: a,
                            next_state: sp,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                    violations.push(Violation::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                let r = self.reward(s, a);
                if !r.is_finite() {
                    violations.push(Violation::NonFiniteReward {
                        state: s,
                        action: a,
                        value: r,
                    });
                }
            }
        }
        if !(0.0..1.0).contains(&self.discount) {
            violations.push(Violation::Discount(self.discount));
        }
        if !(self.risk > 0.0 && self.risk.is_finite()) {
            violations.push(Violation::Risk(self.risk));
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_clean() {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid MDP: {report}")))
        }
    }

    pub fn to_document(&self) -> MdpDocument {
        MdpDocument {
            num_states: self.num_states,
            num_actions: self.num_actions,
            discount: self.discount,
            risk: self.risk,
            rewards: self.rewards_nested(),
            transitions: self.transitions_nested(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        doc.into_mdp()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Git-style content hash: SHA-256 over `"blob <len>\0"` followed by the
    /// compact JSON encoding.
    pub fn content_hash(&self) -> String {
        let body = serde_json::to_vec(&self.to_document()).expect("finite MDP serializes");
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", body.len()).as_bytes());
        hasher.update(&body);
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// On-disk JSON schema for an MDP.
///
/// Floats are written with the shortest representation that round-trips, so
/// load(save(m)) reproduces `m` bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub risk: f64,
    pub rewards: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl MdpDocument {
    pub fn into_mdp(self) -> Result<TabularMdp> {
        let mdp = TabularMdp::new(self.transitions, self.rewards, self.discount, self.risk)?;
        if mdp.num_states != self.num_states || mdp.num_actions != self.num_actions {
            return Err(domain(format!(
                "declared shape {}x{} does not match data shape {}x{}",
                self.num_states, self.num_actions, mdp.num_states, mdp.num_actions
            )));
        }
        Ok(mdp)
    }
}

/// Constants derived from an MDP that bound every iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// `θ / γ`
    pub theta_hat: f64,
    /// `‖r‖_∞ / (1 − γ)`, the bound on `‖Q‖_∞`.
    pub c_max: f64,
    /// `exp(−θ‖r‖_∞ / (γ(1 − γ)))`
    pub c_ell: f64,
    /// `exp(θ‖r‖_∞ / (γ(1 − γ)))`
    pub c_u: f64,
}

impl DerivedConstants {
    pub fn of(mdp: &TabularMdp) -> Self {
        let ln_c_u = Self::ln_upper(mdp);
        Self {
            theta_hat: mdp.risk_hat(),
            c_max: mdp.reward_sup_norm() / (1.0 - mdp.discount()),
            c_ell: (-ln_c_u).exp(),
            c_u: ln_c_u.exp(),
        }
    }

    fn ln_upper(mdp: &TabularMdp) -> f64 {
        let r_inf = mdp.reward_sup_norm();
        if r_inf == 0.0 {
            return 0.0;
        }
        let gamma = mdp.discount();
        mdp.risk() * r_inf / (gamma * (1.0 - gamma))
    }

    /// `ln C_u`, which stays finite even when `C_u` itself overflows.
    pub fn ln_c_u(&self) -> f64 {
        self.theta_hat * self.c_max
    }

    /// Whether every entry lies in `[C_ℓ, C_u]` up to a relative slack.
    pub fn box_contains(&self, values: &[f64], rel_slack: f64) -> bool {
        let lo = self.c_ell * (1.0 - rel_slack);
        let hi = self.c_u * (1.0 + rel_slack);
        values.iter().all(|&v| v >= lo && v <= hi)
    }
}

pub fn validate_mdp(mdp: &TabularMdp) -> ValidationReport {
    mdp.validate()
}

pub fn derived_constants(mdp: &TabularMdp) -> DerivedConstants {
    DerivedConstants::of(mdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_state_risky_fixture;

    #[test]
    fn fixture_validates_clean() {
        assert!(two_state_risky_fixture().validate().is_clean());
    }

    #[test]
    fn scaled_row_reports_one_row_sum_violation() {
        let f = two_state_risky_fixture();
        let mut p = f.transitions_nested();
        for v in &mut p[0][0] {
            *v *= 1.1;
        }
        let mdp = TabularMdp::new(p, f.rewards_nested(), f.discount(), f.risk()).unwrap();
        let report = mdp.validate();
        // P[0][0] = (1, 0) scaled to (1.1, 0): one row-sum and one range violation
        let row_sums: Vec<_> = report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::RowSum { .. }))
            .collect();
        assert_eq!(row_sums.len(), 1);
        assert!(matches!(
            row_sums[0],
            Violation::RowSum {
                state: 0,
                action: 0,
                ..
            }
        ));
    }

    #[test]
    fn discount_of_one_is_reported() {
        let f = two_state_risky_fixture();
        let mdp =
            TabularMdp::new(f.transitions_nested(), f.rewards_nested(), 1.0, f.risk()).unwrap();
        assert_eq!(mdp.validate().violations, vec![Violation::Discount(1.0)]);
    }

    #[test]
    fn nonpositive_risk_and_nan_reward_are_reported() {
        let f = two_state_risky_fixture();
        let mut r = f.rewards_nested();
        r[1][1] = f64::NAN;
        let mdp = TabularMdp::new(f.transitions_nested(), r, 0.9, 0.0).unwrap();
        let report = mdp.validate();
        assert_eq!(report.violations.len(), 2);
        assert!(report.to_string().contains("r[1][1]"));
    }

    #[test]
    fn ragged_shapes_are_rejected() {
        let err = TabularMdp::new(
            vec![vec![vec![1.0]], vec![]],
            vec![vec![0.0], vec![0.0]],
            0.5,
            1.0,
        );
        assert!(err.is_err());
        let err = TabularMdp::new(vec![vec![vec![1.0, 0.0]]], vec![vec![0.0]], 0.5, 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn fixture_constants() {
        let c = derived_constants(&two_state_risky_fixture());
        assert!((c.c_max - 100.0).abs() < 1e-12);
        assert!((c.c_ell - (-100.0_f64 / 9.0).exp()).abs() <= 1e-15 * c.c_ell.max(1.0));
        assert!((c.c_u.ln() - 100.0 / 9.0).abs() < 1e-12);
        assert!((c.theta_hat - 0.1 / 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_reward_constants_are_unit() {
        let mdp = TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![0.0]], 0.9, 0.3).unwrap();
        let c = derived_constants(&mdp);
        assert_eq!((c.c_ell, c.c_u, c.c_max), (1.0, 1.0, 0.0));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mdp = crate::fixtures::random_mdp(3, 2, (-1.0, 1.0), 0.87, 0.3, 11).unwrap();
        let back = TabularMdp::from_json(&mdp.to_json().unwrap()).unwrap();
        assert_eq!(mdp, back);
        assert_eq!(mdp.content_hash(), back.content_hash());
    }

    #[test]
    fn json_shape_mismatch_is_rejected() {
        let mut doc = two_state_risky_fixture().to_document();
        doc.num_states = 3;
        assert!(doc.into_mdp().is_err());
    }
}
