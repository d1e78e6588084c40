//! Transition samplers feeding `(s_n, a_n, s_{n+1})` streams to the learners.
//!
//! Two regimes are supported: a generative model, where each `(s_n, a_n)` is
//! drawn afresh from a distribution `ν` over pairs, and a single Markovian
//! trajectory driven by a behavior policy.
//!
//! The draw order per step is fixed so that a stream is reproducible from its
//! seed alone:
//!
//! * generative: one uniform picks the pair from `ν`, one uniform picks `s'`;
//! * markovian: on the first step one uniform picks `s_0`; then for ε-greedy one
//!   uniform decides exploration and, when exploring, one more picks the
//!   action (uniform behavior always draws one uniform for the action); finally
//!   one uniform picks `s'`.
//!
//! Generated MDPs have strictly positive transitions, so with a fully
//! supported behavior policy the induced chain is uniformly ergodic. The
//! samplers do not check ergodicity of user-supplied MDPs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::mdp::TabularMdp;
use crate::operators::{greedy_actions_from_q, greedy_actions_from_x};
use crate::rng::StreamRng;

pub const DEFAULT_EPSILON: f64 = 0.1;

/// Smallest index `i` whose cumulative sum exceeds `u`.
///
/// If rounding leaves the total below `u`, the last index with positive mass
/// is returned.
pub fn inverse_cdf_sample(row: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, &p) in row.iter().enumerate() {
        cumulative += p;
        if cumulative > u {
            return i;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    UniformRandom,
    EpsilonGreedy { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingMode {
    /// i.i.d. pairs from `nu` (uniform over pairs when `None`).
    GenerativeIid {
        nu: Option<Vec<f64>>,
    },
    Markovian {
        behavior: Behavior,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    #[serde(flatten)]
    pub mode: SamplingMode,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl SamplerConfig {
    pub fn generative_uniform(seed: u64) -> Self {
        Self {
            mode: SamplingMode::GenerativeIid { nu: None },
            seed,
            stream: 0,
        }
    }

    pub fn markovian(behavior: Behavior, seed: u64) -> Self {
        Self {
            mode: SamplingMode::Markovian { behavior },
            seed,
            stream: 0,
        }
    }

    pub fn epsilon_greedy(epsilon: f64, seed: u64) -> Self {
        Self::markovian(Behavior::EpsilonGreedy { epsilon }, seed)
    }

    pub fn validate(&self, num_pairs: usize) -> Result<()> {
        match &self.mode {
            SamplingMode::GenerativeIid { nu: Some(nu) } => {
                if nu.len() != num_pairs {
                    return Err(config(format!(
                        "nu has {} entries, expected {num_pairs}",
                        nu.len()
                    )));
                }
                let total: f64 = nu.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(config(format!("nu sums to {total}")));
                }
                let lambda = nu.iter().copied().fold(f64::INFINITY, f64::min);
                if !(lambda > 0.0) {
                    return Err(config("nu must give every state-action pair positive mass"));
                }
            }
            SamplingMode::GenerativeIid { nu: None } => {}
            SamplingMode::Markovian {
                behavior: Behavior::EpsilonGreedy { epsilon },
            } => {
                if !(*epsilon > 0.0 && *epsilon <= 1.0) {
                    return Err(config(format!("epsilon {epsilon} is not in (0, 1]")));
                }
            }
            SamplingMode::Markovian {
                behavior: Behavior::UniformRandom,
            } => {}
        }
        Ok(())
    }
}

/// What ε-greedy behavior is greedy with respect to.
#[derive(Debug, Clone, Copy)]
pub enum Preference<'a> {
    /// All actions tie; greedy picks action 0.
    Indifferent,
    /// Greedy maximizes (Q-scale estimates).
    Maximize(&'a [f64]),
    /// Greedy minimizes (utility-scale estimates).
    Minimize(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub step: u64,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

#[derive(Debug, Clone)]
pub struct Sampler {
    rng: StreamRng,
    mode: SamplingMode,
    num_states: usize,
    num_actions: usize,
    current_state: Option<usize>,
    step: u64,
}

impl Sampler {
    pub fn new(config: &SamplerConfig, mdp: &TabularMdp) -> Result<Self> {
        config.validate(mdp.num_pairs())?;
        Ok(Self {
            rng: StreamRng::new(config.seed, config.stream),
            mode: config.mode.clone(),
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            current_state: None,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Draws `s' ~ P(.|state, action)`.
    #[inline]
    pub fn sample_next_state(&mut self, mdp: &TabularMdp, state: usize, action: usize) -> usize {
        inverse_cdf_sample(mdp.transition_row(state, action), self.rng.uniform())
    }

    pub fn next_transition(&mut self, mdp: &TabularMdp, preference: Preference<'_>) -> Transition {
        let (state, action) = match &self.mode {
            SamplingMode::GenerativeIid { nu } => {
                let pair = match nu {
                    Some(nu) => inverse_cdf_sample(nu, self.rng.uniform()),
                    None => self.rng.index(self.num_states * self.num_actions),
                };
                (pair / self.num_actions, pair % self.num_actions)
            }
            SamplingMode::Markovian { behavior } => {
                let state = match self.current_state {
                    Some(s) => s,
                    None => self.rng.index(self.num_states),
                };
                let action = match *behavior {
                    Behavior::UniformRandom => self.rng.index(self.num_actions),
                    Behavior::EpsilonGreedy { epsilon } => {
                        if self.rng.uniform() < epsilon {
                            self.rng.index(self.num_actions)
                        } else {
                            greedy_at(preference, state, self.num_actions)
                        }
                    }
                };
                (state, action)
            }
        };
        let next_state = self.sample_next_state(mdp, state, action);
        self.current_state = Some(next_state);
        let t = Transition {
            step: self.step,
            state,
            action,
            next_state,
        };
        self.step += 1;
        t
    }
}

fn greedy_at(preference: Preference<'_>, state: usize, num_actions: usize) -> usize {
    let range = state * num_actions..(state + 1) * num_actions;
    match preference {
        Preference::Indifferent => 0,
        Preference::Maximize(q) => greedy_actions_from_q(&q[range], num_actions)[0],
        Preference::Minimize(x) => greedy_actions_from_x(&x[range], num_actions)[0],
    }
}

/// Writes the optional transition log with columns `n,s,a,s_next`.
pub fn write_transition_log<W: Write>(writer: W, transitions: &[Transition]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "s", "a", "s_next"])?;
    for t in transitions {
        w.write_record([
            t.step.to_string(),
            t.state.to_string(),
            t.action.to_string(),
            t.next_state.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_mdp, two_state_risky_fixture};

    #[test]
    fn inverse_cdf_boundaries() {
        assert_eq!(inverse_cdf_sample(&[1.0, 0.0], 0.0), 0);
        assert_eq!(inverse_cdf_sample(&[1.0, 0.0], 0.999_999), 0);
        assert_eq!(inverse_cdf_sample(&[0.25, 0.75], 0.25), 1);
        assert_eq!(inverse_cdf_sample(&[0.25, 0.75], 0.249_999), 0);
        // cumulative rounding short of 1
        assert_eq!(
            inverse_cdf_sample(&[0.3, 0.3, 0.3999999999999], 0.999_999_999_999_99),
            2
        );
        assert_eq!(inverse_cdf_sample(&[0.5, 0.5 - 1e-15, 0.0], 1.0 - 1e-17), 1);
    }

    #[test]
    fn inverse_cdf_histogram_matches_row() {
        let row = [0.1, 0.2, 0.3, 0.4];
        let mut rng = StreamRng::new(3, 0);
        let n = 1_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[inverse_cdf_sample(&row, rng.uniform())] += 1;
        }
        for (c, p) in counts.iter().zip(row) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn deterministic_mdp_follows_forced_successor() {
        // 3-cycle regardless of action
        let p = vec![
            vec![vec![0.0, 1.0, 0.0]; 2],
            vec![vec![0.0, 0.0, 1.0]; 2],
            vec![vec![1.0, 0.0, 0.0]; 2],
        ];
        let mdp = TabularMdp::new(p, vec![vec![0.0; 2]; 3], 0.5, 1.0).unwrap();
        let cfg = SamplerConfig::markovian(Behavior::UniformRandom, 9);
        let mut sampler = Sampler::new(&cfg, &mdp).unwrap();
        let mut prev = None;
        for _ in 0..100 {
            let t = sampler.next_transition(&mdp, Preference::Indifferent);
            assert_eq!(t.next_state, (t.state + 1) % 3);
            if let Some(p) = prev {
                assert_eq!(t.state, p);
            }
            prev = Some(t.next_state);
        }
    }

    #[test]
    fn generative_frequencies_are_uniform() {
        let mdp = two_state_risky_fixture();
        let mut sampler = Sampler::new(&SamplerConfig::generative_uniform(4), &mdp).unwrap();
        let n = 1_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let t = sampler.next_transition(&mdp, Preference::Indifferent);
            counts[mdp.index(t.state, t.action)] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!(
                (c as f64 - n as f64 / 4.0).abs() < 3.0 * sigma,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let mdp = random_mdp(3, 2, (-1.0, 1.0), 0.9, 0.1, 1).unwrap();
        let q = vec![0.1, 0.5, -0.2, 0.3, 0.0, 0.0];
        for cfg in [
            SamplerConfig::generative_uniform(11),
            SamplerConfig::epsilon_greedy(0.3, 11),
        ] {
            let run = || {
                let mut s = Sampler::new(&cfg, &mdp).unwrap();
                (0..500)
                    .map(|_| s.next_transition(&mdp, Preference::Maximize(&q)))
                    .collect::<Vec<_>>()
            };
            let (a, b) = (run(), run());
            assert_eq!(a, b);
            let mut bytes_a = Vec::new();
            let mut bytes_b = Vec::new();
            write_transition_log(&mut bytes_a, &a).unwrap();
            write_transition_log(&mut bytes_b, &b).unwrap();
            assert_eq!(bytes_a, bytes_b);
            assert!(String::from_utf8(bytes_a)
                .unwrap()
                .starts_with("n,s,a,s_next\n0,"));
        }
    }

    #[test]
    fn epsilon_greedy_prefers_greedy_action() {
        let mdp = random_mdp(2, 3, (-1.0, 1.0), 0.9, 0.1, 2).unwrap();
        let x = vec![5.0, 0.5, 2.0, 3.0, 4.0, 0.1];
        let mut s = Sampler::new(&SamplerConfig::epsilon_greedy(0.1, 5), &mdp).unwrap();
        let mut greedy = 0;
        let n = 20_000;
        for _ in 0..n {
            let t = s.next_transition(&mdp, Preference::Minimize(&x));
            if (t.state, t.action) == (0, 1) || (t.state, t.action) == (1, 2) {
                greedy += 1;
            }
        }
        // expected greedy share 1 - ε + ε/3
        let share = greedy as f64 / n as f64;
        assert!((share - (0.9 + 0.1 / 3.0)).abs() < 0.01, "{share}");
    }

    #[test]
    fn generative_covers_every_pair_within_window() {
        let mdp = random_mdp(3, 3, (-1.0, 1.0), 0.9, 0.1, 2).unwrap();
        let nu: Vec<f64> = {
            let raw: Vec<f64> = (1..=9).map(f64::from).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / t).collect()
        };
        let lambda = nu[0];
        let window = (50.0 / lambda).ceil() as usize;
        let cfg = SamplerConfig {
            mode: SamplingMode::GenerativeIid { nu: Some(nu) },
            seed: 8,
            stream: 0,
        };
        let mut s = Sampler::new(&cfg, &mdp).unwrap();
        for _ in 0..20 {
            let mut seen = [false; 9];
            for _ in 0..window {
                let t = s.next_transition(&mdp, Preference::Indifferent);
                seen[mdp.index(t.state, t.action)] = true;
            }
            assert!(seen.iter().all(|v| *v));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mdp = two_state_risky_fixture();
        assert!(Sampler::new(&SamplerConfig::epsilon_greedy(0.0, 1), &mdp).is_err());
        assert!(Sampler::new(&SamplerConfig::epsilon_greedy(1.5, 1), &mdp).is_err());
        let bad_nu = SamplerConfig {
            mode: SamplingMode::GenerativeIid {
                nu: Some(vec![0.5, 0.5, 0.0, 0.0]),
            },
            seed: 0,
            stream: 0,
        };
        assert!(Sampler::new(&bad_nu, &mdp).is_err());
    }

    #[test]
    fn config_serde_shape() {
        let cfg = SamplerConfig::epsilon_greedy(0.1, 3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(
            text,
            r#"{"mode":"markovian","behavior":{"kind":"epsilon_greedy","epsilon":0.1},"seed":3,"stream":0}"#
        );
        let back: SamplerConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
