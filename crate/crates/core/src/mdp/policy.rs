use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Mdp, MdpError};

/// Anything that assigns an action distribution to a history.
///
/// `history` is `[s_1, a_1, s_2, a_2, ..., s_t]`; stages are 1-based.
pub trait Policy {
    fn action_distribution(&self, t: usize, history: &[usize]) -> Vec<(usize, f64)>;

    /// Checks the policy against the MDP's action sets.
    fn check(&self, m: &Mdp) -> Result<(), MdpError>;
}

/// Markov deterministic policy: one action per state, reused at every stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub choice: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(choice: Vec<usize>) -> Self {
        Self { choice }
    }

    /// The policy that plays `action` wherever it is available and the
    /// first available action elsewhere.
    pub fn constant(m: &Mdp, action: usize) -> Self {
        Self {
            choice: (0..m.num_states())
                .map(|s| {
                    if m.is_available(s, action) {
                        action
                    } else {
                        m.available(s)[0]
                    }
                })
                .collect(),
        }
    }

    /// `"s1=a1,s2=a1"`-style rendering.
    pub fn describe(&self, m: &Mdp) -> String {
        self.choice
            .iter()
            .enumerate()
            .map(|(s, a)| format!("{}={}", m.state_name(s), m.action_name(*a)))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses `"s1=a1,s2=a2"`. States left out take their first available
    /// action only when they have exactly one.
    pub fn parse(m: &Mdp, text: &str) -> Result<Self, MdpError> {
        let mut choice: Vec<Option<usize>> = vec![None; m.num_states()];
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (s, a) = part
                .split_once('=')
                .ok_or_else(|| MdpError::PolicyShape(format!("expected state=action, got '{part}'")))?;
            choice[m.state_index(s.trim())?] = Some(m.action_index(a.trim())?);
        }
        let choice = choice
            .into_iter()
            .enumerate()
            .map(|(s, c)| match c {
                Some(a) => Ok(a),
                None if m.available(s).len() == 1 => Ok(m.available(s)[0]),
                None => Err(MdpError::PolicyShape(format!(
                    "no action given for state {}",
                    m.state_name(s)
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let p = Self { choice };
        p.check(m)?;
        Ok(p)
    }
}

impl Policy for DeterministicPolicy {
    fn action_distribution(&self, _t: usize, history: &[usize]) -> Vec<(usize, f64)> {
        vec![(self.choice[*history.last().expect("empty history")], 1.0)]
    }

    fn check(&self, m: &Mdp) -> Result<(), MdpError> {
        if self.choice.len() != m.num_states() {
            return Err(MdpError::PolicyShape(format!(
                "{} choices for {} states",
                self.choice.len(),
                m.num_states()
            )));
        }
        for (s, &a) in self.choice.iter().enumerate() {
            if a >= m.num_actions() || !m.is_available(s, a) {
                return Err(MdpError::UnavailableAction {
                    state: m.state_name(s).to_string(),
                    action: m.actions().get(a).cloned().unwrap_or_else(|| a.to_string()),
                });
            }
        }
        Ok(())
    }
}

/// Markov randomized policy, `dist[s][a] = π(s, a)` over all actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedPolicy {
    pub dist: Vec<Vec<f64>>,
}

impl RandomizedPolicy {
    pub fn new(dist: Vec<Vec<f64>>) -> Self {
        Self { dist }
    }

    /// Mixture `Σ_k w_k π_k` taken state by state.
    pub fn mixture(m: &Mdp, parts: &[(f64, &DeterministicPolicy)]) -> Self {
        let mut dist = vec![vec![0.0; m.num_actions()]; m.num_states()];
        for (w, p) in parts {
            for (s, &a) in p.choice.iter().enumerate() {
                dist[s][a] += w;
            }
        }
        Self { dist }
    }
}

impl From<&DeterministicPolicy> for RandomizedPolicy {
    fn from(p: &DeterministicPolicy) -> Self {
        let na = p.choice.iter().copied().max().map_or(0, |x| x + 1);
        Self {
            dist: p
                .choice
                .iter()
                .map(|&a| {
                    let mut row = vec![0.0; na];
                    row[a] = 1.0;
                    row
                })
                .collect(),
        }
    }
}

impl Policy for RandomizedPolicy {
    fn action_distribution(&self, _t: usize, history: &[usize]) -> Vec<(usize, f64)> {
        let s = *history.last().expect("empty history");
        self.dist[s]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(a, p)| (a, *p))
            .collect()
    }

    fn check(&self, m: &Mdp) -> Result<(), MdpError> {
        if self.dist.len() != m.num_states() {
            return Err(MdpError::PolicyShape("row count".into()));
        }
        for (s, row) in self.dist.iter().enumerate() {
            let mut sum = 0.0;
            for (a, &p) in row.iter().enumerate() {
                if p < 0.0 || !p.is_finite() {
                    return Err(MdpError::PolicyShape(format!("negative weight in state {s}")));
                }
                if p > 0.0 && (a >= m.num_actions() || !m.is_available(s, a)) {
                    return Err(MdpError::UnavailableAction {
                        state: m.state_name(s).to_string(),
                        action: a.to_string(),
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MdpError::PolicyShape(format!(
                    "row for state {} sums to {sum}",
                    m.state_name(s)
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic history-dependent policy keyed by
/// `[s_1, a_1, ..., s_t]`. Only histories the policy itself can reach are
/// stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryPolicy {
    pub horizon: usize,
    pub choice: BTreeMap<Vec<usize>, usize>,
}

impl HistoryPolicy {
    pub fn new(horizon: usize, choice: BTreeMap<Vec<usize>, usize>) -> Self {
        Self { horizon, choice }
    }

    pub fn describe(&self, m: &Mdp) -> String {
        self.choice
            .iter()
            .map(|(h, a)| {
                let path = h
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        if i % 2 == 0 {
                            m.state_name(*x).to_string()
                        } else {
                            m.action_name(*x).to_string()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(">");
                format!("{path}={}", m.action_name(*a))
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Policy for HistoryPolicy {
    fn action_distribution(&self, t: usize, history: &[usize]) -> Vec<(usize, f64)> {
        debug_assert_eq!(history.len(), 2 * t - 1);
        match self.choice.get(history) {
            Some(&a) => vec![(a, 1.0)],
            None => panic!("history policy undefined at {history:?}"),
        }
    }

    fn check(&self, m: &Mdp) -> Result<(), MdpError> {
        for (h, &a) in &self.choice {
            let s = *h
                .last()
                .ok_or_else(|| MdpError::PolicyShape("empty history".into()))?;
            if s >= m.num_states() || a >= m.num_actions() || !m.is_available(s, a) {
                return Err(MdpError::UnavailableAction {
                    state: s.to_string(),
                    action: a.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Output of policy enumeration: Markov at horizon one, history-dependent
/// beyond.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumeratedPolicy {
    Markov(DeterministicPolicy),
    History(HistoryPolicy),
}

impl EnumeratedPolicy {
    pub fn describe(&self, m: &Mdp) -> String {
        match self {
            EnumeratedPolicy::Markov(p) => p.describe(m),
            EnumeratedPolicy::History(p) => p.describe(m),
        }
    }

    pub fn as_markov(&self) -> Option<&DeterministicPolicy> {
        match self {
            EnumeratedPolicy::Markov(p) => Some(p),
            EnumeratedPolicy::History(_) => None,
        }
    }
}

impl Policy for EnumeratedPolicy {
    fn action_distribution(&self, t: usize, history: &[usize]) -> Vec<(usize, f64)> {
        match self {
            EnumeratedPolicy::Markov(p) => p.action_distribution(t, history),
            EnumeratedPolicy::History(p) => p.action_distribution(t, history),
        }
    }

    fn check(&self, m: &Mdp) -> Result<(), MdpError> {
        match self {
            EnumeratedPolicy::Markov(p) => p.check(m),
            EnumeratedPolicy::History(p) => p.check(m),
        }
    }
}
