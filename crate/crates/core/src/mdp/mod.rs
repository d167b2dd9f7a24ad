//! Finite MDPs, policies and exact return distributions.

mod policy;
pub mod random;
mod returns;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::RiskError;

pub use policy::{DeterministicPolicy, EnumeratedPolicy, HistoryPolicy, Policy, RandomizedPolicy};
pub use returns::{
    conditional_return_distribution, count_deterministic_policies, default_atom_budget,
    enumerate_deterministic_policies, return_distribution, return_distribution_with_budget, ATOM_BUDGET_ENV,
    DEFAULT_ATOM_BUDGET,
};

/// Tolerance on transition-row and initial-distribution mass.
pub const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("enumeration needs {needed} atoms or policies, budget is {budget}")]
    ExplosionGuard { needed: u128, budget: usize },
    #[error("unknown state '{0}'")]
    UnknownState(String),
    #[error("unknown action '{0}'")]
    UnknownAction(String),
    #[error("policy chooses unavailable action {action} in state {state}")]
    UnavailableAction { state: String, action: String },
    #[error("policy does not match the MDP: {0}")]
    PolicyShape(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// One failed MDP invariant, naming the offending entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    NoStates,
    NoActions,
    ZeroHorizon,
    NoAvailableActions {
        state: String,
    },
    MissingRow {
        state: String,
        action: String,
    },
    RowMass {
        state: String,
        action: String,
        sum: f64,
    },
    NegativeProbability {
        state: String,
        action: String,
        next: String,
        p: f64,
    },
    MissingReward {
        state: String,
        action: String,
        next: String,
    },
    NonFiniteReward {
        state: String,
        action: String,
        next: String,
    },
    InitialMass {
        sum: f64,
    },
    ZeroInitialMass {
        state: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => f.write_str("NoStates"),
            Violation::NoActions => f.write_str("NoActions"),
            Violation::ZeroHorizon => f.write_str("ZeroHorizon"),
            Violation::NoAvailableActions { state } => write!(f, "NoAvailableActions({state})"),
            Violation::MissingRow { state, action } => write!(f, "MissingRow({state},{action})"),
            Violation::RowMass { state, action, sum } => {
                write!(f, "RowMass({state},{action}) sums to {sum}")
            }
            Violation::NegativeProbability {
                state,
                action,
                next,
                p,
            } => {
                write!(f, "NegativeProbability({state},{action},{next}) = {p}")
            }
            Violation::MissingReward { state, action, next } => {
                write!(f, "MissingReward({state},{action},{next})")
            }
            Violation::NonFiniteReward { state, action, next } => {
                write!(f, "NonFiniteReward({state},{action},{next})")
            }
            Violation::InitialMass { sum } => write!(f, "InitialMass sums to {sum}"),
            Violation::ZeroInitialMass { state } => write!(f, "ZeroInitialMass({state})"),
        }
    }
}

/// A finite-horizon MDP with per-state action sets.
///
/// States and actions are addressed by dense indices; the string ids are
/// kept for reports. Transition rows and rewards are stored densely as
/// `[s][a][s']`; rows of unavailable actions are empty and rewards on
/// zero-probability transitions may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    states: Vec<String>,
    actions: Vec<String>,
    available: Vec<Vec<usize>>,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<Vec<Option<f64>>>>,
    initial: Vec<f64>,
    horizon: usize,
}

impl Mdp {
    pub fn builder() -> MdpBuilder {
        MdpBuilder::default()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.actions[a]
    }

    pub fn state_index(&self, name: &str) -> Result<usize, MdpError> {
        self.states
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| MdpError::UnknownState(name.to_string()))
    }

    pub fn action_index(&self, name: &str) -> Result<usize, MdpError> {
        self.actions
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| MdpError::UnknownAction(name.to_string()))
    }

    /// Sorted action indices available in `s`.
    pub fn available(&self, s: usize) -> &[usize] {
        &self.available[s]
    }

    pub fn is_available(&self, s: usize, a: usize) -> bool {
        self.available[s].binary_search(&a).is_ok()
    }

    /// Transition row `p(s, a, ·)`; empty when `a` is unavailable in `s`.
    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s][a]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> Option<f64> {
        self.rewards[s][a].get(next).copied().flatten()
    }

    /// `(s', p, r)` for every successor with positive probability.
    pub fn successors(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.transitions[s][a]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(sp, p)| (sp, *p, self.rewards[s][a][sp].unwrap_or(0.0)))
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Same MDP with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Mdp {
        Mdp {
            horizon,
            ..self.clone()
        }
    }

    /// Largest minus smallest reward over positive-probability transitions.
    pub fn reward_range(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..self.num_states() {
            for &a in self.available(s) {
                for (_, _, r) in self.successors(s, a) {
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
        }
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    /// Every failed invariant; empty iff the MDP is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.states.is_empty() {
            out.push(Violation::NoStates);
        }
        if self.actions.is_empty() {
            out.push(Violation::NoActions);
        }
        if self.horizon == 0 {
            out.push(Violation::ZeroHorizon);
        }
        let n = self.num_states();
        for s in 0..n {
            let state = self.states[s].clone();
            if self.available[s].is_empty() {
                out.push(Violation::NoAvailableActions { state: state.clone() });
            }
            for &a in &self.available[s] {
                let action = self.actions[a].clone();
                let row = &self.transitions[s][a];
                if row.len() != n {
                    out.push(Violation::MissingRow {
                        state: state.clone(),
                        action,
                    });
                    continue;
                }
                let mut sum = 0.0;
                for (sp, &p) in row.iter().enumerate() {
                    if p < 0.0 || !p.is_finite() {
                        out.push(Violation::NegativeProbability {
                            state: state.clone(),
                            action: action.clone(),
                            next: self.states[sp].clone(),
                            p,
                        });
                        continue;
                    }
                    sum += p;
                    if p > 0.0 {
                        match self.rewards[s][a].get(sp).copied().flatten() {
                            None => out.push(Violation::MissingReward {
                                state: state.clone(),
                                action: action.clone(),
                                next: self.states[sp].clone(),
                            }),
                            Some(r) if !r.is_finite() => out.push(Violation::NonFiniteReward {
                                state: state.clone(),
                                action: action.clone(),
                                next: self.states[sp].clone(),
                            }),
                            Some(_) => {}
                        }
                    }
                }
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    out.push(Violation::RowMass {
                        state: state.clone(),
                        action,
                        sum,
                    });
                }
            }
        }
        if self.initial.len() == n && n > 0 {
            let sum: f64 = self.initial.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                out.push(Violation::InitialMass { sum });
            }
            for (s, &p) in self.initial.iter().enumerate() {
                if p.is_nan() || p <= 0.0 {
                    out.push(Violation::ZeroInitialMass {
                        state: self.states[s].clone(),
                    });
                }
            }
        } else if n > 0 {
            out.push(Violation::InitialMass {
                sum: self.initial.iter().sum(),
            });
        }
        out
    }

    /// Checks [`Mdp::validate`] and turns violations into an error.
    pub fn validated(self) -> Result<Mdp, MdpError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(MdpError::Invalid(v))
        }
    }
}

/// Incremental construction by string ids; ids are indexed in insertion
/// order.
#[derive(Debug, Clone, Default)]
pub struct MdpBuilder {
    states: Vec<String>,
    actions: Vec<String>,
    available: BTreeMap<usize, Vec<usize>>,
    entries: BTreeMap<(usize, usize, usize), (f64, Option<f64>)>,
    rewards_only: BTreeMap<(usize, usize, usize), f64>,
    initial: BTreeMap<usize, f64>,
    horizon: Option<usize>,
}

impl MdpBuilder {
    fn intern(list: &mut Vec<String>, name: &str) -> usize {
        match list.iter().position(|x| x == name) {
            Some(i) => i,
            None => {
                list.push(name.to_string());
                list.len() - 1
            }
        }
    }

    pub fn state(mut self, name: &str) -> Self {
        Self::intern(&mut self.states, name);
        self
    }

    pub fn action(mut self, name: &str) -> Self {
        Self::intern(&mut self.actions, name);
        self
    }

    /// Restricts `state` to `actions`. States never restricted get every
    /// action.
    pub fn available(mut self, state: &str, actions: &[&str]) -> Self {
        let s = Self::intern(&mut self.states, state);
        let mut idx: Vec<usize> = actions
            .iter()
            .map(|a| Self::intern(&mut self.actions, a))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        self.available.insert(s, idx);
        self
    }

    /// Transition `state --action--> next` with probability `p` and reward `r`.
    pub fn transition(mut self, state: &str, action: &str, next: &str, p: f64, r: f64) -> Self {
        let s = Self::intern(&mut self.states, state);
        let a = Self::intern(&mut self.actions, action);
        let sp = Self::intern(&mut self.states, next);
        self.entries.insert((s, a, sp), (p, Some(r)));
        self
    }

    /// Probability without a reward (for documents that list them apart).
    pub fn probability(mut self, state: &str, action: &str, next: &str, p: f64) -> Self {
        let s = Self::intern(&mut self.states, state);
        let a = Self::intern(&mut self.actions, action);
        let sp = Self::intern(&mut self.states, next);
        let entry = self.entries.entry((s, a, sp)).or_insert((0.0, None));
        entry.0 = p;
        self
    }

    pub fn reward(mut self, state: &str, action: &str, next: &str, r: f64) -> Self {
        let s = Self::intern(&mut self.states, state);
        let a = Self::intern(&mut self.actions, action);
        let sp = Self::intern(&mut self.states, next);
        self.rewards_only.insert((s, a, sp), r);
        self
    }

    pub fn initial(mut self, state: &str, p: f64) -> Self {
        let s = Self::intern(&mut self.states, state);
        self.initial.insert(s, p);
        self
    }

    pub fn horizon(mut self, t: usize) -> Self {
        self.horizon = Some(t);
        self
    }

    /// Assembles the MDP without checking invariants.
    pub fn build_unchecked(self) -> Mdp {
        let n = self.states.len();
        let na = self.actions.len();
        let available: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                self.available
                    .get(&s)
                    .cloned()
                    .unwrap_or_else(|| (0..na).collect())
            })
            .collect();
        let mut has_row = vec![vec![false; na]; n];
        for &(s, a, _) in self.entries.keys() {
            has_row[s][a] = true;
        }
        let mut transitions = vec![vec![Vec::new(); na]; n];
        let mut rewards = vec![vec![Vec::new(); na]; n];
        for s in 0..n {
            for &a in &available[s] {
                if has_row[s][a] {
                    transitions[s][a] = vec![0.0; n];
                }
                rewards[s][a] = vec![None; n];
            }
        }
        for (&(s, a, sp), &(p, r)) in &self.entries {
            if transitions[s][a].len() == n {
                transitions[s][a][sp] = p;
            }
            if let Some(r) = r {
                if rewards[s][a].len() == n {
                    rewards[s][a][sp] = Some(r);
                }
            }
        }
        for (&(s, a, sp), &r) in &self.rewards_only {
            if rewards[s][a].len() == n {
                rewards[s][a][sp] = Some(r);
            }
        }
        let initial = (0..n)
            .map(|s| self.initial.get(&s).copied().unwrap_or(0.0))
            .collect();
        Mdp {
            states: self.states,
            actions: self.actions,
            available,
            transitions,
            rewards,
            initial,
            horizon: self.horizon.unwrap_or(1),
        }
    }

    pub fn build(self) -> Result<Mdp, MdpError> {
        self.build_unchecked().validated()
    }
}
