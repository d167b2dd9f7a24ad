use std::collections::BTreeMap;

use crate::risk::FiniteDistribution;

use super::{DeterministicPolicy, EnumeratedPolicy, HistoryPolicy, Mdp, MdpError, Policy};

pub const DEFAULT_ATOM_BUDGET: usize = 10_000_000;
pub const ATOM_BUDGET_ENV: &str = "RISKDP_ATOM_BUDGET";

/// Enumeration budget, overridable through `RISKDP_ATOM_BUDGET`.
pub fn default_atom_budget() -> usize {
    std::env::var(ATOM_BUDGET_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_ATOM_BUDGET)
}

struct Node {
    history: Vec<usize>,
    prob: f64,
    total: f64,
}

fn forward(
    m: &Mdp,
    pi: &dyn Policy,
    start: &[(usize, f64)],
    budget: usize,
) -> Result<FiniteDistribution, MdpError> {
    pi.check(m)?;
    let mut frontier: Vec<Node> = start
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|&(s, p)| Node {
            history: vec![s],
            prob: p,
            total: 0.0,
        })
        .collect();
    for t in 1..=m.horizon() {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for node in &frontier {
            let s = *node.history.last().unwrap();
            for (a, pa) in pi.action_distribution(t, &node.history) {
                for (sp, p, r) in m.successors(s, a) {
                    if next.len() >= budget {
                        return Err(MdpError::ExplosionGuard {
                            needed: next.len() as u128 + 1,
                            budget,
                        });
                    }
                    let mut history = node.history.clone();
                    history.push(a);
                    history.push(sp);
                    next.push(Node {
                        history,
                        prob: node.prob * pa * p,
                        total: node.total + r,
                    });
                }
            }
        }
        frontier = next;
    }
    Ok(FiniteDistribution::from_atoms(
        frontier.into_iter().map(|n| (n.total, n.prob)),
    )?)
}

/// Exact distribution of the total reward `Σ_t r(s_t, a_t, s_{t+1})` with
/// `s_1 ~ p̂`. Markov policies are applied at every stage.
pub fn return_distribution(m: &Mdp, pi: &dyn Policy) -> Result<FiniteDistribution, MdpError> {
    return_distribution_with_budget(m, pi, default_atom_budget())
}

pub fn return_distribution_with_budget(
    m: &Mdp,
    pi: &dyn Policy,
    budget: usize,
) -> Result<FiniteDistribution, MdpError> {
    let start: Vec<(usize, f64)> = m.initial().iter().copied().enumerate().collect();
    forward(m, pi, &start, budget)
}

/// Return distribution conditional on `s_1 = s`.
pub fn conditional_return_distribution(
    m: &Mdp,
    pi: &dyn Policy,
    s: usize,
) -> Result<FiniteDistribution, MdpError> {
    if s >= m.num_states() {
        return Err(MdpError::UnknownState(s.to_string()));
    }
    forward(m, pi, &[(s, 1.0)], default_atom_budget())
}

/// Number of deterministic policies [`enumerate_deterministic_policies`]
/// yields, saturating at `u128::MAX`.
pub fn count_deterministic_policies(m: &Mdp) -> u128 {
    if m.horizon() <= 1 {
        return (0..m.num_states())
            .map(|s| m.available(s).len() as u128)
            .fold(1u128, |acc, k| acc.saturating_mul(k));
    }
    // Policy trees rooted at (t, s) only depend on t and s.
    let n = m.num_states();
    let horizon = m.horizon();
    let mut count: Vec<u128> = (0..n).map(|s| m.available(s).len() as u128).collect();
    for _t in (1..horizon).rev() {
        count = (0..n)
            .map(|s| {
                m.available(s)
                    .iter()
                    .map(|&a| {
                        m.successors(s, a)
                            .map(|(sp, _, _)| count[sp])
                            .fold(1u128, |acc, k| acc.saturating_mul(k))
                    })
                    .fold(0u128, |acc, k| acc.saturating_add(k))
            })
            .collect();
    }
    (0..n)
        .filter(|&s| m.initial()[s] > 0.0)
        .map(|s| count[s])
        .fold(1u128, |acc, k| acc.saturating_mul(k))
}

/// All deterministic policies without duplicates: Markov policies when
/// `T = 1`, history-dependent policies defined on their own reachable
/// histories when `T > 1`.
pub fn enumerate_deterministic_policies(
    m: &Mdp,
) -> Result<Box<dyn Iterator<Item = EnumeratedPolicy> + '_>, MdpError> {
    let budget = default_atom_budget();
    let count = count_deterministic_policies(m);
    if count > budget as u128 {
        return Err(MdpError::ExplosionGuard {
            needed: count,
            budget,
        });
    }
    if m.horizon() <= 1 {
        return Ok(Box::new(MarkovOdometer::new(m).map(EnumeratedPolicy::Markov)));
    }
    let mut per_root: Vec<Vec<BTreeMap<Vec<usize>, usize>>> = Vec::new();
    for s in 0..m.num_states() {
        if m.initial()[s] > 0.0 {
            per_root.push(subtree_policies(m, 1, vec![s]));
        }
    }
    let combined = cartesian(&per_root);
    let horizon = m.horizon();
    Ok(Box::new(combined.into_iter().map(move |choice| {
        EnumeratedPolicy::History(HistoryPolicy::new(horizon, choice))
    })))
}

fn subtree_policies(m: &Mdp, t: usize, history: Vec<usize>) -> Vec<BTreeMap<Vec<usize>, usize>> {
    let s = *history.last().unwrap();
    let mut out = Vec::new();
    for &a in m.available(s) {
        let mut base = BTreeMap::new();
        base.insert(history.clone(), a);
        if t == m.horizon() {
            out.push(base);
            continue;
        }
        let children: Vec<Vec<BTreeMap<Vec<usize>, usize>>> = m
            .successors(s, a)
            .map(|(sp, _, _)| {
                let mut h = history.clone();
                h.push(a);
                h.push(sp);
                subtree_policies(m, t + 1, h)
            })
            .collect();
        for mut combo in cartesian(&children) {
            combo.extend(base.iter().map(|(k, v)| (k.clone(), *v)));
            out.push(combo);
        }
    }
    out
}

fn cartesian(parts: &[Vec<BTreeMap<Vec<usize>, usize>>]) -> Vec<BTreeMap<Vec<usize>, usize>> {
    let mut acc = vec![BTreeMap::new()];
    for options in parts {
        let mut next = Vec::with_capacity(acc.len() * options.len());
        for prefix in &acc {
            for opt in options {
                let mut merged = prefix.clone();
                merged.extend(opt.iter().map(|(k, v)| (k.clone(), *v)));
                next.push(merged);
            }
        }
        acc = next;
    }
    acc
}

/// Lexicographic walk over per-state action choices.
struct MarkovOdometer<'a> {
    m: &'a Mdp,
    digits: Vec<usize>,
    done: bool,
}

impl<'a> MarkovOdometer<'a> {
    fn new(m: &'a Mdp) -> Self {
        Self {
            m,
            digits: vec![0; m.num_states()],
            done: m.num_states() == 0 || (0..m.num_states()).any(|s| m.available(s).is_empty()),
        }
    }
}

impl Iterator for MarkovOdometer<'_> {
    type Item = DeterministicPolicy;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let policy = DeterministicPolicy::new(
            self.digits
                .iter()
                .enumerate()
                .map(|(s, &d)| self.m.available(s)[d])
                .collect(),
        );
        // increment, last state fastest
        let mut i = self.digits.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.digits[i] += 1;
            if self.digits[i] < self.m.available(i).len() {
                break;
            }
            self.digits[i] = 0;
        }
        Some(policy)
    }
}
