//! Seeded random MDPs for property suites.

use std::ops::RangeInclusive;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::risk::FiniteDistribution;

use super::{DeterministicPolicy, Mdp};

#[derive(Debug, Clone)]
pub struct RandomMdpSpec {
    pub states: RangeInclusive<usize>,
    pub actions: RangeInclusive<usize>,
    pub reward_low: f64,
    pub reward_high: f64,
    /// Draw integer rewards in `[reward_low, reward_high]`.
    pub integer_rewards: bool,
    /// Probability that a transition entry is forced to zero (rows always
    /// keep at least one successor).
    pub sparsity: f64,
    /// Whether every state gets every action; otherwise each state keeps a
    /// random nonempty subset.
    pub all_actions_everywhere: bool,
    pub horizon: usize,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        Self {
            states: 1..=3,
            actions: 1..=3,
            reward_low: -10.0,
            reward_high: 10.0,
            integer_rewards: false,
            sparsity: 0.2,
            all_actions_everywhere: false,
            horizon: 1,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex<R: Rng>(rng: &mut R, n: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < sparsity {
                    0.0
                } else {
                    // exponential weights give a uniform draw on the simplex
                    -(1.0 - rng.gen::<f64>()).ln()
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Random valid MDP; state ids are `s1..sN`, action ids `a1..aK`.
pub fn random_mdp<R: Rng>(rng: &mut R, spec: &RandomMdpSpec) -> Mdp {
    let n = rng.gen_range(spec.states.clone());
    let k = rng.gen_range(spec.actions.clone());
    let states: Vec<String> = (1..=n).map(|i| format!("s{i}")).collect();
    let actions: Vec<String> = (1..=k).map(|i| format!("a{i}")).collect();
    let mut b = Mdp::builder().horizon(spec.horizon);
    for s in &states {
        b = b.state(s);
    }
    for a in &actions {
        b = b.action(a);
    }
    for s in &states {
        let avail: Vec<&str> = if spec.all_actions_everywhere || k == 1 {
            actions.iter().map(String::as_str).collect()
        } else {
            let keep = rng.gen_range(1..=k);
            let mut idx: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            let mut chosen: Vec<usize> = idx[..keep].to_vec();
            chosen.sort_unstable();
            chosen.iter().map(|&i| actions[i].as_str()).collect()
        };
        b = b.available(s, &avail);
        for a in &avail {
            let row = simplex(rng, n, spec.sparsity);
            for (sp, p) in states.iter().zip(row) {
                if p > 0.0 {
                    let r = if spec.integer_rewards {
                        rng.gen_range(spec.reward_low as i64..=spec.reward_high as i64) as f64
                    } else {
                        rng.gen_range(spec.reward_low..=spec.reward_high)
                    };
                    b = b.transition(s, a, sp, p, r);
                }
            }
        }
    }
    for (s, p) in states.iter().zip(simplex(rng, n, 0.0)) {
        b = b.initial(s, p);
    }
    b.build().expect("generator produced an invalid MDP")
}

/// Distribution with `1..=max_atoms` atoms drawn uniformly from
/// `[low, high]` and probabilities uniform on the simplex.
pub fn random_distribution<R: Rng>(rng: &mut R, max_atoms: usize, low: f64, high: f64) -> FiniteDistribution {
    let n = rng.gen_range(1..=max_atoms);
    let outcomes = (0..n).map(|_| rng.gen_range(low..=high)).collect();
    FiniteDistribution::new(outcomes, simplex(rng, n, 0.0))
        .expect("generator produced an invalid distribution")
}

/// Markov policy picking an available action uniformly in every state.
pub fn random_policy<R: Rng>(rng: &mut R, m: &Mdp) -> DeterministicPolicy {
    DeterministicPolicy::new(
        (0..m.num_states())
            .map(|s| {
                let avail = m.available(s);
                avail[rng.gen_range(0..avail.len())]
            })
            .collect(),
    )
}
