//! Ground truth by exhaustive enumeration of deterministic policies.
//!
//! Deterministic policies suffice for every measure here: the return
//! distribution of a randomized policy is a mixture of deterministic ones,
//! CVaR and EVaR are convex in the distribution (so the maximum over
//! mixtures sits at a corner) and VaR is mixture quasi-convex. For
//! `T > 1` the candidates are deterministic history-dependent policies.

use serde::Serialize;

use crate::mdp::{
    enumerate_deterministic_policies, return_distribution, EnumeratedPolicy, Mdp, MdpError, Policy,
};
use crate::risk::{ExtendedValue, Measure, RiskLevel};

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationResult {
    pub measure: Measure,
    pub alpha: RiskLevel,
    pub value: ExtendedValue,
    pub best_policy: EnumeratedPolicy,
    /// Index of `best_policy` in enumeration order.
    pub best_index: usize,
    /// One entry per enumerated policy, in enumeration order.
    pub per_policy_values: Vec<(EnumeratedPolicy, ExtendedValue)>,
}

impl OptimizationResult {
    /// Indices of every policy attaining the optimum within `tol`.
    pub fn optimal_indices(&self, tol: f64) -> Vec<usize> {
        self.per_policy_values
            .iter()
            .enumerate()
            .filter(|(_, (_, v))| match (v, self.value) {
                (ExtendedValue::Finite(x), ExtendedValue::Finite(best)) => *x >= best - tol,
                (a, b) => *a == b,
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Risk of the exact return distribution of `pi`.
pub fn evaluate(
    m: &Mdp,
    pi: &dyn Policy,
    measure: Measure,
    alpha: RiskLevel,
) -> Result<ExtendedValue, MdpError> {
    let d = return_distribution(m, pi)?;
    Ok(measure.apply(&d, alpha)?)
}

/// Best deterministic policy; ties keep the first in enumeration order.
pub fn optimize(m: &Mdp, measure: Measure, alpha: RiskLevel) -> Result<OptimizationResult, MdpError> {
    let mut per_policy_values = Vec::new();
    let mut best: Option<(usize, ExtendedValue)> = None;
    for (i, pi) in enumerate_deterministic_policies(m)?.enumerate() {
        let v = evaluate(m, &pi, measure, alpha)?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
        per_policy_values.push((pi, v));
    }
    let (best_index, value) = best.expect("an MDP has at least one policy");
    Ok(OptimizationResult {
        measure,
        alpha,
        value,
        best_policy: per_policy_values[best_index].0.clone(),
        best_index,
        per_policy_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::DeterministicPolicy;

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn toy() -> Mdp {
        Mdp::builder()
            .transition("s1", "safe", "s1", 1.0, 1.0)
            .transition("s1", "risky", "s1", 0.5, -4.0)
            .transition("s1", "risky", "s2", 0.5, 10.0)
            .transition("s2", "safe", "s2", 1.0, 0.0)
            .available("s2", &["safe"])
            .initial("s1", 1.0 - 1e-3)
            .initial("s2", 1e-3)
            .build()
            .unwrap()
    }

    #[test]
    fn risk_neutral_prefers_risky_and_averse_prefers_safe() {
        let m = toy();
        let neutral = optimize(&m, Measure::Cvar, lvl(1.0)).unwrap();
        assert_eq!(neutral.best_policy.describe(&m), "s1=risky,s2=safe");
        let averse = optimize(&m, Measure::Cvar, lvl(0.2)).unwrap();
        assert_eq!(averse.best_policy.describe(&m), "s1=safe,s2=safe");
        assert_eq!(averse.per_policy_values.len(), 2);
    }

    #[test]
    fn optimum_dominates_every_policy() {
        let m = toy();
        for measure in [Measure::Var, Measure::Cvar, Measure::Evar, Measure::Quantile] {
            let r = optimize(&m, measure, lvl(0.3)).unwrap();
            for (pi, _) in &r.per_policy_values {
                assert!(r.value >= evaluate(&m, pi, measure, lvl(0.3)).unwrap());
            }
            assert!(!r.optimal_indices(1e-9).is_empty());
        }
    }

    #[test]
    fn cvar_at_one_is_expectation() {
        let m = toy();
        let pi = DeterministicPolicy::new(vec![1, 0]);
        let d = return_distribution(&m, &pi).unwrap();
        let v = evaluate(&m, &pi, Measure::Cvar, lvl(1.0)).unwrap();
        assert_eq!(v, ExtendedValue::Finite(d.mean()));
    }
}
