//! Exact VaR and lower-quantile decompositions by threshold scanning.
//!
//! `VaR_l(X) >= z` holds exactly when `P(X < z) <= l`, so a threshold `z`
//! is reachable by some allocation iff the per-state tail masses fit in the
//! budget: `Σ_s p̂_s P(X_s < z) <= α`. The value is the largest return atom
//! passing that test. The lower quantile swaps in the strict inequality.

use crate::mdp::{conditional_return_distribution, return_distribution, Mdp, Policy};
use crate::oracle;
use crate::risk::{
    lower_quantile, var, ExtendedValue, FiniteDistribution, Measure, RiskLevel, PROB_TOLERANCE,
};

use super::{
    action_choices, action_distribution, require_horizon_one, AllocationMode, DecompError,
    DecompositionReport, RiskAllocation, Scheme,
};

/// Per state, the candidate conditional distributions (one per action for
/// the optimization schemes).
struct Tails {
    options: Vec<Vec<FiniteDistribution>>,
    nominal: Vec<f64>,
}

impl Tails {
    fn for_policy(m: &Mdp, pi: &dyn Policy) -> Result<Self, DecompError> {
        Ok(Self {
            options: (0..m.num_states())
                .map(|s| Ok(vec![conditional_return_distribution(m, pi, s)?.consolidate()]))
                .collect::<Result<_, DecompError>>()?,
            nominal: m.initial().to_vec(),
        })
    }

    fn for_actions(m: &Mdp) -> Result<Self, DecompError> {
        Ok(Self {
            options: (0..m.num_states())
                .map(|s| {
                    m.available(s)
                        .iter()
                        .map(|&a| action_distribution(m, s, a))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<_, _>>()?,
            nominal: m.initial().to_vec(),
        })
    }

    /// Sorted distinct atoms over every state and option.
    fn candidates(&self) -> Vec<f64> {
        let mut zs: Vec<f64> = self
            .options
            .iter()
            .flatten()
            .flat_map(|d| d.outcomes().iter().copied())
            .collect();
        zs.sort_by(f64::total_cmp);
        zs.dedup();
        zs
    }

    /// Smallest tail mass `P(X < z)` per state and the first option
    /// attaining it.
    fn tails(&self, z: f64) -> Vec<(f64, usize)> {
        self.options
            .iter()
            .map(|opts| {
                let mut best = (f64::INFINITY, 0);
                for (k, d) in opts.iter().enumerate() {
                    let p = d.prob_below(z);
                    let p = if p >= 1.0 - PROB_TOLERANCE { 1.0 } else { p };
                    if p < best.0 {
                        best = (p, k);
                    }
                }
                best
            })
            .collect()
    }

    fn budget_used(&self, tails: &[(f64, usize)]) -> f64 {
        tails.iter().zip(&self.nominal).map(|((p, _), q)| q * p).sum()
    }

    /// Largest candidate passing `test`; candidates are scanned upward and
    /// the feasible ones form a prefix.
    fn scan(&self, test: impl Fn(f64) -> bool) -> Option<f64> {
        let mut best = None;
        for z in self.candidates() {
            if test(self.budget_used(&self.tails(z))) {
                best = Some(z);
            } else {
                break;
            }
        }
        best
    }
}

fn actions_of(m: &Mdp, tails: &[(f64, usize)]) -> Vec<usize> {
    tails
        .iter()
        .enumerate()
        .map(|(s, &(_, k))| m.available(s)[k])
        .collect()
}

/// Witness for a VaR threshold: levels start at the tail masses and the
/// leftover budget fills states from the last one backwards.
fn var_witness(t: &Tails, tails: &[(f64, usize)], alpha: f64) -> (Vec<f64>, Vec<f64>, Vec<ExtendedValue>) {
    let n = tails.len();
    let mut levels: Vec<f64> = tails.iter().map(|(p, _)| *p).collect();
    let mut slack = (alpha - t.budget_used(tails)).max(0.0);
    for s in (0..n).rev() {
        if slack <= 0.0 {
            break;
        }
        let room = (1.0 - levels[s]) * t.nominal[s];
        let take = room.min(slack);
        let raised = levels[s] + take / t.nominal[s];
        levels[s] = if take == room || raised >= 1.0 - PROB_TOLERANCE {
            1.0
        } else {
            raised
        };
        slack -= take;
    }
    let weights = if alpha > 0.0 {
        levels
            .iter()
            .zip(&t.nominal)
            .map(|(l, q)| l * q / alpha)
            .collect()
    } else {
        t.nominal.clone()
    };
    let inner = tails
        .iter()
        .enumerate()
        .map(|(s, &(_, k))| var(&t.options[s][k], RiskLevel::clamped(levels[s])))
        .collect();
    (levels, weights, inner)
}

fn var_report(m: &Mdp, t: &Tails, scheme: Scheme, alpha: RiskLevel) -> DecompositionReport {
    let a = alpha.get();
    let states = m.states().to_vec();
    let mode = AllocationMode::SimplexCappedSup;
    if a >= 1.0 {
        let tails = t.tails(f64::INFINITY);
        return DecompositionReport {
            scheme,
            alpha,
            value: ExtendedValue::PosInf,
            allocation: RiskAllocation {
                weights: t.nominal.clone(),
                mode,
            },
            states,
            inner_values: vec![ExtendedValue::PosInf; t.nominal.len()],
            inner_levels: vec![RiskLevel::ONE; t.nominal.len()],
            inner_actions: (scheme == Scheme::VarOpt).then(|| action_choices(m, &actions_of(m, &tails))),
            oracle_value: None,
            oracle_gap: None,
        };
    }
    let z = t
        .scan(|used| used <= a + PROB_TOLERANCE)
        .expect("the smallest atom always has zero tail mass");
    let tails = t.tails(z);
    let (levels, weights, inner_values) = var_witness(t, &tails, a);
    DecompositionReport {
        scheme,
        alpha,
        value: ExtendedValue::Finite(z),
        allocation: RiskAllocation { weights, mode },
        states,
        inner_values,
        inner_levels: levels.into_iter().map(RiskLevel::clamped).collect(),
        inner_actions: (scheme == Scheme::VarOpt).then(|| action_choices(m, &actions_of(m, &tails))),
        oracle_value: None,
        oracle_gap: None,
    }
}

/// `sup_{ζ ∈ Z_C} min_s VaR_{α ζ_s / p̂_s}(X_s)` for a fixed policy,
/// computed exactly. Equals `VaR_α` of the full return.
pub fn var_decomposition(
    m: &Mdp,
    pi: &dyn Policy,
    alpha: RiskLevel,
) -> Result<DecompositionReport, DecompError> {
    require_horizon_one(m)?;
    let t = Tails::for_policy(m, pi)?;
    let oracle_value = var(&return_distribution(m, pi)?, alpha);
    Ok(var_report(m, &t, Scheme::Var, alpha).with_oracle(oracle_value))
}

/// Optimal VaR over policies, computed exactly: the tail mass of each
/// state is minimized over actions inside the budget test. The recorded
/// inner actions form an optimal Markov policy.
pub fn var_opt_decomposition(m: &Mdp, alpha: RiskLevel) -> Result<DecompositionReport, DecompError> {
    require_horizon_one(m)?;
    let t = Tails::for_actions(m)?;
    let oracle_value = oracle::optimize(m, Measure::Var, alpha)?.value;
    Ok(var_report(m, &t, Scheme::VarOpt, alpha).with_oracle(oracle_value))
}

/// Optimal lower quantile over policies:
/// `sup { min_{s: ζ_s < 1} Q_{ζ_s}(X_s) : ζ ∈ [0,1]^S, Σ_s ζ_s p̂_s < α }`,
/// computed exactly with the strict budget test. `-inf` at `α = 0`, where
/// the feasible set is empty.
pub fn quantile_opt_decomposition(m: &Mdp, alpha: RiskLevel) -> Result<DecompositionReport, DecompError> {
    require_horizon_one(m)?;
    let t = Tails::for_actions(m)?;
    let a = alpha.get();
    let n = m.num_states();
    let oracle_value = oracle::optimize(m, Measure::Quantile, alpha)?.value;
    let mode = AllocationMode::Box01StrictSum;
    let report = match t.scan(|used| used < a - PROB_TOLERANCE) {
        None => DecompositionReport {
            scheme: Scheme::QuantileOpt,
            alpha,
            value: ExtendedValue::NegInf,
            allocation: RiskAllocation {
                weights: vec![0.0; n],
                mode,
            },
            states: m.states().to_vec(),
            inner_values: vec![ExtendedValue::NegInf; n],
            inner_levels: vec![RiskLevel::ZERO; n],
            inner_actions: Some(action_choices(m, &actions_of(m, &t.tails(f64::NEG_INFINITY)))),
            oracle_value: None,
            oracle_gap: None,
        },
        Some(z) => {
            let tails = t.tails(z);
            let used = t.budget_used(&tails);
            let room = 1.0 - used;
            // raise every level by the same fraction of its headroom, using
            // half the slack so the strict inequality keeps a margin
            let theta = if room > 0.0 {
                ((a - used) / (2.0 * room)).min(1.0)
            } else {
                0.0
            };
            let levels: Vec<f64> = tails
                .iter()
                .map(|(p, _)| if *p >= 1.0 { 1.0 } else { p + theta * (1.0 - p) })
                .collect();
            let inner_values = tails
                .iter()
                .enumerate()
                .map(|(s, &(_, k))| {
                    if levels[s] >= 1.0 {
                        // excluded from the minimum
                        ExtendedValue::PosInf
                    } else {
                        lower_quantile(&t.options[s][k], RiskLevel::clamped(levels[s]))
                    }
                })
                .collect();
            DecompositionReport {
                scheme: Scheme::QuantileOpt,
                alpha,
                value: ExtendedValue::Finite(z),
                allocation: RiskAllocation {
                    weights: levels.clone(),
                    mode,
                },
                states: m.states().to_vec(),
                inner_values,
                inner_levels: levels.into_iter().map(RiskLevel::clamped).collect(),
                inner_actions: Some(action_choices(m, &actions_of(m, &tails))),
                oracle_value: None,
                oracle_gap: None,
            }
        }
    };
    Ok(report.with_oracle(oracle_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::DeterministicPolicy;

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn bernoulli() -> Mdp {
        Mdp::builder()
            .transition("s1", "a1", "s1", 1.0, 0.0)
            .transition("s2", "a1", "s2", 1.0, 1.0)
            .initial("s1", 0.5)
            .initial("s2", 0.5)
            .build()
            .unwrap()
    }

    fn mc() -> Mdp {
        Mdp::builder()
            .transition("s1", "a1", "s1", 0.4, -50.0)
            .transition("s1", "a1", "s2", 0.6, 100.0)
            .transition("s1", "a2", "s1", 1.0, 0.0)
            .transition("s2", "a1", "s2", 1.0, 10.0)
            .available("s2", &["a1"])
            .initial("s1", 0.5)
            .initial("s2", 0.5)
            .build()
            .unwrap()
    }

    #[test]
    fn upper_and_lower_quantile_differ_on_bernoulli() {
        let m = bernoulli();
        let v = var_opt_decomposition(&m, lvl(0.5)).unwrap();
        let q = quantile_opt_decomposition(&m, lvl(0.5)).unwrap();
        assert_eq!(v.value, ExtendedValue::Finite(1.0));
        assert_eq!(q.value, ExtendedValue::Finite(0.0));
        assert_eq!(v.oracle_gap, Some(ExtendedValue::Finite(0.0)));
        assert_eq!(q.oracle_gap, Some(ExtendedValue::Finite(0.0)));
        assert_eq!(q.recombined().unwrap(), q.value);
        assert_eq!(v.recombined().unwrap(), v.value);
    }

    #[test]
    fn evaluation_on_two_state_example() {
        let m = mc();
        let r = var_decomposition(&m, &DeterministicPolicy::new(vec![0, 0]), lvl(0.5)).unwrap();
        assert_eq!(r.value, ExtendedValue::Finite(10.0));
        assert_eq!(r.oracle_gap, Some(ExtendedValue::Finite(0.0)));
        assert_eq!(r.recombined().unwrap(), r.value);
        let sum: f64 = r.allocation.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for (w, q) in r.allocation.weights.iter().zip(m.initial()) {
            assert!(0.5 * w <= q + 1e-12);
        }
    }

    #[test]
    fn endpoints() {
        let m = mc();
        assert_eq!(
            var_opt_decomposition(&m, lvl(1.0)).unwrap().value,
            ExtendedValue::PosInf
        );
        assert_eq!(
            quantile_opt_decomposition(&m, lvl(0.0)).unwrap().value,
            ExtendedValue::NegInf
        );
        let low = var_opt_decomposition(&m, lvl(0.0)).unwrap();
        assert_eq!(low.value, ExtendedValue::Finite(0.0));
        assert_eq!(low.oracle_gap, Some(ExtendedValue::Finite(0.0)));
    }

    #[test]
    fn optimal_var_on_two_state_example() {
        let r = var_opt_decomposition(&mc(), lvl(0.5)).unwrap();
        assert_eq!(r.value, ExtendedValue::Finite(10.0));
        assert_eq!(r.oracle_gap, Some(ExtendedValue::Finite(0.0)));
    }
}
