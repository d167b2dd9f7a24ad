//! EVaR decompositions.
//!
//! The Ni-style scheme reuses the CVaR allocation rule `α ξ_s / p̂_s` under
//! a KL budget and overestimates in general. The corrected scheme lets each
//! state pick its own level `ζ_s` and charges `Σ ξ_s log(1 / ζ_s)` against
//! the same budget, which matches EVaR of the total reward through the
//! chain rule of relative entropy.
//!
//! The corrected infimum is solved in the variables `ξ` and
//! `v_s = ξ_s log(1 / ζ_s)`. `EVaR_{e^{-u}}` is convex and nonincreasing
//! in `u` (a supremum of affine functions of `u`), so `ξ_s EVaR_{e^{-v_s/ξ_s}}`
//! is a perspective and the problem is jointly convex. For fixed `ξ` the
//! budget `B = -log α - KL(ξ || p̂)` binds, and its split `v = B t` with
//! `t ∈ Δ` is found by pattern search; the outer search runs over `ξ`.

use crate::mdp::{conditional_return_distribution, return_distribution, Mdp, Policy};
use crate::risk::{evar, kl_divergence, ExtendedValue, FiniteDistribution, RiskLevel};

use super::grid::{pattern_search, simplex_grid_optimize, Direction};
use super::{
    require_horizon_one, AllocationMode, AllocationSet, DecompError, DecompositionReport, OuterSearch,
    RiskAllocation, Scheme,
};

fn lattice_params(search: OuterSearch) -> Result<(f64, bool), DecompError> {
    match search {
        OuterSearch::Lattice { step, refine } => Ok((step, refine)),
        OuterSearch::Breakpoints => Err(DecompError::UnsupportedSearch),
    }
}

fn positive_alpha(alpha: RiskLevel) -> Result<f64, DecompError> {
    if alpha.get() <= 0.0 {
        return Err(DecompError::UnsupportedRiskLevel {
            alpha: 0.0,
            reason: "EVaR decompositions need alpha in (0, 1]",
        });
    }
    Ok(alpha.get())
}

fn conditionals(m: &Mdp, pi: &dyn Policy) -> Result<Vec<FiniteDistribution>, DecompError> {
    (0..m.num_states())
        .map(|s| Ok(conditional_return_distribution(m, pi, s)?.consolidate()))
        .collect()
}

fn evar_at(d: &FiniteDistribution, level: f64) -> Result<f64, DecompError> {
    Ok(evar(d, RiskLevel::clamped(level))?.as_f64())
}

/// `min_{ξ ∈ Z_E} Σ_s ξ_s EVaR_{α ξ_s / p̂_s}(X_s)` with `Z_E` the capped
/// simplex intersected with the KL ball of radius `-log α`. The oracle is
/// `EVaR_α` of the full return, which never exceeds the value.
pub fn evar_ni_decomposition(
    m: &Mdp,
    pi: &dyn Policy,
    alpha: RiskLevel,
    search: OuterSearch,
) -> Result<DecompositionReport, DecompError> {
    require_horizon_one(m)?;
    let a = positive_alpha(alpha)?;
    let (step, refine) = lattice_params(search)?;
    let xs = conditionals(m, pi)?;
    let nominal = m.initial().to_vec();
    let level = |s: usize, w: f64| (a * w / nominal[s]).min(1.0);
    let set = AllocationSet::new(AllocationMode::KlCapped, alpha, nominal.clone());
    let objective = |w: &[f64]| -> Result<ExtendedValue, DecompError> {
        let mut total = 0.0;
        for (s, &x) in w.iter().enumerate() {
            if x > 0.0 {
                total += x * evar_at(&xs[s], level(s, x))?;
            }
        }
        Ok(ExtendedValue::Finite(total))
    };
    let (value, allocation) = simplex_grid_optimize(objective, &set, step, Direction::Minimize, refine)?;
    let mut inner_values = Vec::new();
    let mut inner_levels = Vec::new();
    for (s, &x) in allocation.weights.iter().enumerate() {
        let l = level(s, x);
        inner_values.push(ExtendedValue::Finite(evar_at(&xs[s], l)?));
        inner_levels.push(RiskLevel::clamped(l));
    }
    let oracle_value = evar(&return_distribution(m, pi)?, alpha)?;
    Ok(DecompositionReport {
        scheme: Scheme::EvarNi,
        alpha,
        value,
        allocation,
        states: m.states().to_vec(),
        inner_values,
        inner_levels,
        inner_actions: None,
        oracle_value: None,
        oracle_gap: None,
    }
    .with_oracle(oracle_value))
}

/// Best split of the budget for a fixed `ξ`: returns the objective and the
/// per-state levels `ζ_s`.
fn split_budget(xs: &[FiniteDistribution], xi: &[f64], budget: f64) -> Result<(f64, Vec<f64>), DecompError> {
    let support: Vec<usize> = (0..xi.len()).filter(|&s| xi[s] > 0.0).collect();
    let levels_for = |t: &[f64]| -> Vec<f64> {
        let mut z = vec![1.0; xi.len()];
        for (k, &s) in support.iter().enumerate() {
            z[s] = (-budget * t[k] / xi[s]).exp();
        }
        z
    };
    let mut objective = |t: &[f64]| -> Result<ExtendedValue, DecompError> {
        let z = levels_for(t);
        let mut total = 0.0;
        for &s in &support {
            total += xi[s] * evar_at(&xs[s], z[s])?;
        }
        Ok(ExtendedValue::Finite(total))
    };
    let mass: f64 = support.iter().map(|&s| xi[s]).sum();
    let start: Vec<f64> = support.iter().map(|&s| xi[s] / mass).collect();
    if budget <= 0.0 || support.len() == 1 {
        let v = objective(&start)?;
        return Ok((v.as_f64(), levels_for(&start)));
    }
    let set = AllocationSet::simplex(support.len());
    let v0 = objective(&start)?;
    let (v, t) = pattern_search(&mut objective, &set, start, v0, 0.25, Direction::Minimize)?;
    Ok((v.as_f64(), levels_for(&t)))
}

/// `inf_{ζ ∈ (0,1]^S, ξ ∈ Z'_E(ζ)} Σ_s ξ_s EVaR_{ζ_s}(X_s)`, which equals
/// `EVaR_α` of the full return. `inner_levels` reports the `ζ` of the best
/// point found; the infimum itself need not be attained.
pub fn evar_corrected_decomposition(
    m: &Mdp,
    pi: &dyn Policy,
    alpha: RiskLevel,
    search: OuterSearch,
) -> Result<DecompositionReport, DecompError> {
    require_horizon_one(m)?;
    let a = positive_alpha(alpha)?;
    let (step, refine) = lattice_params(search)?;
    let xs = conditionals(m, pi)?;
    let nominal = m.initial().to_vec();
    let radius = -a.ln();
    let budget_for = |xi: &[f64]| -> Result<f64, DecompError> {
        let kl = kl_divergence(xi, &nominal)?.as_f64();
        Ok((radius - kl).max(0.0))
    };
    // the outer feasible set is the KL ball, i.e. Z'_E with every ζ_s = 1
    let ball = AllocationSet::new(
        AllocationMode::KlRelative {
            levels: vec![1.0; nominal.len()],
        },
        alpha,
        nominal.clone(),
    );
    let objective = |xi: &[f64]| -> Result<ExtendedValue, DecompError> {
        Ok(ExtendedValue::Finite(split_budget(&xs, xi, budget_for(xi)?)?.0))
    };
    let (value, outer) = simplex_grid_optimize(objective, &ball, step, Direction::Minimize, refine)?;
    let xi = outer.weights;
    let (_, levels) = split_budget(&xs, &xi, budget_for(&xi)?)?;
    let mut inner_values = Vec::new();
    for (s, &z) in levels.iter().enumerate() {
        inner_values.push(ExtendedValue::Finite(evar_at(&xs[s], z)?));
    }
    let oracle_value = evar(&return_distribution(m, pi)?, alpha)?;
    Ok(DecompositionReport {
        scheme: Scheme::EvarCorrected,
        alpha,
        value,
        allocation: RiskAllocation {
            weights: xi,
            mode: AllocationMode::KlRelative {
                levels: levels.clone(),
            },
        },
        states: m.states().to_vec(),
        inner_values,
        inner_levels: levels.into_iter().map(RiskLevel::clamped).collect(),
        inner_actions: None,
        oracle_value: None,
        oracle_gap: None,
    }
    .with_oracle(oracle_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::DeterministicPolicy;
    use crate::risk::cvar;

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn me() -> Mdp {
        Mdp::builder()
            .transition("s1", "a1", "s1", 1.0, 1.0)
            .transition("s2", "a1", "s2", 1.0, 0.0)
            .initial("s1", 0.5)
            .initial("s2", 0.5)
            .build()
            .unwrap()
    }

    #[test]
    fn ni_value_sits_at_the_cap() {
        let m = me();
        let pi = DeterministicPolicy::new(vec![0, 0]);
        let r = evar_ni_decomposition(&m, &pi, lvl(0.75), OuterSearch::refined(1e-2)).unwrap();
        let v = r.value.as_f64();
        assert!((1.0 / 3.0 - 1e-9..1.0 / 3.0 + 1e-8).contains(&v), "{v}");
        let e = r.oracle_value.unwrap().as_f64();
        let c = cvar(&return_distribution(&m, &pi).unwrap(), lvl(0.75)).as_f64();
        assert!(e < c - 1e-3);
        assert!(r.oracle_gap.unwrap().as_f64() > 1e-3);
    }

    #[test]
    fn corrected_matches_evar() {
        let m = me();
        let pi = DeterministicPolicy::new(vec![0, 0]);
        let r = evar_corrected_decomposition(&m, &pi, lvl(0.75), OuterSearch::refined(1e-2)).unwrap();
        assert!(r.oracle_gap.unwrap().as_f64().abs() < 1e-6, "{:?}", r.oracle_gap);
        assert!((r.recombined().unwrap().as_f64() - r.value.as_f64()).abs() < 1e-9);
    }

    #[test]
    fn corrected_with_random_conditionals() {
        let m = Mdp::builder()
            .transition("s1", "a1", "s1", 0.3, -2.0)
            .transition("s1", "a1", "s2", 0.7, 4.0)
            .transition("s2", "a1", "s1", 0.6, 1.0)
            .transition("s2", "a1", "s2", 0.4, 7.0)
            .initial("s1", 0.35)
            .initial("s2", 0.65)
            .build()
            .unwrap();
        let pi = DeterministicPolicy::new(vec![0, 0]);
        for a in [0.1, 0.5, 0.9, 1.0] {
            let r = evar_corrected_decomposition(&m, &pi, lvl(a), OuterSearch::refined(1e-2)).unwrap();
            assert!(
                r.oracle_gap.unwrap().as_f64().abs() < 2e-3,
                "alpha {a}: {:?}",
                r.oracle_gap
            );
            let ni = evar_ni_decomposition(&m, &pi, lvl(a), OuterSearch::refined(1e-2)).unwrap();
            assert!(ni.oracle_gap.unwrap().as_f64() >= -1e-9);
        }
    }

    #[test]
    fn zero_alpha_and_breakpoints_rejected() {
        let m = me();
        let pi = DeterministicPolicy::new(vec![0, 0]);
        assert!(matches!(
            evar_ni_decomposition(&m, &pi, lvl(0.0), OuterSearch::lattice(0.1)),
            Err(DecompError::UnsupportedRiskLevel { .. })
        ));
        assert_eq!(
            evar_corrected_decomposition(&m, &pi, lvl(0.5), OuterSearch::Breakpoints).unwrap_err(),
            DecompError::UnsupportedSearch
        );
    }
}
