use proptest::prelude::*;
use riskdp::decomp::{cvar_opt_decomposition, OuterSearch};
use riskdp::mdp::random::{random_mdp, random_policy, rng, RandomMdpSpec};
use riskdp::mdp::{
    conditional_return_distribution, enumerate_deterministic_policies, return_distribution, RandomizedPolicy,
};
use riskdp::oracle;
use riskdp::{FiniteDistribution, Mdp, Measure, RiskLevel};

fn small_mdp(seed: u64, states: usize) -> Mdp {
    let spec = RandomMdpSpec {
        states: 1..=states,
        ..Default::default()
    };
    random_mdp(&mut rng(seed), &spec)
}

fn assert_same(a: &FiniteDistribution, b: &FiniteDistribution) -> Result<(), TestCaseError> {
    let (a, b) = (a.consolidate(), b.consolidate());
    prop_assert_eq!(a.outcomes(), b.outcomes());
    for (p, q) in a.probabilities().iter().zip(b.probabilities()) {
        prop_assert!((p - q).abs() <= 1e-12);
    }
    Ok(())
}

const MEASURES: [Measure; 4] = [Measure::Var, Measure::Cvar, Measure::Evar, Measure::Quantile];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn randomized_policy_is_a_mixture(seed in any::<u64>(), w in 0.0f64..=1.0) {
        let m = small_mdp(seed, 2);
        let mut r = rng(seed ^ 0x5eed);
        let (p1, p2) = (random_policy(&mut r, &m), random_policy(&mut r, &m));
        let mixed = RandomizedPolicy::mixture(&m, &[(w, &p1), (1.0 - w, &p2)]);
        let d = return_distribution(&m, &mixed).unwrap();
        let (d1, d2) = (return_distribution(&m, &p1).unwrap(), return_distribution(&m, &p2).unwrap());
        assert_same(&d, &FiniteDistribution::mixture(&[(w, &d1), (1.0 - w, &d2)]).unwrap())?;
        for measure in [Measure::Cvar, Measure::Evar, Measure::Var] {
            for a in [0.1, 0.5, 0.9] {
                let alpha = RiskLevel::new(a).unwrap();
                let v = measure.apply(&d, alpha).unwrap();
                let best = measure.apply(&d1, alpha).unwrap().max(measure.apply(&d2, alpha).unwrap());
                prop_assert!(v.as_f64() <= best.as_f64() + 1e-6 * m.reward_range().max(1.0));
            }
        }
    }

    #[test]
    fn consolidated_mass_and_conditional_recombination(seed in any::<u64>(), horizon in 1usize..=2) {
        let m = small_mdp(seed, 3).with_horizon(horizon);
        for pi in enumerate_deterministic_policies(&m).unwrap().take(16) {
            let d = return_distribution(&m, &pi).unwrap().consolidate();
            prop_assert!((d.probabilities().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let parts: Vec<(f64, FiniteDistribution)> = (0..m.num_states())
                .map(|s| (m.initial()[s], conditional_return_distribution(&m, &pi, s).unwrap()))
                .collect();
            let refs: Vec<(f64, &FiniteDistribution)> = parts.iter().map(|(w, d)| (*w, d)).collect();
            assert_same(&d, &FiniteDistribution::mixture(&refs).unwrap())?;
        }
    }

    #[test]
    fn optimum_dominates_every_policy(seed in any::<u64>(), a in 0.0f64..=1.0) {
        let m = small_mdp(seed, 3);
        let alpha = RiskLevel::new(a).unwrap();
        for measure in MEASURES {
            let r = oracle::optimize(&m, measure, alpha).unwrap();
            for (pi, v) in &r.per_policy_values {
                prop_assert!(*v <= r.value);
                prop_assert_eq!(oracle::evaluate(&m, pi, measure, alpha).unwrap(), *v);
            }
        }
    }

    #[test]
    fn cvar_optimum_below_decomposition(seed in any::<u64>(), a in 0.0f64..=1.0) {
        let m = small_mdp(seed, 3);
        let alpha = RiskLevel::new(a).unwrap();
        let r = cvar_opt_decomposition(&m, alpha, OuterSearch::Breakpoints).unwrap();
        let best = oracle::optimize(&m, Measure::Cvar, alpha).unwrap().value;
        prop_assert!(best.as_f64() <= r.value.as_f64() + 1e-9 * m.reward_range().max(1.0));
    }
}
