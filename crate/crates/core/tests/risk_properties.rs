use proptest::prelude::*;
use riskdp::risk::{cvar, evar, evar_with, lower_quantile, var, EvarOptions};
use riskdp::{ExtendedValue, FiniteDistribution, RiskLevel};

fn distribution() -> impl Strategy<Value = FiniteDistribution> {
    prop::collection::vec((-10.0f64..10.0, 0.01f64..1.0), 1..8).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        FiniteDistribution::from_atoms(atoms.into_iter().map(|(x, w)| (x, w / total))).unwrap()
    })
}

/// Distributions on a small integer support, so ties and repeated
/// outcomes are common.
fn lumpy_distribution() -> impl Strategy<Value = FiniteDistribution> {
    prop::collection::vec((-3i32..=3, 1u32..5), 1..10).prop_map(|atoms| {
        let total: u32 = atoms.iter().map(|a| a.1).sum();
        FiniteDistribution::from_atoms(
            atoms
                .into_iter()
                .map(|(x, w)| (x as f64, w as f64 / total as f64)),
        )
        .unwrap()
    })
}

fn level() -> impl Strategy<Value = RiskLevel> {
    prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0].prop_map(|a| RiskLevel::new(a).unwrap())
}

fn tol(d: &FiniteDistribution) -> f64 {
    1e-9 * d.range().max(1.0)
}

/// Independent CVaR: fill the worst outcomes greedily up to mass `α`.
fn cvar_by_filling(d: &FiniteDistribution, alpha: f64) -> f64 {
    let mut atoms: Vec<(f64, f64)> = d.atoms().collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    if alpha == 0.0 {
        return atoms[0].0;
    }
    let mut left = alpha;
    let mut total = 0.0;
    for (x, p) in atoms {
        let take = p.min(left);
        total += take * x;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    total / alpha
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quantile_sandwich_and_condition(d in lumpy_distribution(), a in 0.001f64..0.999) {
        let alpha = RiskLevel::new(a).unwrap();
        let q = lower_quantile(&d, alpha);
        let v = var(&d, alpha);
        prop_assert!(q <= v);
        for z in [q, v] {
            let z = z.as_f64();
            let below: f64 = d.atoms().filter(|(x, _)| *x < z).map(|(_, p)| p).sum();
            let at_or_below: f64 = d.atoms().filter(|(x, _)| *x <= z).map(|(_, p)| p).sum();
            prop_assert!(at_or_below >= a - 1e-12, "P(x <= {}) = {} < {}", z, at_or_below, a);
            prop_assert!(below <= a + 1e-12, "P(x < {}) = {} > {}", z, below, a);
        }
    }

    #[test]
    fn ordering(d in distribution(), a in prop_oneof![Just(1.0), 1e-6f64..=1.0]) {
        let alpha = RiskLevel::new(a).unwrap();
        let t = tol(&d);
        let e = evar(&d, alpha).unwrap().as_f64();
        let c = cvar(&d, alpha).as_f64();
        let cap = var(&d, alpha).min(ExtendedValue::Finite(d.mean())).as_f64();
        prop_assert!(d.min_outcome() <= e + t);
        prop_assert!(e <= c + t, "evar {} cvar {}", e, c);
        prop_assert!(c <= cap + t);
    }

    #[test]
    fn monotone_in_alpha(d in lumpy_distribution(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = (RiskLevel::new(a.min(b)).unwrap(), RiskLevel::new(a.max(b)).unwrap());
        let t = tol(&d);
        prop_assert!(var(&d, lo) <= var(&d, hi));
        prop_assert!(lower_quantile(&d, lo) <= lower_quantile(&d, hi));
        prop_assert!(cvar(&d, lo).as_f64() <= cvar(&d, hi).as_f64() + t);
        prop_assert!(evar(&d, lo).unwrap().as_f64() <= evar(&d, hi).unwrap().as_f64() + t);
    }

    #[test]
    fn cash_invariance_and_homogeneity(d in distribution(), alpha in level(), c in -5.0f64..5.0, s in 0.1f64..3.0) {
        let moved = d.affine(s, c).unwrap();
        let t = 1e-8 * (1.0 + s) * d.range().max(1.0);
        let (c0, c1) = (cvar(&d, alpha).as_f64(), cvar(&moved, alpha).as_f64());
        prop_assert!((c1 - (s * c0 + c)).abs() <= t);
        let (e0, e1) = (evar(&d, alpha).unwrap().as_f64(), evar(&moved, alpha).unwrap().as_f64());
        prop_assert!((e1 - (s * e0 + c)).abs() <= t, "{} vs {}", e1, s * e0 + c);
        if let (Some(v0), Some(v1)) = (var(&d, alpha).finite(), var(&moved, alpha).finite()) {
            prop_assert!((v1 - (s * v0 + c)).abs() <= t);
        }
    }

    #[test]
    fn cvar_matches_greedy_filling(d in lumpy_distribution(), alpha in level()) {
        let c = cvar(&d, alpha).as_f64();
        prop_assert!((c - cvar_by_filling(&d, alpha.get())).abs() <= 1e-12 * d.range().max(1.0));
    }

    #[test]
    fn evar_primal_matches_dual(d in distribution(), a in 0.01f64..0.99) {
        let r = evar_with(&d, RiskLevel::new(a).unwrap(), &EvarOptions::default().with_dual_check()).unwrap();
        let dual = r.dual_value.unwrap();
        prop_assert!((r.value.as_f64() - dual).abs() <= 1e-6 * d.range().max(1e-12), "{:?}", r);
    }

    #[test]
    fn consolidate_is_idempotent_and_preserves_measures(
        atoms in prop::collection::vec((-3i32..=3, 1u32..5), 1..10),
        alpha in level(),
    ) {
        let total: u32 = atoms.iter().map(|a| a.1).sum();
        let raw = FiniteDistribution::new(
            atoms.iter().map(|a| a.0 as f64).collect(),
            atoms.iter().map(|a| a.1 as f64 / total as f64).collect(),
        ).unwrap();
        let once = raw.consolidate();
        prop_assert_eq!(once.consolidate(), once.clone());
        prop_assert!((once.probabilities().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(var(&raw, alpha), var(&once, alpha));
        prop_assert_eq!(lower_quantile(&raw, alpha), lower_quantile(&once, alpha));
        prop_assert_eq!(cvar(&raw, alpha), cvar(&once, alpha));
        prop_assert_eq!(evar(&raw, alpha).unwrap(), evar(&once, alpha).unwrap());
    }

    #[test]
    fn mixtures(d1 in distribution(), d2 in distribution(), w in 0.0f64..=1.0, alpha in level()) {
        let mix = FiniteDistribution::mixture(&[(w, &d1), (1.0 - w, &d2)]).unwrap();
        let t = 1e-9 * (d1.range() + d2.range()).max(1.0);
        let worst = |f: &dyn Fn(&FiniteDistribution) -> f64| f(&d1).max(f(&d2));
        prop_assert!(cvar(&mix, alpha).as_f64() <= worst(&|d| cvar(d, alpha).as_f64()) + t);
        prop_assert!(evar(&mix, alpha).unwrap().as_f64() <= worst(&|d| evar(d, alpha).unwrap().as_f64()) + 1e-6);
        prop_assert!(var(&mix, alpha) <= var(&d1, alpha).max(var(&d2, alpha)));
    }
}

#[test]
fn endpoints() {
    let d = FiniteDistribution::new(vec![-2.0, 1.0, 5.0], vec![0.2, 0.5, 0.3]).unwrap();
    let zero = RiskLevel::new(0.0).unwrap();
    let one = RiskLevel::new(1.0).unwrap();
    assert_eq!(cvar(&d, zero).as_f64(), -2.0);
    assert_eq!(evar(&d, zero).unwrap().as_f64(), -2.0);
    assert!((cvar(&d, one).as_f64() - d.mean()).abs() < 1e-15);
    assert!((evar(&d, one).unwrap().as_f64() - d.mean()).abs() < 1e-12);
    assert_eq!(var(&d, one), ExtendedValue::PosInf);
    assert_eq!(lower_quantile(&d, zero), ExtendedValue::NegInf);
}
