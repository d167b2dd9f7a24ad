//! Quantiles, CVaR and KL divergence on finite distributions.
//!
//! All routines are exact scans over the consolidated atoms. Cumulative
//! probabilities are compared against the risk level with slack
//! [`PROB_TOLERANCE`] so that two sums of the same masses taken in a
//! different order select the same atom.

use super::{ExtendedValue, FiniteDistribution, RiskError, RiskLevel};

/// Slack used when a cumulative probability is compared with a risk level.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// Upper quantile `sup { z : P(x < z) <= alpha }`; `+inf` at `alpha = 1`.
pub fn var(d: &FiniteDistribution, alpha: RiskLevel) -> ExtendedValue {
    let alpha = alpha.get();
    if alpha >= 1.0 {
        return ExtendedValue::PosInf;
    }
    let d = d.normalized();
    let mut below = 0.0;
    let mut best = d.outcomes()[0];
    for (x, p) in d.atoms() {
        if below <= alpha + PROB_TOLERANCE {
            best = x;
        } else {
            break;
        }
        below += p;
    }
    ExtendedValue::Finite(best)
}

/// Lower quantile `inf { z : P(x <= z) >= alpha }`; `-inf` at `alpha = 0`.
pub fn lower_quantile(d: &FiniteDistribution, alpha: RiskLevel) -> ExtendedValue {
    let alpha = alpha.get();
    if alpha <= 0.0 {
        return ExtendedValue::NegInf;
    }
    let d = d.normalized();
    let mut at_most = 0.0;
    for (x, p) in d.atoms() {
        at_most += p;
        if at_most >= alpha - PROB_TOLERANCE {
            return ExtendedValue::Finite(x);
        }
    }
    ExtendedValue::Finite(d.max_outcome())
}

/// Conditional value at risk: mean of the worst `alpha` mass, splitting the
/// boundary atom. `alpha = 0` gives the essential infimum and `alpha = 1`
/// the expectation.
pub fn cvar(d: &FiniteDistribution, alpha: RiskLevel) -> ExtendedValue {
    ExtendedValue::Finite(cvar_sorted(&d.normalized(), alpha.get()))
}

pub(crate) fn cvar_sorted(d: &FiniteDistribution, alpha: f64) -> f64 {
    debug_assert!(d.is_normal());
    if alpha <= 0.0 {
        return d.outcomes()[0];
    }
    if alpha >= 1.0 {
        return d.mean();
    }
    let mut remaining = alpha;
    let mut acc = 0.0;
    for (x, p) in d.atoms() {
        let take = p.min(remaining);
        acc += take * x;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    acc / alpha
}

/// `alpha * CVaR_alpha`, the integral of the quantile function over
/// `[0, alpha]`; piecewise linear in `alpha` with kinks at the cumulative
/// probabilities.
pub(crate) fn tail_integral_sorted(d: &FiniteDistribution, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        0.0
    } else if alpha >= 1.0 {
        d.mean()
    } else {
        cvar_sorted(d, alpha) * alpha
    }
}

/// Relative entropy `Σ p_i log(p_i / q_i)` with `0 log 0 = 0`; `+inf` when
/// `p` is not absolutely continuous with respect to `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<ExtendedValue, RiskError> {
    if p.len() != q.len() {
        return Err(RiskError::LengthMismatch {
            outcomes: p.len(),
            probabilities: q.len(),
        });
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi < 0.0 || qi < 0.0 {
            return Err(RiskError::BadMass(format!("negative weight {pi} / {qi}")));
        }
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(ExtendedValue::PosInf);
        }
        total += pi * (pi / qi).ln();
    }
    Ok(ExtendedValue::Finite(total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: &[f64], p: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(x.to_vec(), p.to_vec()).unwrap()
    }

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn bernoulli() -> FiniteDistribution {
        d(&[0.0, 1.0], &[0.5, 0.5])
    }

    fn three_atoms() -> FiniteDistribution {
        d(&[-50.0, 10.0, 100.0], &[0.2, 0.5, 0.3])
    }

    #[test]
    fn var_examples() {
        assert_eq!(var(&bernoulli(), lvl(0.5)), ExtendedValue::Finite(1.0));
        assert_eq!(var(&three_atoms(), lvl(0.5)), ExtendedValue::Finite(10.0));
        assert_eq!(var(&three_atoms(), lvl(1.0)), ExtendedValue::PosInf);
        assert_eq!(var(&three_atoms(), lvl(0.0)), ExtendedValue::Finite(-50.0));
        assert_eq!(var(&three_atoms(), lvl(0.2)), ExtendedValue::Finite(10.0));
        assert_eq!(var(&three_atoms(), lvl(0.19)), ExtendedValue::Finite(-50.0));
    }

    #[test]
    fn lower_quantile_examples() {
        assert_eq!(lower_quantile(&bernoulli(), lvl(0.5)), ExtendedValue::Finite(0.0));
        assert_eq!(
            lower_quantile(&three_atoms(), lvl(0.9)),
            ExtendedValue::Finite(100.0)
        );
        assert_eq!(lower_quantile(&three_atoms(), lvl(0.0)), ExtendedValue::NegInf);
        assert_eq!(
            lower_quantile(&three_atoms(), lvl(1.0)),
            ExtendedValue::Finite(100.0)
        );
    }

    #[test]
    fn cvar_examples() {
        let v = cvar(&three_atoms(), lvl(0.5)).finite().unwrap();
        assert!((v + 14.0).abs() < 1e-12);
        let v = cvar(&d(&[0.0, 10.0], &[0.5, 0.5]), lvl(0.5)).finite().unwrap();
        assert_eq!(v, 0.0);
        let v = cvar(&bernoulli(), lvl(0.75)).finite().unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cvar(&three_atoms(), lvl(0.0)), ExtendedValue::Finite(-50.0));
        let mean = three_atoms().mean();
        assert_eq!(cvar(&three_atoms(), lvl(1.0)), ExtendedValue::Finite(mean));
    }

    #[test]
    fn measures_accept_unsorted_input() {
        let raw = d(&[100.0, -50.0, 10.0, 10.0], &[0.3, 0.2, 0.25, 0.25]);
        assert!(!raw.is_normal());
        assert_eq!(var(&raw, lvl(0.5)), ExtendedValue::Finite(10.0));
        assert!((cvar(&raw, lvl(0.5)).finite().unwrap() + 14.0).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), ExtendedValue::Finite(0.0));
        let got = kl_divergence(&[1.0 / 3.0, 2.0 / 3.0], &[0.5, 0.5]).unwrap();
        let want = (1.0 / 3.0) * (2.0f64 / 3.0).ln() + (2.0 / 3.0) * (4.0f64 / 3.0).ln();
        assert!((got.finite().unwrap() - want).abs() < 1e-15);
        assert_eq!(
            kl_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            ExtendedValue::PosInf
        );
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }
}
