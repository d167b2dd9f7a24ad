use serde::{Deserialize, Serialize};

use super::RiskError;

/// Largest deviation of the total mass from one that is silently renormalized.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A finitely supported real random variable.
///
/// Construction checks the basic invariants and renormalizes small mass
/// drift. The normal form (strictly increasing outcomes, positive
/// probabilities) is produced by [`FiniteDistribution::consolidate`]; every
/// risk measure works on that form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteDistribution {
    outcomes: Vec<f64>,
    probabilities: Vec<f64>,
    #[serde(skip)]
    normal: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    outcomes: Vec<f64>,
    probabilities: Vec<f64>,
}

impl<'de> Deserialize<'de> for FiniteDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawDistribution::deserialize(deserializer)?;
        FiniteDistribution::new(raw.outcomes, raw.probabilities).map_err(serde::de::Error::custom)
    }
}

impl FiniteDistribution {
    pub fn new(outcomes: Vec<f64>, probabilities: Vec<f64>) -> Result<Self, RiskError> {
        if outcomes.is_empty() {
            return Err(RiskError::EmptyDistribution);
        }
        if outcomes.len() != probabilities.len() {
            return Err(RiskError::LengthMismatch {
                outcomes: outcomes.len(),
                probabilities: probabilities.len(),
            });
        }
        if let Some(&x) = outcomes.iter().find(|x| !x.is_finite()) {
            return Err(RiskError::NonFiniteOutcome(x));
        }
        if let Some(&p) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(RiskError::BadMass(format!("invalid probability {p}")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(RiskError::BadMass(format!("probabilities sum to {total}")));
        }
        let probabilities = if total == 1.0 {
            probabilities
        } else {
            probabilities.into_iter().map(|p| p / total).collect()
        };
        let normal = is_normal_form(&outcomes, &probabilities);
        Ok(Self {
            outcomes,
            probabilities,
            normal,
        })
    }

    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Result<Self, RiskError> {
        Self::new(vec![x], vec![1.0])
    }

    /// Builds a distribution from `(outcome, weight)` pairs whose weights
    /// already sum to one up to rounding; the result is consolidated.
    pub fn from_atoms<I: IntoIterator<Item = (f64, f64)>>(atoms: I) -> Result<Self, RiskError> {
        let (outcomes, probabilities): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
        Ok(Self::new(outcomes, probabilities)?.consolidate())
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn is_normal(&self) -> bool {
        self.normal
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.outcomes
            .iter()
            .copied()
            .zip(self.probabilities.iter().copied())
    }

    /// Sorts outcomes, merges equal outcomes and drops zero-mass atoms.
    pub fn consolidate(&self) -> FiniteDistribution {
        if self.normal {
            return self.clone();
        }
        let mut pairs: Vec<(f64, f64)> = self.atoms().collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut outcomes: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probabilities: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, p) in pairs {
            match outcomes.last() {
                Some(&last) if last == x => *probabilities.last_mut().unwrap() += p,
                _ => {
                    outcomes.push(x);
                    probabilities.push(p);
                }
            }
        }
        let mut kept_x = Vec::with_capacity(outcomes.len());
        let mut kept_p = Vec::with_capacity(outcomes.len());
        for (x, p) in outcomes.into_iter().zip(probabilities) {
            if p > 0.0 {
                kept_x.push(x);
                kept_p.push(p);
            }
        }
        FiniteDistribution {
            outcomes: kept_x,
            probabilities: kept_p,
            normal: true,
        }
    }

    /// Normal form without cloning when already normal.
    pub(crate) fn normalized(&self) -> std::borrow::Cow<'_, FiniteDistribution> {
        if self.normal {
            std::borrow::Cow::Borrowed(self)
        } else {
            std::borrow::Cow::Owned(self.consolidate())
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, p)| x * p).sum()
    }

    pub fn min_outcome(&self) -> f64 {
        self.outcomes.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_outcome(&self) -> f64 {
        self.outcomes.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn range(&self) -> f64 {
        self.max_outcome() - self.min_outcome()
    }

    /// `P(x < z)`.
    pub fn prob_below(&self, z: f64) -> f64 {
        self.atoms().filter(|(x, _)| *x < z).map(|(_, p)| p).sum()
    }

    /// Distribution of `scale * x + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<FiniteDistribution, RiskError> {
        let outcomes = self.outcomes.iter().map(|x| scale * x + shift).collect();
        Ok(Self::new(outcomes, self.probabilities.clone())?.consolidate())
    }

    /// Mixture `Σ w_i d_i`; weights must sum to one.
    pub fn mixture(parts: &[(f64, &FiniteDistribution)]) -> Result<FiniteDistribution, RiskError> {
        Self::from_atoms(
            parts
                .iter()
                .flat_map(|(w, d)| d.atoms().map(move |(x, p)| (x, w * p))),
        )
    }
}

fn is_normal_form(outcomes: &[f64], probabilities: &[f64]) -> bool {
    probabilities.iter().all(|p| *p > 0.0) && outcomes.windows(2).all(|w| w[0] < w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(x: &[f64], p: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(x.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn merges_duplicates() {
        let d = dist(&[1.0, 0.0, 1.0], &[0.25, 0.5, 0.25]).consolidate();
        assert_eq!(d.outcomes(), &[0.0, 1.0]);
        assert_eq!(d.probabilities(), &[0.5, 0.5]);
        assert!(d.is_normal());
    }

    #[test]
    fn identity_on_point_mass() {
        let d = dist(&[5.0], &[1.0]).consolidate();
        assert_eq!(d.outcomes(), &[5.0]);
        assert_eq!(d.probabilities(), &[1.0]);
    }

    #[test]
    fn sorts_outcomes() {
        let d = dist(&[2.0, 1.0], &[0.3, 0.7]).consolidate();
        assert_eq!(d.outcomes(), &[1.0, 2.0]);
        assert_eq!(d.probabilities(), &[0.7, 0.3]);
    }

    #[test]
    fn drops_zero_mass() {
        let d = dist(&[3.0, 1.0, 2.0], &[0.0, 0.5, 0.5]).consolidate();
        assert_eq!(d.outcomes(), &[1.0, 2.0]);
    }

    #[test]
    fn rejects_non_finite_and_bad_mass() {
        assert!(matches!(
            FiniteDistribution::new(vec![f64::NAN], vec![1.0]),
            Err(RiskError::NonFiniteOutcome(_))
        ));
        assert!(matches!(
            FiniteDistribution::new(vec![f64::INFINITY], vec![1.0]),
            Err(RiskError::NonFiniteOutcome(_))
        ));
        assert!(matches!(
            FiniteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.4]),
            Err(RiskError::BadMass(_))
        ));
        assert!(matches!(
            FiniteDistribution::new(vec![0.0, 1.0], vec![1.1, -0.1]),
            Err(RiskError::BadMass(_))
        ));
        assert!(matches!(
            FiniteDistribution::new(vec![], vec![]),
            Err(RiskError::EmptyDistribution)
        ));
    }

    #[test]
    fn renormalizes_small_drift() {
        let d = dist(&[0.0, 1.0], &[0.5, 0.5 + 5e-10]);
        let total: f64 = d.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_shape() {
        let d: FiniteDistribution =
            serde_json::from_str(r#"{"outcomes":[1,0],"probabilities":[0.5,0.5]}"#).unwrap();
        assert_eq!(d.len(), 2);
        let text = serde_json::to_string(&d.consolidate()).unwrap();
        assert_eq!(text, r#"{"outcomes":[0.0,1.0],"probabilities":[0.5,0.5]}"#);
        assert!(
            serde_json::from_str::<FiniteDistribution>(r#"{"outcomes":[1],"probabilities":[0.5]}"#).is_err()
        );
    }
}
