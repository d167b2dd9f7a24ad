//! CVaR decompositions over the capped simplex `Z_C`.
//!
//! For a state `s` with conditional reward `X`, the term
//! `w CVaR_{α w / p̂_s}(X)` equals `(p̂_s / α) T(α w / p̂_s)`, where `T` is
//! the tail integral of the quantile function of `X`. `T` is convex and
//! piecewise linear with kinks at the cumulative probabilities, so each
//! term is a convex piecewise-linear function of `w`. A pointwise maximum
//! over actions keeps that shape. The breakpoint search uses this to
//! minimize the separable sum exactly by filling mass along the cheapest
//! slopes.

use crate::mdp::{conditional_return_distribution, return_distribution, Mdp, Policy};
use crate::oracle;
use crate::risk::{cvar, tail_integral_sorted, ExtendedValue, FiniteDistribution, Measure, RiskLevel};

use super::grid::{simplex_grid_optimize, Direction};
use super::{
    action_choices, action_distribution, require_horizon_one, AllocationMode, AllocationSet, DecompError,
    DecompositionReport, OuterSearch, RiskAllocation, Scheme, FEASIBILITY_TOLERANCE,
};

/// Conditional reward distributions of one state, one per candidate action.
struct StateTerm {
    nominal: f64,
    options: Vec<FiniteDistribution>,
}

impl StateTerm {
    fn level(&self, alpha: f64, w: f64) -> f64 {
        if alpha <= 0.0 {
            0.0
        } else {
            (alpha * w / self.nominal).min(1.0)
        }
    }

    /// `w CVaR_{α w / p̂}` of option `k`.
    fn weighted(&self, k: usize, alpha: f64, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let d = &self.options[k];
        if alpha <= 0.0 {
            return w * d.min_outcome();
        }
        self.nominal / alpha * tail_integral_sorted(d, self.level(alpha, w))
    }

    /// Maximum over options and the first option attaining it.
    fn best(&self, alpha: f64, w: f64) -> (f64, usize) {
        let mut out = (f64::NEG_INFINITY, 0);
        for k in 0..self.options.len() {
            let v = self.weighted(k, alpha, w);
            if v > out.0 {
                out = (v, k);
            }
        }
        out
    }

    /// `CVaR_{α w / p̂}` of option `k`, the inner value reported per state.
    fn inner(&self, k: usize, alpha: f64, w: f64) -> f64 {
        crate::risk::cvar_sorted(&self.options[k], self.level(alpha, w))
    }

    /// Knots of the convex piecewise-linear `w -> max_k weighted(k, w)` on
    /// `[0, cap]`.
    fn knots(&self, alpha: f64, cap: f64) -> Vec<f64> {
        let mut xs = vec![0.0, cap];
        if alpha > 0.0 {
            for d in &self.options {
                let mut cum = 0.0;
                for &p in d.probabilities() {
                    cum += p;
                    let w = self.nominal * cum / alpha;
                    if w > 0.0 && w < cap {
                        xs.push(w);
                    }
                }
            }
        }
        dedup_sorted(&mut xs);
        if self.options.len() > 1 {
            let mut crossings = Vec::new();
            for pair in xs.windows(2) {
                let (u, v) = (pair[0], pair[1]);
                for a in 0..self.options.len() {
                    for b in a + 1..self.options.len() {
                        let du = self.weighted(a, alpha, u) - self.weighted(b, alpha, u);
                        let dv = self.weighted(a, alpha, v) - self.weighted(b, alpha, v);
                        if du * dv < 0.0 {
                            crossings.push(u + (v - u) * du / (du - dv));
                        }
                    }
                }
            }
            xs.extend(crossings);
            dedup_sorted(&mut xs);
        }
        xs
    }
}

fn dedup_sorted(xs: &mut Vec<f64>) {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|b, a| (*b - *a).abs() <= 1e-14 * a.abs().max(1.0));
}

struct Problem {
    alpha: f64,
    terms: Vec<StateTerm>,
    set: AllocationSet,
}

impl Problem {
    fn objective(&self, w: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(w)
            .map(|(t, &x)| t.best(self.alpha, x).0)
            .sum()
    }

    /// Exact minimizer over the capped simplex.
    fn solve_breakpoints(&self) -> Vec<f64> {
        // per state: (slope, length) of consecutive pieces, slopes ascending
        let pieces: Vec<Vec<(f64, f64)>> = self
            .terms
            .iter()
            .enumerate()
            .map(|(s, term)| {
                let xs = term.knots(self.alpha, self.set.cap(s));
                let ys: Vec<f64> = xs.iter().map(|&x| term.best(self.alpha, x).0).collect();
                (1..xs.len())
                    .map(|i| {
                        let length = xs[i] - xs[i - 1];
                        ((ys[i] - ys[i - 1]) / length, length)
                    })
                    .collect()
            })
            .collect();
        let mut w = vec![0.0; self.terms.len()];
        let mut head = vec![0usize; self.terms.len()];
        let mut remaining = 1.0;
        while remaining > 0.0 {
            // cheapest next piece; on equal slopes the later state, which
            // yields the lexicographically smallest minimizer
            let mut pick: Option<(f64, usize)> = None;
            for s in 0..pieces.len() {
                if let Some(&(slope, _)) = pieces[s].get(head[s]) {
                    if pick.is_none_or(|(best, _)| slope <= best) {
                        pick = Some((slope, s));
                    }
                }
            }
            let Some((_, s)) = pick else { break };
            let take = pieces[s][head[s]].1.min(remaining);
            w[s] += take;
            remaining -= take;
            head[s] += 1;
        }
        if remaining != 0.0 {
            // absorb roundoff so the allocation sums to one
            if let Some(s) = (0..w.len())
                .rev()
                .find(|&s| w[s] + remaining <= self.set.cap(s) && w[s] + remaining >= 0.0)
            {
                w[s] += remaining;
            }
        }
        w
    }

    fn solve(&self, search: OuterSearch) -> Result<(f64, Vec<f64>), DecompError> {
        match search {
            OuterSearch::Breakpoints => {
                let w = self.solve_breakpoints();
                Ok((self.objective(&w), w))
            }
            OuterSearch::Lattice { step, refine } => {
                let (v, alloc) = simplex_grid_optimize(
                    |w: &[f64]| Ok(ExtendedValue::Finite(self.objective(w))),
                    &self.set,
                    step,
                    Direction::Minimize,
                    refine,
                )?;
                Ok((v.as_f64(), alloc.weights))
            }
        }
    }

    fn report(
        &self,
        m: &Mdp,
        scheme: Scheme,
        alpha: RiskLevel,
        value: f64,
        w: Vec<f64>,
    ) -> DecompositionReport {
        let mut inner_values = Vec::with_capacity(w.len());
        let mut inner_levels = Vec::with_capacity(w.len());
        let mut actions = Vec::with_capacity(w.len());
        for (s, term) in self.terms.iter().enumerate() {
            let k = if term.options.len() > 1 {
                // argmax of the inner CVaR, first on ties
                let mut best = (f64::NEG_INFINITY, 0);
                for k in 0..term.options.len() {
                    let v = term.inner(k, self.alpha, w[s]);
                    if v > best.0 {
                        best = (v, k);
                    }
                }
                best.1
            } else {
                0
            };
            inner_values.push(ExtendedValue::Finite(term.inner(k, self.alpha, w[s])));
            inner_levels.push(RiskLevel::clamped(term.level(self.alpha, w[s])));
            actions.push(m.available(s)[k]);
        }
        DecompositionReport {
            scheme,
            alpha,
            value: ExtendedValue::Finite(value),
            allocation: RiskAllocation {
                weights: w,
                mode: AllocationMode::SimplexCapped,
            },
            states: m.states().to_vec(),
            inner_values,
            inner_levels,
            inner_actions: (scheme == Scheme::CvarOpt).then(|| action_choices(m, &actions)),
            oracle_value: None,
            oracle_gap: None,
        }
    }
}

fn capped_set(m: &Mdp, alpha: RiskLevel) -> AllocationSet {
    AllocationSet::new(AllocationMode::SimplexCapped, alpha, m.initial().to_vec())
}

/// `min_{ζ ∈ Z_C} Σ_s ζ_s CVaR_{α ζ_s / p̂_s}(X_s)` for a fixed policy, with
/// the oracle `CVaR_α` of the full return attached. Equality holds for
/// every policy.
pub fn cvar_eval_decomposition(
    m: &Mdp,
    pi: &dyn Policy,
    alpha: RiskLevel,
    search: OuterSearch,
) -> Result<DecompositionReport, DecompError> {
    require_horizon_one(m)?;
    let terms = (0..m.num_states())
        .map(|s| {
            Ok(StateTerm {
                nominal: m.initial()[s],
                options: vec![conditional_return_distribution(m, pi, s)?.consolidate()],
            })
        })
        .collect::<Result<Vec<_>, DecompError>>()?;
    let problem = Problem {
        alpha: alpha.get(),
        terms,
        set: capped_set(m, alpha),
    };
    let (value, w) = problem.solve(search)?;
    let oracle_value = cvar(&return_distribution(m, pi)?, alpha);
    Ok(problem
        .report(m, Scheme::CvarEval, alpha, value, w)
        .with_oracle(oracle_value))
}

/// `min_{ζ ∈ Z_C} Σ_s ζ_s max_a CVaR_{α ζ_s / p̂_s}(X_{s,a})`. Restricting
/// the inner maximum to deterministic actions loses nothing because CVaR
/// is convex in the distribution. The oracle is the best deterministic
/// policy; the gap is never negative and can be strictly positive.
pub fn cvar_opt_decomposition(
    m: &Mdp,
    alpha: RiskLevel,
    search: OuterSearch,
) -> Result<DecompositionReport, DecompError> {
    require_horizon_one(m)?;
    let terms = (0..m.num_states())
        .map(|s| {
            Ok(StateTerm {
                nominal: m.initial()[s],
                options: m
                    .available(s)
                    .iter()
                    .map(|&a| action_distribution(m, s, a))
                    .collect::<Result<Vec<_>, _>>()?,
            })
        })
        .collect::<Result<Vec<_>, DecompError>>()?;
    let problem = Problem {
        alpha: alpha.get(),
        terms,
        set: capped_set(m, alpha),
    };
    let (value, w) = problem.solve(search)?;
    let oracle_value = oracle::optimize(m, Measure::Cvar, alpha)?.value;
    Ok(problem
        .report(m, Scheme::CvarOpt, alpha, value, w)
        .with_oracle(oracle_value))
}

/// Samples of `θ_π(ζ) = Σ_s ζ_s CVaR_{α ζ_s / p̂_s}(X_s)` along
/// `ζ = (ζ_1, 1 - ζ_1)` on a two-state MDP. Points outside `Z_C` map to
/// `+inf`.
pub fn theta_curve(
    m: &Mdp,
    pi: &dyn Policy,
    alpha: RiskLevel,
    samples: &[f64],
) -> Result<Vec<(f64, ExtendedValue)>, DecompError> {
    require_horizon_one(m)?;
    if m.num_states() != 2 {
        return Err(DecompError::NotTwoStates(m.num_states()));
    }
    let a = alpha.get();
    let terms: Vec<StateTerm> = (0..2)
        .map(|s| {
            Ok(StateTerm {
                nominal: m.initial()[s],
                options: vec![conditional_return_distribution(m, pi, s)?.consolidate()],
            })
        })
        .collect::<Result<_, DecompError>>()?;
    Ok(samples
        .iter()
        .map(|&z| {
            let w = [z, 1.0 - z];
            let feasible = (0.0..=1.0).contains(&z)
                && terms
                    .iter()
                    .zip(w)
                    .all(|(t, x)| a * x <= t.nominal + FEASIBILITY_TOLERANCE);
            let v = if feasible {
                ExtendedValue::Finite(terms.iter().zip(w).map(|(t, x)| t.weighted(0, a, x)).sum())
            } else {
                ExtendedValue::PosInf
            };
            (z, v)
        })
        .collect())
}
