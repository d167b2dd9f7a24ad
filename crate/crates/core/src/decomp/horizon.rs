//! Multi-horizon VaR dynamic program on a risk-level grid.
//!
//! `q_t(s, a, α)` is the best VaR of the reward-to-go after playing `a` in
//! `s` at stage `t` with risk level `α`. Each stage allocates `α` across
//! successors exactly as the one-step VaR decomposition does, by scanning
//! thresholds. Continuation values exist only on grid levels, and every
//! successor level is rounded down to the grid before lookup, so the
//! computed `v0` never exceeds the true optimum.

use serde::{Deserialize, Serialize};

use crate::mdp::{HistoryPolicy, Mdp};
use crate::risk::{ExtendedValue, RiskLevel};

use super::DecompError;

const LEVEL_TOLERANCE: f64 = 1e-12;
const MONOTONE_TOLERANCE: f64 = 1e-9;

/// Sorted risk levels in `[0, 1]` with both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    levels: Vec<f64>,
}

impl AlphaGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self, DecompError> {
        if levels.len() < 2 || levels[0] != 0.0 || *levels.last().unwrap() != 1.0 {
            return Err(DecompError::InvalidGrid(
                "levels must start at 0 and end at 1".into(),
            ));
        }
        if levels
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(DecompError::InvalidGrid(
                "levels must be strictly increasing".into(),
            ));
        }
        Ok(Self { levels })
    }

    /// Levels `k / n` for `k = 0..=n`.
    pub fn uniform(divisions: usize) -> Result<Self, DecompError> {
        if divisions == 0 {
            return Err(DecompError::InvalidGrid("need at least one division".into()));
        }
        let n = divisions as f64;
        Self::new((0..=divisions).map(|k| k as f64 / n).collect())
    }

    /// Uniform grid with spacing `round(1 / h)⁻¹`.
    pub fn with_step(h: f64) -> Result<Self, DecompError> {
        Self::uniform(super::grid::divisions(h)?)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Largest gap between neighbouring levels.
    pub fn resolution(&self) -> f64 {
        self.levels.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the largest level not above `alpha`.
    pub fn floor_index(&self, alpha: f64) -> usize {
        self.levels.partition_point(|&l| l <= alpha + LEVEL_TOLERANCE) - 1
    }

    fn top(&self) -> usize {
        self.levels.len() - 1
    }
}

/// `q_t(s, a, k)` for `t = 1..=T+1`; unavailable actions hold `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionGrid {
    pub horizon: usize,
    pub alpha_grid: AlphaGrid,
    q: Vec<Vec<Vec<Vec<ExtendedValue>>>>,
}

impl ValueFunctionGrid {
    pub fn q(&self, t: usize, s: usize, a: usize, k: usize) -> ExtendedValue {
        self.q[t - 1][s][a][k]
    }

    /// `max_a q_t(s, a, k)` over the available actions, with the first
    /// maximizer.
    fn best(&self, m: &Mdp, t: usize, s: usize, k: usize) -> (ExtendedValue, usize) {
        let mut out = (ExtendedValue::NegInf, m.available(s)[0]);
        for &a in m.available(s) {
            let v = self.q(t, s, a, k);
            if v > out.0 {
                out = (v, a);
            }
        }
        out
    }
}

/// One decision of the extracted policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedStep {
    pub t: usize,
    /// `[s_1, a_1, ..., s_t]`.
    pub history: Vec<usize>,
    pub alpha_bar: RiskLevel,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedPolicy {
    pub steps: Vec<ExtractedStep>,
}

impl ExtractedPolicy {
    pub fn history_policy(&self, horizon: usize) -> HistoryPolicy {
        HistoryPolicy::new(
            horizon,
            self.steps.iter().map(|s| (s.history.clone(), s.action)).collect(),
        )
    }

    /// Risk levels of the first stage, indexed by initial state.
    pub fn initial_levels(&self) -> Vec<(usize, RiskLevel)> {
        self.steps
            .iter()
            .filter(|s| s.t == 1)
            .map(|s| (s.history[0], s.alpha_bar))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSolution {
    pub v0: ExtendedValue,
    pub value_function: ValueFunctionGrid,
    pub policy: ExtractedPolicy,
}

/// A successor with its probability and grid continuation values
/// `V(k) = r + max_a' q_{t+1}(s', a', k)`, nondecreasing in `k`.
struct Branch {
    p: f64,
    values: Vec<ExtendedValue>,
}

/// Exact stage problem: the largest `z` such that levels `λ_b` with
/// `Σ p_b λ_b <= budget` and `V_b(floor λ_b) >= z` exist. Returns `z` and
/// the witness levels, which start at the smallest sufficient grid levels
/// and absorb the leftover budget from the last branch backwards.
fn solve_stage(branches: &[Branch], grid: &AlphaGrid, budget: f64) -> (ExtendedValue, Vec<f64>) {
    if budget >= 1.0 {
        return (ExtendedValue::PosInf, vec![1.0; branches.len()]);
    }
    let levels = grid.levels();
    let needed = |b: &Branch, z: f64| b.values.partition_point(|v| *v < ExtendedValue::Finite(z));
    let used = |z: f64| -> f64 { branches.iter().map(|b| b.p * levels[needed(b, z)]).sum() };
    let mut candidates: Vec<f64> = branches
        .iter()
        .flat_map(|b| b.values.iter().filter_map(|v| v.finite()))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // feasibility is monotone in z and the smallest candidate is feasible
    let count = candidates.partition_point(|&z| used(z) <= budget + LEVEL_TOLERANCE);
    let z = candidates[count.max(1) - 1];
    let mut lambda: Vec<f64> = branches.iter().map(|b| levels[needed(b, z)]).collect();
    let mut slack = (budget - used(z)).max(0.0);
    for (i, b) in branches.iter().enumerate().rev() {
        if slack <= 0.0 {
            break;
        }
        let room = (1.0 - lambda[i]) * b.p;
        let take = room.min(slack);
        let raised = lambda[i] + take / b.p;
        lambda[i] = if take == room || raised >= 1.0 - LEVEL_TOLERANCE {
            1.0
        } else {
            raised
        };
        slack -= take;
    }
    (ExtendedValue::Finite(z), lambda)
}

fn branches(m: &Mdp, vf: &ValueFunctionGrid, t: usize, s: usize, a: usize) -> (Vec<usize>, Vec<Branch>) {
    let k_count = vf.alpha_grid.len();
    m.successors(s, a)
        .map(|(sp, p, r)| {
            let values = (0..k_count)
                .map(|k| vf.best(m, t + 1, sp, k).0.shift(r))
                .collect();
            (sp, Branch { p, values })
        })
        .unzip()
}

fn top_branches(m: &Mdp, vf: &ValueFunctionGrid) -> (Vec<usize>, Vec<Branch>) {
    let k_count = vf.alpha_grid.len();
    (0..m.num_states())
        .filter(|&s| m.initial()[s] > 0.0)
        .map(|s| {
            let values = (0..k_count).map(|k| vf.best(m, 1, s, k).0).collect();
            (
                s,
                Branch {
                    p: m.initial()[s],
                    values,
                },
            )
        })
        .unzip()
}

/// Backward recursion for the optimal VaR of the total reward over
/// `T = m.horizon()` stages, with a greedily extracted history-dependent
/// policy. `v0` is a lower bound on the optimum that tightens as the grid
/// is refined; the extracted policy attains at least `v0`.
pub fn var_dp_horizon(m: &Mdp, alpha: RiskLevel, grid: &AlphaGrid) -> Result<HorizonSolution, DecompError> {
    let horizon = m.horizon();
    let (ns, na) = (m.num_states(), m.num_actions());
    let top = grid.top();
    let terminal: Vec<ExtendedValue> = (0..grid.len())
        .map(|k| {
            if k == top {
                ExtendedValue::PosInf
            } else {
                ExtendedValue::Finite(0.0)
            }
        })
        .collect();
    let mut vf = ValueFunctionGrid {
        horizon,
        alpha_grid: grid.clone(),
        q: vec![vec![vec![vec![ExtendedValue::NegInf; grid.len()]; na]; ns]; horizon + 1],
    };
    for s in 0..ns {
        for a in 0..na {
            vf.q[horizon][s][a] = terminal.clone();
        }
    }
    for t in (1..=horizon).rev() {
        for s in 0..ns {
            for &a in m.available(s) {
                let (_, bs) = branches(m, &vf, t, s, a);
                let mut row: Vec<ExtendedValue> = grid
                    .levels()
                    .iter()
                    .map(|&level| solve_stage(&bs, grid, level).0)
                    .collect();
                let mut running = ExtendedValue::NegInf;
                for (k, v) in row.iter_mut().enumerate() {
                    if let (ExtendedValue::Finite(prev), ExtendedValue::Finite(cur)) = (running, *v) {
                        if cur < prev - MONOTONE_TOLERANCE {
                            return Err(DecompError::GridTooCoarse {
                                t,
                                state: m.state_name(s).to_string(),
                                action: m.action_name(a).to_string(),
                                level: grid.levels()[k],
                                drop: prev - cur,
                            });
                        }
                    }
                    running = running.max(*v);
                    *v = running;
                }
                vf.q[t - 1][s][a] = row;
            }
        }
    }

    let (roots, bs) = top_branches(m, &vf);
    let (v0, root_levels) = solve_stage(&bs, grid, alpha.get());
    let mut steps = Vec::new();
    for (s, level) in roots.into_iter().zip(root_levels) {
        extract(m, &vf, 1, vec![s], level, &mut steps);
    }
    Ok(HorizonSolution {
        v0,
        value_function: vf,
        policy: ExtractedPolicy { steps },
    })
}

fn extract(
    m: &Mdp,
    vf: &ValueFunctionGrid,
    t: usize,
    history: Vec<usize>,
    level: f64,
    out: &mut Vec<ExtractedStep>,
) {
    let s = *history.last().unwrap();
    let grid = &vf.alpha_grid;
    let k = grid.floor_index(level);
    let (_, action) = vf.best(m, t, s, k);
    out.push(ExtractedStep {
        t,
        history: history.clone(),
        alpha_bar: RiskLevel::clamped(level),
        action,
    });
    if t == m.horizon() {
        return;
    }
    let (succ, bs) = branches(m, vf, t, s, action);
    let (_, child_levels) = solve_stage(&bs, grid, grid.levels()[k]);
    for (sp, child) in succ.into_iter().zip(child_levels) {
        let mut h = history.clone();
        h.push(action);
        h.push(sp);
        extract(m, vf, t + 1, h, child, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::var_opt_decomposition;
    use crate::mdp::return_distribution;
    use crate::oracle;
    use crate::risk::{var, Measure};

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    #[test]
    fn grid_validation_and_floor() {
        assert!(AlphaGrid::new(vec![0.0, 0.5]).is_err());
        assert!(AlphaGrid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        let g = AlphaGrid::uniform(4).unwrap();
        assert_eq!(g.floor_index(0.3), 1);
        assert_eq!(g.floor_index(0.5), 2);
        assert_eq!(g.floor_index(1.0), 4);
        assert_eq!(g.resolution(), 0.25);
    }

    #[test]
    fn constant_chain() {
        let m = Mdp::builder()
            .transition("s", "a", "s", 1.0, 3.0)
            .initial("s", 1.0)
            .horizon(2)
            .build()
            .unwrap();
        let sol = var_dp_horizon(&m, lvl(0.5), &AlphaGrid::uniform(8).unwrap()).unwrap();
        assert_eq!(sol.v0, ExtendedValue::Finite(6.0));
        assert_eq!(sol.value_function.q(3, 0, 0, 8), ExtendedValue::PosInf);
        assert_eq!(sol.value_function.q(1, 0, 0, 8), ExtendedValue::PosInf);
        let top = var_dp_horizon(&m, lvl(1.0), &AlphaGrid::uniform(8).unwrap()).unwrap();
        assert_eq!(top.v0, ExtendedValue::PosInf);
    }

    fn two_state() -> Mdp {
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
    fn horizon_one_matches_exact_var() {
        let m = two_state();
        for a in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let sol = var_dp_horizon(&m, lvl(a), &AlphaGrid::uniform(100).unwrap()).unwrap();
            let exact = var_opt_decomposition(&m, lvl(a)).unwrap().value;
            assert_eq!(sol.v0, exact, "alpha {a}");
        }
    }

    #[test]
    fn two_stage_bounds_and_extracted_policy() {
        let m = two_state().with_horizon(2);
        let grid = AlphaGrid::uniform(64).unwrap();
        for a in [0.2, 0.5, 0.8] {
            let sol = var_dp_horizon(&m, lvl(a), &grid).unwrap();
            let best = oracle::optimize(&m, Measure::Var, lvl(a)).unwrap().value;
            assert!(sol.v0 <= best);
            let pi = sol.policy.history_policy(2);
            let realized = var(&return_distribution(&m, &pi).unwrap(), lvl(a));
            assert!(realized >= sol.v0 && realized <= best, "alpha {a}");
        }
    }
}
