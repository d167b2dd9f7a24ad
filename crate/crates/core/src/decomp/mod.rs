//! Risk-level decompositions of static risk measures for finite MDPs.
//!
//! Each scheme rewrites the risk of the total reward as an optimization
//! over an allocation `ζ` of the risk level across initial states, with a
//! conditional risk term per state. CVaR and EVaR schemes search the
//! allocation numerically; VaR and lower-quantile schemes are solved
//! exactly by scanning reward thresholds.

mod cvar;
mod evar;
mod grid;
mod horizon;
mod quantile;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Mdp, MdpError, Policy};
use crate::risk::{kl_divergence, ExtendedValue, FiniteDistribution, RiskError, RiskLevel};

pub use cvar::{cvar_eval_decomposition, cvar_opt_decomposition, theta_curve};
pub use evar::{evar_corrected_decomposition, evar_ni_decomposition};
pub use grid::{simplex_grid_optimize, Direction, LATTICE_POINT_LIMIT, REFINE_FLOOR};
pub use horizon::{
    var_dp_horizon, AlphaGrid, ExtractedPolicy, ExtractedStep, HorizonSolution, ValueFunctionGrid,
};
pub use quantile::{quantile_opt_decomposition, var_decomposition, var_opt_decomposition};

/// Slack on allocation feasibility tests.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("the feasible allocation set is empty")]
    EmptyFeasibleSet,
    #[error("this scheme needs horizon 1, the MDP has horizon {0}")]
    HorizonNotOne(usize),
    #[error("theta curves need exactly two states, the MDP has {0}")]
    NotTwoStates(usize),
    #[error("risk level {alpha} is not supported: {reason}")]
    UnsupportedRiskLevel { alpha: f64, reason: &'static str },
    #[error("lattice step {0} must lie in (0, 1]")]
    InvalidStep(f64),
    #[error("lattice with {divisions} divisions has {points} points, limit is {limit}")]
    LatticeTooLarge {
        divisions: usize,
        points: u128,
        limit: u128,
    },
    #[error("breakpoint search is only available for the CVaR schemes")]
    UnsupportedSearch,
    #[error("invalid alpha grid: {0}")]
    InvalidGrid(String),
    #[error("scheme {0} evaluates a fixed policy, none was given")]
    PolicyRequired(Scheme),
    #[error("grid too coarse: q_{t}({state}, {action}) drops by {drop:e} at level {level}")]
    GridTooCoarse {
        t: usize,
        state: String,
        action: String,
        level: f64,
        drop: f64,
    },
}

/// Feasible set an allocation belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AllocationMode {
    /// `ζ ∈ Δ`, `α ζ <= p̂`, minimized over.
    SimplexCapped,
    /// `ξ ∈ Δ`, `α ξ <= p̂`, `KL(ξ || p̂) <= -log α`.
    KlCapped,
    /// `ξ ∈ Δ`, `ξ << p̂`, `Σ ξ_s (log(ξ_s / p̂_s) - log ζ_s) <= -log α`.
    KlRelative { levels: Vec<f64> },
    /// `ζ ∈ [0, 1]^S` with `Σ ζ_s p̂_s < α`.
    Box01StrictSum,
    /// Same set as `SimplexCapped`, maximized over.
    SimplexCappedSup,
}

impl AllocationMode {
    fn on_simplex(&self) -> bool {
        !matches!(self, AllocationMode::Box01StrictSum)
    }

    fn capped(&self) -> bool {
        matches!(
            self,
            AllocationMode::SimplexCapped | AllocationMode::SimplexCappedSup | AllocationMode::KlCapped
        )
    }
}

/// An allocation mode together with the data its constraints refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSet {
    pub mode: AllocationMode,
    pub alpha: f64,
    pub nominal: Vec<f64>,
}

impl AllocationSet {
    pub fn new(mode: AllocationMode, alpha: RiskLevel, nominal: Vec<f64>) -> Self {
        Self {
            mode,
            alpha: alpha.get(),
            nominal,
        }
    }

    /// The whole simplex of the given dimension.
    pub(crate) fn simplex(dim: usize) -> Self {
        Self {
            mode: AllocationMode::SimplexCapped,
            alpha: 0.0,
            nominal: vec![1.0 / dim as f64; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.nominal.len()
    }

    pub fn on_simplex(&self) -> bool {
        self.mode.on_simplex()
    }

    /// Upper bound on coordinate `i`.
    pub fn cap(&self, i: usize) -> f64 {
        if self.mode.capped() && self.alpha > 0.0 {
            (self.nominal[i] / self.alpha).min(1.0)
        } else {
            1.0
        }
    }

    /// Feasibility at [`FEASIBILITY_TOLERANCE`]; strict inequalities are
    /// tested strictly.
    pub fn contains(&self, w: &[f64]) -> bool {
        let tol = FEASIBILITY_TOLERANCE;
        if w.len() != self.dim() || w.iter().any(|x| !x.is_finite() || *x < -tol || *x > 1.0 + tol) {
            return false;
        }
        if self.on_simplex() && (w.iter().sum::<f64>() - 1.0).abs() > tol {
            return false;
        }
        if self.mode.capped() && w.iter().zip(&self.nominal).any(|(x, p)| self.alpha * x > p + tol) {
            return false;
        }
        let radius = -self.alpha.ln();
        match &self.mode {
            AllocationMode::KlCapped => {
                let w: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
                match kl_divergence(&w, &self.nominal) {
                    Ok(ExtendedValue::Finite(kl)) => kl <= radius + tol,
                    _ => false,
                }
            }
            AllocationMode::KlRelative { levels } => {
                let mut total = 0.0;
                for ((&x, &p), &z) in w.iter().zip(&self.nominal).zip(levels) {
                    if x <= 0.0 {
                        continue;
                    }
                    if p <= 0.0 || z <= 0.0 {
                        return false;
                    }
                    total += x * ((x / p).ln() - z.ln());
                }
                total <= radius + tol
            }
            AllocationMode::Box01StrictSum => {
                w.iter().zip(&self.nominal).map(|(x, p)| x * p).sum::<f64>() < self.alpha
            }
            _ => true,
        }
    }

    /// A point tried before the lattice: `p̂` on the simplex, the origin in
    /// the box.
    pub(crate) fn seed(&self) -> Vec<f64> {
        if self.on_simplex() {
            self.nominal.clone()
        } else {
            vec![0.0; self.dim()]
        }
    }
}

/// A weight vector over states and the set it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAllocation {
    pub weights: Vec<f64>,
    pub mode: AllocationMode,
}

/// How the outer allocation is searched by the CVaR and EVaR schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum OuterSearch {
    /// Lattice with coordinate step `step`, optionally polished by pattern
    /// search.
    Lattice { step: f64, refine: bool },
    /// Exact minimization over the breakpoints of the piecewise-linear
    /// objective (CVaR schemes only).
    Breakpoints,
}

impl OuterSearch {
    pub fn lattice(step: f64) -> Self {
        OuterSearch::Lattice { step, refine: false }
    }

    pub fn refined(step: f64) -> Self {
        OuterSearch::Lattice { step, refine: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CvarEval,
    CvarOpt,
    EvarNi,
    EvarCorrected,
    Var,
    VarOpt,
    QuantileOpt,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::CvarEval,
        Scheme::CvarOpt,
        Scheme::EvarNi,
        Scheme::EvarCorrected,
        Scheme::Var,
        Scheme::VarOpt,
        Scheme::QuantileOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::CvarEval => "cvar-eval",
            Scheme::CvarOpt => "cvar-opt",
            Scheme::EvarNi => "evar-ni",
            Scheme::EvarCorrected => "evar-corrected",
            Scheme::Var => "var",
            Scheme::VarOpt => "var-opt",
            Scheme::QuantileOpt => "quantile-opt",
        }
    }

    /// Whether the scheme optimizes over policies rather than evaluating one.
    pub fn optimizes(self) -> bool {
        matches!(self, Scheme::CvarOpt | Scheme::VarOpt | Scheme::QuantileOpt)
    }

    /// Whether the value recombines as `Σ_s w_s inner_s` (otherwise as
    /// `min_s inner_s`).
    pub fn weighted(self) -> bool {
        matches!(
            self,
            Scheme::CvarEval | Scheme::CvarOpt | Scheme::EvarNi | Scheme::EvarCorrected
        )
    }

    /// Default lattice step for the searched schemes.
    pub fn default_step(self) -> f64 {
        match self {
            Scheme::EvarNi | Scheme::EvarCorrected => 1e-2,
            _ => 1e-3,
        }
    }
}

/// Runs `scheme` on `m`. Evaluation schemes need `policy`; `search` is
/// ignored by the exact VaR and quantile schemes.
pub fn decompose(
    m: &Mdp,
    scheme: Scheme,
    alpha: RiskLevel,
    policy: Option<&dyn Policy>,
    search: OuterSearch,
) -> Result<DecompositionReport, DecompError> {
    let pi = || policy.ok_or(DecompError::PolicyRequired(scheme));
    match scheme {
        Scheme::CvarEval => cvar_eval_decomposition(m, pi()?, alpha, search),
        Scheme::CvarOpt => cvar_opt_decomposition(m, alpha, search),
        Scheme::EvarNi => evar_ni_decomposition(m, pi()?, alpha, search),
        Scheme::EvarCorrected => evar_corrected_decomposition(m, pi()?, alpha, search),
        Scheme::Var => var_decomposition(m, pi()?, alpha),
        Scheme::VarOpt => var_opt_decomposition(m, alpha),
        Scheme::QuantileOpt => quantile_opt_decomposition(m, alpha),
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionChoice {
    pub index: usize,
    pub name: String,
}

/// Outcome of a decomposition. Per-state vectors follow the MDP's state
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub scheme: Scheme,
    pub alpha: RiskLevel,
    pub value: ExtendedValue,
    pub allocation: RiskAllocation,
    pub states: Vec<String>,
    pub inner_values: Vec<ExtendedValue>,
    pub inner_levels: Vec<RiskLevel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inner_actions: Option<Vec<ActionChoice>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle_value: Option<ExtendedValue>,
    /// `value - oracle_value`; positive means the decomposition overestimates.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle_gap: Option<ExtendedValue>,
}

impl DecompositionReport {
    /// The value rebuilt from the allocation and the inner terms.
    pub fn recombined(&self) -> Result<ExtendedValue, RiskError> {
        if self.scheme.weighted() {
            let mut total = ExtendedValue::Finite(0.0);
            for (w, v) in self.allocation.weights.iter().zip(&self.inner_values) {
                total = total.checked_add(v.weighted(*w))?;
            }
            Ok(total)
        } else {
            Ok(self
                .inner_values
                .iter()
                .copied()
                .fold(ExtendedValue::PosInf, ExtendedValue::min))
        }
    }

    /// Markov policy playing the recorded inner action in every state.
    pub fn greedy_policy(&self) -> Option<crate::mdp::DeterministicPolicy> {
        self.inner_actions
            .as_ref()
            .map(|a| crate::mdp::DeterministicPolicy::new(a.iter().map(|c| c.index).collect()))
    }

    pub(crate) fn with_oracle(mut self, oracle: ExtendedValue) -> Self {
        self.oracle_gap = Some(extended_difference(self.value, oracle));
        self.oracle_value = Some(oracle);
        self
    }
}

/// `a - b` with equal infinities mapped to zero.
pub fn extended_difference(a: ExtendedValue, b: ExtendedValue) -> ExtendedValue {
    match (a, b) {
        (ExtendedValue::Finite(x), ExtendedValue::Finite(y)) => ExtendedValue::Finite(x - y),
        (x, y) if x == y => ExtendedValue::Finite(0.0),
        (ExtendedValue::PosInf, _) | (_, ExtendedValue::NegInf) => ExtendedValue::PosInf,
        _ => ExtendedValue::NegInf,
    }
}

pub(crate) fn require_horizon_one(m: &Mdp) -> Result<(), DecompError> {
    if m.horizon() != 1 {
        return Err(DecompError::HorizonNotOne(m.horizon()));
    }
    Ok(())
}

/// Reward distribution of playing `a` once in `s`.
pub(crate) fn action_distribution(m: &Mdp, s: usize, a: usize) -> Result<FiniteDistribution, RiskError> {
    FiniteDistribution::from_atoms(m.successors(s, a).map(|(_, p, r)| (r, p)))
}

pub(crate) fn action_choices(m: &Mdp, actions: &[usize]) -> Vec<ActionChoice> {
    actions
        .iter()
        .map(|&a| ActionChoice {
            index: a,
            name: m.action_name(a).to_string(),
        })
        .collect()
}
