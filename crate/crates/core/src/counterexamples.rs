//! Builders for the three reference MDPs and routines that recompute
//! every number derived from them.
//!
//! * `Mc`: two states, two actions in `s1`; the CVaR optimization
//!   decomposition overestimates the optimum by 4 at `α = 0.5`.
//! * `Me`: two deterministic single-action states; the Ni-style EVaR
//!   decomposition collapses to CVaR and misses EVaR.
//! * `M3`: three actions in `s1` with reward magnitude `M` and initial mass
//!   `p_s2` on the absorbing state; the decomposition's greedy policy is
//!   strictly worse than the optimum on a band of risk levels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomp::{cvar_opt_decomposition, evar_ni_decomposition, AlphaGrid, DecompError, OuterSearch};
use crate::mdp::{return_distribution, DeterministicPolicy, Mdp, MdpError};
use crate::oracle;
use crate::risk::{cvar, evar_with, kl_divergence, EvarOptions, Measure, RiskError, RiskLevel};

/// Reference values, each recomputed by the checks in this module.
pub mod golden {
    pub const MC_ALPHA: f64 = 0.5;
    pub const MC_OPTIMUM: f64 = 0.0;
    pub const MC_DECOMPOSITION: f64 = 4.0;
    pub const MC_ARGMIN_ZETA: f64 = 0.6;
    /// Lipschitz constant of the M_C θ-curves in `ζ_1`.
    pub const MC_THETA_SLOPE: f64 = 140.0;

    pub const ME_ALPHA: f64 = 0.75;
    pub const ME_CVAR: f64 = 1.0 / 3.0;
    pub const ME_XI_STAR: [f64; 2] = [1.0 / 3.0, 2.0 / 3.0];
    pub const ME_EVAR_MARGIN: f64 = 1e-3;

    pub const M3_MAGNITUDE: f64 = 600.0;
    pub const M3_P_S2: f64 = 0.5;
    pub const M3_ALPHA: f64 = 0.5;
    pub const M3_OPTIMUM: f64 = 50.0;
    pub const M3_DECOMPOSITION: f64 = 100.0;
    pub const M3_REALIZED: f64 = 0.0;
    pub const M3_A3_REGION: (f64, f64) = (0.375, 0.6875);

    pub const SWEEP_MAGNITUDES: [f64; 3] = [600.0, 1200.0, 2400.0];
    pub const SWEEP_P_S2: [f64; 3] = [0.5, 0.7, 0.9];
}

const VALUE_TOLERANCE: f64 = 1e-9;
const BISECTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CounterexampleError {
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("invalid counterexample parameters: {0}")]
    InvalidSpec(String),
    #[error("check '{check}' failed: {details}")]
    AssertionFailure { check: &'static str, details: String },
}

fn ensure(
    ok: bool,
    check: &'static str,
    details: impl FnOnce() -> String,
) -> Result<(), CounterexampleError> {
    if ok {
        Ok(())
    } else {
        Err(CounterexampleError::AssertionFailure {
            check,
            details: details(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum CounterexampleSpec {
    Mc,
    Me,
    M3 { m: f64, p_s2: f64 },
}

impl CounterexampleSpec {
    pub fn m3(m: f64, p_s2: f64) -> Result<Self, CounterexampleError> {
        let spec = CounterexampleSpec::M3 { m, p_s2 };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), CounterexampleError> {
        if let CounterexampleSpec::M3 { m, p_s2 } = *self {
            if !(m > 0.0 && m.is_finite()) {
                return Err(CounterexampleError::InvalidSpec(format!(
                    "M must be positive, got {m}"
                )));
            }
            if !(p_s2 > 0.0 && p_s2 < 1.0) {
                return Err(CounterexampleError::InvalidSpec(format!(
                    "p_s2 must lie in (0, 1), got {p_s2}"
                )));
            }
        }
        Ok(())
    }
}

pub fn build(spec: CounterexampleSpec) -> Result<Mdp, CounterexampleError> {
    spec.check()?;
    let m = match spec {
        CounterexampleSpec::Mc => Mdp::builder()
            .transition("s1", "a1", "s1", 0.4, -50.0)
            .transition("s1", "a1", "s2", 0.6, 100.0)
            .transition("s1", "a2", "s1", 1.0, 0.0)
            .transition("s2", "a1", "s2", 1.0, 10.0)
            .available("s2", &["a1"])
            .initial("s1", 0.5)
            .initial("s2", 0.5)
            .build()?,
        CounterexampleSpec::Me => Mdp::builder()
            .transition("s1", "a1", "s1", 1.0, 1.0)
            .transition("s2", "a1", "s2", 1.0, 0.0)
            .initial("s1", 0.5)
            .initial("s2", 0.5)
            .build()?,
        CounterexampleSpec::M3 { m, p_s2 } => Mdp::builder()
            .transition("s1", "a1", "s1", 0.25, -m)
            .transition("s1", "a1", "s2", 0.75, m)
            .transition("s1", "a2", "s1", 1.0, 0.0)
            .transition("s1", "a3", "s1", 0.5, -100.0)
            .transition("s1", "a3", "s2", 0.5, 400.0)
            .transition("s2", "a1", "s2", 1.0, 200.0)
            .available("s2", &["a1"])
            .initial("s1", 1.0 - p_s2)
            .initial("s2", p_s2)
            .build()?,
    };
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvarGapReport {
    pub alpha: f64,
    /// Best deterministic policy value.
    pub lhs: f64,
    /// CVaR optimization decomposition value.
    pub rhs: f64,
    pub gap: f64,
    pub zeta: Vec<f64>,
    pub search: OuterSearch,
}

/// Gap between the optimum and the decomposition on M_C at `α = 0.5`.
/// The tolerance on `rhs` is `1e-9` on the breakpoint path and
/// `max(1e-6, 140 h)` on a lattice of step `h`.
pub fn verify_cvar_gap(search: OuterSearch) -> Result<CvarGapReport, CounterexampleError> {
    let m = build(CounterexampleSpec::Mc)?;
    let alpha = RiskLevel::new(golden::MC_ALPHA)?;
    let report = cvar_opt_decomposition(&m, alpha, search)?;
    let lhs = report.oracle_value.map(|v| v.as_f64()).unwrap_or(f64::NAN);
    let rhs = report.value.as_f64();
    let out = CvarGapReport {
        alpha: alpha.get(),
        lhs,
        rhs,
        gap: rhs - lhs,
        zeta: report.allocation.weights,
        search,
    };
    let rhs_tol = match search {
        OuterSearch::Breakpoints => VALUE_TOLERANCE,
        OuterSearch::Lattice { step, .. } => (golden::MC_THETA_SLOPE * step).max(1e-6),
    };
    ensure(
        (lhs - golden::MC_OPTIMUM).abs() <= VALUE_TOLERANCE,
        "cvar optimum",
        || format!("lhs = {lhs}, rhs = {rhs}"),
    )?;
    ensure(
        (rhs - golden::MC_DECOMPOSITION).abs() <= rhs_tol,
        "cvar decomposition",
        || format!("lhs = {lhs}, rhs = {rhs}, tolerance {rhs_tol:e}"),
    )?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvarGapReport {
    pub alpha: f64,
    pub evar: f64,
    pub evar_dual: f64,
    pub cvar: f64,
    pub ni_value: f64,
    pub ni_allocation: Vec<f64>,
    pub kl_xi_star: f64,
    pub radius: f64,
}

/// EVaR against CVaR and the Ni-style decomposition on M_E at `α = 0.75`.
pub fn verify_evar_gap(search: OuterSearch) -> Result<EvarGapReport, CounterexampleError> {
    let m = build(CounterexampleSpec::Me)?;
    let alpha = RiskLevel::new(golden::ME_ALPHA)?;
    let pi = DeterministicPolicy::constant(&m, 0);
    let d = return_distribution(&m, &pi)?;
    let e = evar_with(&d, alpha, &EvarOptions::default().with_dual_check())?;
    let evar = e.value.as_f64();
    let evar_dual = e.dual_value.unwrap_or(f64::NAN);
    let c = cvar(&d, alpha).as_f64();
    let ni = evar_ni_decomposition(&m, &pi, alpha, search)?;
    let ni_value = ni.value.as_f64();
    let kl_xi_star = kl_divergence(&golden::ME_XI_STAR, m.initial())?.as_f64();
    let radius = -alpha.get().ln();
    let out = EvarGapReport {
        alpha: alpha.get(),
        evar,
        evar_dual,
        cvar: c,
        ni_value,
        ni_allocation: ni.allocation.weights,
        kl_xi_star,
        radius,
    };
    ensure((c - golden::ME_CVAR).abs() <= 1e-12, "cvar value", || {
        format!("cvar = {c}")
    })?;
    ensure(ni_value >= golden::ME_CVAR - VALUE_TOLERANCE, "ni bound", || {
        format!("ni = {ni_value}")
    })?;
    ensure(
        evar < golden::ME_CVAR - golden::ME_EVAR_MARGIN,
        "strict evar gap",
        || format!("evar = {evar}"),
    )?;
    ensure((evar - evar_dual).abs() <= 1e-6, "evar dual", || {
        format!("primal = {evar}, dual = {evar_dual}")
    })?;
    ensure(kl_xi_star < radius, "interior point", || {
        format!("KL = {kl_xi_star}, radius = {radius}")
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub oracle_value: f64,
    pub oracle_action: String,
    pub decomposition_value: f64,
    pub decomposition_action: String,
    /// True CVaR of the decomposition's greedy policy.
    pub realized_value: f64,
}

impl SweepRow {
    pub fn suboptimal(&self) -> bool {
        self.realized_value < self.oracle_value - VALUE_TOLERANCE
    }
}

/// First state with a real choice; the sweep reports actions there.
fn decision_state(m: &Mdp) -> usize {
    (0..m.num_states())
        .find(|&s| m.available(s).len() > 1)
        .unwrap_or(0)
}

/// Oracle, decomposition and realized CVaR at every level of `grid`.
pub fn sweep_alpha(
    spec: CounterexampleSpec,
    grid: &AlphaGrid,
    search: OuterSearch,
) -> Result<Vec<SweepRow>, CounterexampleError> {
    let m = build(spec)?;
    let s = decision_state(&m);
    grid.levels()
        .iter()
        .map(|&a| {
            let alpha = RiskLevel::new(a)?;
            let best = oracle::optimize(&m, Measure::Cvar, alpha)?;
            let oracle_action = match best.best_policy.as_markov() {
                Some(p) => m.action_name(p.choice[s]).to_string(),
                None => String::new(),
            };
            let report = cvar_opt_decomposition(&m, alpha, search)?;
            let greedy = report
                .greedy_policy()
                .expect("optimization reports carry actions");
            let realized = cvar(&return_distribution(&m, &greedy)?, alpha);
            Ok(SweepRow {
                alpha: a,
                oracle_value: best.value.as_f64(),
                oracle_action,
                decomposition_value: report.value.as_f64(),
                decomposition_action: m.action_name(greedy.choice[s]).to_string(),
                realized_value: realized.as_f64(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Maximal runs of consecutive grid levels where `flag` holds.
pub fn grid_runs(levels: &[f64], flag: &[bool]) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flag.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(j)) => {
                out.push(Interval {
                    lo: levels[j],
                    hi: levels[i - 1],
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(j) = start {
        out.push(Interval {
            lo: levels[j],
            hi: *levels.last().unwrap(),
        });
    }
    out
}

/// Levels where the greedy policy of the decomposition is strictly worse
/// than the optimum, as runs of sweep rows.
pub fn suboptimal_region(rows: &[SweepRow]) -> Vec<Interval> {
    let levels: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let flags: Vec<bool> = rows.iter().map(SweepRow::suboptimal).collect();
    grid_runs(&levels, &flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub m: f64,
    pub p_s2: f64,
    pub region: Vec<Interval>,
    /// Largest `oracle - realized` over the grid.
    pub max_shortfall: f64,
}

/// Suboptimality regions of M3 over a lattice of `(M, p_s2)` pairs.
pub fn suboptimality_regions(
    magnitudes: &[f64],
    initial_masses: &[f64],
    grid: &AlphaGrid,
    search: OuterSearch,
) -> Result<Vec<RegionRow>, CounterexampleError> {
    let mut out = Vec::new();
    for &m in magnitudes {
        for &p in initial_masses {
            let rows = sweep_alpha(CounterexampleSpec::m3(m, p)?, grid, search)?;
            let max_shortfall = rows
                .iter()
                .map(|r| r.oracle_value - r.realized_value)
                .fold(0.0, f64::max);
            out.push(RegionRow {
                m,
                p_s2: p,
                region: suboptimal_region(&rows),
                max_shortfall,
            });
        }
    }
    Ok(out)
}

/// Whether every optimal policy plays `action` in `state` at level `alpha`.
pub fn uniquely_optimal(
    m: &Mdp,
    state: usize,
    action: usize,
    alpha: f64,
) -> Result<bool, CounterexampleError> {
    let best = oracle::optimize(m, Measure::Cvar, RiskLevel::new(alpha)?)?;
    let optimal = best.optimal_indices(VALUE_TOLERANCE * m.reward_range().max(1.0));
    Ok(optimal.iter().all(|&i| {
        best.per_policy_values[i]
            .0
            .as_markov()
            .is_some_and(|p| p.choice[state] == action)
    }))
}

/// Shrinks `[lo, hi]` around the point where `pred` flips, given
/// `pred(lo) != pred(hi)`.
fn bisect<F>(mut pred: F, mut lo: f64, mut hi: f64) -> Result<f64, CounterexampleError>
where
    F: FnMut(f64) -> Result<bool, CounterexampleError>,
{
    let at_lo = pred(lo)?;
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Risk levels at which `action` is the only optimal choice in `state`,
/// found on `grid` and with interior endpoints refined by bisection.
pub fn exclusive_action_region(
    m: &Mdp,
    state: usize,
    action: usize,
    grid: &AlphaGrid,
) -> Result<Vec<Interval>, CounterexampleError> {
    let levels = grid.levels();
    let flags = levels
        .iter()
        .map(|&a| uniquely_optimal(m, state, action, a))
        .collect::<Result<Vec<_>, _>>()?;
    let pred = |a: f64| uniquely_optimal(m, state, action, a);
    let mut out = Vec::new();
    for run in grid_runs(levels, &flags) {
        let i = levels.partition_point(|&l| l < run.lo);
        let j = levels.partition_point(|&l| l <= run.hi) - 1;
        let lo = if i > 0 {
            bisect(pred, levels[i - 1], levels[i])?
        } else {
            run.lo
        };
        let hi = if j + 1 < levels.len() {
            bisect(pred, levels[j], levels[j + 1])?
        } else {
            run.hi
        };
        out.push(Interval { lo, hi });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_match_reference_instances() {
        let mc = build(CounterexampleSpec::Mc).unwrap();
        assert_eq!(mc.available(0).len(), 2);
        assert_eq!(mc.available(1).len(), 1);
        assert!(mc.validate().is_empty());
        let me = build(CounterexampleSpec::Me).unwrap();
        assert_eq!(me.num_actions(), 1);
        assert_eq!(me.reward(0, 0, 0), Some(1.0));
        assert_eq!(me.reward(1, 0, 1), Some(0.0));
        let m3 = build(CounterexampleSpec::m3(600.0, 0.5).unwrap()).unwrap();
        let atoms: Vec<(f64, f64)> = m3.successors(0, 0).map(|(_, p, r)| (r, p)).collect();
        assert_eq!(atoms, vec![(-600.0, 0.25), (600.0, 0.75)]);
        assert!(CounterexampleSpec::m3(0.0, 0.5).is_err());
        assert!(CounterexampleSpec::m3(600.0, 1.0).is_err());
    }

    #[test]
    fn cvar_gap_paths() {
        let exact = verify_cvar_gap(OuterSearch::Breakpoints).unwrap();
        assert!((exact.rhs - 4.0).abs() < 1e-12);
        assert!((exact.zeta[0] - 0.6).abs() < 1e-12);
        let coarse = verify_cvar_gap(OuterSearch::lattice(1e-2)).unwrap();
        assert!((coarse.rhs - 4.0).abs() <= 1.4 && coarse.gap > 2.0);
    }

    #[test]
    fn evar_gap() {
        let r = verify_evar_gap(OuterSearch::refined(1e-2)).unwrap();
        assert!((r.cvar - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.ni_allocation[0] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn m3_sweep_at_half() {
        let grid = AlphaGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let rows = sweep_alpha(
            CounterexampleSpec::m3(600.0, 0.5).unwrap(),
            &grid,
            OuterSearch::Breakpoints,
        )
        .unwrap();
        let mid = &rows[1];
        assert!((mid.oracle_value - 50.0).abs() < 1e-9);
        assert_eq!(mid.oracle_action, "a3");
        assert!((mid.decomposition_value - 100.0).abs() < 1e-9);
        assert!(mid.realized_value.abs() < 1e-9);
        let top = &rows[2];
        assert!((top.oracle_value - 250.0).abs() < 1e-9);
        assert!((top.decomposition_value - 250.0).abs() < 1e-9);
        assert!((top.realized_value - 250.0).abs() < 1e-9);
    }

    #[test]
    fn a3_region_endpoints() {
        let m = build(CounterexampleSpec::m3(600.0, 0.5).unwrap()).unwrap();
        let region = exclusive_action_region(&m, 0, 2, &AlphaGrid::uniform(20).unwrap()).unwrap();
        assert_eq!(region.len(), 1);
        assert!((region[0].lo - 0.375).abs() < 1e-6, "{region:?}");
        assert!((region[0].hi - 0.6875).abs() < 1e-6, "{region:?}");
    }

    #[test]
    fn runs() {
        let l = [0.0, 0.25, 0.5, 0.75, 1.0];
        let r = grid_runs(&l, &[true, false, true, true, false]);
        assert_eq!(
            r,
            vec![Interval { lo: 0.0, hi: 0.0 }, Interval { lo: 0.5, hi: 0.75 }]
        );
    }
}
