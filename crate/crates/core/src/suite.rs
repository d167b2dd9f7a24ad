//! Acceptance properties as library functions. Each criterion runs every
//! check it owns and reports them all, so one failure does not hide
//! another.

use rand::Rng;
use serde::Serialize;

use crate::counterexamples::{build, exclusive_action_region, golden, sweep_alpha, CounterexampleSpec};
use crate::decomp::{
    cvar_eval_decomposition, cvar_opt_decomposition, evar_corrected_decomposition, evar_ni_decomposition,
    quantile_opt_decomposition, theta_curve, var_decomposition, var_dp_horizon, var_opt_decomposition,
    AlphaGrid, OuterSearch,
};
use crate::mdp::random::{random_distribution, random_mdp, random_policy, rng, RandomMdpSpec};
use crate::mdp::{enumerate_deterministic_policies, return_distribution, DeterministicPolicy, Mdp};
use crate::oracle;
use crate::risk::{
    cvar, evar, evar_with, lower_quantile, var, EvarOptions, ExtendedValue, Measure, RiskLevel,
};
use crate::Error;

pub const DEFAULT_SEED: u64 = 20_240_601;

pub const GAP_TOLERANCE: f64 = 1e-9;
pub const LATTICE_GAP_TOLERANCE: f64 = 2e-2;
pub const LATTICE_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const THETA_TOLERANCE: f64 = 1e-9;
pub const EVAL_STEP: f64 = 1e-3;
pub const EVAL_RANDOM_INSTANCES: u64 = 50;
pub const EVAL_ALPHAS: [f64; 3] = [0.1, 0.5, 0.9];
pub const CVAR_EXACT_TOLERANCE: f64 = 1e-12;
pub const EVAR_DUAL_TOLERANCE: f64 = 1e-6;
pub const EVAR_SEARCH_STEP: f64 = 1e-2;
pub const CORRECTED_TOLERANCE: f64 = 2e-3;
pub const CORRECTED_RANDOM_INSTANCES: u64 = 20;
pub const CORRECTED_ALPHAS: [f64; 3] = [0.1, 0.5, 0.9];
pub const VAR_RANDOM_INSTANCES: u64 = 100;
pub const VAR_ALPHAS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
pub const M3_STEP: f64 = 1e-4;
pub const M3_DECOMPOSITION_TOLERANCE: f64 = 2e-2;
pub const REGION_TOLERANCE: f64 = 1e-4;
pub const REGION_GRID_DIVISIONS: usize = 40;
pub const SWEEP_GRID_DIVISIONS: usize = 100;
pub const DP_RANDOM_INSTANCES: u64 = 10;
pub const DP_GRID_DIVISIONS: usize = 512;
pub const DP_ALPHAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const PROPERTY_DISTRIBUTIONS: u64 = 200;
pub const PROPERTY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub observed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl CriterionResult {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

#[derive(Default)]
struct Checker {
    checks: Vec<Check>,
}

impl Checker {
    fn check(&mut self, label: impl Into<String>, passed: bool, observed: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            passed,
            observed: observed.into(),
        });
    }

    fn close(&mut self, label: impl Into<String>, value: ExtendedValue, target: f64, tol: f64) {
        let ok = value.finite().is_some_and(|v| (v - target).abs() <= tol);
        self.check(label, ok, format!("{value} vs {target} (tol {tol:e})"));
    }

    /// Records `max` of a family of deviations against a bound.
    fn worst(&mut self, label: impl Into<String>, worst: f64, bound: f64) {
        self.check(label, worst <= bound, format!("worst {worst:e}, bound {bound:e}"));
    }

    fn finish(mut self, id: usize, name: &'static str, outcome: Result<(), Error>) -> CriterionResult {
        if let Err(e) = outcome {
            self.check("completed without error", false, e.to_string());
        }
        CriterionResult {
            id,
            name,
            passed: !self.checks.is_empty() && self.checks.iter().all(|c| c.passed),
            checks: self.checks,
        }
    }
}

fn lvl(a: f64) -> Result<RiskLevel, Error> {
    Ok(RiskLevel::new(a)?)
}

fn run(
    id: usize,
    name: &'static str,
    body: impl FnOnce(&mut Checker) -> Result<(), Error>,
) -> CriterionResult {
    let mut ck = Checker::default();
    let outcome = body(&mut ck);
    ck.finish(id, name, outcome)
}

fn gap_of(value: Option<ExtendedValue>) -> f64 {
    value.map_or(f64::NAN, ExtendedValue::as_f64)
}

pub fn cvar_saddle_gap() -> CriterionResult {
    run(1, "CVaR saddle-point gap on M_C", |ck| {
        let m = build(CounterexampleSpec::Mc)?;
        let alpha = lvl(golden::MC_ALPHA)?;
        let exact = cvar_opt_decomposition(&m, alpha, OuterSearch::Breakpoints)?;
        let oracle = exact.oracle_value.unwrap_or(ExtendedValue::NegInf);
        ck.close("oracle optimum", oracle, golden::MC_OPTIMUM, GAP_TOLERANCE);
        ck.close(
            "breakpoint decomposition",
            exact.value,
            golden::MC_DECOMPOSITION,
            GAP_TOLERANCE,
        );
        for h in LATTICE_STEPS {
            let r = cvar_opt_decomposition(&m, alpha, OuterSearch::lattice(h))?;
            ck.close(
                format!("lattice decomposition h={h:e}"),
                r.value,
                golden::MC_DECOMPOSITION,
                LATTICE_GAP_TOLERANCE,
            );
            let gap = r.oracle_gap.unwrap_or(ExtendedValue::NegInf);
            let target = golden::MC_DECOMPOSITION - golden::MC_OPTIMUM;
            ck.close(format!("gap h={h:e}"), gap, target, LATTICE_GAP_TOLERANCE);
        }
        Ok(())
    })
}

pub fn theta_curves() -> CriterionResult {
    run(2, "theta curves on M_C", |ck| {
        let m = build(CounterexampleSpec::Mc)?;
        let alpha = lvl(golden::MC_ALPHA)?;
        let pi1 = DeterministicPolicy::parse(&m, "s1=a1,s2=a1")?;
        let pi2 = DeterministicPolicy::parse(&m, "s1=a2,s2=a1")?;
        let expected1 = [(0.4, -14.0), (0.0, 10.0), (1.0, 40.0)];
        let zs: Vec<f64> = expected1.iter().map(|x| x.0).collect();
        for ((z, v), (_, want)) in theta_curve(&m, &pi1, alpha, &zs)?.into_iter().zip(expected1) {
            ck.close(format!("theta_pi1({z})"), v, want, THETA_TOLERANCE);
        }
        let samples = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (z, v) in theta_curve(&m, &pi2, alpha, &samples)? {
            ck.close(format!("theta_pi2({z})"), v, 10.0 - 10.0 * z, THETA_TOLERANCE);
        }
        Ok(())
    })
}

pub fn cvar_evaluation_exact(seed: u64) -> CriterionResult {
    run(3, "CVaR evaluation decomposition on random MDPs", |ck| {
        let spec = RandomMdpSpec::default();
        let bound = 5.0 * EVAL_STEP * 20.0;
        let mut worst: f64 = 0.0;
        for i in 0..EVAL_RANDOM_INSTANCES {
            let mut r = rng(seed.wrapping_add(i));
            let m = random_mdp(&mut r, &spec);
            let pi = random_policy(&mut r, &m);
            for a in EVAL_ALPHAS {
                let rep = cvar_eval_decomposition(&m, &pi, lvl(a)?, OuterSearch::lattice(EVAL_STEP))?;
                worst = worst.max(gap_of(rep.oracle_gap).abs());
            }
        }
        ck.worst(
            format!(
                "|decomposition - CVaR| over {EVAL_RANDOM_INSTANCES} MDPs x {} levels",
                EVAL_ALPHAS.len()
            ),
            worst,
            bound,
        );
        Ok(())
    })
}

pub fn evar_counterexample() -> CriterionResult {
    run(4, "EVaR counterexample on M_E", |ck| {
        let m = build(CounterexampleSpec::Me)?;
        let alpha = lvl(golden::ME_ALPHA)?;
        let pi = DeterministicPolicy::constant(&m, 0);
        let d = return_distribution(&m, &pi)?;
        let c = cvar(&d, alpha);
        ck.close("CVaR = 1/3", c, golden::ME_CVAR, CVAR_EXACT_TOLERANCE);
        let ni = evar_ni_decomposition(&m, &pi, alpha, OuterSearch::refined(EVAR_SEARCH_STEP))?;
        let ni_value = ni.value.as_f64();
        ck.check(
            "Ni value >= 1/3",
            ni_value >= golden::ME_CVAR - GAP_TOLERANCE,
            format!("{ni_value}"),
        );
        let e = evar_with(&d, alpha, &EvarOptions::default().with_dual_check())?;
        let primal = e.value.as_f64();
        ck.check(
            "EVaR < 1/3 - 1e-3",
            primal < golden::ME_CVAR - golden::ME_EVAR_MARGIN,
            format!("{primal}"),
        );
        let dual = e.dual_value.unwrap_or(f64::NAN);
        ck.close("primal vs KL dual", e.value, dual, EVAR_DUAL_TOLERANCE);
        Ok(())
    })
}

pub fn corrected_evar(seed: u64) -> CriterionResult {
    run(5, "corrected EVaR decomposition", |ck| {
        let spec = RandomMdpSpec {
            states: 2..=2,
            actions: 1..=1,
            ..Default::default()
        };
        let mut cases = vec![(build(CounterexampleSpec::Me)?, golden::ME_ALPHA)];
        for i in 0..CORRECTED_RANDOM_INSTANCES {
            let m = random_mdp(&mut rng(seed.wrapping_add(1000 + i)), &spec);
            cases.push((m, CORRECTED_ALPHAS[i as usize % CORRECTED_ALPHAS.len()]));
        }
        let (mut worst_corrected, mut worst_ni): (f64, f64) = (0.0, f64::INFINITY);
        for (m, a) in &cases {
            let pi = DeterministicPolicy::constant(m, 0);
            let alpha = lvl(*a)?;
            let search = OuterSearch::refined(EVAR_SEARCH_STEP);
            let c = evar_corrected_decomposition(m, &pi, alpha, search)?;
            worst_corrected = worst_corrected.max(gap_of(c.oracle_gap).abs());
            let ni = evar_ni_decomposition(m, &pi, alpha, search)?;
            worst_ni = worst_ni.min(gap_of(ni.oracle_gap));
        }
        ck.worst(
            format!("|corrected - EVaR| on M_E and {CORRECTED_RANDOM_INSTANCES} MDPs"),
            worst_corrected,
            CORRECTED_TOLERANCE,
        );
        ck.check(
            "Ni value - EVaR >= -1e-9",
            worst_ni >= -GAP_TOLERANCE,
            format!("smallest {worst_ni:e}"),
        );
        Ok(())
    })
}

/// Reward 0 or 1 with equal probability: two equally likely start
/// states, one action each.
pub fn bernoulli() -> Result<Mdp, Error> {
    Ok(Mdp::builder()
        .transition("lo", "a", "lo", 1.0, 0.0)
        .transition("hi", "a", "hi", 1.0, 1.0)
        .initial("lo", 0.5)
        .initial("hi", 0.5)
        .build()?)
}

pub fn var_exact(seed: u64) -> CriterionResult {
    run(6, "VaR and quantile decompositions", |ck| {
        let spec = RandomMdpSpec {
            states: 1..=4,
            ..Default::default()
        };
        let (mut eval_misses, mut opt_misses, mut order_misses, mut total) = (0usize, 0usize, 0usize, 0usize);
        for i in 0..VAR_RANDOM_INSTANCES {
            let mut r = rng(seed.wrapping_add(2000 + i));
            let m = random_mdp(&mut r, &spec);
            let pi = random_policy(&mut r, &m);
            for a in VAR_ALPHAS {
                let alpha = lvl(a)?;
                total += 1;
                let ev = var_decomposition(&m, &pi, alpha)?;
                if ev.oracle_gap != Some(ExtendedValue::Finite(0.0)) {
                    eval_misses += 1;
                }
                let opt = var_opt_decomposition(&m, alpha)?;
                if opt.oracle_gap != Some(ExtendedValue::Finite(0.0)) {
                    opt_misses += 1;
                }
                let q = quantile_opt_decomposition(&m, alpha)?;
                if q.value > opt.value {
                    order_misses += 1;
                }
            }
        }
        ck.check(
            "var_decomposition gap exactly 0",
            eval_misses == 0,
            format!("{eval_misses} of {total} nonzero"),
        );
        ck.check(
            "var_opt_decomposition gap exactly 0",
            opt_misses == 0,
            format!("{opt_misses} of {total} nonzero"),
        );
        ck.check(
            "quantile <= VaR",
            order_misses == 0,
            format!("{order_misses} of {total} violations"),
        );
        let b = bernoulli()?;
        let half = lvl(0.5)?;
        let pi = DeterministicPolicy::constant(&b, 0);
        let d = return_distribution(&b, &pi)?;
        ck.check(
            "Bernoulli VaR_0.5 = 1",
            var(&d, half) == ExtendedValue::Finite(1.0),
            var(&d, half).to_string(),
        );
        ck.check(
            "Bernoulli Q_0.5 = 0",
            lower_quantile(&d, half) == ExtendedValue::Finite(0.0),
            lower_quantile(&d, half).to_string(),
        );
        let vd = var_decomposition(&b, &pi, half)?.value;
        ck.check(
            "Bernoulli VaR decomposition = 1",
            vd == ExtendedValue::Finite(1.0),
            vd.to_string(),
        );
        let qd = quantile_opt_decomposition(&b, half)?.value;
        ck.check(
            "Bernoulli quantile decomposition = 0",
            qd == ExtendedValue::Finite(0.0),
            qd.to_string(),
        );
        Ok(())
    })
}

pub fn m3_suboptimality() -> CriterionResult {
    run(7, "suboptimal greedy policy on M3", |ck| {
        let spec = CounterexampleSpec::m3(golden::M3_MAGNITUDE, golden::M3_P_S2)?;
        let m = build(spec)?;
        let alpha = lvl(golden::M3_ALPHA)?;
        let best = oracle::optimize(&m, Measure::Cvar, alpha)?;
        ck.close("oracle optimum", best.value, golden::M3_OPTIMUM, GAP_TOLERANCE);
        let action = best
            .best_policy
            .as_markov()
            .map(|p| m.action_name(p.choice[0]).to_string());
        ck.check(
            "oracle plays a3",
            action.as_deref() == Some("a3"),
            format!("{action:?}"),
        );
        let rep = cvar_opt_decomposition(&m, alpha, OuterSearch::lattice(M3_STEP))?;
        ck.close(
            "decomposition value",
            rep.value,
            golden::M3_DECOMPOSITION,
            M3_DECOMPOSITION_TOLERANCE,
        );
        let greedy = rep.greedy_policy().expect("optimization reports carry actions");
        let realized = cvar(&return_distribution(&m, &greedy)?, alpha);
        ck.close(
            "realized value of greedy policy",
            realized,
            golden::M3_REALIZED,
            GAP_TOLERANCE,
        );
        let a3 = m.action_index("a3")?;
        let region = exclusive_action_region(&m, 0, a3, &AlphaGrid::uniform(REGION_GRID_DIVISIONS)?)?;
        let (lo, hi) = golden::M3_A3_REGION;
        let ok = region.len() == 1
            && (region[0].lo - lo).abs() <= REGION_TOLERANCE
            && (region[0].hi - hi).abs() <= REGION_TOLERANCE;
        ck.check("a3 uniquely optimal region", ok, format!("{region:?}"));
        let rows = sweep_alpha(
            spec,
            &AlphaGrid::uniform(SWEEP_GRID_DIVISIONS)?,
            OuterSearch::lattice(M3_STEP),
        )?;
        let picks = rows.iter().filter(|r| r.decomposition_action == "a3").count();
        ck.check(
            "a3 never greedy",
            picks == 0,
            format!("{picks} of {} levels", rows.len()),
        );
        Ok(())
    })
}

/// Smallest gap between distinct return values over all policies.
fn atom_spacing(m: &Mdp) -> Result<f64, Error> {
    let mut atoms = Vec::new();
    for pi in enumerate_deterministic_policies(m)? {
        atoms.extend_from_slice(return_distribution(m, &pi)?.consolidate().outcomes());
    }
    atoms.sort_by(f64::total_cmp);
    atoms.dedup();
    Ok(atoms
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        .min(1.0))
}

pub fn horizon_dp(seed: u64) -> CriterionResult {
    run(8, "multi-horizon VaR dynamic program", |ck| {
        let spec = RandomMdpSpec {
            states: 2..=2,
            actions: 2..=2,
            reward_low: -3.0,
            reward_high: 3.0,
            integer_rewards: true,
            all_actions_everywhere: true,
            horizon: 2,
            ..Default::default()
        };
        let grid = AlphaGrid::uniform(DP_GRID_DIVISIONS)?;
        let (mut low, mut high, mut policy_low, mut policy_high) = (0usize, 0usize, 0usize, 0usize);
        let mut total = 0usize;
        for i in 0..DP_RANDOM_INSTANCES {
            let m = random_mdp(&mut rng(seed.wrapping_add(3000 + i)), &spec);
            let spacing = atom_spacing(&m)?;
            for a in DP_ALPHAS {
                let alpha = lvl(a)?;
                total += 1;
                let best = oracle::optimize(&m, Measure::Var, alpha)?.value.as_f64();
                let sol = var_dp_horizon(&m, alpha, &grid)?;
                let v0 = sol.v0.as_f64();
                low += usize::from(v0 < best - spacing);
                high += usize::from(v0 > best + GAP_TOLERANCE);
                let pi = sol.policy.history_policy(m.horizon());
                let realized = var(&return_distribution(&m, &pi)?, alpha).as_f64();
                policy_low += usize::from(realized < best - spacing || realized < v0 - GAP_TOLERANCE);
                policy_high += usize::from(realized > best + GAP_TOLERANCE);
            }
        }
        ck.check(
            "v0 >= oracle - spacing",
            low == 0,
            format!("{low} of {total} violations"),
        );
        ck.check(
            "v0 <= oracle + 1e-9",
            high == 0,
            format!("{high} of {total} violations"),
        );
        ck.check(
            "extracted policy >= max(v0, oracle - spacing)",
            policy_low == 0,
            format!("{policy_low} of {total} violations"),
        );
        ck.check(
            "extracted policy <= oracle + 1e-9",
            policy_high == 0,
            format!("{policy_high} of {total} violations"),
        );
        Ok(())
    })
}

pub fn risk_measure_properties(seed: u64) -> CriterionResult {
    run(9, "risk-measure properties", |ck| {
        let mut r = rng(seed.wrapping_add(4000));
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let mut order = 0usize;
        let mut monotone = 0usize;
        let mut affine = 0usize;
        let mut endpoints = 0usize;
        for _ in 0..PROPERTY_DISTRIBUTIONS {
            let d = random_distribution(&mut r, 8, -10.0, 10.0);
            let tol = PROPERTY_TOLERANCE * d.range().max(1.0);
            let (lo, mean) = (d.min_outcome(), d.mean());
            let mut prev: Option<[ExtendedValue; 4]> = None;
            for &a in &grid {
                let alpha = lvl(a)?;
                let e = evar(&d, alpha)?;
                let c = cvar(&d, alpha);
                let v = var(&d, alpha);
                let q = lower_quantile(&d, alpha);
                let (ef, cf) = (e.as_f64(), c.as_f64());
                let cap = v.min(ExtendedValue::Finite(mean)).as_f64();
                if !(lo <= ef + tol && ef <= cf + tol && cf <= cap + tol) {
                    order += 1;
                }
                let now = [v, c, e, q];
                if let Some(p) = prev {
                    for (x, y) in p.iter().zip(&now) {
                        if let (Some(x), Some(y)) = (x.finite(), y.finite()) {
                            monotone += usize::from(y < x - tol);
                        } else if x > y {
                            monotone += 1;
                        }
                    }
                }
                prev = Some(now);
            }
            let c_shift: f64 = r.gen_range(-5.0..=5.0);
            let scale: f64 = r.gen_range(0.1..=3.0);
            let shifted = d.affine(1.0, c_shift)?;
            let scaled = d.affine(scale, 0.0)?;
            for &a in &grid[1..] {
                let alpha = lvl(a)?;
                let base = [cvar(&d, alpha).as_f64(), evar(&d, alpha)?.as_f64()];
                let moved = [cvar(&shifted, alpha).as_f64(), evar(&shifted, alpha)?.as_f64()];
                let grown = [cvar(&scaled, alpha).as_f64(), evar(&scaled, alpha)?.as_f64()];
                for k in 0..2 {
                    affine += usize::from((moved[k] - base[k] - c_shift).abs() > PROPERTY_TOLERANCE);
                    affine += usize::from((grown[k] - scale * base[k]).abs() > PROPERTY_TOLERANCE);
                }
            }
            let zero = lvl(0.0)?;
            let one = lvl(1.0)?;
            let close = |v: ExtendedValue, t: f64| v.finite().is_some_and(|x| (x - t).abs() <= tol);
            endpoints += usize::from(!close(cvar(&d, zero), lo));
            endpoints += usize::from(!close(evar(&d, zero)?, lo));
            endpoints += usize::from(!close(cvar(&d, one), mean));
            endpoints += usize::from(!close(evar(&d, one)?, mean));
            endpoints += usize::from(var(&d, one) != ExtendedValue::PosInf);
        }
        let n = PROPERTY_DISTRIBUTIONS;
        ck.check(
            "ess inf <= EVaR <= CVaR <= min(E, VaR)",
            order == 0,
            format!("{order} violations over {n} distributions"),
        );
        ck.check(
            "monotone in alpha",
            monotone == 0,
            format!("{monotone} violations"),
        );
        ck.check(
            "cash invariance and homogeneity",
            affine == 0,
            format!("{affine} violations"),
        );
        ck.check(
            "endpoint identities",
            endpoints == 0,
            format!("{endpoints} violations"),
        );
        Ok(())
    })
}

pub fn run_suite(seed: u64) -> SuiteReport {
    let criteria = vec![
        cvar_saddle_gap(),
        theta_curves(),
        cvar_evaluation_exact(seed),
        evar_counterexample(),
        corrected_evar(seed),
        var_exact(seed),
        m3_suboptimality(),
        horizon_dp(seed),
        risk_measure_properties(seed),
    ];
    SuiteReport {
        seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}
