//! Command-line front end. Exit status 0 on success, 1 on bad input, 2 when
//! a checked property fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::counterexamples::{
    golden, suboptimality_regions, sweep_alpha, verify_cvar_gap, verify_evar_gap, CounterexampleError,
    CounterexampleSpec,
};
use crate::decomp::{
    decompose, theta_curve, var_dp_horizon, AlphaGrid, DecompositionReport, OuterSearch, Scheme,
    ValueFunctionGrid,
};
use crate::document::{bundled, parse_mdp};
use crate::format::{to_json, Cell, Table};
use crate::mdp::{return_distribution, DeterministicPolicy, Mdp, Policy};
use crate::oracle;
use crate::risk::{ExtendedValue, Measure, RiskLevel};
use crate::suite::{run_suite, DEFAULT_SEED};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;

const MAX_STEP: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Library(#[from] Error),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Library(Error::Counterexample(CounterexampleError::AssertionFailure { .. })) => {
                EXIT_ASSERTION
            }
            _ => EXIT_INPUT,
        }
    }
}

impl From<CounterexampleError> for CliError {
    fn from(e: CounterexampleError) -> Self {
        CliError::Library(e.into())
    }
}

macro_rules! library_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Library(e.into())
            }
        }
    )*};
}

library_error!(
    crate::risk::RiskError,
    crate::mdp::MdpError,
    crate::decomp::DecompError,
    crate::document::DocumentError
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "riskdp",
    version,
    about = "Risk measures, risk-level decompositions and exact oracles for finite MDPs"
)]
pub struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct MdpArg {
    /// MDP document path, or the name of a bundled file (mc.json, me.json, m3.json).
    #[arg(long)]
    pub mdp: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Risk of one Markov policy's return.
    Eval {
        #[command(flatten)]
        mdp: MdpArg,
        /// var, cvar, evar or quantile.
        #[arg(long)]
        measure: Measure,
        #[arg(long)]
        alpha: f64,
        /// `state=action` pairs; defaults to the first available action everywhere.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Best deterministic policy by enumeration.
    Opt {
        #[command(flatten)]
        mdp: MdpArg,
        /// var, cvar, evar or quantile.
        #[arg(long)]
        measure: Measure,
        #[arg(long)]
        alpha: f64,
    },
    /// One of the risk-level decompositions, with the oracle gap.
    Decompose {
        /// cvar-eval, cvar-opt, evar-ni, evar-corrected, var, var-opt or quantile-opt.
        #[arg(long)]
        scheme: Scheme,
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        alpha: f64,
        /// Policy for the evaluation schemes.
        #[arg(long)]
        policy: Option<String>,
        /// Lattice step of the outer search.
        #[arg(long)]
        h: Option<f64>,
        /// Pattern-search refinement after the lattice.
        #[arg(long)]
        refine: bool,
        /// Exact breakpoint search (CVaR schemes).
        #[arg(long, conflicts_with_all = ["h", "refine"])]
        exact: bool,
    },
    /// Multi-horizon VaR dynamic program on a risk-level grid.
    Dp {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        alpha: f64,
        /// Number of grid intervals on [0, 1].
        #[arg(long, default_value_t = 512)]
        alpha_divisions: usize,
        /// Override the document's horizon.
        #[arg(long)]
        horizon: Option<usize>,
        /// Include the full value-function table.
        #[arg(long)]
        q_table: bool,
    },
    /// Reference counterexamples.
    Counterexample {
        #[command(subcommand)]
        which: CounterexampleCommand,
    },
    /// Samples of the CVaR evaluation objective along the segment ζ = (z, 1 - z).
    Theta {
        #[command(flatten)]
        mdp: MdpArg,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, default_value_t = 101)]
        samples: usize,
    },
    /// Every acceptance property.
    Suite {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepInstance {
    Mc,
    M3,
}

#[derive(Debug, Subcommand)]
pub enum CounterexampleCommand {
    /// Saddle-point gap of the CVaR optimization decomposition.
    Cvar {
        /// Lattice step; the exact breakpoint search when absent.
        #[arg(long)]
        h: Option<f64>,
    },
    /// EVaR versus CVaR and the Ni-style decomposition.
    Evar {
        #[arg(long, default_value_t = 1e-2)]
        h: f64,
    },
    /// Oracle, decomposition and realized CVaR across risk levels.
    Sweep {
        #[arg(long, value_enum, default_value_t = SweepInstance::M3)]
        instance: SweepInstance,
        #[arg(long, default_value_t = golden::M3_MAGNITUDE)]
        m: f64,
        #[arg(long, default_value_t = golden::M3_P_S2)]
        p_s2: f64,
        #[arg(long, default_value_t = 100)]
        alpha_divisions: usize,
        /// Lattice step; the exact breakpoint search when absent.
        #[arg(long)]
        h: Option<f64>,
        /// Report suboptimal regions over a lattice of (M, p_s2) instead.
        #[arg(long)]
        regions: bool,
        #[arg(long, value_delimiter = ',', default_values_t = golden::SWEEP_MAGNITUDES)]
        magnitudes: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = golden::SWEEP_P_S2)]
        masses: Vec<f64>,
    },
}

/// Rendered result and exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

fn load_mdp(arg: &MdpArg) -> Result<Mdp, CliError> {
    let path = PathBuf::from(&arg.mdp);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(source) => match bundled(&arg.mdp) {
            Some(t) => t.to_string(),
            None => return Err(CliError::Io { path, source }),
        },
    };
    Ok(parse_mdp(&text)?)
}

fn level(alpha: f64) -> Result<RiskLevel, CliError> {
    RiskLevel::new(alpha).map_err(|e| CliError::Input(e.to_string()))
}

fn step(h: f64) -> Result<f64, CliError> {
    if h > 0.0 && h <= MAX_STEP {
        Ok(h)
    } else {
        Err(CliError::Input(format!(
            "--h must lie in (0, {MAX_STEP}], got {h}"
        )))
    }
}

fn policy(m: &Mdp, text: Option<&str>) -> Result<DeterministicPolicy, CliError> {
    match text {
        Some(t) => Ok(DeterministicPolicy::parse(m, t)?),
        None => Ok(DeterministicPolicy::new(
            (0..m.num_states()).map(|s| m.available(s)[0]).collect(),
        )),
    }
}

fn search(exact: bool, h: Option<f64>, refine: bool, default_step: f64) -> Result<OuterSearch, CliError> {
    if exact {
        return Ok(OuterSearch::Breakpoints);
    }
    let h = step(h.unwrap_or(default_step))?;
    Ok(if refine {
        OuterSearch::refined(h)
    } else {
        OuterSearch::lattice(h)
    })
}

fn history_label(m: &Mdp, history: &[usize]) -> String {
    history
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i % 2 == 0 {
                m.state_name(x)
            } else {
                m.action_name(x)
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// A result in both output shapes.
struct Artifact {
    json: String,
    table: Table,
}

impl Artifact {
    fn new<T: Serialize>(value: &T, table: Table) -> Result<Self, CliError> {
        Ok(Self {
            json: to_json(value)?,
            table,
        })
    }

    fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => Ok(self.json.clone()),
            Format::Csv => Ok(self.table.to_csv()?),
        }
    }
}

#[derive(Serialize)]
struct EvalOutput {
    measure: Measure,
    alpha: RiskLevel,
    policy: String,
    value: ExtendedValue,
}

#[derive(Serialize)]
struct PolicyValue {
    policy: String,
    value: ExtendedValue,
}

#[derive(Serialize)]
struct OptOutput {
    measure: Measure,
    alpha: RiskLevel,
    value: ExtendedValue,
    best_policy: String,
    per_policy: Vec<PolicyValue>,
}

#[derive(Serialize)]
struct DpStep {
    t: usize,
    history: String,
    alpha_bar: RiskLevel,
    action: String,
}

#[derive(Serialize)]
struct DpOutput {
    alpha: RiskLevel,
    horizon: usize,
    alpha_divisions: usize,
    v0: ExtendedValue,
    /// VaR of the extracted policy's return.
    realized_value: ExtendedValue,
    steps: Vec<DpStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value_function: Option<ValueFunctionGrid>,
}

#[derive(Serialize)]
struct ThetaPoint {
    zeta: f64,
    theta: ExtendedValue,
}

fn decomposition(
    scheme: Scheme,
    m: &Mdp,
    alpha: RiskLevel,
    policy_text: Option<&str>,
    h: Option<f64>,
    refine: bool,
    exact: bool,
) -> Result<DecompositionReport, CliError> {
    if policy_text.is_none() && !scheme.optimizes() {
        return Err(CliError::Input(format!("scheme {scheme} needs --policy")));
    }
    let pi = policy_text.map(|t| policy(m, Some(t))).transpose()?;
    let search = search(exact, h, refine, scheme.default_step())?;
    Ok(decompose(
        m,
        scheme,
        alpha,
        pi.as_ref().map(|p| p as &dyn Policy),
        search,
    )?)
}

fn decomposition_table(r: &DecompositionReport) -> Table {
    let mut t = Table::new(&[
        "scheme",
        "alpha",
        "value",
        "oracle_value",
        "oracle_gap",
        "state",
        "weight",
        "inner_level",
        "inner_value",
        "inner_action",
    ]);
    let ext = |v: Option<ExtendedValue>| v.map_or(Cell::Text(String::new()), Cell::Ext);
    for (s, name) in r.states.iter().enumerate() {
        let action = r
            .inner_actions
            .as_ref()
            .map_or(String::new(), |a| a[s].name.clone());
        t.push(vec![
            r.scheme.name().into(),
            r.alpha.get().into(),
            r.value.into(),
            ext(r.oracle_value),
            ext(r.oracle_gap),
            name.as_str().into(),
            r.allocation.weights[s].into(),
            r.inner_levels[s].get().into(),
            r.inner_values[s].into(),
            action.into(),
        ]);
    }
    t
}

fn execute(cli: &Cli) -> Result<(Artifact, i32), CliError> {
    match &cli.command {
        Command::Eval {
            mdp,
            measure,
            alpha,
            policy: p,
        } => {
            let m = load_mdp(mdp)?;
            let alpha = level(*alpha)?;
            let pi = policy(&m, p.as_deref())?;
            let value = oracle::evaluate(&m, &pi, *measure, alpha)?;
            let out = EvalOutput {
                measure: *measure,
                alpha,
                policy: pi.describe(&m),
                value,
            };
            let mut t = Table::new(&["measure", "alpha", "policy", "value"]);
            t.push(vec![
                measure.name().into(),
                alpha.get().into(),
                out.policy.clone().into(),
                value.into(),
            ]);
            Ok((Artifact::new(&out, t)?, EXIT_OK))
        }
        Command::Opt { mdp, measure, alpha } => {
            let m = load_mdp(mdp)?;
            let alpha = level(*alpha)?;
            let r = oracle::optimize(&m, *measure, alpha)?;
            let out = OptOutput {
                measure: *measure,
                alpha,
                value: r.value,
                best_policy: r.best_policy.describe(&m),
                per_policy: r
                    .per_policy_values
                    .iter()
                    .map(|(p, v)| PolicyValue {
                        policy: p.describe(&m),
                        value: *v,
                    })
                    .collect(),
            };
            let mut t = Table::new(&["policy", "value", "best"]);
            for (i, pv) in out.per_policy.iter().enumerate() {
                t.push(vec![
                    pv.policy.clone().into(),
                    pv.value.into(),
                    (i == r.best_index).into(),
                ]);
            }
            Ok((Artifact::new(&out, t)?, EXIT_OK))
        }
        Command::Decompose {
            scheme,
            mdp,
            alpha,
            policy: p,
            h,
            refine,
            exact,
        } => {
            let m = load_mdp(mdp)?;
            let r = decomposition(*scheme, &m, level(*alpha)?, p.as_deref(), *h, *refine, *exact)?;
            let t = decomposition_table(&r);
            Ok((Artifact::new(&r, t)?, EXIT_OK))
        }
        Command::Dp {
            mdp,
            alpha,
            alpha_divisions,
            horizon,
            q_table,
        } => {
            let mut m = load_mdp(mdp)?;
            if let Some(h) = horizon {
                if *h == 0 {
                    return Err(CliError::Input("--horizon must be positive".into()));
                }
                m = m.with_horizon(*h);
            }
            let alpha = level(*alpha)?;
            let grid = AlphaGrid::uniform(*alpha_divisions)?;
            let sol = var_dp_horizon(&m, alpha, &grid)?;
            let pi = sol.policy.history_policy(m.horizon());
            let realized = crate::risk::var(&return_distribution(&m, &pi)?, alpha);
            let steps: Vec<DpStep> = sol
                .policy
                .steps
                .iter()
                .map(|s| DpStep {
                    t: s.t,
                    history: history_label(&m, &s.history),
                    alpha_bar: s.alpha_bar,
                    action: m.action_name(s.action).to_string(),
                })
                .collect();
            let mut t = Table::new(&["t", "history", "alpha_bar", "action", "v0", "realized_value"]);
            for s in &steps {
                t.push(vec![
                    s.t.into(),
                    s.history.clone().into(),
                    s.alpha_bar.get().into(),
                    s.action.clone().into(),
                    sol.v0.into(),
                    realized.into(),
                ]);
            }
            let out = DpOutput {
                alpha,
                horizon: m.horizon(),
                alpha_divisions: *alpha_divisions,
                v0: sol.v0,
                realized_value: realized,
                steps,
                value_function: q_table.then_some(sol.value_function),
            };
            Ok((Artifact::new(&out, t)?, EXIT_OK))
        }
        Command::Counterexample { which } => counterexample(which),
        Command::Theta {
            mdp,
            alpha,
            policy: p,
            samples,
        } => {
            let m = load_mdp(mdp)?;
            if *samples < 2 {
                return Err(CliError::Input("--samples must be at least 2".into()));
            }
            let pi = policy(&m, p.as_deref())?;
            let zs: Vec<f64> = (0..*samples).map(|i| i as f64 / (*samples - 1) as f64).collect();
            let points: Vec<ThetaPoint> = theta_curve(&m, &pi, level(*alpha)?, &zs)?
                .into_iter()
                .map(|(zeta, theta)| ThetaPoint { zeta, theta })
                .collect();
            let mut t = Table::new(&["zeta", "theta"]);
            for p in &points {
                t.push(vec![p.zeta.into(), p.theta.into()]);
            }
            Ok((Artifact::new(&points, t)?, EXIT_OK))
        }
        Command::Suite { seed } => {
            let report = run_suite(*seed);
            let mut t = Table::new(&["criterion", "name", "passed", "check", "check_passed", "observed"]);
            for c in &report.criteria {
                for k in &c.checks {
                    t.push(vec![
                        c.id.into(),
                        c.name.into(),
                        c.passed.into(),
                        k.label.clone().into(),
                        k.passed.into(),
                        k.observed.clone().into(),
                    ]);
                }
            }
            let code = if report.passed { EXIT_OK } else { EXIT_ASSERTION };
            Ok((Artifact::new(&report, t)?, code))
        }
    }
}

fn counterexample(which: &CounterexampleCommand) -> Result<(Artifact, i32), CliError> {
    match which {
        CounterexampleCommand::Cvar { h } => {
            let s = search(h.is_none(), *h, false, 0.0)?;
            let r = verify_cvar_gap(s)?;
            let mut t = Table::new(&["alpha", "lhs", "rhs", "gap", "zeta_s1"]);
            t.push(vec![
                r.alpha.into(),
                r.lhs.into(),
                r.rhs.into(),
                r.gap.into(),
                r.zeta[0].into(),
            ]);
            Ok((Artifact::new(&r, t)?, EXIT_OK))
        }
        CounterexampleCommand::Evar { h } => {
            let r = verify_evar_gap(OuterSearch::refined(step(*h)?))?;
            let mut t = Table::new(&[
                "alpha",
                "evar",
                "evar_dual",
                "cvar",
                "ni_value",
                "kl_xi_star",
                "radius",
            ]);
            t.push(vec![
                r.alpha.into(),
                r.evar.into(),
                r.evar_dual.into(),
                r.cvar.into(),
                r.ni_value.into(),
                r.kl_xi_star.into(),
                r.radius.into(),
            ]);
            Ok((Artifact::new(&r, t)?, EXIT_OK))
        }
        CounterexampleCommand::Sweep {
            instance,
            m,
            p_s2,
            alpha_divisions,
            h,
            regions,
            magnitudes,
            masses,
        } => {
            let grid = AlphaGrid::uniform(*alpha_divisions)?;
            let s = search(h.is_none(), *h, false, 0.0)?;
            if *regions {
                let rows = suboptimality_regions(magnitudes, masses, &grid, s)?;
                let mut t = Table::new(&["m", "p_s2", "region", "max_shortfall"]);
                for r in &rows {
                    let region = r
                        .region
                        .iter()
                        .map(|i| format!("[{}, {}]", i.lo, i.hi))
                        .collect::<Vec<_>>()
                        .join(";");
                    t.push(vec![
                        r.m.into(),
                        r.p_s2.into(),
                        region.into(),
                        r.max_shortfall.into(),
                    ]);
                }
                return Ok((Artifact::new(&rows, t)?, EXIT_OK));
            }
            let spec = match instance {
                SweepInstance::Mc => CounterexampleSpec::Mc,
                SweepInstance::M3 => CounterexampleSpec::m3(*m, *p_s2)?,
            };
            let rows = sweep_alpha(spec, &grid, s)?;
            let mut t = Table::new(&[
                "alpha",
                "oracle_value",
                "oracle_action",
                "decomp_value",
                "decomp_action",
                "realized_value",
            ]);
            for r in &rows {
                t.push(vec![
                    r.alpha.into(),
                    r.oracle_value.into(),
                    r.oracle_action.clone().into(),
                    r.decomposition_value.into(),
                    r.decomposition_action.clone().into(),
                    r.realized_value.into(),
                ]);
            }
            Ok((Artifact::new(&rows, t)?, EXIT_OK))
        }
    }
}

/// Runs a parsed command and renders its result.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let (artifact, code) = execute(cli)?;
    Ok(Outcome {
        text: artifact.render(cli.format)?,
        code,
    })
}

/// Full entry point: parses `args`, runs, writes the result to `--output`
/// or `out`, reports errors on `err` and returns the exit status.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.output {
        Some(path) => std::fs::write(path, &outcome.text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => out
            .write_all(outcome.text.as_bytes())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return EXIT_INPUT;
    }
    outcome.code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assertion_failures_map_to_their_own_code() {
        let failed = CounterexampleError::AssertionFailure {
            check: "cvar optimum",
            details: String::new(),
        };
        assert_eq!(CliError::from(failed).exit_code(), EXIT_ASSERTION);
        assert_eq!(CliError::Input("bad".into()).exit_code(), EXIT_INPUT);
    }

    #[test]
    fn runs_in_process() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with(
            [
                "riskdp",
                "--format",
                "csv",
                "opt",
                "--mdp",
                "mc",
                "--measure",
                "cvar",
                "--alpha",
                "0.5",
            ],
            &mut out,
            &mut err,
        );
        assert_eq!(code, EXIT_OK, "{}", String::from_utf8_lossy(&err));
        assert!(String::from_utf8(out).unwrap().starts_with("policy,value,best"));
    }
}
