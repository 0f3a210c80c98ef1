//! Command line interface: argument parsing, subcommands and exit codes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::almost_periodicity::{
    impulse_count_bound, sequence_ergodic, uniform_ap_sequence_check, verify_pap_split,
    worst_case_count_constant, ApError, ImpulseTimes, PapOptions, PapVerdict, SampledSignal,
    SequenceSignal, UniformApReport,
};
use crate::config::{
    BuiltProblem, ConfigError, LambdaSetting, PapConfig, ProblemConfig, RunConfig, SequenceConfig,
    SignSetting,
};
use crate::expr::{parse_with_vars, Env, Var};
use crate::heat::{chain_check, p_bounds, ChainSample, HeatError, HeatProblem, HeatProblemConfig};
use crate::hypothesis::{check_hypotheses, HypothesisError, HypothesisReport};
use crate::io::{csv_string, fmt_f64, to_json_line, trajectory_csv, write_json};
use crate::solver::{contraction_warning, picard_solve, Solution, SolveReport, SolverError};
use crate::trajectory::Trajectory;

/// The heat scenario used by `heat-demo` when no config is given.
pub const HEAT_SCENARIO: &str = include_str!("../../../configs/heat_scenario.json");

#[derive(Debug, Parser)]
#[command(
    name = "ppap",
    version,
    about = "Mild solutions and diagnostics for impulsive neutral equations with infinite delay"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the configured problem by Picard iteration.
    Solve(Common),
    /// Estimate constants and check every hypothesis on random samples.
    CheckHypotheses {
        #[command(flatten)]
        common: Common,
        /// Number of random input pairs (at least 1000).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Check a proposed almost periodic plus ergodic split.
    PapAnalyze(Common),
    /// Impulse-count bound, uniform almost periodicity and discrete ergodic means.
    SequenceAnalyze(Common),
    /// Solve the heat scenario and check its kernel bounds.
    HeatDemo(Common),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub modes: Option<usize>,
    /// `inf` or a positive number.
    #[arg(long)]
    pub lambda: Option<LambdaSetting>,
    /// Drop the impulse sum from the solution operator.
    #[arg(long)]
    pub literal_delta: bool,
    #[arg(long, value_enum)]
    pub gamma_sign: Option<SignSetting>,
}

/// A failure with its exit code: 2 for invalid input, 3 for numerical failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            error: "validation",
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            error: "numerical",
            code: 3,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        to_json_line(self)
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NoConvergence { .. } | SolverError::NonFinite { .. } => {
                Self::numerical(e.to_string())
            }
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<HeatError> for CliError {
    fn from(e: HeatError) -> Self {
        match e {
            HeatError::DivergentKernelMass(_) => Self::numerical(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Heat(h) => h.into(),
            ConfigError::Solver(s) => s.into(),
            other => Self::validation(other.to_string()),
        }
    }
}

impl From<HypothesisError> for CliError {
    fn from(e: HypothesisError) -> Self {
        match e {
            HypothesisError::Solver(s) => s.into(),
            HypothesisError::InvalidPlan(_) | HypothesisError::MissingConstant(_) => {
                Self::validation(e.to_string())
            }
            _ => Self::numerical(e.to_string()),
        }
    }
}

impl From<ApError> for CliError {
    fn from(e: ApError) -> Self {
        Self::validation(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::validation(format!("cannot write {}: {e}", path.display()))
}

/// Loads the config (or the built-in heat scenario) and applies the flag overrides.
fn load(common: &Common, fallback: Option<&str>) -> Result<RunConfig, CliError> {
    let mut cfg = match (&common.config, fallback) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(src)) => RunConfig::from_json(src)?,
        (None, None) => return Err(CliError::validation("--config is required")),
    };
    if let Some(dt) = common.dt {
        cfg.solver.dt = dt;
    }
    if let Some(l) = common.lambda {
        cfg.solver.lambda = l;
    }
    if common.literal_delta {
        cfg.solver.literal_delta = true;
    }
    if let Some(g) = common.gamma_sign {
        cfg.solver.gamma_sign = g;
    }
    if let Some(s) = common.seed {
        cfg.sampling.seed = s;
    }
    if let Some(m) = common.modes {
        if let Some(p) = cfg.problem.as_mut() {
            p.set_modes(m)?;
        }
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
    Ok(&common.out)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_json(path, value).map_err(|e| io_err(path, e))
}

/// Stored left value, right limit and `right - left - I(left)` at an impulse node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpulseCheck {
    pub time: f64,
    pub node: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// `‖right - left - I(left)‖`, zero when the impulse sum is dropped.
    pub jump_residual: f64,
}

pub fn impulse_checks(sol: &Trajectory, spec: &crate::solver::ProblemSpec) -> Vec<ImpulseCheck> {
    spec.impulses
        .iter()
        .filter_map(|imp| {
            let node = sol.node_of(imp.time).ok()?;
            let left = sol.value(node).to_vec();
            let right = sol.right_value(node).to_vec();
            let jump = imp.map.jump(&left);
            let jump_residual = if sol.jump_at(node).is_some() {
                right
                    .iter()
                    .zip(&left)
                    .zip(&jump)
                    .map(|((r, l), j)| (r - l - j).powi(2))
                    .sum::<f64>()
                    .sqrt()
            } else {
                0.0
            };
            Some(ImpulseCheck {
                time: imp.time,
                node,
                left,
                right,
                jump_residual,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub kind: &'static str,
    pub horizon: f64,
    pub dimension: usize,
    pub report: SolveReport,
    pub final_time: f64,
    pub final_value: Vec<f64>,
    pub impulses: Vec<ImpulseCheck>,
}

fn kind(p: &ProblemConfig) -> &'static str {
    match p {
        ProblemConfig::Diagonal(_) => "diagonal",
        ProblemConfig::Heat(_) => "heat",
    }
}

/// Physical profile `z(t, y)` on the collocation grid at up to 11 times.
fn profile_csv(hp: &HeatProblem, x: &Trajectory) -> std::io::Result<String> {
    let stride = x.steps().div_ceil(10).max(1);
    let mut nodes: Vec<usize> = (0..=x.steps()).step_by(stride).collect();
    if nodes.last() != Some(&x.steps()) {
        nodes.push(x.steps());
    }
    let mut rows = Vec::new();
    for i in nodes {
        let z = hp.model.to_physical(x.value(i));
        for (y, v) in hp.model.grid().iter().zip(z) {
            rows.push(vec![fmt_f64(x.time(i)), fmt_f64(*y), fmt_f64(v)]);
        }
    }
    csv_string(&["t".into(), "y".into(), "z".into()], rows)
}

fn solve_built(cfg: &RunConfig, built: &BuiltProblem) -> Result<Solution, CliError> {
    let opts = cfg.solver.options()?;
    let warning = contraction_warning(opts.contraction_hint);
    picard_solve(built.spec().clone(), opts).map_err(|e| {
        let mut err = CliError::from(e);
        if let Some(w) = warning {
            err.message = format!("{}; {w}", err.message);
        }
        err
    })
}

fn summarize(
    cfg: &RunConfig,
    built: &BuiltProblem,
    sol: &Solution,
) -> Result<SolveSummary, CliError> {
    let x = &sol.trajectory;
    let spec = built.spec();
    Ok(SolveSummary {
        kind: kind(cfg.problem()?),
        horizon: spec.horizon,
        dimension: spec.dim(),
        report: sol.report.clone(),
        final_time: x.time(x.steps()),
        final_value: x.value(x.steps()).to_vec(),
        impulses: impulse_checks(x, spec),
    })
}

fn cmd_solve(common: &Common) -> Result<String, CliError> {
    let cfg = load(common, None)?;
    let built = cfg.problem()?.build()?;
    let sol = solve_built(&cfg, &built)?;
    let dir = out_dir(common)?;
    let csv = trajectory_csv(&sol.trajectory).map_err(|e| io_err(dir, e))?;
    write_text(&dir.join("trajectory.csv"), &csv)?;
    if let BuiltProblem::Heat(hp) = &built {
        let p = profile_csv(hp, &sol.trajectory).map_err(|e| io_err(dir, e))?;
        write_text(&dir.join("profile.csv"), &p)?;
    }
    let summary = summarize(&cfg, &built, &sol)?;
    write_json_file(&dir.join("solve.json"), &summary)?;
    Ok(to_json_line(&serde_json::json!({
        "command": "solve",
        "iterations": summary.report.iterations,
        "final_time": summary.final_time,
        "final_value_head": summary.final_value.first(),
        "warnings": summary.report.warnings,
    })))
}

/// `p₂` and `p₄` on a time grid together with the chain samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatBounds {
    pub times: Vec<f64>,
    pub p2: Vec<f64>,
    pub p4: Vec<f64>,
    pub chain: Vec<ChainSample>,
    pub chain_holds: bool,
}

fn heat_bounds(hp: &HeatProblem, c: &HeatProblemConfig, seed: u64) -> Result<HeatBounds, CliError> {
    let times: Vec<f64> = (0..=10).map(|i| c.horizon * i as f64 / 10.0).collect();
    let pb = p_bounds(c, &times)?;
    let chain = chain_check(hp, c, 50, seed)?;
    Ok(HeatBounds {
        p2: pb.iter().map(|p| p.0).collect(),
        p4: pb.iter().map(|p| p.1).collect(),
        times,
        chain_holds: chain.iter().all(|s| s.holds),
        chain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct HypothesisOutput {
    report: HypothesisReport,
    heat: Option<HeatBounds>,
}

fn cmd_check(common: &Common, samples: Option<usize>) -> Result<String, CliError> {
    let mut cfg = load(common, None)?;
    if let Some(n) = samples {
        cfg.sampling.samples = n;
    }
    let built = cfg.problem()?.build()?;
    let opts = cfg.solver.options()?;
    let report = check_hypotheses(built.spec(), &cfg.sampling, &cfg.diagnostics, &opts)?;
    let heat = match (&built, cfg.problem()?) {
        (BuiltProblem::Heat(hp), ProblemConfig::Heat(c)) => {
            Some(heat_bounds(hp, c, cfg.sampling.seed)?)
        }
        _ => None,
    };
    let dir = out_dir(common)?;
    let line = to_json_line(&serde_json::json!({
        "command": "check-hypotheses",
        "verdict": report.verdict,
        "contraction_margin": report.conditions.as_ref().map(|c| c.contraction.margin),
        "growth_margin": report.conditions.as_ref().map(|c| c.growth.margin),
        "conditions_error": report.conditions_error,
    }));
    write_json_file(
        &dir.join("hypotheses.json"),
        &HypothesisOutput { report, heat },
    )?;
    Ok(line)
}

fn expr_signal(field: &str, src: &str, c: &PapConfig) -> Result<SampledSignal, CliError> {
    let e = parse_with_vars(src, &[Var::T])
        .map_err(|e| CliError::validation(format!("in pap.{field}: {e}")))?;
    Ok(SampledSignal::scalar(c.start, c.end, c.step, |t| {
        e.eval(&Env {
            t,
            ..Env::default()
        })
    })?)
}

/// Runs the split check described by a [`PapConfig`].
pub fn pap_analyze(c: &PapConfig) -> Result<PapVerdict, CliError> {
    let f1 = expr_signal("f1", &c.f1, c)?;
    let f2 = expr_signal("f2", &c.f2, c)?;
    let f = match &c.f {
        Some(src) => expr_signal("f", src, c)?,
        None => f1.combine(1.0, &f2, 1.0)?,
    };
    let opts = PapOptions {
        eps: c.eps,
        tau_max: c.tau_max,
        ladder: c.ladder.clone(),
        excluded: c.excluded.clone(),
    };
    Ok(verify_pap_split(&f, &f1, &f2, &opts)?)
}

fn cmd_pap(common: &Common) -> Result<String, CliError> {
    let cfg = load(common, None)?;
    let c = cfg
        .pap
        .as_ref()
        .ok_or_else(|| CliError::validation("missing 'pap' block"))?;
    let verdict = pap_analyze(c)?;
    let dir = out_dir(common)?;
    write_json_file(&dir.join("pap.json"), &verdict)?;
    Ok(to_json_line(&serde_json::json!({
        "command": "pap-analyze",
        "pass": verdict.pass,
        "period_count": verdict.period_count,
    })))
}

/// Results of `sequence-analyze`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceReport {
    pub count_bound: Option<CountReport>,
    pub uniform: Option<UniformApReport>,
    pub ergodic: Vec<(i64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountReport {
    pub pairs: usize,
    pub n_fit: u64,
    pub n_worst_case: u64,
    pub violations: usize,
    /// Pair with the smallest slack `N(t-s) + N - i(s,t)`.
    pub tightest: (f64, f64, usize, f64),
}

/// Runs the sequence checks described by a [`SequenceConfig`].
pub fn sequence_analyze(c: &SequenceConfig, seed: u64) -> Result<SequenceReport, CliError> {
    if c.hi < c.lo {
        return Err(CliError::validation(
            "sequence.hi must not be below sequence.lo",
        ));
    }
    let mut report = SequenceReport {
        count_bound: None,
        uniform: None,
        ergodic: Vec::new(),
    };
    if let Some(times) = c.times()? {
        let tau = ImpulseTimes::new(times)?;
        let t = tau.times();
        let (lo, hi) = (t[0], t[t.len() - 1]);
        if !(c.pair_span > 0.0 && hi - lo > c.pair_span) {
            return Err(CliError::validation(
                "pair_span must be positive and shorter than the time range",
            ));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(f64, f64)> = (0..c.pairs)
            .map(|_| {
                let s = rng.random_range(lo..hi - c.pair_span);
                (s, s + rng.random_range(0.0..c.pair_span))
            })
            .collect();
        let mut n_fit = 1;
        let mut violations = 0;
        let mut tightest = (0.0, 0.0, 0, f64::INFINITY);
        for &(s, t) in &pairs {
            let b = impulse_count_bound(&tau, s, t, &pairs);
            n_fit = b.n_fit;
            if !b.holds {
                violations += 1;
            }
            let slack = b.bound - b.count as f64;
            if slack < tightest.3 {
                tightest = (s, t, b.count, slack);
            }
        }
        report.count_bound = Some(CountReport {
            pairs: pairs.len(),
            n_fit,
            n_worst_case: worst_case_count_constant(&tau),
            violations,
            tightest,
        });
        if c.j_max > 0 && tau.len() >= 4 * c.j_max {
            report.uniform = Some(uniform_ap_sequence_check(&tau, c.j_max, c.eps)?);
        }
    }
    if let Some(values) = c.values()? {
        let seq = SequenceSignal::new(c.lo, 1, values)?;
        for &p in &c.ergodic_p {
            report.ergodic.push((p, sequence_ergodic(&seq, p)?));
        }
    }
    Ok(report)
}

fn cmd_sequence(common: &Common) -> Result<String, CliError> {
    let cfg = load(common, None)?;
    let c = cfg
        .sequence
        .as_ref()
        .ok_or_else(|| CliError::validation("missing 'sequence' block"))?;
    let report = sequence_analyze(c, cfg.sampling.seed)?;
    let dir = out_dir(common)?;
    write_json_file(&dir.join("sequence.json"), &report)?;
    Ok(to_json_line(&serde_json::json!({
        "command": "sequence-analyze",
        "n_fit": report.count_bound.as_ref().map(|b| b.n_fit),
        "uniform_pass": report.uniform.as_ref().map(|u| u.pass),
    })))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct HeatDemoOutput {
    solve: SolveSummary,
    /// Largest `|z(t, 0)|` or `|z(t, π)|` over all nodes.
    boundary_max: f64,
    bounds: HeatBounds,
}

fn cmd_heat(common: &Common) -> Result<String, CliError> {
    let cfg = load(common, Some(HEAT_SCENARIO))?;
    let (BuiltProblem::Heat(hp), ProblemConfig::Heat(hc)) =
        (cfg.problem()?.build()?, cfg.problem()?)
    else {
        return Err(CliError::validation(
            "heat-demo needs a problem of kind 'heat'",
        ));
    };
    let built = BuiltProblem::Heat(hp);
    let sol = solve_built(&cfg, &built)?;
    let BuiltProblem::Heat(hp) = &built else {
        unreachable!()
    };
    let x = &sol.trajectory;
    let boundary_max = (0..=x.steps())
        .map(|i| {
            let z = hp.model.to_physical(x.value(i));
            z[0].abs().max(z[z.len() - 1].abs())
        })
        .fold(0.0, f64::max);
    let bounds = heat_bounds(hp, hc, cfg.sampling.seed)?;
    let dir = out_dir(common)?;
    write_text(
        &dir.join("trajectory.csv"),
        &trajectory_csv(x).map_err(|e| io_err(dir, e))?,
    )?;
    write_text(
        &dir.join("profile.csv"),
        &profile_csv(hp, x).map_err(|e| io_err(dir, e))?,
    )?;
    let solve = summarize(&cfg, &built, &sol)?;
    let line = to_json_line(&serde_json::json!({
        "command": "heat-demo",
        "iterations": solve.report.iterations,
        "boundary_max": boundary_max,
        "chain_holds": bounds.chain_holds,
    }));
    write_json_file(
        &dir.join("heat.json"),
        &HeatDemoOutput {
            solve,
            boundary_max,
            bounds,
        },
    )?;
    Ok(line)
}

/// Runs a parsed command and returns the summary line for stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::CheckHypotheses { common, samples } => cmd_check(common, *samples),
        Command::PapAnalyze(c) => cmd_pap(c),
        Command::SequenceAnalyze(c) => cmd_sequence(c),
        Command::HeatDemo(c) => cmd_heat(c),
    }
}
