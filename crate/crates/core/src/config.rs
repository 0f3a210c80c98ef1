//! Run configuration files and their translation into problems and options.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::expr::{parse_with_vars, Env, Expr, ParseError, Var};
use crate::heat::{build_spec, HeatError, HeatProblem, HeatProblemConfig};
use crate::hypothesis::{DiagnosticsOptions, SamplePlan};
use crate::phase_space::{HistoryView, WeightFunction};
use crate::semigroup::DiagonalGenerator;
use crate::solver::{
    GammaSign, ImpulseFn, InitialHistory, KernelFn, LambdaMode, NeutralFn, ProblemSpec,
    SolveOptions, SolverError,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config: {0}")]
    Json(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("in {field}: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A whole run: the problem plus options for every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sampling: SamplePlan,
    #[serde(default)]
    pub diagnostics: DiagnosticsOptions,
    pub pap: Option<PapConfig>,
    pub sequence: Option<SequenceConfig>,
}

impl RunConfig {
    pub fn from_json(src: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(src).map_err(|e| ConfigError::Json(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&src)
    }

    pub fn problem(&self) -> Result<&ProblemConfig, ConfigError> {
        self.problem
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing 'problem' block".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Diagonal(DiagonalConfig),
    Heat(HeatProblemConfig),
}

/// A built problem; the heat variant keeps its collocation model.
#[allow(clippy::large_enum_variant)]
pub enum BuiltProblem {
    Diagonal(ProblemSpec),
    Heat(Box<HeatProblem>),
}

impl BuiltProblem {
    pub fn spec(&self) -> &ProblemSpec {
        match self {
            BuiltProblem::Diagonal(s) => s,
            BuiltProblem::Heat(h) => &h.spec,
        }
    }

    pub fn into_spec(self) -> ProblemSpec {
        match self {
            BuiltProblem::Diagonal(s) => s,
            BuiltProblem::Heat(h) => h.spec,
        }
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<BuiltProblem, ConfigError> {
        match self {
            ProblemConfig::Diagonal(d) => Ok(BuiltProblem::Diagonal(d.build()?)),
            ProblemConfig::Heat(h) => Ok(BuiltProblem::Heat(Box::new(build_spec(h)?))),
        }
    }

    /// Replaces the number of modes of a sine-basis problem.
    pub fn set_modes(&mut self, modes: usize) -> Result<(), ConfigError> {
        match self {
            ProblemConfig::Heat(h) => h.modes = modes,
            ProblemConfig::Diagonal(d) if d.sine_modes.is_some() => d.sine_modes = Some(modes),
            ProblemConfig::Diagonal(_) => {
                return Err(ConfigError::Invalid(
                    "--modes applies to sine-basis problems only".into(),
                ))
            }
        }
        Ok(())
    }
}

fn d_weight() -> f64 {
    2.0
}

/// Impulse with one expression per component, in `(t, v, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentImpulse {
    pub time: f64,
    pub map: Vec<String>,
}

/// A diagonal generator with componentwise nonlinearities.
///
/// Per component `i` (1-based, bound to `x`): `phi(theta, x)`,
/// `g, f (t, u = ψ(0)_i, v = V_i, x)`, `h, k (t, s, u = ψ(0)_i, x)` and impulse maps
/// `(t, v = x(t_k)_i, x)`. A list of one expression is used for every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalConfig {
    pub rates: Option<Vec<f64>>,
    /// Dirichlet Laplacian on `(0, π)` truncated to this many modes.
    pub sine_modes: Option<usize>,
    pub horizon: f64,
    #[serde(default = "d_weight")]
    pub weight_rate: f64,
    pub phi: Vec<String>,
    #[serde(default)]
    pub g: Vec<String>,
    #[serde(default)]
    pub f: Vec<String>,
    #[serde(default)]
    pub h: Vec<String>,
    #[serde(default)]
    pub k: Vec<String>,
    #[serde(default)]
    pub impulses: Vec<ComponentImpulse>,
}

fn parse_list(
    field: &str,
    srcs: &[String],
    dim: usize,
    vars: &[Var],
) -> Result<Vec<Expr>, ConfigError> {
    if !(srcs.is_empty() || srcs.len() == 1 || srcs.len() == dim) {
        return Err(ConfigError::Invalid(format!(
            "{field} has {} expressions for {dim} components",
            srcs.len()
        )));
    }
    let exprs = srcs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            parse_with_vars(s, vars).map_err(|source| ConfigError::Parse {
                field: format!("{field}[{i}]"),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match exprs.len() {
        1 => vec![exprs[0].clone(); dim],
        _ => exprs,
    })
}

fn component(i: usize) -> f64 {
    (i + 1) as f64
}

impl DiagonalConfig {
    pub fn generator(&self) -> Result<DiagonalGenerator, ConfigError> {
        let gen = match (&self.rates, self.sine_modes) {
            (Some(r), None) => DiagonalGenerator::scalar(r.clone()),
            (None, Some(n)) => DiagonalGenerator::sine_dirichlet(n),
            _ => {
                return Err(ConfigError::Invalid(
                    "give exactly one of 'rates' and 'sine_modes'".into(),
                ))
            }
        };
        gen.map_err(|e| ConfigError::Solver(e.into()))
    }

    pub fn build(&self) -> Result<ProblemSpec, ConfigError> {
        use Var::*;
        let gen = self.generator()?;
        let dim = gen.modes();
        let weight = WeightFunction::exponential(self.weight_rate)
            .map_err(|e| ConfigError::Solver(e.into()))?;
        if self.phi.is_empty() {
            return Err(ConfigError::Invalid(
                "phi needs at least one expression".into(),
            ));
        }
        let phi = parse_list("phi", &self.phi, dim, &[Theta, X])?;
        let g = parse_list("g", &self.g, dim, &[T, U, V, X])?;
        let f = parse_list("f", &self.f, dim, &[T, U, V, X])?;
        let h = parse_list("h", &self.h, dim, &[T, S, U, X])?;
        let k = parse_list("k", &self.k, dim, &[T, S, U, X])?;
        let initial = InitialHistory::from_fn(dim, move |theta| {
            phi.iter()
                .enumerate()
                .map(|(i, e)| {
                    e.eval(&Env {
                        theta,
                        x: component(i),
                        ..Env::default()
                    })
                })
                .collect()
        });
        let mut spec = ProblemSpec::new(gen, weight, self.horizon, initial);
        let neutral = |exprs: Vec<Expr>| {
            NeutralFn(move |t: f64, psi: &HistoryView<'_>, v: &[f64]| {
                let u = psi.head();
                exprs
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        e.eval(&Env {
                            t,
                            u: u[i],
                            v: v[i],
                            x: component(i),
                            ..Env::default()
                        })
                    })
                    .collect::<Vec<f64>>()
            })
        };
        let kernel = |exprs: Vec<Expr>| {
            let autonomous = !exprs.iter().any(|e| e.uses(T));
            let f = move |t: f64, s: f64, psi: &HistoryView<'_>| {
                let u = psi.head();
                exprs
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        e.eval(&Env {
                            t,
                            s,
                            u: u[i],
                            x: component(i),
                            ..Env::default()
                        })
                    })
                    .collect::<Vec<f64>>()
            };
            if autonomous {
                KernelFn::time_independent(f)
            } else {
                KernelFn::new(f)
            }
        };
        if !g.is_empty() {
            spec = spec.with_neutral(neutral(g));
        }
        if !f.is_empty() {
            spec = spec.with_forcing(neutral(f));
        }
        if !h.is_empty() {
            spec = spec.with_neutral_kernel(kernel(h));
        }
        if !k.is_empty() {
            spec = spec.with_forcing_kernel(kernel(k));
        }
        for (n, imp) in self.impulses.iter().enumerate() {
            let maps = parse_list(&format!("impulses[{n}].map"), &imp.map, dim, &[T, V, X])?;
            if maps.is_empty() {
                return Err(ConfigError::Invalid(format!("impulses[{n}] has no map")));
            }
            let time = imp.time;
            spec = spec.with_impulse(
                time,
                ImpulseFn(move |left: &[f64]| {
                    maps.iter()
                        .enumerate()
                        .map(|(i, e)| {
                            e.eval(&Env {
                                t: time,
                                v: left[i],
                                x: component(i),
                                ..Env::default()
                            })
                        })
                        .collect::<Vec<f64>>()
                }),
            );
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `λ` of the forcing convolution: `"inf"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LambdaSetting(pub LambdaMode);

impl std::str::FromStr for LambdaSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(LambdaSetting(LambdaMode::Analytic));
        }
        match s.parse::<f64>() {
            Ok(l) if l.is_finite() && l > 0.0 => Ok(LambdaSetting(LambdaMode::Finite(l))),
            Ok(f) if f == f64::INFINITY => Ok(LambdaSetting(LambdaMode::Analytic)),
            _ => Err(format!(
                "lambda must be 'inf' or a positive number, got '{s}'"
            )),
        }
    }
}

impl Serialize for LambdaSetting {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            LambdaMode::Analytic => s.serialize_str("inf"),
            LambdaMode::Finite(l) => s.serialize_f64(l),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Num(v) => v.to_string(),
            Raw::Str(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SignSetting {
    #[default]
    Plus,
    Minus,
}

impl From<SignSetting> for GammaSign {
    fn from(s: SignSetting) -> Self {
        match s {
            SignSetting::Plus => GammaSign::Plus,
            SignSetting::Minus => GammaSign::Minus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda: LambdaSetting,
    pub literal_delta: bool,
    pub gamma_sign: SignSetting,
    /// A priori contraction constant, reported as a warning when `≥ 1`.
    pub contraction_hint: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        SolverConfig {
            dt: o.dt,
            tol: o.tol,
            max_iter: o.max_iter,
            lambda: LambdaSetting(o.lambda),
            literal_delta: o.literal_delta,
            gamma_sign: SignSetting::Plus,
            contraction_hint: o.contraction_hint,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> Result<SolveOptions, ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(ConfigError::Invalid(
                "tol and max_iter must be positive".into(),
            ));
        }
        Ok(SolveOptions {
            dt: self.dt,
            tol: self.tol,
            max_iter: self.max_iter,
            lambda: self.lambda.0,
            literal_delta: self.literal_delta,
            gamma_sign: self.gamma_sign.into(),
            contraction_hint: self.contraction_hint,
        })
    }
}

fn d_eps() -> f64 {
    0.1
}

/// A proposed split `f = f1 + f2`, each an expression in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PapConfig {
    /// The full function; defaults to `f1 + f2`.
    pub f: Option<String>,
    pub f1: String,
    pub f2: String,
    pub start: f64,
    pub end: f64,
    pub step: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    pub tau_max: f64,
    pub ladder: Vec<f64>,
    /// Times whose `ε`-neighbourhoods are left out of the period search.
    #[serde(default)]
    pub excluded: Vec<f64>,
}

/// Sequence values: an expression in `t` (the index) or an explicit list from `lo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SequenceValues {
    Expr(String),
    List(Vec<f64>),
}

fn d_pairs() -> usize {
    1000
}
fn d_span() -> f64 {
    20.0
}
fn d_jmax() -> usize {
    3
}
fn d_seq_eps() -> f64 {
    1e-9
}

/// Impulse times `τ_k` and an impulse sequence `I(k)` for `k ∈ [lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub lo: i64,
    pub hi: i64,
    /// `τ_k` as an expression in `t = k`.
    pub times: Option<String>,
    pub values: Option<SequenceValues>,
    /// Half-widths `p` of the discrete ergodic means.
    #[serde(default)]
    pub ergodic_p: Vec<i64>,
    /// Random pairs `(s, t)` for the count bound.
    #[serde(default = "d_pairs")]
    pub pairs: usize,
    /// Largest `t - s` among the random pairs.
    #[serde(default = "d_span")]
    pub pair_span: f64,
    #[serde(default = "d_jmax")]
    pub j_max: usize,
    #[serde(default = "d_seq_eps")]
    pub eps: f64,
}

impl SequenceConfig {
    pub fn times(&self) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(src) = &self.times else {
            return Ok(None);
        };
        let e = parse_with_vars(src, &[Var::T]).map_err(|source| ConfigError::Parse {
            field: "sequence.times".into(),
            source,
        })?;
        Ok(Some(
            (self.lo..=self.hi)
                .map(|k| {
                    e.eval(&Env {
                        t: k as f64,
                        ..Env::default()
                    })
                })
                .collect(),
        ))
    }

    pub fn values(&self) -> Result<Option<Vec<f64>>, ConfigError> {
        match &self.values {
            None => Ok(None),
            Some(SequenceValues::List(v)) => Ok(Some(v.clone())),
            Some(SequenceValues::Expr(src)) => {
                let e = parse_with_vars(src, &[Var::T]).map_err(|source| ConfigError::Parse {
                    field: "sequence.values".into(),
                    source,
                })?;
                Ok(Some(
                    (self.lo..=self.hi)
                        .map(|k| {
                            e.eval(&Env {
                                t: k as f64,
                                ..Env::default()
                            })
                        })
                        .collect(),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::picard_solve;

    const SCALAR: &str = r#"{
        "problem": {"kind": "diagonal", "rates": [1.0], "horizon": 2.0, "phi": ["1"],
                    "f": ["1"], "impulses": [{"time": 1.0, "map": ["0.5"]}]},
        "solver": {"dt": 0.001, "lambda": "inf"}
    }"#;

    #[test]
    fn scalar_config_matches_closed_form() {
        let cfg = RunConfig::from_json(SCALAR).unwrap();
        let spec = cfg.problem().unwrap().build().unwrap().into_spec();
        let sol = picard_solve(spec, cfg.solver.options().unwrap()).unwrap();
        let x = &sol.trajectory;
        let i = x.steps();
        let t = x.time(i);
        let exact = (-t).exp() + 1.0 - (-t).exp() + 0.5 * (-(t - 1.0)).exp();
        assert!((x.value(i)[0] - exact).abs() < 1e-6);
    }

    #[test]
    fn unknown_fields_and_bad_lambda_are_rejected() {
        assert!(RunConfig::from_json(r#"{"solver": {"dt": 0.1, "typo": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"solver": {"lambda": "-3"}}"#).is_err());
        let c = RunConfig::from_json(r#"{"solver": {"lambda": 100}}"#).unwrap();
        assert_eq!(c.solver.lambda.0, LambdaMode::Finite(100.0));
        let bad = r#"{"problem": {"kind": "diagonal", "rates": [1], "horizon": 1, "phi": ["1"], "extra": 0}}"#;
        assert!(RunConfig::from_json(bad).is_err());
    }

    #[test]
    fn broadcast_and_length_checks() {
        let d = DiagonalConfig {
            rates: Some(vec![1.0, 4.0]),
            sine_modes: None,
            horizon: 1.0,
            weight_rate: 2.0,
            phi: vec!["x".into()],
            g: vec![],
            f: vec!["1".into(), "2".into(), "3".into()],
            h: vec![],
            k: vec![],
            impulses: vec![],
        };
        assert!(matches!(d.build(), Err(ConfigError::Invalid(_))));
        let ok = DiagonalConfig {
            f: vec![],
            ..d.clone()
        };
        let spec = ok.build().unwrap();
        assert_eq!(spec.phi.at(-1.0), vec![1.0, 2.0]);
        let bad = DiagonalConfig {
            phi: vec!["y +".into()],
            ..ok
        };
        assert!(matches!(bad.build(), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn sequence_values_from_expression_or_list() {
        let s: SequenceConfig =
            serde_json::from_str(r#"{"lo": -2, "hi": 2, "values": "t*t", "times": "t"}"#).unwrap();
        assert_eq!(s.values().unwrap().unwrap(), vec![4.0, 1.0, 0.0, 1.0, 4.0]);
        assert_eq!(s.times().unwrap().unwrap(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let l: SequenceConfig =
            serde_json::from_str(r#"{"lo": 0, "hi": 1, "values": [3, 4]}"#).unwrap();
        assert_eq!(l.values().unwrap().unwrap(), vec![3.0, 4.0]);
    }
}
