use std::fmt;
use std::sync::Arc;

use crate::phase_space::{HistoryView, PhaseSpaceError, WeightFunction, WeightedHistory};
use crate::semigroup::DiagonalGenerator;
use crate::trajectory::Trajectory;

use super::SolverError;

/// The neutral map `g(t, ψ, v)` or the forcing `f(t, ψ, v)`.
pub trait NeutralMap: Send + Sync {
    fn eval(&self, t: f64, psi: &HistoryView<'_>, v: &[f64]) -> Vec<f64>;
}

/// A delay kernel `h(t, s, ψ)` or `k(t, s, ψ)`.
pub trait DelayKernel: Send + Sync {
    fn eval(&self, t: f64, s: f64, psi: &HistoryView<'_>) -> Vec<f64>;

    /// Whether `eval` ignores its first argument, which makes the running
    /// integral a cumulative sum.
    fn time_independent(&self) -> bool {
        false
    }

    /// `∫₀^{t_i} k(t_i, s, x_s) ds` at every solution node `t_i`.
    fn integrate_along(&self, x: &Trajectory) -> Vec<Vec<f64>> {
        trapezoid_along(self, x)
    }

    /// `∫₀ᵗ k(t, s, ψ) ds` for a fixed history `ψ`, trapezoid with `panels` panels.
    fn integrate_fixed(&self, t: f64, psi: &HistoryView<'_>, panels: usize) -> Vec<f64> {
        let mut acc = vec![0.0; psi.dim()];
        if t <= 0.0 || panels == 0 {
            return acc;
        }
        let ds = t / panels as f64;
        for j in 0..=panels {
            let w = if j == 0 || j == panels { 0.5 * ds } else { ds };
            for (a, v) in acc.iter_mut().zip(self.eval(t, j as f64 * ds, psi)) {
                *a += w * v;
            }
        }
        acc
    }
}

/// An impulse map `I_k`.
pub trait ImpulseMap: Send + Sync {
    fn jump(&self, left: &[f64]) -> Vec<f64>;
}

/// Trapezoid rule in `s` on the solution grid, using right-sided segments on the
/// left end of a panel so that jumps are integrated correctly.
pub fn trapezoid_along<K: DelayKernel + ?Sized>(kernel: &K, x: &Trajectory) -> Vec<Vec<f64>> {
    let n = x.steps();
    let dt = x.step();
    let dim = x.dim();
    let mut out = vec![vec![0.0; dim]; n + 1];
    if kernel.time_independent() {
        let mut acc = vec![0.0; dim];
        for i in 1..=n {
            let a = kernel.eval(0.0, x.time(i - 1), &x.segment(i - 1, true));
            let b = kernel.eval(0.0, x.time(i), &x.segment(i, false));
            for d in 0..dim {
                acc[d] += 0.5 * dt * (a[d] + b[d]);
            }
            out[i].copy_from_slice(&acc);
        }
        return out;
    }
    for (i, slot) in out.iter_mut().enumerate().skip(1) {
        let t = x.time(i);
        for j in 0..i {
            let a = kernel.eval(t, x.time(j), &x.segment(j, true));
            let b = kernel.eval(t, x.time(j + 1), &x.segment(j + 1, false));
            for d in 0..dim {
                slot[d] += 0.5 * dt * (a[d] + b[d]);
            }
        }
    }
    out
}

/// Wraps a closure as a [`NeutralMap`].
pub struct NeutralFn<F>(pub F);

impl<F> NeutralMap for NeutralFn<F>
where
    F: Fn(f64, &HistoryView<'_>, &[f64]) -> Vec<f64> + Send + Sync,
{
    fn eval(&self, t: f64, psi: &HistoryView<'_>, v: &[f64]) -> Vec<f64> {
        (self.0)(t, psi, v)
    }
}

/// Wraps a closure as a [`DelayKernel`].
pub struct KernelFn<F> {
    f: F,
    time_independent: bool,
}

impl<F> KernelFn<F>
where
    F: Fn(f64, f64, &HistoryView<'_>) -> Vec<f64> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        KernelFn {
            f,
            time_independent: false,
        }
    }

    /// Declares that the closure ignores `t`.
    pub fn time_independent(f: F) -> Self {
        KernelFn {
            f,
            time_independent: true,
        }
    }
}

impl<F> DelayKernel for KernelFn<F>
where
    F: Fn(f64, f64, &HistoryView<'_>) -> Vec<f64> + Send + Sync,
{
    fn eval(&self, t: f64, s: f64, psi: &HistoryView<'_>) -> Vec<f64> {
        (self.f)(t, s, psi)
    }

    fn time_independent(&self) -> bool {
        self.time_independent
    }
}

/// Wraps a closure as an [`ImpulseMap`].
pub struct ImpulseFn<F>(pub F);

impl<F> ImpulseMap for ImpulseFn<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn jump(&self, left: &[f64]) -> Vec<f64> {
        (self.0)(left)
    }
}

type HistoryFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// The initial history `φ`, given as a function with optional breakpoints.
#[derive(Clone)]
pub struct InitialHistory {
    dim: usize,
    f: HistoryFn,
    breaks: Vec<(f64, Vec<f64>)>,
}

impl fmt::Debug for InitialHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialHistory")
            .field("dim", &self.dim)
            .field("breaks", &self.breaks)
            .finish()
    }
}

impl InitialHistory {
    pub fn constant(v: Vec<f64>) -> Self {
        let dim = v.len();
        InitialHistory {
            dim,
            f: Arc::new(move |_| v.clone()),
            breaks: Vec::new(),
        }
    }

    pub fn from_fn(dim: usize, f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        InitialHistory {
            dim,
            f: Arc::new(f),
            breaks: Vec::new(),
        }
    }

    /// Interpolates a sampled history; offsets before its window take the oldest value.
    pub fn from_history(h: WeightedHistory) -> Self {
        let dim = h.dim();
        let breaks = h
            .jumps()
            .iter()
            .map(|j| (h.view().node_offset(j.index), j.right.clone()))
            .collect();
        InitialHistory {
            dim,
            f: Arc::new(move |s| h.view().at(s.max(h.s_min()))),
            breaks,
        }
    }

    /// Adds a breakpoint at `s < 0` with the given right limit.
    pub fn with_breakpoint(mut self, s: f64, right: Vec<f64>) -> Self {
        self.breaks.push((s, right));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, s: f64) -> Vec<f64> {
        (self.f)(s)
    }

    /// Samples on the grid with spacing `step` reaching back to `s_min`.
    pub fn sample(&self, step: f64, s_min: f64) -> Result<WeightedHistory, PhaseSpaceError> {
        let mut h = WeightedHistory::from_fn(step, s_min, self.dim, |s| (self.f)(s))?;
        for (s, r) in &self.breaks {
            if *s > h.s_min() {
                h = h.with_breakpoint(*s, r.clone())?;
            }
        }
        Ok(h)
    }
}

/// An impulse at `time` with map `I_k`.
#[derive(Clone)]
pub struct Impulse {
    pub time: f64,
    pub map: Arc<dyn ImpulseMap>,
}

/// A complete problem: generator, phase space, data and horizon.
#[derive(Clone)]
pub struct ProblemSpec {
    pub generator: DiagonalGenerator,
    pub weight: WeightFunction,
    pub horizon: f64,
    pub phi: InitialHistory,
    pub g: Option<Arc<dyn NeutralMap>>,
    pub f: Option<Arc<dyn NeutralMap>>,
    pub h: Option<Arc<dyn DelayKernel>>,
    pub k: Option<Arc<dyn DelayKernel>>,
    pub impulses: Vec<Impulse>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("generator", &self.generator)
            .field("weight", &self.weight)
            .field("horizon", &self.horizon)
            .field("phi", &self.phi)
            .field("g", &self.g.is_some())
            .field("f", &self.f.is_some())
            .field("h", &self.h.is_some())
            .field("k", &self.k.is_some())
            .field(
                "impulse_times",
                &self.impulses.iter().map(|i| i.time).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(
        generator: DiagonalGenerator,
        weight: WeightFunction,
        horizon: f64,
        phi: InitialHistory,
    ) -> Self {
        ProblemSpec {
            generator,
            weight,
            horizon,
            phi,
            g: None,
            f: None,
            h: None,
            k: None,
            impulses: Vec::new(),
        }
    }

    pub fn with_neutral(mut self, g: impl NeutralMap + 'static) -> Self {
        self.g = Some(Arc::new(g));
        self
    }

    pub fn with_forcing(mut self, f: impl NeutralMap + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn with_neutral_kernel(mut self, h: impl DelayKernel + 'static) -> Self {
        self.h = Some(Arc::new(h));
        self
    }

    pub fn with_forcing_kernel(mut self, k: impl DelayKernel + 'static) -> Self {
        self.k = Some(Arc::new(k));
        self
    }

    pub fn with_impulse(mut self, time: f64, map: impl ImpulseMap + 'static) -> Self {
        self.impulses.push(Impulse {
            time,
            map: Arc::new(map),
        });
        self
    }

    pub fn dim(&self) -> usize {
        self.generator.modes()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidProblem(m));
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        if self.phi.dim() != self.dim() {
            return bad(format!(
                "initial history has dimension {}, generator has {} modes",
                self.phi.dim(),
                self.dim()
            ));
        }
        let mut prev = 0.0;
        for imp in &self.impulses {
            if !(imp.time > prev && imp.time < self.horizon) {
                return bad(format!(
                    "impulse times must be strictly increasing inside (0, {}), got {}",
                    self.horizon, imp.time
                ));
            }
            prev = imp.time;
        }
        Ok(())
    }
}

/// How the forcing enters the convolution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LambdaMode {
    /// The limit `λ → ∞`, where `B_λ` is the identity.
    #[default]
    Analytic,
    /// A finite `λ`, applying `B_λ = λ R(λ, A)` to the forcing.
    Finite(f64),
}

/// Sign of the initial term `S'(t)[φ(0) - g(0, φ, 0)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaSign {
    #[default]
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda: LambdaMode,
    /// Drop the impulse sum from the solution operator.
    pub literal_delta: bool,
    pub gamma_sign: GammaSign,
    /// A priori contraction constant; a value `≥ 1` is reported as a warning.
    pub contraction_hint: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dt: 0.01,
            tol: 1e-10,
            max_iter: 100,
            lambda: LambdaMode::Analytic,
            literal_delta: false,
            gamma_sign: GammaSign::Plus,
            contraction_hint: None,
        }
    }
}
