//! Closed-form reference solutions.

use crate::phase_space::{WeightFunction, WeightedHistory};
use crate::semigroup::DiagonalGenerator;
use crate::trajectory::Trajectory;

use super::gamma::Grid;
use super::problem::{
    ImpulseFn, InitialHistory, KernelFn, LambdaMode, NeutralFn, ProblemSpec, SolveOptions,
};
use super::SolverError;

/// `x' = -a x + c`, constant history `φ0`, impulses `x(t_k⁺) = x(t_k) + d_k`.
///
/// The mild solution is
/// `x(t) = e^{-at}φ0 + c(1 - e^{-at})/a + Σ_{t_k<t} e^{-a(t-t_k)} d_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLinear {
    pub rate: f64,
    pub forcing: f64,
    pub phi0: f64,
    pub impulses: Vec<(f64, f64)>,
    pub weight_rate: f64,
    pub horizon: f64,
}

impl ScalarLinear {
    pub fn to_problem(&self) -> Result<ProblemSpec, SolverError> {
        let gen = DiagonalGenerator::scalar(vec![self.rate])?;
        let weight = WeightFunction::exponential(self.weight_rate)?;
        let c = self.forcing;
        let mut spec = ProblemSpec::new(
            gen,
            weight,
            self.horizon,
            InitialHistory::constant(vec![self.phi0]),
        );
        if c != 0.0 {
            spec = spec.with_forcing(NeutralFn(
                move |_t: f64, _: &crate::phase_space::HistoryView<'_>, _: &[f64]| vec![c],
            ));
        }
        for &(t, d) in &self.impulses {
            spec = spec.with_impulse(t, ImpulseFn(move |_: &[f64]| vec![d]));
        }
        Ok(spec)
    }

    /// Value of the exact solution at `t`, left limit at impulse times.
    pub fn value(&self, t: f64, forcing_scale: f64) -> f64 {
        let a = self.rate;
        let mut x =
            (-a * t).exp() * self.phi0 - forcing_scale * self.forcing * (-a * t).exp_m1() / a;
        for &(tk, d) in &self.impulses {
            if tk < t - 1e-12 {
                x += (-a * (t - tk)).exp() * d;
            }
        }
        x
    }
}

/// The exact solution of a [`ScalarLinear`] problem on the solver grid.
pub fn oracle_scalar_solve(
    problem: &ScalarLinear,
    opts: &SolveOptions,
) -> Result<Trajectory, SolverError> {
    let spec = problem.to_problem()?;
    let grid = Grid::new(&spec, opts.dt)?;
    let scale = match opts.lambda {
        LambdaMode::Analytic => 1.0,
        LambdaMode::Finite(l) => l / (l + problem.rate),
    };
    let history =
        WeightedHistory::from_fn(grid.dt, spec.weight.s_min(), 1, |_| vec![problem.phi0])?;
    let mut x = Trajectory::from_history(&history, grid.steps);
    for i in 0..=grid.steps {
        x.set_value(i, &[problem.value(x.time(i), scale)]);
    }
    if !opts.literal_delta {
        for (&i, &(_, d)) in grid.impulse_nodes.iter().zip(&problem.impulses) {
            let left = x.value(i)[0];
            x.set_jump(i, Some(vec![left + d]));
        }
    }
    Ok(x)
}

/// A neutral problem whose solution operator has a known contraction constant.
///
/// `g(t, ψ, v) = G₁ l ψ(0) + G₂ v` and `h(t, s, ψ) = H l ψ(0)` have Lipschitz
/// constants `G₁`, `G₂` and `H` in the phase-space norm, so the operator contracts
/// with constant `K = l (G₁ + b G₂ H)` when `f` does not depend on the state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedContraction {
    pub g1: f64,
    pub g2: f64,
    pub h: f64,
    pub rate: f64,
    pub weight_rate: f64,
    pub horizon: f64,
    pub phi0: f64,
    pub forcing: f64,
}

impl PlantedContraction {
    pub fn new(g1: f64, g2: f64, h: f64) -> Self {
        PlantedContraction {
            g1,
            g2,
            h,
            rate: 1.0,
            weight_rate: 2.0,
            horizon: 1.0,
            phi0: 1.0,
            forcing: 0.5,
        }
    }

    pub fn l(&self) -> f64 {
        1.0 / self.weight_rate
    }

    pub fn contraction_constant(&self) -> f64 {
        self.l() * (self.g1 + self.horizon * self.g2 * self.h)
    }

    pub fn to_problem(&self) -> Result<ProblemSpec, SolverError> {
        let gen = DiagonalGenerator::scalar(vec![self.rate])?;
        let weight = WeightFunction::exponential(self.weight_rate)?;
        let l = self.l();
        let (g1, g2, h, c) = (self.g1 * l, self.g2, self.h * l, self.forcing);
        let phi0 = self.phi0;
        let spec = ProblemSpec::new(
            gen,
            weight,
            self.horizon,
            InitialHistory::from_fn(1, move |s| vec![phi0 * (1.0 + 0.5 * s.sin())]),
        )
        .with_neutral(NeutralFn(
            move |_t: f64, psi: &crate::phase_space::HistoryView<'_>, v: &[f64]| {
                vec![g1 * psi.head()[0] + g2 * v[0]]
            },
        ))
        .with_neutral_kernel(KernelFn::time_independent(
            move |_t: f64, _s: f64, psi: &crate::phase_space::HistoryView<'_>| {
                vec![h * psi.head()[0]]
            },
        ))
        .with_forcing(NeutralFn(
            move |t: f64, _: &crate::phase_space::HistoryView<'_>, _: &[f64]| vec![c * t.cos()],
        ));
        Ok(spec)
    }
}
