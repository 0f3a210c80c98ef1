//! Mild solutions by Picard iteration of the solution operator.

mod gamma;
mod oracle;
mod picard;
mod problem;

use thiserror::Error;

use crate::phase_space::PhaseSpaceError;
use crate::semigroup::SemigroupError;

pub use gamma::{apply_impulse, Grid, MildSolver};
pub use oracle::{oracle_scalar_solve, PlantedContraction, ScalarLinear};
pub use picard::{contraction_ratio, contraction_warning, picard_solve, Solution, SolveReport};
pub use problem::{
    trapezoid_along, DelayKernel, GammaSign, Impulse, ImpulseFn, ImpulseMap, InitialHistory,
    KernelFn, LambdaMode, NeutralFn, NeutralMap, ProblemSpec, SolveOptions,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("impulse time {t} is not an interior grid node (step {dt})")]
    ImpulseOffGrid { t: f64, dt: f64 },
    #[error("non-finite value in the {term} term at t = {t}")]
    NonFinite { term: &'static str, t: f64 },
    #[error("Picard iteration did not converge after {} iterations (last residual {:e})", .residuals.len(), .residuals.last().copied().unwrap_or(f64::NAN))]
    NoConvergence {
        residuals: Vec<f64>,
        ratio: Option<f64>,
    },
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    PhaseSpace(#[from] PhaseSpaceError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{seminorm_b, HistoryView, WeightFunction};
    use crate::semigroup::DiagonalGenerator;
    use crate::trajectory::Trajectory;

    fn opts(dt: f64) -> SolveOptions {
        SolveOptions {
            dt,
            ..SolveOptions::default()
        }
    }

    #[test]
    fn linear_scalar_matches_closed_form() {
        let p = ScalarLinear {
            rate: 1.0,
            forcing: 0.5,
            phi0: 1.0,
            impulses: vec![(0.25, 0.3), (0.5, -0.2)],
            weight_rate: 2.0,
            horizon: 1.0,
        };
        let o = opts(1e-3);
        let sol = picard_solve(p.to_problem().unwrap(), o.clone()).unwrap();
        let exact = oracle_scalar_solve(&p, &o).unwrap();
        assert!(sol.trajectory.sup_distance(&exact) <= 1e-10);
        // Eq. (2) holds exactly on the returned iterate
        for &i in &[250usize, 500] {
            let x = &sol.trajectory;
            let jump = x.right_value(i)[0] - x.value(i)[0];
            let expected = if i == 250 { 0.3 } else { -0.2 };
            assert!((jump - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn free_problem_converges_in_one_iteration() {
        let gen = DiagonalGenerator::sine_dirichlet(3).unwrap();
        let spec = ProblemSpec::new(
            gen,
            WeightFunction::exponential(2.0).unwrap(),
            1.0,
            InitialHistory::constant(vec![1.0, 0.5, 0.25]),
        );
        let sol = picard_solve(spec, opts(0.01)).unwrap();
        assert_eq!(sol.report.iterations, 1);
        assert_eq!(sol.report.residuals, vec![0.0]);
    }

    #[test]
    fn finite_lambda_scales_forcing() {
        let p = ScalarLinear {
            rate: 2.0,
            forcing: 1.0,
            phi0: 0.0,
            impulses: vec![],
            weight_rate: 2.0,
            horizon: 1.0,
        };
        let o = SolveOptions {
            lambda: LambdaMode::Finite(3.0),
            ..opts(0.01)
        };
        let sol = picard_solve(p.to_problem().unwrap(), o.clone()).unwrap();
        let exact = oracle_scalar_solve(&p, &o).unwrap();
        assert!(sol.trajectory.sup_distance(&exact) <= 1e-10);
    }

    #[test]
    fn planted_contraction_rate() {
        let p = PlantedContraction::new(0.3, 0.5, 0.4);
        assert!((p.contraction_constant() - 0.25).abs() < 1e-15);
        let sol = picard_solve(p.to_problem().unwrap(), opts(0.01)).unwrap();
        let rho = sol.report.contraction_ratio.unwrap();
        assert!(rho <= 0.25 + 0.05, "ratio {rho}");
        assert!(rho > 0.05, "ratio {rho}");
    }

    #[test]
    fn expansive_neutral_term_does_not_converge() {
        let p = PlantedContraction::new(2.0, 0.5, 0.4);
        let o = SolveOptions {
            max_iter: 60,
            contraction_hint: Some(p.contraction_constant()),
            ..opts(0.01)
        };
        match picard_solve(p.to_problem().unwrap(), o) {
            Err(SolverError::NoConvergence { ratio, .. }) => assert!(ratio.unwrap() > 0.9),
            other => panic!("expected no convergence, got {other:?}"),
        }
    }

    #[test]
    fn neutral_operator_is_lipschitz_with_planted_constant() {
        let p = PlantedContraction::new(0.3, 0.5, 0.4);
        let solver = MildSolver::new(p.to_problem().unwrap(), opts(0.01)).unwrap();
        let zero = {
            let mut z = solver.template().clone();
            for i in 0..=z.steps() {
                z.set_value(i, &[0.0]);
            }
            // zero history as well
            let h = crate::phase_space::WeightedHistory::from_fn(
                z.step(),
                solver.spec().weight.s_min(),
                1,
                |_| vec![0.0],
            )
            .unwrap();
            let mut y = Trajectory::from_history(&h, z.steps());
            for i in 0..=y.steps() {
                y.set_value(i, &[0.0]);
            }
            y
        };
        let mut a = zero.clone();
        let mut b = zero.clone();
        for i in 1..=a.steps() {
            let t = a.time(i);
            a.set_value(i, &[t.sin()]);
            b.set_value(i, &[0.3 * t * t - 0.2]);
        }
        let h = &solver.spec().weight;
        let d = a.combine(1.0, &b, -1.0);
        let pa = solver.neutral_operator(&a).unwrap();
        let pb = solver.neutral_operator(&b).unwrap();
        let lhs = pa.sup_distance(&pb);
        let rhs = (0.15 + 0.1) * seminorm_b(&d, h);
        assert!(lhs <= rhs * (1.0 + 1e-9), "{lhs} > {rhs}");
    }

    #[test]
    fn time_dependent_kernel_uses_full_quadrature() {
        // ∫₀ᵗ (t - s) ds = t²/2 for a kernel ignoring the history
        let gen = DiagonalGenerator::scalar(vec![1.0]).unwrap();
        let spec = ProblemSpec::new(
            gen,
            WeightFunction::exponential(2.0).unwrap(),
            1.0,
            InitialHistory::constant(vec![0.0]),
        );
        let solver = MildSolver::new(spec, opts(0.1)).unwrap();
        let k = KernelFn::new(|t: f64, s: f64, _: &HistoryView<'_>| vec![t - s]);
        let ints = k.integrate_along(solver.template());
        for (i, v) in ints.iter().enumerate() {
            let t = 0.1 * i as f64;
            assert!((v[0] - 0.5 * t * t).abs() < 1e-12);
        }
    }

    #[test]
    fn off_grid_impulse_is_rejected() {
        let p = ScalarLinear {
            rate: 1.0,
            forcing: 0.0,
            phi0: 1.0,
            impulses: vec![(0.123, 1.0)],
            weight_rate: 2.0,
            horizon: 1.0,
        };
        let err = picard_solve(p.to_problem().unwrap(), opts(0.01)).unwrap_err();
        assert!(matches!(err, SolverError::ImpulseOffGrid { .. }));
    }
}
