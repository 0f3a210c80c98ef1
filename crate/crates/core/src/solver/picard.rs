use log::{debug, warn};
use serde::Serialize;

use crate::quadrature::median;
use crate::trajectory::Trajectory;

use super::gamma::MildSolver;
use super::problem::{ProblemSpec, SolveOptions};
use super::SolverError;

/// Convergence record of a Picard solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `r_i = ‖Γx_i - x_i‖_b`.
    pub residuals: Vec<f64>,
    /// Median of `r_{i+1}/r_i` over ratios above round-off.
    pub contraction_ratio: Option<f64>,
    pub dt: f64,
    pub steps: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub report: SolveReport,
}

/// Median contraction ratio of a residual sequence, ignoring residuals at the
/// round-off floor.
pub fn contraction_ratio(residuals: &[f64], floor: f64) -> Option<f64> {
    let ratios: Vec<f64> = residuals
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| w[1] / w[0])
        .collect();
    median(&ratios)
}

impl MildSolver {
    /// Iterates `x_{i+1} = Γx_i` from `S'(t)φ(0)` until `‖Γx - x‖_b ≤ tol`.
    ///
    /// Returns the last iterate `x` whose residual met the tolerance.
    pub fn solve(&self) -> Result<Solution, SolverError> {
        let opts = self.options();
        let mut warnings = Vec::new();
        if let Some(msg) = contraction_warning(opts.contraction_hint) {
            warn!("{msg}");
            warnings.push(msg);
        }
        let mut x = self.initial_iterate();
        let scale = 1.0 + x.sup_solution();
        let mut residuals = Vec::new();
        for iter in 1..=opts.max_iter {
            let y = self.gamma(&x)?;
            let r = y.sup_distance(&x);
            debug!("picard iteration {iter}: residual {r:e}");
            residuals.push(r);
            if !r.is_finite() {
                break;
            }
            if r <= opts.tol {
                let ratio = contraction_ratio(&residuals, 1e-13 * scale);
                return Ok(Solution {
                    trajectory: x,
                    report: SolveReport {
                        iterations: iter,
                        residuals,
                        contraction_ratio: ratio,
                        dt: self.grid().dt,
                        steps: self.grid().steps,
                        warnings,
                    },
                });
            }
            x = y;
        }
        let ratio = contraction_ratio(&residuals, 1e-13 * scale);
        Err(SolverError::NoConvergence { residuals, ratio })
    }
}

/// The warning issued before iterating with an a priori constant `≥ 1`.
pub fn contraction_warning(hint: Option<f64>) -> Option<String> {
    hint.filter(|k| *k >= 1.0)
        .map(|k| format!("contraction constant {k:.4} is not below 1; iteration may diverge"))
}

/// Solves `spec` by Picard iteration of the solution operator.
pub fn picard_solve(spec: ProblemSpec, opts: SolveOptions) -> Result<Solution, SolverError> {
    MildSolver::new(spec, opts)?.solve()
}
