//! The solution operator
//!
//! `Γx(t) = S'(t)[φ(0) - g(0,φ,0)] + g(t, x_t, ∫₀ᵗ h(t,s,x_s)ds)
//!        + ∫₀ᵗ S'(t-s) B̂ f(s, x_s, ∫₀ˢ k(s,τ,x_τ)dτ) ds + Σ_{0<t_k<t} S'(t-t_k) I_k(x(t_k⁻))`
//!
//! on a uniform grid. The convolution uses exact exponential weights for a
//! piecewise-linear integrand, so it is exact for the linear catalog.

use crate::phase_space::PhaseSpaceError;
use crate::quadrature::exp_trapezoid_weights;
use crate::trajectory::Trajectory;

use super::problem::{GammaSign, ImpulseMap, LambdaMode, ProblemSpec, SolveOptions};
use super::SolverError;

/// Left values at every node and right values at impulse nodes.
type NodeTerms = (Vec<Vec<f64>>, Vec<Option<Vec<f64>>>);

/// Uniform time grid of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dt: f64,
    pub steps: usize,
    /// Solution node of each impulse, in order.
    pub impulse_nodes: Vec<usize>,
}

impl Grid {
    pub fn new(spec: &ProblemSpec, dt: f64) -> Result<Self, SolverError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SolverError::InvalidProblem(format!(
                "step {dt} must be positive"
            )));
        }
        let steps = ((spec.horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        let dt = spec.horizon / steps as f64;
        let mut impulse_nodes = Vec::with_capacity(spec.impulses.len());
        for imp in &spec.impulses {
            let x = imp.time / dt;
            let k = x.round();
            if (x - k).abs() > 1e-6 || k < 1.0 || k as usize >= steps {
                return Err(SolverError::ImpulseOffGrid { t: imp.time, dt });
            }
            let k = k as usize;
            if impulse_nodes.last() == Some(&k) {
                return Err(SolverError::ImpulseOffGrid { t: imp.time, dt });
            }
            impulse_nodes.push(k);
        }
        Ok(Grid {
            dt,
            steps,
            impulse_nodes,
        })
    }
}

/// Sets `x(t_i⁺) = x(t_i) + I(x(t_i))`.
pub fn apply_impulse(
    x: &mut Trajectory,
    node: usize,
    map: &dyn ImpulseMap,
) -> Result<(), SolverError> {
    let left = x.value(node).to_vec();
    let jump = map.jump(&left);
    if jump.len() != left.len() {
        return Err(SolverError::InvalidProblem(
            "impulse map changes dimension".into(),
        ));
    }
    let right: Vec<f64> = left.iter().zip(&jump).map(|(a, b)| a + b).collect();
    check_finite("impulse", x.time(node), &right)?;
    x.set_jump(node, Some(right));
    Ok(())
}

pub(crate) fn check_finite(term: &'static str, t: f64, v: &[f64]) -> Result<(), SolverError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SolverError::NonFinite { term, t })
    }
}

/// A problem prepared for repeated application of the solution operator.
pub struct MildSolver {
    spec: ProblemSpec,
    opts: SolveOptions,
    grid: Grid,
    template: Trajectory,
    /// `e^{-a dt}` per mode.
    decay: Vec<f64>,
    w_left: Vec<f64>,
    w_right: Vec<f64>,
    b_hat: Option<Vec<f64>>,
    phi0: Vec<f64>,
    g0: Vec<f64>,
    /// Impulse index per solution node.
    impulse_at: Vec<Option<usize>>,
}

impl MildSolver {
    pub fn new(spec: ProblemSpec, opts: SolveOptions) -> Result<Self, SolverError> {
        spec.validate()?;
        let grid = Grid::new(&spec, opts.dt)?;
        let s_min = spec.weight.s_min();
        let hist_nodes = (-s_min / grid.dt).ceil();
        if hist_nodes > 5e7 {
            return Err(SolverError::InvalidProblem(format!(
                "history of length {} needs {hist_nodes} nodes at step {}",
                -s_min, grid.dt
            )));
        }
        let history = spec.phi.sample(grid.dt, s_min)?;
        let template = Trajectory::from_history(&history, grid.steps);
        let rates = spec.generator.rates();
        let decay = rates.iter().map(|a| (-a * grid.dt).exp()).collect();
        let (w_left, w_right) = rates
            .iter()
            .map(|&a| exp_trapezoid_weights(a, grid.dt))
            .unzip();
        let b_hat = match opts.lambda {
            LambdaMode::Analytic => None,
            LambdaMode::Finite(l) => Some(spec.generator.b_lambda_multipliers(l)?),
        };
        let phi0 = history.head().to_vec();
        let g0 = match &spec.g {
            Some(g) => {
                let v = g.eval(0.0, &history.view(), &vec![0.0; spec.dim()]);
                check_finite("neutral", 0.0, &v)?;
                v
            }
            None => vec![0.0; spec.dim()],
        };
        let mut impulse_at = vec![None; grid.steps + 1];
        for (k, &i) in grid.impulse_nodes.iter().enumerate() {
            impulse_at[i] = Some(k);
        }
        Ok(MildSolver {
            spec,
            opts,
            grid,
            template,
            decay,
            w_left,
            w_right,
            b_hat,
            phi0,
            g0,
            impulse_at,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The history-only trajectory with every solution node equal to `φ(0)`.
    pub fn template(&self) -> &Trajectory {
        &self.template
    }

    /// `φ̃`: the history `φ` continued by `S'(t)φ(0)`.
    pub fn free_evolution(&self) -> Trajectory {
        let mut x = self.template.clone();
        let gen = &self.spec.generator;
        for i in 0..=self.grid.steps {
            let v = gen
                .apply_semigroup(&self.phi0, x.time(i))
                .expect("time is non-negative");
            x.set_value(i, &v);
        }
        x
    }

    /// The Picard starting iterate `S'(t)φ(0)`.
    pub fn initial_iterate(&self) -> Trajectory {
        self.free_evolution()
    }

    fn neutral_terms(&self, x: &Trajectory) -> Result<Vec<Vec<f64>>, SolverError> {
        let n = self.grid.steps;
        let dim = self.spec.dim();
        let Some(g) = &self.spec.g else {
            return Ok(vec![vec![0.0; dim]; n + 1]);
        };
        let hint = match &self.spec.h {
            Some(h) => h.integrate_along(x),
            None => vec![vec![0.0; dim]; n + 1],
        };
        let mut out = Vec::with_capacity(n + 1);
        for (i, v) in hint.iter().enumerate() {
            check_finite("neutral kernel integral", x.time(i), v)?;
            let val = g.eval(x.time(i), &x.segment(i, false), v);
            check_finite("neutral", x.time(i), &val)?;
            out.push(val);
        }
        Ok(out)
    }

    /// Forcing values `B̂ f` at every node: left-sided and, at impulses, right-sided.
    fn forcing_terms(&self, x: &Trajectory) -> Result<NodeTerms, SolverError> {
        let n = self.grid.steps;
        let dim = self.spec.dim();
        let Some(f) = &self.spec.f else {
            return Ok((vec![vec![0.0; dim]; n + 1], vec![None; n + 1]));
        };
        let kint = match &self.spec.k {
            Some(k) => k.integrate_along(x),
            None => vec![vec![0.0; dim]; n + 1],
        };
        let scale = |mut v: Vec<f64>| {
            if let Some(b) = &self.b_hat {
                v.iter_mut().zip(b).for_each(|(x, b)| *x *= b);
            }
            v
        };
        let mut left = Vec::with_capacity(n + 1);
        let mut right = vec![None; n + 1];
        for (i, v) in kint.iter().enumerate() {
            let t = x.time(i);
            check_finite("forcing kernel integral", t, v)?;
            let val = f.eval(t, &x.segment(i, false), v);
            check_finite("forcing", t, &val)?;
            left.push(scale(val));
            if x.jump_at(i).is_some() {
                let val = f.eval(t, &x.segment(i, true), v);
                check_finite("forcing", t, &val)?;
                right[i] = Some(scale(val));
            }
        }
        Ok((left, right))
    }

    /// Applies the solution operator to `x`.
    pub fn gamma(&self, x: &Trajectory) -> Result<Trajectory, SolverError> {
        let n = self.grid.steps;
        let dim = self.spec.dim();
        let rates = self.spec.generator.rates();
        let neutral = self.neutral_terms(x)?;
        let (f_left, f_right) = self.forcing_terms(x)?;
        let sign = match self.opts.gamma_sign {
            GammaSign::Plus => 1.0,
            GammaSign::Minus => -1.0,
        };
        let base: Vec<f64> = self.phi0.iter().zip(&self.g0).map(|(p, g)| p - g).collect();

        let mut y = self.template.clone();
        let mut conv = vec![0.0; dim];
        let mut imp = vec![0.0; dim];
        let mut val = vec![0.0; dim];
        for i in 0..=n {
            let t = y.time(i);
            if i > 0 {
                let prev = f_right[i - 1].as_ref().unwrap_or(&f_left[i - 1]);
                let jump = match (self.impulse_at[i - 1], self.opts.literal_delta) {
                    (Some(k), false) => {
                        let j = self.spec.impulses[k].map.jump(x.value(i - 1));
                        check_finite("impulse", y.time(i - 1), &j)?;
                        Some(j)
                    }
                    _ => None,
                };
                for m in 0..dim {
                    conv[m] = self.decay[m] * conv[m]
                        + self.w_left[m] * prev[m]
                        + self.w_right[m] * f_left[i][m];
                    let add = jump.as_ref().map_or(0.0, |j| j[m]);
                    imp[m] = self.decay[m] * (imp[m] + add);
                }
            }
            if i == 0 {
                val.copy_from_slice(&self.phi0);
            } else {
                for m in 0..dim {
                    val[m] =
                        sign * (-rates[m] * t).exp() * base[m] + neutral[i][m] + conv[m] + imp[m];
                }
            }
            check_finite("solution", t, &val)?;
            y.set_value(i, &val);
        }
        if !self.opts.literal_delta {
            for (k, &i) in self.grid.impulse_nodes.iter().enumerate() {
                apply_impulse(&mut y, i, &*self.spec.impulses[k].map)?;
            }
        }
        Ok(y)
    }

    /// The neutral part of the operator applied to a perturbation `y` with zero history:
    /// `-S'(t)g(0,φ,0) + g(t, y_t + φ̃_t, ∫₀ᵗ h(t,s,y_s + φ̃_s)ds)`.
    pub fn neutral_operator(&self, y: &Trajectory) -> Result<Trajectory, SolverError> {
        let phi_t = self.free_evolution();
        let z = phi_t.combine(1.0, y, 1.0);
        let neutral = self.neutral_terms(&z)?;
        let mut out = y.clone();
        let gen = &self.spec.generator;
        for (i, g) in neutral.iter().enumerate() {
            let s0 = gen.apply_semigroup(&self.g0, out.time(i))?;
            let v: Vec<f64> = g.iter().zip(&s0).map(|(a, b)| a - b).collect();
            out.set_value(i, &v);
            out.set_jump(i, None);
        }
        if let Some(g) = &self.spec.g {
            let hint = match &self.spec.h {
                Some(h) => h.integrate_along(&z),
                None => vec![vec![0.0; z.dim()]; z.steps() + 1],
            };
            for i in z.impulse_nodes() {
                let s0 = gen.apply_semigroup(&self.g0, out.time(i))?;
                let r: Vec<f64> = g
                    .eval(out.time(i), &z.segment(i, true), &hint[i])
                    .iter()
                    .zip(&s0)
                    .map(|(a, b)| a - b)
                    .collect();
                out.set_jump(i, Some(r));
            }
        }
        Ok(out)
    }

    /// Looks up the node of grid time `t`.
    pub fn node_of(&self, t: f64) -> Result<usize, PhaseSpaceError> {
        self.template.node_of(t)
    }
}
