//! A heat equation on `(0, π)` with Dirichlet conditions, infinite-delay
//! integral terms and pointwise impulses, as a [`ProblemSpec`] over the sine basis.
//!
//! States are sine coefficients. Nonlinearities act pointwise on a collocation
//! grid `y_j = jπ/(N_y - 1)` and are projected back. Delay weights are read with
//! `θ` as absolute time: for `ψ = x_s`,
//! `h(t, s, ψ)(y) = ∫_{s_min}^0 P₂(t, y, s + r) Q₁(ψ(r)(y)) dr`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_with_vars, Env, Expr, ParseError, Var};
use crate::phase_space::{HistoryView, PhaseSpaceError, WeightFunction, WeightedHistory};
use crate::quadrature::romberg;
use crate::semigroup::{DiagonalGenerator, SemigroupError};
use crate::solver::{DelayKernel, ImpulseMap, InitialHistory, NeutralMap, ProblemSpec};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeatError {
    #[error("assumption '{assumption}' fails: {detail}")]
    ConfigValidation {
        assumption: &'static str,
        detail: String,
    },
    #[error("kernel mass diverges: {0}")]
    DivergentKernelMass(String),
    #[error("in {field}: {source}")]
    Parse {
        field: &'static str,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    PhaseSpace(#[from] PhaseSpaceError),
}

fn d_modes() -> usize {
    64
}
fn d_collocation() -> usize {
    257
}
fn d_weight() -> f64 {
    2.0
}
fn d_zero() -> String {
    "0".into()
}
fn d_one() -> String {
    "1".into()
}

/// An impulse at `time` acting pointwise as `z ↦ z + map(v = z(y), x = y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatImpulse {
    pub time: f64,
    pub map: String,
}

/// Expressions of the heat system. Variables per field:
/// `phi(theta, x)`, `p1/p3(theta)`, `p2/p4(t, x, theta)`, `q1/q2(v)`,
/// `vartheta1/vartheta2(v)`, `g/f(t, u, v, x)`, impulse maps `(t, v, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatProblemConfig {
    #[serde(default = "d_modes")]
    pub modes: usize,
    #[serde(default = "d_collocation")]
    pub collocation: usize,
    pub horizon: f64,
    /// Rate of the weight `h(s) = e^{rate·s}`.
    #[serde(default = "d_weight")]
    pub weight_rate: f64,
    pub phi: String,
    #[serde(default = "d_zero")]
    pub p1: String,
    #[serde(default = "d_zero")]
    pub p2: String,
    #[serde(default = "d_zero")]
    pub p3: String,
    #[serde(default = "d_zero")]
    pub p4: String,
    #[serde(default = "d_zero")]
    pub q1: String,
    #[serde(default = "d_zero")]
    pub q2: String,
    #[serde(default = "d_one")]
    pub vartheta1: String,
    #[serde(default = "d_one")]
    pub vartheta2: String,
    #[serde(default = "d_zero")]
    pub g: String,
    #[serde(default = "d_zero")]
    pub f: String,
    #[serde(default)]
    pub impulses: Vec<HeatImpulse>,
}

/// Parsed expressions of a [`HeatProblemConfig`].
#[derive(Debug, Clone)]
pub struct HeatExprs {
    pub phi: Expr,
    pub p1: Expr,
    pub p2: Expr,
    pub p3: Expr,
    pub p4: Expr,
    pub q1: Expr,
    pub q2: Expr,
    pub vartheta1: Expr,
    pub vartheta2: Expr,
    pub g: Expr,
    pub f: Expr,
    pub impulses: Vec<(f64, Expr)>,
}

impl HeatExprs {
    pub fn parse(c: &HeatProblemConfig) -> Result<Self, HeatError> {
        use Var::*;
        let p = |field: &'static str, src: &str, vars: &[Var]| {
            parse_with_vars(src, vars).map_err(|source| HeatError::Parse { field, source })
        };
        let impulses = c
            .impulses
            .iter()
            .map(|i| Ok((i.time, p("impulses.map", &i.map, &[T, V, X])?)))
            .collect::<Result<Vec<_>, HeatError>>()?;
        Ok(HeatExprs {
            phi: p("phi", &c.phi, &[Theta, X])?,
            p1: p("p1", &c.p1, &[Theta])?,
            p2: p("p2", &c.p2, &[T, X, Theta])?,
            p3: p("p3", &c.p3, &[Theta])?,
            p4: p("p4", &c.p4, &[T, X, Theta])?,
            q1: p("q1", &c.q1, &[V])?,
            q2: p("q2", &c.q2, &[V])?,
            vartheta1: p("vartheta1", &c.vartheta1, &[V])?,
            vartheta2: p("vartheta2", &c.vartheta2, &[V])?,
            g: p("g", &c.g, &[T, U, V, X])?,
            f: p("f", &c.f, &[T, U, V, X])?,
            impulses,
        })
    }
}

fn is_zero(e: &Expr) -> bool {
    e.is_constant() && e.eval(&Env::default()) == 0.0
}

/// Collocation grid with precomputed synthesis and projection matrices.
#[derive(Debug)]
pub struct HeatModel {
    generator: DiagonalGenerator,
    grid: Vec<f64>,
    /// `basis[j·modes + n] = w_{n+1}(y_j)`.
    basis: Vec<f64>,
    dx: f64,
}

impl HeatModel {
    pub fn new(modes: usize, collocation: usize) -> Result<Self, HeatError> {
        let generator = DiagonalGenerator::sine_dirichlet(modes)?;
        if collocation < 3 || modes >= collocation - 1 {
            return Err(HeatError::ConfigValidation {
                assumption: "collocation resolves the modes",
                detail: format!(
                    "{modes} modes need more than {} collocation points",
                    modes + 1
                ),
            });
        }
        let dx = PI / (collocation - 1) as f64;
        let grid: Vec<f64> = (0..collocation).map(|j| j as f64 * dx).collect();
        let mut basis = Vec::with_capacity(collocation * modes);
        for (j, &y) in grid.iter().enumerate() {
            for n in 1..=modes {
                // exact zeros at the boundary
                let w = if j == 0 || j + 1 == collocation {
                    0.0
                } else {
                    DiagonalGenerator::basis_fn(n, y)
                };
                basis.push(w);
            }
        }
        Ok(HeatModel {
            generator,
            grid,
            basis,
            dx,
        })
    }

    pub fn generator(&self) -> &DiagonalGenerator {
        &self.generator
    }

    pub fn modes(&self) -> usize {
        self.generator.modes()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn grid_step(&self) -> f64 {
        self.dx
    }

    /// Values of `Σ c_n w_n` on the grid.
    pub fn to_physical(&self, c: &[f64]) -> Vec<f64> {
        let m = self.modes();
        self.basis
            .chunks_exact(m)
            .map(|row| row.iter().zip(c).map(|(w, c)| w * c).sum())
            .collect()
    }

    /// Sine coefficients of grid values by the trapezoid rule (boundary values drop out).
    pub fn to_spectral(&self, u: &[f64]) -> Vec<f64> {
        let m = self.modes();
        let mut c = vec![0.0; m];
        for (row, &v) in self.basis.chunks_exact(m).zip(u) {
            if v != 0.0 {
                for (c, w) in c.iter_mut().zip(row) {
                    *c += w * v;
                }
            }
        }
        c.iter_mut().for_each(|c| *c *= self.dx);
        c
    }

    /// Physical values of every node of a history window, right-sided where a
    /// breakpoint exists; `(left, right)` per node.
    fn physical_window(&self, psi: &HistoryView<'_>) -> (Vec<Vec<f64>>, Vec<Option<Vec<f64>>>) {
        let len = psi.len();
        let left: Vec<Vec<f64>> = (0..len).map(|j| self.to_physical(psi.node(j))).collect();
        let right = (0..len)
            .map(|j| {
                let r = psi.node_right(j);
                (r != psi.node(j)).then(|| self.to_physical(r))
            })
            .collect();
        (left, right)
    }
}

type ThetaCache = Mutex<HashMap<(u64, usize), Arc<[f64]>>>;

/// `g` or `f`: `(t, ψ, V) ↦ OUT(t, ∫P(θ)ψ(θ)dθ, V, y)` pointwise in `y`.
pub struct HeatNeutral {
    model: Arc<HeatModel>,
    weight: Expr,
    outer: Expr,
    cache: ThetaCache,
}

impl HeatNeutral {
    pub fn new(model: Arc<HeatModel>, weight: Expr, outer: Expr) -> Self {
        HeatNeutral {
            model,
            weight,
            outer,
            cache: Mutex::default(),
        }
    }

    /// Trapezoid weights `dθ·P(θ_j)` on the window nodes, halved at the ends.
    fn theta_weights(&self, step: f64, len: usize) -> Arc<[f64]> {
        let key = (step.to_bits(), len);
        if let Some(w) = self.cache.lock().expect("cache poisoned").get(&key) {
            return w.clone();
        }
        let w: Arc<[f64]> = (0..len)
            .map(|j| {
                let theta = -((len - 1 - j) as f64) * step;
                let p = self.weight.eval(&Env {
                    theta,
                    ..Env::default()
                });
                let half = if j == 0 || j + 1 == len { 0.5 } else { 1.0 };
                half * step * p
            })
            .collect();
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(key, w.clone());
        w
    }

    /// Coefficients of `∫ P(θ) ψ(θ) dθ` over the window, right limits on panel left ends.
    fn weighted_history(&self, psi: &HistoryView<'_>) -> Vec<f64> {
        let m = psi.dim();
        let len = psi.len();
        let mut u = vec![0.0; m];
        if is_zero(&self.weight) || len < 2 {
            return u;
        }
        let w = self.theta_weights(psi.step(), len);
        for j in 0..len {
            if w[j] == 0.0 {
                continue;
            }
            let (l, r) = (psi.node(j), psi.node_right(j));
            for d in 0..m {
                // a breakpoint splits the node weight between the two sides
                u[d] += if j == 0 {
                    w[j] * r[d]
                } else if j + 1 == len {
                    w[j] * l[d]
                } else {
                    0.5 * w[j] * (l[d] + r[d])
                };
            }
        }
        u
    }
}

impl NeutralMap for HeatNeutral {
    fn eval(&self, t: f64, psi: &HistoryView<'_>, v: &[f64]) -> Vec<f64> {
        let model = &self.model;
        let u = model.to_physical(&self.weighted_history(psi));
        let vp = model.to_physical(v);
        let out: Vec<f64> = model
            .grid
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                self.outer.eval(&Env {
                    t,
                    u: u[j],
                    v: vp[j],
                    x,
                    ..Env::default()
                })
            })
            .collect();
        model.to_spectral(&out)
    }
}

/// `h` or `k`: `(t, s, ψ) ↦ ∫ P(t, y, s + r) Q(ψ(r)(y)) dr` over the window.
pub struct HeatDelay {
    model: Arc<HeatModel>,
    weight: Expr,
    nonlinearity: Expr,
}

impl HeatDelay {
    pub fn new(model: Arc<HeatModel>, weight: Expr, nonlinearity: Expr) -> Self {
        HeatDelay {
            model,
            weight,
            nonlinearity,
        }
    }

    /// `∫₀ᵗ k(t, s, ψ) ds` on the collocation grid, trapezoid with `panels` panels in `s`.
    pub fn integrate_fixed_grid(&self, t: f64, psi: &HistoryView<'_>, panels: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.model.grid.len()];
        if t <= 0.0 || panels == 0 {
            return acc;
        }
        let (left, right) = self.model.physical_window(psi);
        let ql = self.q_rows(&left);
        let qr: Vec<Option<Vec<f64>>> = right
            .iter()
            .map(|r| r.as_ref().map(|r| r.iter().map(|&v| self.q(v)).collect()))
            .collect();
        let head_right = qr.last().is_some_and(|r| r.is_some());
        let ds = t / panels as f64;
        for j in 0..=panels {
            let w = if j == 0 || j == panels { 0.5 * ds } else { ds };
            let inner = self.window_sum(t, j as f64 * ds, psi.step(), &ql, &qr, head_right);
            acc.iter_mut().zip(inner).for_each(|(a, v)| *a += w * v);
        }
        acc
    }

    fn q(&self, v: f64) -> f64 {
        self.nonlinearity.eval(&Env {
            v,
            ..Env::default()
        })
    }

    /// `P(t, y_j, θ)` for every grid point, or one value when `P` ignores `y`.
    fn p_row(&self, t: f64, theta: f64, out: &mut Vec<f64>) {
        out.clear();
        if self.weight.uses(Var::X) {
            out.extend(self.model.grid.iter().map(|&x| {
                self.weight.eval(&Env {
                    t,
                    x,
                    theta,
                    ..Env::default()
                })
            }));
        } else {
            out.push(self.weight.eval(&Env {
                t,
                theta,
                ..Env::default()
            }));
        }
    }

    fn q_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().map(|&v| self.q(v)).collect())
            .collect()
    }

    /// `Σ_panels dr/2 (P⁺Q⁺ + PQ)` in physical space for a window whose physical
    /// nonlinearity values are `ql`, `qr` (right-sided where present).
    fn window_sum(
        &self,
        t: f64,
        s: f64,
        step: f64,
        ql: &[Vec<f64>],
        qr: &[Option<Vec<f64>>],
        head_right: bool,
    ) -> Vec<f64> {
        let ny = self.model.grid.len();
        let len = ql.len();
        let mut acc = vec![0.0; ny];
        let mut p = Vec::with_capacity(ny);
        for j in 0..len {
            let first = j == 0;
            let last = j + 1 == len;
            let theta = s - ((len - 1 - j) as f64) * step;
            self.p_row(t, theta, &mut p);
            let w = 0.5 * step;
            // left end of panel j uses the right limit, right end of panel j-1 the left value
            let right_side = if last && !head_right {
                None
            } else {
                qr[j].as_ref()
            };
            for (y, a) in acc.iter_mut().enumerate() {
                let pv = if p.len() == 1 { p[0] } else { p[y] };
                let l = ql[j][y];
                let r = right_side.map_or(l, |r| r[y]);
                let contrib = if first {
                    r
                } else if last {
                    if head_right {
                        r
                    } else {
                        l
                    }
                } else {
                    l + r
                };
                *a += w * pv * contrib;
            }
        }
        acc
    }
}

impl DelayKernel for HeatDelay {
    fn eval(&self, t: f64, s: f64, psi: &HistoryView<'_>) -> Vec<f64> {
        let (left, right) = self.model.physical_window(psi);
        let ql = self.q_rows(&left);
        let qr: Vec<Option<Vec<f64>>> = right
            .iter()
            .map(|r| r.as_ref().map(|r| r.iter().map(|&v| self.q(v)).collect()))
            .collect();
        // the head of a right-sided segment is stored as node_right of the last node
        let head_right = qr.last().is_some_and(|r| r.is_some());
        let out = self.window_sum(t, s, psi.step(), &ql, &qr, head_right);
        self.model.to_spectral(&out)
    }

    fn time_independent(&self) -> bool {
        !self.weight.uses(Var::T)
    }

    fn integrate_fixed(&self, t: f64, psi: &HistoryView<'_>, panels: usize) -> Vec<f64> {
        self.model
            .to_spectral(&self.integrate_fixed_grid(t, psi, panels))
    }

    /// Evaluates the nonlinearity once per global node and reuses it across
    /// windows; with a `t`-independent weight the inner integrals are prefix sums.
    fn integrate_along(&self, x: &Trajectory) -> Vec<Vec<f64>> {
        let n = x.steps();
        let dt = x.step();
        let hl = x.history_len();
        let (values, jumps) = x.raw();
        let dim = x.dim();
        let total = values.len() / dim;
        let ny = self.model.grid.len();
        let ql: Vec<Vec<f64>> = values
            .chunks_exact(dim)
            .map(|c| {
                self.model
                    .to_physical(c)
                    .into_iter()
                    .map(|v| self.q(v))
                    .collect()
            })
            .collect();
        let mut qr: Vec<Option<Vec<f64>>> = vec![None; total];
        for jp in jumps {
            qr[jp.index] = Some(
                self.model
                    .to_physical(&jp.right)
                    .into_iter()
                    .map(|v| self.q(v))
                    .collect(),
            );
        }
        let tau = |g: usize| (g as f64 - (hl - 1) as f64) * dt;
        let panels = hl - 1;
        let mut out = vec![vec![0.0; dim]; n + 1];
        let mut p = Vec::with_capacity(ny);
        // W(g) = P(t, y, τ_g) Q(x(τ_g)), W⁺ with the right limit
        let weights = |t: f64, p: &mut Vec<f64>| -> (Vec<Vec<f64>>, Vec<Option<Vec<f64>>>) {
            let mut wl = Vec::with_capacity(total);
            let mut wr = Vec::with_capacity(total);
            for g in 0..total {
                self.p_row(t, tau(g), p);
                let pv = |y: usize| if p.len() == 1 { p[0] } else { p[y] };
                wl.push((0..ny).map(|y| pv(y) * ql[g][y]).collect::<Vec<f64>>());
                wr.push(
                    qr[g]
                        .as_ref()
                        .map(|r| (0..ny).map(|y| pv(y) * r[y]).collect::<Vec<f64>>()),
                );
            }
            (wl, wr)
        };
        let prefix = |wl: &[Vec<f64>], wr: &[Option<Vec<f64>>]| -> Vec<Vec<f64>> {
            let mut c = vec![vec![0.0; ny]; total];
            for g in 1..total {
                let a = wr[g - 1].as_ref().unwrap_or(&wl[g - 1]);
                let (prev, cur) = c.split_at_mut(g);
                for y in 0..ny {
                    cur[0][y] = prev[g - 1][y] + 0.5 * dt * (a[y] + wl[g][y]);
                }
            }
            c
        };
        let inner = |c: &[Vec<f64>],
                     wl: &[Vec<f64>],
                     wr: &[Option<Vec<f64>>],
                     i: usize,
                     right: bool|
         -> Vec<f64> {
            let head = i + panels;
            let mut v: Vec<f64> = (0..ny).map(|y| c[head][y] - c[i][y]).collect();
            if right {
                if let Some(r) = &wr[head] {
                    for y in 0..ny {
                        v[y] += 0.5 * dt * (r[y] - wl[head][y]);
                    }
                }
            }
            v
        };
        if self.time_independent() {
            let (wl, wr) = weights(0.0, &mut p);
            let c = prefix(&wl, &wr);
            let mut acc = vec![0.0; ny];
            for i in 1..=n {
                let a = inner(&c, &wl, &wr, i - 1, true);
                let b = inner(&c, &wl, &wr, i, false);
                for y in 0..ny {
                    acc[y] += 0.5 * dt * (a[y] + b[y]);
                }
                out[i] = self.model.to_spectral(&acc);
            }
        } else {
            for (i, slot) in out.iter_mut().enumerate().skip(1) {
                let (wl, wr) = weights(x.time(i), &mut p);
                let c = prefix(&wl, &wr);
                let mut acc = vec![0.0; ny];
                for j in 0..i {
                    let a = inner(&c, &wl, &wr, j, true);
                    let b = inner(&c, &wl, &wr, j + 1, false);
                    for y in 0..ny {
                        acc[y] += 0.5 * dt * (a[y] + b[y]);
                    }
                }
                *slot = self.model.to_spectral(&acc);
            }
        }
        out
    }
}

/// Pointwise impulse `z ↦ z + I(t_k, z(y), y)`.
pub struct HeatImpulseMap {
    model: Arc<HeatModel>,
    time: f64,
    map: Expr,
}

impl ImpulseMap for HeatImpulseMap {
    fn jump(&self, left: &[f64]) -> Vec<f64> {
        let z = self.model.to_physical(left);
        let out: Vec<f64> = self
            .model
            .grid
            .iter()
            .zip(&z)
            .map(|(&x, &v)| {
                self.map.eval(&Env {
                    t: self.time,
                    v,
                    x,
                    ..Env::default()
                })
            })
            .collect();
        self.model.to_spectral(&out)
    }
}

/// The assembled problem and the model its kernels share.
pub struct HeatProblem {
    pub spec: ProblemSpec,
    pub model: Arc<HeatModel>,
    pub exprs: HeatExprs,
}

impl HeatProblem {
    /// The neutral delay kernel `h` alone, for fixed-history estimates.
    pub fn neutral_kernel(&self) -> HeatDelay {
        HeatDelay::new(
            self.model.clone(),
            self.exprs.p2.clone(),
            self.exprs.q1.clone(),
        )
    }

    pub fn forcing_kernel(&self) -> HeatDelay {
        HeatDelay::new(
            self.model.clone(),
            self.exprs.p4.clone(),
            self.exprs.q2.clone(),
        )
    }

    /// `φ` sampled on the history grid of step `step`.
    pub fn initial_history(&self, step: f64) -> Result<WeightedHistory, HeatError> {
        Ok(self.spec.phi.sample(step, self.spec.weight.s_min())?)
    }
}

/// Checks the sign and majorant assumptions on a deterministic sample.
pub fn validate(
    c: &HeatProblemConfig,
    e: &HeatExprs,
    model: &HeatModel,
    weight: &WeightFunction,
) -> Result<(), HeatError> {
    let fail = |assumption, detail| Err(HeatError::ConfigValidation { assumption, detail });
    if !(c.horizon.is_finite() && c.horizon > 0.0) {
        return fail("positive horizon", format!("horizon {}", c.horizon));
    }
    let s_min = weight.s_min();
    for (name, p) in [("P2 nonnegative", &e.p2), ("P4 nonnegative", &e.p4)] {
        for it in 0..=8 {
            let t = c.horizon * it as f64 / 8.0;
            for iy in 0..=16 {
                let x = PI * iy as f64 / 16.0;
                for ith in 0..=40 {
                    let theta = s_min + (t - s_min) * ith as f64 / 40.0;
                    let v = p.eval(&Env {
                        t,
                        x,
                        theta,
                        ..Env::default()
                    });
                    if !(v >= 0.0) {
                        return fail(
                            name,
                            format!("value {v} at t = {t}, x = {x}, theta = {theta}"),
                        );
                    }
                }
            }
        }
    }
    // 0 ≤ Q(ψ(θ)(y)) ≤ ϑ(‖ψ‖_{BM_h}) on a few smooth sample histories
    let step = 0.1;
    for k in 0..6 {
        let amp = 0.25 * (1 << k) as f64;
        let hist = WeightedHistory::from_fn(step, s_min, model.modes(), |s| {
            let mut v = vec![0.0; model.modes()];
            v[0] = amp * (1.0 + 0.5 * (3.0 * s).sin());
            if v.len() > 1 {
                v[1] = -0.5 * amp * (s).cos();
            }
            v
        })?;
        let norm = hist.bmh_norm(weight);
        for (name, q, bound) in [
            ("Q1 sandwiched by vartheta1", &e.q1, &e.vartheta1),
            ("Q2 sandwiched by vartheta2", &e.q2, &e.vartheta2),
        ] {
            let top = bound.eval(&Env {
                v: norm,
                ..Env::default()
            });
            for j in (0..hist.len()).step_by(7) {
                for z in
                    model.to_physical(&hist.values()[j * model.modes()..(j + 1) * model.modes()])
                {
                    let qv = q.eval(&Env {
                        v: z,
                        ..Env::default()
                    });
                    if !(qv >= 0.0 && qv <= top) {
                        return fail(
                            name,
                            format!("Q({z}) = {qv} against majorant {top} at norm {norm}"),
                        );
                    }
                }
            }
        }
    }
    for (name, bound) in [
        ("vartheta1 positive nondecreasing", &e.vartheta1),
        ("vartheta2 positive nondecreasing", &e.vartheta2),
    ] {
        let mut prev = 0.0;
        for i in 0..=100 {
            let r = 0.1 * i as f64;
            let v = bound.eval(&Env {
                v: r,
                ..Env::default()
            });
            if !(v > 0.0 && v >= prev) {
                return fail(name, format!("value {v} at {r}"));
            }
            prev = v;
        }
    }
    Ok(())
}

/// Builds the problem: `g` from `(p1, g, p2, q1)`, `f` from `(p3, f, p4, q2)`.
pub fn build_spec(c: &HeatProblemConfig) -> Result<HeatProblem, HeatError> {
    build(c, true)
}

/// [`build_spec`] without the sign and majorant checks, for kernels such as
/// `Q = identity` that are useful as quadrature references.
pub fn build_spec_unchecked(c: &HeatProblemConfig) -> Result<HeatProblem, HeatError> {
    build(c, false)
}

fn build(c: &HeatProblemConfig, check: bool) -> Result<HeatProblem, HeatError> {
    let exprs = HeatExprs::parse(c)?;
    let model = Arc::new(HeatModel::new(c.modes, c.collocation)?);
    let weight = WeightFunction::exponential(c.weight_rate)?;
    if check {
        validate(c, &exprs, &model, &weight)?;
    }
    let phi_expr = exprs.phi.clone();
    let pm = model.clone();
    let phi = InitialHistory::from_fn(c.modes, move |theta| {
        let u: Vec<f64> = pm
            .grid
            .iter()
            .map(|&x| {
                phi_expr.eval(&Env {
                    theta,
                    x,
                    ..Env::default()
                })
            })
            .collect();
        pm.to_spectral(&u)
    });
    let mut spec = ProblemSpec::new(model.generator().clone(), weight, c.horizon, phi);
    if !is_zero(&exprs.g) {
        spec = spec.with_neutral(HeatNeutral::new(
            model.clone(),
            exprs.p1.clone(),
            exprs.g.clone(),
        ));
    }
    if !is_zero(&exprs.f) {
        spec = spec.with_forcing(HeatNeutral::new(
            model.clone(),
            exprs.p3.clone(),
            exprs.f.clone(),
        ));
    }
    if !is_zero(&exprs.p2) && !is_zero(&exprs.q1) {
        spec = spec.with_neutral_kernel(HeatDelay::new(
            model.clone(),
            exprs.p2.clone(),
            exprs.q1.clone(),
        ));
    }
    if !is_zero(&exprs.p4) && !is_zero(&exprs.q2) {
        spec = spec.with_forcing_kernel(HeatDelay::new(
            model.clone(),
            exprs.p4.clone(),
            exprs.q2.clone(),
        ));
    }
    for (time, map) in &exprs.impulses {
        spec = spec.with_impulse(
            *time,
            HeatImpulseMap {
                model: model.clone(),
                time: *time,
                map: map.clone(),
            },
        );
    }
    Ok(HeatProblem { spec, model, exprs })
}

/// `∫_{-∞}^0 f(θ) dθ` by doubling segments; `None` if the tail does not settle.
fn tail_integral(f: &dyn Fn(f64) -> f64) -> Option<f64> {
    let mut total = romberg(f, -1.0, 0.0, 1e-13, 1e-15, 24)?;
    let mut small = 0;
    for k in 1..64 {
        let a = -(2f64.powi(k));
        let b = -(2f64.powi(k - 1));
        let m = romberg(f, a, b, 1e-13, 1e-300, 26)?;
        total += m;
        if m.abs() <= 1e-15 * (1.0 + total.abs()) {
            small += 1;
            if small >= 2 {
                return Some(total);
            }
        } else {
            small = 0;
        }
    }
    None
}

/// `p̃(t, y) = ∫₀ᵗ ∫_{-∞}^s P(t, y, θ) dθ ds = t∫_{-∞}^0 P dθ + ∫₀ᵗ (t - θ) P dθ`.
fn p_tilde(p: &Expr, t: f64, x: f64) -> Result<f64, HeatError> {
    let f = |theta: f64| {
        p.eval(&Env {
            t,
            x,
            theta,
            ..Env::default()
        })
    };
    let tail = tail_integral(&f).ok_or_else(|| {
        HeatError::DivergentKernelMass(format!("∫ P dθ over (-∞, 0] at t = {t}, x = {x}"))
    })?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let head = romberg(&|theta| (t - theta) * f(theta), 0.0, t, 1e-13, 1e-15, 24)
        .ok_or_else(|| HeatError::DivergentKernelMass(format!("∫₀ᵗ (t-θ) P dθ at t = {t}")))?;
    Ok(t * tail + head)
}

fn p_norm(p: &Expr, t: f64) -> Result<f64, HeatError> {
    if !p.uses(Var::X) {
        return Ok(PI.sqrt() * p_tilde(p, t, 0.0)?.abs());
    }
    // Simpson in y on 129 points
    let n = 128;
    let h = PI / n as f64;
    let mut sum = 0.0;
    for j in 0..=n {
        let v = p_tilde(p, t, j as f64 * h)?;
        let w = if j == 0 || j == n {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * v * v;
    }
    Ok((sum * h / 3.0).sqrt())
}

/// `(p₂(t), p₄(t))` on `t_grid` with `p_i(t) = ‖p̃_i(t, ·)‖_{L²(0,π)}`.
pub fn p_bounds(c: &HeatProblemConfig, t_grid: &[f64]) -> Result<Vec<(f64, f64)>, HeatError> {
    let e = HeatExprs::parse(c)?;
    t_grid
        .iter()
        .map(|&t| Ok((p_norm(&e.p2, t)?, p_norm(&e.p4, t)?)))
        .collect()
}

/// `‖∫₀ᵗ h(t, s, ψ) ds‖_{L²}` for a fixed history with `panels` trapezoid panels in `s`,
/// computed on the collocation grid so that no mode truncation enters.
pub fn fixed_history_integral(
    kernel: &HeatDelay,
    t: f64,
    psi: &HistoryView<'_>,
    panels: usize,
) -> f64 {
    l2_norm(
        &kernel.integrate_fixed_grid(t, psi, panels),
        kernel.model.dx,
    )
}

/// Trapezoid `L²(0, π)` norm of grid values with spacing `dx`.
pub fn l2_norm(u: &[f64], dx: f64) -> f64 {
    let n = u.len();
    let sum: f64 = u
        .iter()
        .enumerate()
        .map(|(j, v)| {
            if j == 0 || j + 1 == n {
                0.5 * v * v
            } else {
                v * v
            }
        })
        .sum();
    (sum * dx).sqrt()
}

/// One point of the neutral-kernel chain `‖∫h‖ ≤ p₂(t) ϑ₁(‖ψ‖_{BM_h})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainSample {
    pub t: f64,
    pub history_norm: f64,
    pub lhs: f64,
    pub p2: f64,
    pub vartheta: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks the chain on `samples` random `(t, ψ)` pairs with
/// `ψ(θ)(y) = a e^θ sin y + b cos(θ) sin 2y + c e^{2θ} sin 3y`.
pub fn chain_check(
    problem: &HeatProblem,
    config: &HeatProblemConfig,
    samples: usize,
    seed: u64,
) -> Result<Vec<ChainSample>, HeatError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let kernel = problem.neutral_kernel();
    let weight = &problem.spec.weight;
    let m = problem.model.modes();
    let step = 0.02;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = config.horizon * rng.random_range(0.02..=1.0);
        let coef: [f64; 3] = [
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-1.0..1.0),
        ];
        let psi = WeightedHistory::from_fn(step, weight.s_min(), m, |th| {
            let mut v = vec![0.0; m];
            let w = [th.exp(), th.cos(), (2.0 * th).exp()];
            for (n, (c, w)) in coef.iter().zip(w).enumerate().take(m) {
                v[n] = c * w;
            }
            v
        })?;
        let history_norm = psi.bmh_norm(weight);
        let lhs = fixed_history_integral(&kernel, t, &psi.view(), 64);
        let p2 = p_norm(&problem.exprs.p2, t)?;
        let vartheta = problem.exprs.vartheta1.eval(&Env {
            v: history_norm,
            ..Env::default()
        });
        let rhs = p2 * vartheta;
        out.push(ChainSample {
            t,
            history_norm,
            lhs,
            p2,
            vartheta,
            rhs,
            holds: lhs <= rhs * (1.0 + 1e-9) + 1e-14,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{picard_solve, trapezoid_along, MildSolver, SolveOptions};

    fn base() -> HeatProblemConfig {
        HeatProblemConfig {
            modes: 8,
            collocation: 65,
            horizon: 0.5,
            weight_rate: 2.0,
            phi: "exp(theta)*sin(x) + 0.3*sin(3*x)".into(),
            p1: d_zero(),
            p2: d_zero(),
            p3: d_zero(),
            p4: d_zero(),
            q1: d_zero(),
            q2: d_zero(),
            vartheta1: d_one(),
            vartheta2: d_one(),
            g: d_zero(),
            f: d_zero(),
            impulses: vec![],
        }
    }

    #[test]
    fn chain_holds_on_samples() {
        let cfg = nonlinear();
        let hp = build_spec(&cfg).unwrap();
        let samples = chain_check(&hp, &cfg, 10, 7).unwrap();
        assert!(samples.iter().all(|c| c.holds), "{samples:?}");
        assert!(samples.iter().any(|c| c.lhs > 0.0));
    }

    #[test]
    fn projection_round_trip() {
        let m = HeatModel::new(8, 65).unwrap();
        let c: Vec<f64> = (0..8).map(|n| 1.0 / (n + 1) as f64).collect();
        let back = m.to_spectral(&m.to_physical(&c));
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_kernels_give_pure_decay() {
        let hp = build_spec(&base()).unwrap();
        assert!(hp.spec.g.is_none() && hp.spec.f.is_none() && hp.spec.h.is_none());
        let sol = picard_solve(
            hp.spec,
            SolveOptions {
                dt: 0.05,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let x = &sol.trajectory;
        let x0 = x.value(0).to_vec();
        for i in 0..=x.steps() {
            let t = x.time(i);
            for (n, (&c, &c0)) in x.value(i).iter().zip(&x0).enumerate() {
                let a = ((n + 1) * (n + 1)) as f64;
                assert!((c - (-a * t).exp() * c0).abs() < 1e-10);
            }
        }
        assert!((x0[0] - (PI / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nested_integral_oracle() {
        // P₄ = e^θ, Q₂ = identity: ∫₀ᵗ k ds for ψ(r) = e^r sin y
        //   = sin y ∫₀ᵗ ∫_{s_min}^0 e^{s+r} e^r dr ds ≈ sin y (e^t - 1)/2
        let cfg = HeatProblemConfig {
            p4: "exp(theta)".into(),
            q2: "v".into(),
            vartheta2: "10".into(),
            f: "v".into(),
            ..base()
        };
        assert!(build_spec(&cfg).is_err());
        let hp = build_spec_unchecked(&cfg).unwrap();
        let k = hp.forcing_kernel();
        let psi = WeightedHistory::from_fn(0.001, hp.spec.weight.s_min(), 8, |r| {
            let mut v = vec![0.0; 8];
            v[0] = r.exp() * (PI / 2.0).sqrt();
            v
        })
        .unwrap();
        let t = 0.4;
        let got = k.integrate_fixed(t, &psi.view(), 400);
        let exact = (PI / 2.0).sqrt() * (t.exp() - 1.0) / 2.0 * (1.0 - (2.0 * psi.s_min()).exp());
        assert!((got[0] - exact).abs() < 1e-6, "{} vs {exact}", got[0]);
        assert!(got[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn p_bound_closed_form() {
        let cfg = HeatProblemConfig {
            p2: "exp(theta)".into(),
            ..base()
        };
        let ts = [0.0, 0.25, 0.5, 1.0];
        let pb = p_bounds(&cfg, &ts).unwrap();
        for (&t, &(p2, p4)) in ts.iter().zip(&pb) {
            assert!((p2 - PI.sqrt() * t.exp_m1()).abs() < 1e-9, "{p2}");
            assert_eq!(p4, 0.0);
        }
        let div = HeatProblemConfig {
            p2: "1".into(),
            ..base()
        };
        assert!(matches!(
            p_bounds(&div, &[0.5]),
            Err(HeatError::DivergentKernelMass(_))
        ));
    }

    #[test]
    fn p_bound_with_space_dependence() {
        // P = e^θ sin y: p = (e^t - 1) ‖sin‖ = (e^t - 1) √(π/2)
        let cfg = HeatProblemConfig {
            p2: "exp(theta)*sin(x)".into(),
            ..base()
        };
        let p = p_bounds(&cfg, &[0.7]).unwrap()[0].0;
        assert!(
            (p - 0.7f64.exp_m1() * (PI / 2.0).sqrt()).abs() < 1e-8,
            "{p}"
        );
    }

    #[test]
    fn validation_names_assumption() {
        let neg = HeatProblemConfig {
            p2: "-exp(theta)".into(),
            ..base()
        };
        match build_spec(&neg) {
            Err(HeatError::ConfigValidation { assumption, .. }) => {
                assert_eq!(assumption, "P2 nonnegative")
            }
            _ => panic!("expected validation failure"),
        }
        let big = HeatProblemConfig {
            q1: "v*v".into(),
            vartheta1: "0.01".into(),
            ..base()
        };
        assert!(matches!(
            build_spec(&big),
            Err(HeatError::ConfigValidation { .. })
        ));
    }

    fn nonlinear() -> HeatProblemConfig {
        HeatProblemConfig {
            p1: "0.4*exp(2*theta)".into(),
            p2: "exp(theta)".into(),
            p3: "exp(2*theta)".into(),
            p4: "exp(theta)*(1 + 0.5*sin(x))".into(),
            q1: "0.1*tanh(v)^2".into(),
            q2: "0.5*tanh(v)^2".into(),
            vartheta1: "0.1".into(),
            vartheta2: "0.5".into(),
            g: "0.2*u + 0.1*v".into(),
            f: "0.5*cos(t)*sin(x) + 0.3*u + 0.2*v".into(),
            impulses: vec![HeatImpulse {
                time: 0.25,
                map: "-0.1*v".into(),
            }],
            ..base()
        }
    }

    #[test]
    fn fast_delay_integral_matches_generic() {
        let hp = build_spec(&nonlinear()).unwrap();
        let solver = MildSolver::new(
            hp.spec.clone(),
            SolveOptions {
                dt: 0.05,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let mut x = solver.initial_iterate();
        crate::solver::apply_impulse(&mut x, 5, &*solver.spec().impulses[0].map).unwrap();
        for kernel in [hp.forcing_kernel(), hp.neutral_kernel()] {
            let fast = kernel.integrate_along(&x);
            let slow = trapezoid_along(&kernel, &x);
            for (a, b) in fast.iter().zip(&slow) {
                for (p, q) in a.iter().zip(b) {
                    assert!((p - q).abs() < 1e-12, "{p} vs {q}");
                }
            }
        }
        let td = HeatDelay::new(
            hp.model.clone(),
            parse_with_vars("exp(theta)*(1+t)", &[Var::T, Var::Theta]).unwrap(),
            hp.exprs.q2.clone(),
        );
        let fast = td.integrate_along(&x);
        let slow = trapezoid_along(&td, &x);
        for (a, b) in fast.iter().zip(&slow) {
            for (p, q) in a.iter().zip(b) {
                assert!((p - q).abs() < 1e-12, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn nonlinear_problem_solves_with_boundary_zero() {
        let hp = build_spec(&nonlinear()).unwrap();
        let model = hp.model.clone();
        let sol = picard_solve(
            hp.spec,
            SolveOptions {
                dt: 0.05,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let x = &sol.trajectory;
        for i in 0..=x.steps() {
            let z = model.to_physical(x.value(i));
            assert!(z[0].abs() < 1e-10 && z.last().unwrap().abs() < 1e-10);
        }
        let node = x.impulse_nodes()[0];
        let left = model.to_physical(x.value(node));
        let right = model.to_physical(x.right_value(node));
        // a linear pointwise map on resolved modes is exact
        for (l, r) in left.iter().zip(&right) {
            assert!((r - 0.9 * l).abs() < 1e-12);
        }
    }
}
