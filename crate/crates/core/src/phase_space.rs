//! The weighted phase space of histories.
//!
//! A history `ψ: (-∞, 0] → X` is stored on a uniform grid truncated at `s_min`,
//! left-continuous, with explicit right limits at breakpoints. Its norm is
//! `‖ψ‖ = ∫ h(s) sup_{θ∈[s,0]} ‖ψ(θ)‖ ds`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::quadrature::{gauss_legendre4, romberg};
use crate::trajectory::Trajectory;

/// Relative size of the neglected weight tail: `∫_{-∞}^{s_min} h ≤ TAIL_FRACTION · l`.
pub const TAIL_FRACTION: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhaseSpaceError {
    #[error("weight function is not integrable: {0}")]
    NonIntegrableWeight(String),
    #[error("window start {s} lies outside the stored history [{s_min}, 0]")]
    WindowOutOfRange { s: f64, s_min: f64 },
    #[error("time {t} lies outside the horizon [0, {horizon}]")]
    TimeOutOfHorizon { t: f64, horizon: f64 },
    #[error("time {t} is not a grid node (step {step})")]
    TimeOffGrid { t: f64, step: f64 },
    #[error("invalid history: {0}")]
    InvalidHistory(String),
}

/// Euclidean norm of a state vector.
pub fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance between two state vectors.
pub fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Total mass and truncation point of a weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMass {
    /// `l = ∫_{-∞}^0 h(s) ds`.
    pub total: f64,
    /// Cutoff with `∫_{-∞}^{s_min} h ≤ tail_tol`.
    pub s_min: f64,
}

/// Computes `∫_{-∞}^0 h` and a cutoff `s_min` whose tail mass is at most `tail_tol`.
///
/// The integral is accumulated over the segments `[-1, 0]`, `[-2, -1]`, `[-4, -2]`, ...
/// with Romberg quadrature until the segment masses fall below the tolerance and
/// decay at least geometrically.
pub fn weight_mass(h: &dyn Fn(f64) -> f64, tail_tol: f64) -> Result<WeightMass, PhaseSpaceError> {
    let seg = |k: usize| -> (f64, f64) {
        if k == 0 {
            (-1.0, 0.0)
        } else {
            (-(2f64.powi(k as i32)), -(2f64.powi(k as i32 - 1)))
        }
    };
    let integrate = |a: f64, b: f64| -> Result<f64, PhaseSpaceError> {
        let v = romberg(h, a, b, 1e-12, tail_tol * 1e-3, 40).ok_or_else(|| {
            PhaseSpaceError::NonIntegrableWeight(format!(
                "quadrature on [{a}, {b}] did not converge"
            ))
        })?;
        if v < 0.0 {
            return Err(PhaseSpaceError::NonIntegrableWeight(format!(
                "negative mass {v} on [{a}, {b}]"
            )));
        }
        Ok(v)
    };
    for s in [0.0, -0.5, -1.0, -3.0, -10.0] {
        let v = h(s);
        if !(v.is_finite() && v > 0.0) {
            return Err(PhaseSpaceError::NonIntegrableWeight(format!(
                "h({s}) = {v} is not finite and positive"
            )));
        }
    }
    let mut masses: Vec<f64> = Vec::new();
    loop {
        let k = masses.len();
        if k > 62 {
            return Err(PhaseSpaceError::NonIntegrableWeight(
                "mass does not converge within 2^62".into(),
            ));
        }
        let (a, b) = seg(k);
        let m = integrate(a, b)?;
        masses.push(m);
        if k >= 2 && m <= 0.25 * tail_tol && m <= 0.6 * masses[k - 1] {
            break;
        }
    }
    let total: f64 = masses.iter().sum();
    // tails[k] = mass beyond the right end of segment k's left neighbour, i.e. left of seg(k).1
    let mut tails = vec![0.0; masses.len() + 1];
    for k in (0..masses.len()).rev() {
        tails[k] = tails[k + 1] + masses[k];
    }
    let k = (1..tails.len())
        .find(|&k| tails[k] <= tail_tol)
        .unwrap_or(masses.len());
    // cutoff lies in seg(k - 1) = [a, b]; tail(c) = tails[k] + ∫_a^c h
    let (a, b) = seg(k - 1);
    let base = tails[k];
    let (mut lo, mut hi) = (a, b);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let tail = base + integrate(a, mid)?;
        if tail <= tail_tol {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * lo.abs().max(1.0) {
            break;
        }
    }
    Ok(WeightMass { total, s_min: lo })
}

type WeightCache = Mutex<HashMap<(u64, usize), Arc<[f64]>>>;

#[derive(Clone)]
enum WeightKind {
    Exponential(f64),
    General(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A weight `h` of the phase space together with its mass and truncation point.
#[derive(Clone)]
pub struct WeightFunction {
    kind: WeightKind,
    mass: WeightMass,
    cache: Arc<WeightCache>,
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            WeightKind::Exponential(r) => format!("exp({r}·s)"),
            WeightKind::General(_) => "general".to_string(),
        };
        f.debug_struct("WeightFunction")
            .field("kind", &kind)
            .field("l", &self.mass.total)
            .field("s_min", &self.mass.s_min)
            .finish()
    }
}

impl WeightFunction {
    /// `h(s) = e^{rate·s}`, with `l = 1/rate` and `s_min = ln(TAIL_FRACTION)/rate`.
    pub fn exponential(rate: f64) -> Result<Self, PhaseSpaceError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(PhaseSpaceError::NonIntegrableWeight(format!(
                "exponential rate {rate} must be positive"
            )));
        }
        Ok(WeightFunction {
            kind: WeightKind::Exponential(rate),
            mass: WeightMass {
                total: 1.0 / rate,
                s_min: TAIL_FRACTION.ln() / rate,
            },
            cache: Arc::default(),
        })
    }

    /// A general continuous positive integrable weight.
    pub fn new(h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self, PhaseSpaceError> {
        let h: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(h);
        let rough = weight_mass(&*h, 1e-12)?;
        let mass = weight_mass(&*h, TAIL_FRACTION * rough.total)?;
        Ok(WeightFunction {
            kind: WeightKind::General(h),
            mass,
            cache: Arc::default(),
        })
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.kind {
            WeightKind::Exponential(r) => (r * s).exp(),
            WeightKind::General(h) => h(s),
        }
    }

    /// `l = ∫_{-∞}^0 h`.
    pub fn l(&self) -> f64 {
        self.mass.total
    }

    pub fn s_min(&self) -> f64 {
        self.mass.s_min
    }

    /// Mass of `h` on `[a, b]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            WeightKind::Exponential(r) => ((r * b).exp() - (r * a).exp()) / r,
            WeightKind::General(h) => gauss_legendre4(&**h, a, b),
        }
    }

    /// Node weights for a history grid of `len` nodes with spacing `step` ending at 0:
    /// half the mass of each adjacent panel.
    pub fn node_weights(&self, step: f64, len: usize) -> Arc<[f64]> {
        let key = (step.to_bits(), len);
        if let Some(w) = self.cache.lock().expect("weight cache poisoned").get(&key) {
            return w.clone();
        }
        let mut w = vec![0.0; len];
        for p in 0..len.saturating_sub(1) {
            let b = -((len - 2 - p) as f64) * step;
            let m = self.mass_between(b - step, b);
            w[p] += 0.5 * m;
            w[p + 1] += 0.5 * m;
        }
        let w: Arc<[f64]> = w.into();
        self.cache
            .lock()
            .expect("weight cache poisoned")
            .insert(key, w.clone());
        w
    }

    /// Mass of `h` captured by a grid, `Σ node_weights`: the constant `l` of the
    /// discrete norm.
    pub fn grid_mass(&self, step: f64, len: usize) -> f64 {
        self.node_weights(step, len).iter().sum()
    }
}

/// A breakpoint: the node at `index` carries a right limit different from its value.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub index: usize,
    pub right: Vec<f64>,
}

/// Borrowed view of a history window: `len` nodes ending at `s = 0`.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    step: f64,
    dim: usize,
    values: &'a [f64],
    jumps: &'a [Jump],
    base: usize,
    head: Option<&'a [f64]>,
}

impl<'a> HistoryView<'a> {
    pub(crate) fn new(
        step: f64,
        dim: usize,
        values: &'a [f64],
        jumps: &'a [Jump],
        base: usize,
        head: Option<&'a [f64]>,
    ) -> Self {
        HistoryView {
            step,
            dim,
            values,
            jumps,
            base,
            head,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn s_min(&self) -> f64 {
        -((self.len() - 1) as f64) * self.step
    }

    /// Offset `s_j ≤ 0` of node `j`.
    pub fn node_offset(&self, j: usize) -> f64 {
        -((self.len() - 1 - j) as f64) * self.step
    }

    /// Left-continuous value at node `j`. For the last node this is `ψ(0⁻)`.
    pub fn node(&self, j: usize) -> &'a [f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// Right limit at interior node `j`, when it is a breakpoint.
    pub fn right_limit(&self, j: usize) -> Option<&'a [f64]> {
        if j + 1 >= self.len() {
            return None;
        }
        let g = self.base + j;
        self.jumps
            .binary_search_by_key(&g, |jp| jp.index)
            .ok()
            .map(|k| self.jumps[k].right.as_slice())
    }

    /// Right-sided value at node `j` (the node value when continuous).
    pub fn node_right(&self, j: usize) -> &'a [f64] {
        if j + 1 == self.len() {
            return self.head();
        }
        self.right_limit(j).unwrap_or_else(|| self.node(j))
    }

    /// `ψ(0)`.
    pub fn head(&self) -> &'a [f64] {
        self.head.unwrap_or_else(|| self.node(self.len() - 1))
    }

    /// Interior breakpoints `(j, right limit)` in increasing order.
    pub fn breakpoints(&self) -> impl Iterator<Item = (usize, &'a [f64])> + '_ {
        let lo = self.base;
        let hi = self.base + self.len() - 1;
        let start = self.jumps.partition_point(|j| j.index < lo);
        self.jumps[start..]
            .iter()
            .take_while(move |j| j.index < hi)
            .map(move |j| (j.index - lo, j.right.as_slice()))
    }

    /// Value at offset `s ∈ [s_min, 0]`, linear between nodes.
    pub fn at(&self, s: f64) -> Vec<f64> {
        if s >= 0.0 {
            return self.head().to_vec();
        }
        let x = (s - self.s_min()) / self.step;
        let j = x.floor().max(0.0) as usize;
        let frac = x - j as f64;
        if j + 1 >= self.len() {
            return self.node(self.len() - 1).to_vec();
        }
        if frac <= 1e-12 {
            return self.node(j).to_vec();
        }
        let a = self.node_right(j);
        let b = self.node(j + 1);
        a.iter().zip(b).map(|(a, b)| a + frac * (b - a)).collect()
    }

    /// `max_θ∈[s_j, 0] ‖ψ(θ)‖` for every node `j`, counting right limits.
    pub fn running_max(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        let mut cur = euclid(self.node(n - 1)).max(euclid(self.head()));
        out[n - 1] = cur;
        let bps: Vec<(usize, &[f64])> = self.breakpoints().collect();
        let mut bp = bps.len();
        for j in (0..n - 1).rev() {
            cur = cur.max(euclid(self.node(j)));
            while bp > 0 && bps[bp - 1].0 >= j {
                bp -= 1;
                if bps[bp].0 == j {
                    cur = cur.max(euclid(bps[bp].1));
                }
            }
            out[j] = cur;
        }
        out
    }

    /// `sup_{θ∈[s,0]} ‖ψ(θ)‖`.
    pub fn sup_window(&self, s: f64) -> Result<f64, PhaseSpaceError> {
        let s_min = self.s_min();
        if s < s_min - 1e-9 * self.step || s > 0.0 {
            return Err(PhaseSpaceError::WindowOutOfRange { s, s_min });
        }
        let x = ((s - s_min) / self.step).max(0.0);
        let first = x.ceil();
        let mut j0 = first as usize;
        let mut sup = 0.0f64;
        if first - x > 1e-9 {
            sup = euclid(&self.at(s));
        } else if (x - x.round()).abs() <= 1e-9 {
            j0 = x.round() as usize;
        }
        let n = self.len();
        for j in j0.min(n - 1)..n {
            sup = sup.max(euclid(self.node(j)));
        }
        sup = sup.max(euclid(self.head()));
        for (j, r) in self.breakpoints() {
            if j >= j0 {
                sup = sup.max(euclid(r));
            }
        }
        Ok(sup)
    }

    /// Supremum over the whole stored window.
    pub fn sup_norm(&self) -> f64 {
        self.running_max()[0]
    }

    /// Discrete `‖ψ‖_{BM_h}`: exact panel masses of `h` against the trapezoid of the
    /// running supremum.
    pub fn bmh_norm(&self, h: &WeightFunction) -> f64 {
        let w = h.node_weights(self.step, self.len());
        self.running_max()
            .iter()
            .zip(w.iter())
            .map(|(m, w)| m * w)
            .sum()
    }

    /// Owned copy of the window.
    pub fn to_history(&self) -> WeightedHistory {
        let jumps = self
            .breakpoints()
            .map(|(j, r)| Jump {
                index: j,
                right: r.to_vec(),
            })
            .collect();
        let head = self
            .head
            .filter(|h| *h != self.node(self.len() - 1))
            .map(|h| h.to_vec());
        WeightedHistory {
            step: self.step,
            dim: self.dim,
            values: self.values.to_vec(),
            jumps,
            head,
        }
    }
}

/// An owned history on a uniform grid ending at `s = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedHistory {
    step: f64,
    dim: usize,
    values: Vec<f64>,
    jumps: Vec<Jump>,
    head: Option<Vec<f64>>,
}

impl WeightedHistory {
    /// Samples `f` on the nodes `s_j = -(len-1-j)·step`, `len = ceil(|s_min|/step) + 1`.
    pub fn from_fn(
        step: f64,
        s_min: f64,
        dim: usize,
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self, PhaseSpaceError> {
        if !(step > 0.0 && step.is_finite() && s_min < 0.0 && s_min.is_finite()) {
            return Err(PhaseSpaceError::InvalidHistory(format!(
                "need step > 0 and s_min < 0, got step {step}, s_min {s_min}"
            )));
        }
        let len = (-s_min / step - 1e-9).ceil() as usize + 1;
        let mut values = Vec::with_capacity(len * dim);
        for j in 0..len {
            let v = f(-((len - 1 - j) as f64) * step);
            if v.len() != dim {
                return Err(PhaseSpaceError::InvalidHistory(format!(
                    "sample has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        Self::from_parts(step, dim, values, Vec::new())
    }

    /// Builds from raw node values and breakpoints (indices into the node list).
    pub fn from_parts(
        step: f64,
        dim: usize,
        values: Vec<f64>,
        mut jumps: Vec<Jump>,
    ) -> Result<Self, PhaseSpaceError> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(PhaseSpaceError::InvalidHistory(
                "node values do not match the dimension".into(),
            ));
        }
        let len = values.len() / dim;
        if len < 2 {
            return Err(PhaseSpaceError::InvalidHistory(
                "need at least two nodes".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PhaseSpaceError::InvalidHistory(
                "non-finite node value".into(),
            ));
        }
        jumps.sort_by_key(|j| j.index);
        for w in jumps.windows(2) {
            if w[0].index == w[1].index {
                return Err(PhaseSpaceError::InvalidHistory(
                    "duplicate breakpoint".into(),
                ));
            }
        }
        for j in &jumps {
            if j.index + 1 >= len || j.right.len() != dim {
                return Err(PhaseSpaceError::InvalidHistory(format!(
                    "breakpoint at node {} is not an interior node of matching dimension",
                    j.index
                )));
            }
        }
        Ok(WeightedHistory {
            step,
            dim,
            values,
            jumps,
            head: None,
        })
    }

    /// Adds a breakpoint at the node nearest to `s < 0`.
    pub fn with_breakpoint(mut self, s: f64, right: Vec<f64>) -> Result<Self, PhaseSpaceError> {
        let len = self.len();
        let x = s / self.step + (len - 1) as f64;
        let j = x.round();
        if (x - j).abs() > 1e-6 || j < 0.0 || j as usize + 1 >= len {
            return Err(PhaseSpaceError::InvalidHistory(format!(
                "breakpoint {s} is not an interior grid node"
            )));
        }
        let mut jumps = std::mem::take(&mut self.jumps);
        jumps.retain(|jp| jp.index != j as usize);
        jumps.push(Jump {
            index: j as usize,
            right,
        });
        Self::from_parts(self.step, self.dim, self.values, jumps)
    }

    pub fn view(&self) -> HistoryView<'_> {
        HistoryView::new(
            self.step,
            self.dim,
            &self.values,
            &self.jumps,
            0,
            self.head.as_deref(),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn s_min(&self) -> f64 {
        self.view().s_min()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn head(&self) -> &[f64] {
        self.view().head()
    }

    pub fn bmh_norm(&self, h: &WeightFunction) -> f64 {
        self.view().bmh_norm(h)
    }

    pub fn sup_window(&self, s: f64) -> Result<f64, PhaseSpaceError> {
        self.view().sup_window(s)
    }

    /// Pointwise `a·self + b·other` on identical grids; breakpoints are merged.
    pub fn combine(&self, a: f64, other: &WeightedHistory, b: f64) -> WeightedHistory {
        assert_eq!(self.values.len(), other.values.len(), "grid mismatch");
        let (u, v) = (self.view(), other.view());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let mut idx: Vec<usize> = self
            .jumps
            .iter()
            .chain(&other.jumps)
            .map(|j| j.index)
            .collect();
        idx.sort_unstable();
        idx.dedup();
        let jumps = idx
            .into_iter()
            .map(|j| Jump {
                index: j,
                right: u
                    .node_right(j)
                    .iter()
                    .zip(v.node_right(j))
                    .map(|(x, y)| a * x + b * y)
                    .collect(),
            })
            .collect();
        let head = if self.head.is_some() || other.head.is_some() {
            Some(
                u.head()
                    .iter()
                    .zip(v.head())
                    .map(|(x, y)| a * x + b * y)
                    .collect(),
            )
        } else {
            None
        };
        WeightedHistory {
            step: self.step,
            dim: self.dim,
            values,
            jumps,
            head,
        }
    }
}

/// `sup_{θ∈[s,0]} ‖ψ(θ)‖`.
pub fn sup_norm_window(psi: &HistoryView<'_>, s: f64) -> Result<f64, PhaseSpaceError> {
    psi.sup_window(s)
}

/// `‖ψ‖_{BM_h}` on the stored window.
pub fn bmh_norm(psi: &HistoryView<'_>, h: &WeightFunction) -> f64 {
    psi.bmh_norm(h)
}

/// The segment `x_t(θ) = x(t+θ)` of a trajectory at grid time `t`.
pub fn segment_at(x: &Trajectory, t: f64) -> Result<WeightedHistory, PhaseSpaceError> {
    let i = x.node_of(t)?;
    Ok(x.segment(i, false).to_history())
}

/// `‖x‖_b = ‖x_0‖_{BM_h} + sup_{t∈[0,b]} ‖x(t)‖`, right limits included.
pub fn seminorm_b(x: &Trajectory, h: &WeightFunction) -> f64 {
    x.history_view().bmh_norm(h) + x.sup_solution()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exp2() -> WeightFunction {
        WeightFunction::exponential(2.0).unwrap()
    }

    #[test]
    fn exponential_weight_mass_and_cutoff() {
        let m = weight_mass(&|s: f64| (2.0 * s).exp(), 0.5e-10).unwrap();
        assert_relative_eq!(m.total, 0.5, max_relative = 1e-10);
        // tail e^{2c}/2 = 0.5e-10
        assert_relative_eq!(m.s_min, (1e-10f64).ln() / 2.0, max_relative = 1e-6);
        let w = exp2();
        assert_eq!(w.l(), 0.5);
        assert_relative_eq!(w.s_min(), -11.512925464970229, max_relative = 1e-14);
    }

    #[test]
    fn general_weight_matches_analytic() {
        let g = WeightFunction::new(|s: f64| (2.0 * s).exp()).unwrap();
        assert_relative_eq!(g.l(), 0.5, max_relative = 1e-10);
        assert_relative_eq!(g.s_min(), exp2().s_min(), max_relative = 1e-6);
        let slow = WeightFunction::new(|s: f64| 1.0 / (1.0 + s * s)).unwrap();
        assert_relative_eq!(slow.l(), std::f64::consts::FRAC_PI_2, max_relative = 1e-8);
    }

    #[test]
    fn non_integrable_weight_is_rejected() {
        let err = WeightFunction::new(|s: f64| 1.0 / (1.0 + s.abs())).unwrap_err();
        assert!(matches!(err, PhaseSpaceError::NonIntegrableWeight(_)));
        assert!(WeightFunction::new(|_| 1.0).is_err());
        assert!(WeightFunction::new(|s: f64| -(s.exp())).is_err());
        assert!(WeightFunction::exponential(0.0).is_err());
    }

    #[test]
    fn constant_history_norm_is_l_times_value() {
        let h = exp2();
        let psi = WeightedHistory::from_fn(0.01, h.s_min(), 2, |_| vec![3.0, 4.0]).unwrap();
        assert_relative_eq!(psi.bmh_norm(&h), 0.5 * 5.0, max_relative = 1e-9);
    }

    #[test]
    fn norm_of_decaying_history_matches_closed_form() {
        // ψ(s) = e^{s}: sup over [s,0] is 1, so the norm is l.
        // ψ(s) = e^{-s}: sup is e^{-s}, norm on [s_min, 0] = 1 - e^{s_min}.
        let h = exp2();
        let a = WeightedHistory::from_fn(0.001, h.s_min(), 1, |s| vec![s.exp()]).unwrap();
        assert_relative_eq!(a.bmh_norm(&h), 0.5, max_relative = 1e-9);
        let b = WeightedHistory::from_fn(0.001, h.s_min(), 1, |s| vec![(-s).exp()]).unwrap();
        assert_relative_eq!(b.bmh_norm(&h), 1.0 - h.s_min().exp(), max_relative = 1e-6);
    }

    #[test]
    fn breakpoints_count_toward_the_supremum() {
        let h = exp2();
        let psi = WeightedHistory::from_fn(0.5, -3.0, 1, |_| vec![1.0])
            .unwrap()
            .with_breakpoint(-1.0, vec![5.0])
            .unwrap();
        assert_eq!(psi.sup_window(-1.0).unwrap(), 5.0);
        assert_eq!(psi.sup_window(-0.5).unwrap(), 1.0);
        assert_eq!(psi.sup_window(-3.0).unwrap(), 5.0);
        let rm = psi.view().running_max();
        assert_eq!(rm, vec![5.0, 5.0, 5.0, 5.0, 5.0, 1.0, 1.0]);
        assert!(psi.sup_window(-3.5).is_err());
        let _ = psi.bmh_norm(&h);
    }

    #[test]
    fn off_grid_window_uses_interpolation() {
        let psi = WeightedHistory::from_fn(1.0, -2.0, 1, |s| vec![-s]).unwrap();
        assert_relative_eq!(psi.sup_window(-1.5).unwrap(), 1.5);
        assert_relative_eq!(psi.view().at(-0.25)[0], 0.25);
    }

    fn arb_history() -> impl Strategy<Value = WeightedHistory> {
        (
            prop::collection::vec(-5.0f64..5.0, 12..40),
            prop::option::of((1usize..10, -9.0f64..9.0)),
        )
            .prop_map(|(vals, bp)| {
                let n = vals.len();
                let mut jumps = Vec::new();
                if let Some((j, r)) = bp {
                    jumps.push(Jump {
                        index: j.min(n - 2),
                        right: vec![r],
                    });
                }
                WeightedHistory::from_parts(0.5, 1, vals, jumps).unwrap()
            })
    }

    proptest! {
        #[test]
        fn sup_is_monotone_in_window(psi in arb_history(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let s_min = psi.s_min();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let s1 = s_min * hi;
            let s2 = s_min * lo;
            prop_assert!(psi.sup_window(s1).unwrap() >= psi.sup_window(s2).unwrap());
        }

        #[test]
        fn norm_sandwich(psi in arb_history()) {
            let h = exp2();
            let v = psi.view();
            let l = h.grid_mass(v.step(), v.len());
            let n = v.bmh_norm(&h);
            prop_assert!(l * euclid(v.head()) <= n * (1.0 + 1e-12) + 1e-15);
            prop_assert!(n <= l * v.sup_norm() * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn norm_is_homogeneous_and_subadditive(
            a in arb_history(), b in arb_history(), c in -3.0f64..3.0
        ) {
            let h = exp2();
            let scaled = a.combine(c, &a, 0.0);
            prop_assert!((scaled.bmh_norm(&h) - c.abs() * a.bmh_norm(&h)).abs()
                <= 1e-12 * (1.0 + a.bmh_norm(&h)));
            if a.len() == b.len() {
                let sum = a.combine(1.0, &b, 1.0);
                prop_assert!(sum.bmh_norm(&h) <= (a.bmh_norm(&h) + b.bmh_norm(&h)) * (1.0 + 1e-12) + 1e-15);
            }
        }
    }
}
