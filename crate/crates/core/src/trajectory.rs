//! Piecewise-continuous trajectories on `[s_min, b]`.
//!
//! History and solution share one uniform node array. Node values are left
//! limits; right limits at breakpoints and impulse times are stored separately,
//! so left-continuity holds by construction.

use crate::phase_space::{
    euclid, euclid_dist, HistoryView, Jump, PhaseSpaceError, WeightedHistory,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    step: f64,
    dim: usize,
    /// Number of history nodes, including the node at `t = 0`.
    hist_len: usize,
    /// Number of solution steps; the horizon is `steps · step`.
    steps: usize,
    values: Vec<f64>,
    jumps: Vec<Jump>,
}

impl Trajectory {
    /// Glues `history` to a solution part of `steps` steps initialised to `φ(0)`.
    pub fn from_history(history: &WeightedHistory, steps: usize) -> Self {
        let dim = history.dim();
        let hist_len = history.len();
        let mut values = Vec::with_capacity((hist_len + steps) * dim);
        values.extend_from_slice(history.values());
        let head = history.head().to_vec();
        for _ in 0..steps {
            values.extend_from_slice(&head);
        }
        Trajectory {
            step: history.step(),
            dim,
            hist_len,
            steps,
            values,
            jumps: history.jumps().to_vec(),
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of solution steps `n`; nodes are `0..=n`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn history_len(&self) -> usize {
        self.hist_len
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.step
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    fn global(&self, i: usize) -> usize {
        self.hist_len - 1 + i
    }

    /// Solution node index of grid time `t`.
    pub fn node_of(&self, t: f64) -> Result<usize, PhaseSpaceError> {
        let horizon = self.horizon();
        if t < -1e-9 * self.step || t > horizon + 1e-9 * self.step {
            return Err(PhaseSpaceError::TimeOutOfHorizon { t, horizon });
        }
        let x = t / self.step;
        let i = x.round();
        if (x - i).abs() > 1e-6 {
            return Err(PhaseSpaceError::TimeOffGrid { t, step: self.step });
        }
        Ok(i as usize)
    }

    /// Left value `x(t_i)` (for `i = 0`, `φ(0)`).
    pub fn value(&self, i: usize) -> &[f64] {
        let g = self.global(i);
        &self.values[g * self.dim..(g + 1) * self.dim]
    }

    pub fn set_value(&mut self, i: usize, v: &[f64]) {
        let g = self.global(i);
        self.values[g * self.dim..(g + 1) * self.dim].copy_from_slice(v);
    }

    /// Right limit at solution node `i`, when it is an impulse node.
    pub fn jump_at(&self, i: usize) -> Option<&[f64]> {
        let g = self.global(i);
        self.jumps
            .binary_search_by_key(&g, |j| j.index)
            .ok()
            .map(|k| self.jumps[k].right.as_slice())
    }

    /// `x(t_i⁺)`.
    pub fn right_value(&self, i: usize) -> &[f64] {
        self.jump_at(i).unwrap_or_else(|| self.value(i))
    }

    /// Sets or clears the right limit at solution node `i ≥ 1`.
    pub fn set_jump(&mut self, i: usize, right: Option<Vec<f64>>) {
        let g = self.global(i);
        match (self.jumps.binary_search_by_key(&g, |j| j.index), right) {
            (Ok(k), Some(r)) => self.jumps[k].right = r,
            (Ok(k), None) => {
                self.jumps.remove(k);
            }
            (Err(k), Some(r)) => self.jumps.insert(k, Jump { index: g, right: r }),
            (Err(_), None) => {}
        }
    }

    /// Solution nodes carrying a right limit.
    pub fn impulse_nodes(&self) -> Vec<usize> {
        let first = self.global(0);
        self.jumps
            .iter()
            .filter(|j| j.index > first)
            .map(|j| j.index - first)
            .collect()
    }

    /// The segment `x_{t_i}`; with `right = true` its head is `x(t_i⁺)`.
    pub fn segment(&self, i: usize, right: bool) -> HistoryView<'_> {
        let lo = i;
        let hi = i + self.hist_len;
        let head = if right { self.jump_at(i) } else { None };
        HistoryView::new(
            self.step,
            self.dim,
            &self.values[lo * self.dim..hi * self.dim],
            &self.jumps,
            lo,
            head,
        )
    }

    /// The initial history `x_0 = φ`.
    pub fn history_view(&self) -> HistoryView<'_> {
        self.segment(0, false)
    }

    /// All node values, history first, and the breakpoint list (global indices).
    pub fn raw(&self) -> (&[f64], &[Jump]) {
        (&self.values, &self.jumps)
    }

    /// `sup_{t∈[0,b]} ‖x(t)‖` over nodes and right limits.
    pub fn sup_solution(&self) -> f64 {
        let mut sup = 0.0f64;
        for i in 0..=self.steps {
            sup = sup.max(euclid(self.value(i)));
        }
        for i in self.impulse_nodes() {
            sup = sup.max(euclid(self.right_value(i)));
        }
        sup
    }

    /// `sup_{t∈[0,b]} ‖x(t) - y(t)‖` over nodes and right limits.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid mismatch");
        let mut sup = 0.0f64;
        for i in 0..=self.steps {
            sup = sup.max(euclid_dist(self.value(i), other.value(i)));
            if self.jump_at(i).is_some() || other.jump_at(i).is_some() {
                sup = sup.max(euclid_dist(self.right_value(i), other.right_value(i)));
            }
        }
        sup
    }

    /// Pointwise `a·self + b·other` on the solution part; the history of `self` is kept.
    pub fn combine(&self, a: f64, other: &Trajectory, b: f64) -> Trajectory {
        let mut out = self.clone();
        for i in 0..=self.steps {
            let v: Vec<f64> = self
                .value(i)
                .iter()
                .zip(other.value(i))
                .map(|(x, y)| a * x + b * y)
                .collect();
            out.set_value(i, &v);
            if self.jump_at(i).is_some() || other.jump_at(i).is_some() {
                let r = self
                    .right_value(i)
                    .iter()
                    .zip(other.right_value(i))
                    .map(|(x, y)| a * x + b * y)
                    .collect();
                out.set_jump(i, Some(r));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Trajectory {
        let h = WeightedHistory::from_fn(0.5, -2.0, 1, |s| vec![s]).unwrap();
        let mut x = Trajectory::from_history(&h, 4);
        for i in 0..=4 {
            x.set_value(i, &[i as f64 * 0.5]);
        }
        x
    }

    #[test]
    fn segments_shift_the_window() {
        let mut x = line();
        x.set_jump(2, Some(vec![10.0]));
        let seg = x.segment(3, false);
        assert_eq!(seg.len(), 5);
        assert_eq!(seg.head(), &[1.5]);
        assert_eq!(seg.node(0), &[-0.5]);
        assert_eq!(seg.right_limit(3), Some(&[10.0][..]));
        assert_eq!(seg.sup_norm(), 10.0);
        let at_jump = x.segment(2, true);
        assert_eq!(at_jump.head(), &[10.0]);
        assert_eq!(x.segment(2, false).head(), &[1.0]);
        assert_eq!(x.impulse_nodes(), vec![2]);
        assert_eq!(x.sup_solution(), 10.0);
    }

    #[test]
    fn node_lookup() {
        let x = line();
        assert_eq!(x.node_of(1.5).unwrap(), 3);
        assert!(x.node_of(2.5).is_err());
        assert!(x.node_of(0.3).is_err());
    }
}
