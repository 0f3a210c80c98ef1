use crate::phase_space::{euclid, euclid_dist};

use super::{ApError, SampledSignal};

/// A sequence `I(n)` on the index range `start..start + len`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSignal {
    start: i64,
    dim: usize,
    values: Vec<f64>,
}

impl SequenceSignal {
    pub fn new(start: i64, dim: usize, values: Vec<f64>) -> Result<Self, ApError> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(ApError::InvalidSignal(
                "sequence values do not match dimension".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ApError::InvalidSignal("non-finite sequence value".into()));
        }
        Ok(SequenceSignal { start, dim, values })
    }

    /// Scalar sequence `f(n)` for `n ∈ [lo, hi]`.
    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Result<Self, ApError> {
        Self::new(lo, 1, (lo..=hi).map(f).collect())
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

    pub fn first_index(&self) -> i64 {
        self.start
    }

    pub fn last_index(&self) -> i64 {
        self.start + self.len() as i64 - 1
    }

    pub fn get(&self, n: i64) -> Option<&[f64]> {
        if n < self.start || n > self.last_index() {
            return None;
        }
        let i = (n - self.start) as usize;
        Some(&self.values[i * self.dim..(i + 1) * self.dim])
    }
}

/// `(1/2p) Σ_{i=-p}^{p} ‖I(i)‖`.
pub fn sequence_ergodic(seq: &SequenceSignal, p: i64) -> Result<f64, ApError> {
    if p <= 0 || seq.get(-p).is_none() || seq.get(p).is_none() {
        return Err(ApError::WindowTooSmall {
            needed: (-p as f64, p as f64),
            available: (seq.first_index() as f64, seq.last_index() as f64),
        });
    }
    let sum: f64 = (-p..=p)
        .map(|i| euclid(seq.get(i).expect("checked range")))
        .sum();
    Ok(sum / (2 * p) as f64)
}

/// Tent interpolation `w(k + θ) = (1-θ) I(k) + θ I(k+1)` sampled with
/// `per_unit` points per unit interval; integer nodes carry `I` exactly.
pub fn interpolate_sequence(
    seq: &SequenceSignal,
    per_unit: usize,
) -> Result<SampledSignal, ApError> {
    let per_unit = per_unit.max(1);
    let step = 1.0 / per_unit as f64;
    let dim = seq.dim();
    let mut values = Vec::with_capacity(((seq.len() - 1) * per_unit + 1) * dim);
    for k in seq.first_index()..seq.last_index() {
        let a = seq.get(k).expect("in range");
        let b = seq.get(k + 1).expect("in range");
        values.extend_from_slice(a);
        for m in 1..per_unit {
            let th = m as f64 / per_unit as f64;
            values.extend(a.iter().zip(b).map(|(x, y)| (1.0 - th) * x + th * y));
        }
    }
    values.extend_from_slice(seq.get(seq.last_index()).expect("non-empty"));
    SampledSignal::from_values(seq.first_index() as f64, step, dim, values)
}

/// Integer translations `q ∈ [0, q_max]` with `max_n ‖I(n+q) - I(n)‖ < ε` over
/// indices where both terms exist.
pub fn sequence_almost_periods(
    seq: &SequenceSignal,
    eps: f64,
    q_max: usize,
) -> Result<Vec<i64>, ApError> {
    let n = seq.len();
    if 2 * q_max > n {
        return Err(ApError::InsufficientOverlap {
            shift: q_max as f64,
            window: n as f64,
        });
    }
    let lo = seq.first_index();
    let mut out = Vec::new();
    'cand: for q in 0..=q_max as i64 {
        for m in lo..=seq.last_index() - q {
            let a = seq.get(m).expect("in range");
            let b = seq.get(m + q).expect("in range");
            if euclid_dist(a, b) >= eps {
                continue 'cand;
            }
        }
        out.push(q);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::almost_periodicity::ergodic_mean;
    use proptest::prelude::*;

    #[test]
    fn ergodic_sequences() {
        let zero = SequenceSignal::from_fn(-20, 20, |_| 0.0).unwrap();
        assert_eq!(sequence_ergodic(&zero, 16).unwrap(), 0.0);
        let one = SequenceSignal::from_fn(-20, 20, |_| 1.0).unwrap();
        assert_eq!(sequence_ergodic(&one, 16).unwrap(), 33.0 / 32.0);
        let pow2 = SequenceSignal::from_fn(-20, 20, |n| {
            if n >= 1 && (n & (n - 1)) == 0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert_eq!(sequence_ergodic(&pow2, 16).unwrap(), 5.0 / 32.0);
        assert!(sequence_ergodic(&one, 21).is_err());
    }

    #[test]
    fn interpolation_hits_integers_exactly() {
        let s = SequenceSignal::from_fn(-5, 5, |n| (n as f64).sin()).unwrap();
        let w = interpolate_sequence(&s, 8).unwrap();
        for n in -5..=5i64 {
            let i = ((n + 5) * 8) as usize;
            assert_eq!(w.value(i)[0], (n as f64).sin());
        }
        assert_eq!(w.value(4)[0], 0.5 * ((-5f64).sin() + (-4f64).sin()));
    }

    #[test]
    fn periodic_sequence_periods() {
        let s = SequenceSignal::from_fn(0, 100, |n| ((n % 7) as f64).sqrt()).unwrap();
        let p = sequence_almost_periods(&s, 1e-9, 50).unwrap();
        assert_eq!(p, vec![0, 7, 14, 21, 28, 35, 42, 49]);
    }

    proptest! {
        #[test]
        fn tent_mean_is_bounded_by_sequence_mean(vals in prop::collection::vec(-5.0f64..5.0, 41), p in 2i64..19) {
            let s = SequenceSignal::new(-20, 1, vals).unwrap();
            let w = interpolate_sequence(&s, 4).unwrap();
            let lhs = ergodic_mean(&w, p as f64).unwrap();
            let rhs = sequence_ergodic(&s, p + 1).unwrap() * (1.0 + 1.0 / p as f64);
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
