use serde::Serialize;

use crate::phase_space::{euclid, euclid_dist};
use crate::quadrature::ls_slope;

use super::{ApError, Criterion, Density};

/// A function sampled on a uniform grid, with known discontinuity times.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    start: f64,
    step: f64,
    dim: usize,
    values: Vec<f64>,
    discontinuities: Vec<f64>,
}

impl SampledSignal {
    /// Samples `f` on `start, start + step, ...` up to `end` (inclusive when on grid).
    pub fn from_fn(
        start: f64,
        end: f64,
        step: f64,
        dim: usize,
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self, ApError> {
        if !(step > 0.0 && end > start) {
            return Err(ApError::InvalidSignal(format!(
                "need step > 0 and end > start, got [{start}, {end}] step {step}"
            )));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize + 1;
        let mut values = Vec::with_capacity(n * dim);
        for i in 0..n {
            let v = f(start + i as f64 * step);
            if v.len() != dim {
                return Err(ApError::InvalidSignal("sample dimension mismatch".into()));
            }
            values.extend(v);
        }
        Self::from_values(start, step, dim, values)
    }

    /// Scalar convenience over [`SampledSignal::from_fn`].
    pub fn scalar(
        start: f64,
        end: f64,
        step: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, ApError> {
        Self::from_fn(start, end, step, 1, |t| vec![f(t)])
    }

    pub fn from_values(
        start: f64,
        step: f64,
        dim: usize,
        values: Vec<f64>,
    ) -> Result<Self, ApError> {
        if dim == 0 || !values.len().is_multiple_of(dim) || values.len() < 2 * dim {
            return Err(ApError::InvalidSignal("need at least two samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ApError::InvalidSignal("non-finite sample".into()));
        }
        Ok(SampledSignal {
            start,
            step,
            dim,
            values,
            discontinuities: Vec::new(),
        })
    }

    /// Records discontinuity times; the quadrature splits panels there.
    pub fn with_discontinuities(mut self, mut times: Vec<f64>) -> Result<Self, ApError> {
        times.sort_by(f64::total_cmp);
        if times.iter().any(|t| *t < self.start || *t > self.end()) {
            return Err(ApError::InvalidSignal(
                "discontinuity outside the window".into(),
            ));
        }
        self.discontinuities = times;
        Ok(self)
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

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + (self.len() - 1) as f64 * self.step
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn discontinuities(&self) -> &[f64] {
        &self.discontinuities
    }

    fn same_grid(&self, other: &SampledSignal) -> bool {
        self.len() == other.len()
            && self.dim == other.dim
            && (self.start - other.start).abs() <= 1e-9 * self.step
            && (self.step - other.step).abs() <= 1e-12 * self.step
    }

    /// Pointwise `a·self + b·other`; discontinuities are merged.
    pub fn combine(&self, a: f64, other: &SampledSignal, b: f64) -> Result<SampledSignal, ApError> {
        if !self.same_grid(other) {
            return Err(ApError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let mut d = self.discontinuities.clone();
        d.extend_from_slice(&other.discontinuities);
        d.sort_by(f64::total_cmp);
        d.dedup();
        Ok(SampledSignal {
            values,
            discontinuities: d,
            ..self.clone()
        })
    }

    /// `∫_a^b ‖f‖`: trapezoid on the grid, piecewise constant on panels that
    /// contain a discontinuity.
    pub fn integral_of_norm(&self, a: f64, b: f64) -> Result<f64, ApError> {
        let tol = 1e-9 * self.step;
        if a < self.start - tol || b > self.end() + tol || a > b {
            return Err(ApError::WindowTooSmall {
                needed: (a, b),
                available: (self.start, self.end()),
            });
        }
        let norms: Vec<f64> = (0..self.len()).map(|i| euclid(self.value(i))).collect();
        let first = (((a - self.start) / self.step) + 1e-9).floor().max(0.0) as usize;
        let mut total = 0.0;
        for p in first..self.len() - 1 {
            let (t0, t1) = (self.time(p), self.time(p + 1));
            if t0 >= b - tol {
                break;
            }
            let lo = a.max(t0);
            let hi = b.min(t1);
            if hi <= lo {
                continue;
            }
            let (n0, n1) = (norms[p], norms[p + 1]);
            let jump = self
                .discontinuities
                .iter()
                .find(|&&d| d > t0 + tol && d < t1 - tol);
            total += match jump {
                Some(&d) => n0 * (d.min(hi) - lo).max(0.0) + n1 * (hi - d.max(lo)).max(0.0),
                None => {
                    let at = |t: f64| n0 + (n1 - n0) * (t - t0) / (t1 - t0);
                    0.5 * (at(lo) + at(hi)) * (hi - lo)
                }
            };
        }
        Ok(total)
    }
}

/// `(1/2T) ∫_{-T}^{T} ‖f(t)‖ dt`.
pub fn ergodic_mean(f: &SampledSignal, t: f64) -> Result<f64, ApError> {
    if !(t > 0.0) {
        return Err(ApError::InvalidSignal(format!(
            "half-width {t} must be positive"
        )));
    }
    Ok(f.integral_of_norm(-t, t)? / (2.0 * t))
}

/// Grid mask of nodes within `ε` of an excluded time.
fn exclusion_mask(f: &SampledSignal, eps: f64, excluded: &[f64]) -> Vec<bool> {
    let mut sorted = excluded.to_vec();
    sorted.sort_by(f64::total_cmp);
    (0..f.len())
        .map(|i| {
            let t = f.time(i);
            let k = sorted.partition_point(|x| *x < t);
            let near = |j: usize| sorted.get(j).is_some_and(|x| (x - t).abs() <= eps);
            near(k) || (k > 0 && near(k - 1))
        })
        .collect()
}

/// Grid translations `τ ∈ [lo, hi]` with `sup_t ‖f(t+τ) - f(t)‖ < ε`, the sup taken
/// over grid `t` such that neither `t` nor `t+τ` is within `ε` of an excluded time.
pub fn eps_almost_periods(
    f: &SampledSignal,
    eps: f64,
    (lo, hi): (f64, f64),
    excluded: &[f64],
) -> Result<Vec<f64>, ApError> {
    let n = f.len();
    let k_lo = (lo / f.step - 1e-9).ceil() as i64;
    let k_hi = (hi / f.step + 1e-9).floor() as i64;
    let max_shift = k_lo.unsigned_abs().max(k_hi.unsigned_abs()) as usize;
    if 2 * max_shift > n {
        return Err(ApError::InsufficientOverlap {
            shift: max_shift as f64 * f.step,
            window: f.end() - f.start,
        });
    }
    let mask = exclusion_mask(f, eps, excluded);
    let mut out = Vec::new();
    'cand: for k in k_lo..=k_hi {
        let (a, b) = if k >= 0 {
            (0usize, n - k as usize)
        } else {
            ((-k) as usize, n)
        };
        for i in a..b {
            let j = (i as i64 + k) as usize;
            if mask[i] || mask[j] {
                continue;
            }
            if euclid_dist(f.value(j), f.value(i)) >= eps {
                continue 'cand;
            }
        }
        out.push(k as f64 * f.step);
    }
    Ok(out)
}

/// Largest gap of `periods` within `[lo, hi]`, window edges included.
pub fn relative_density(periods: &[f64], (lo, hi): (f64, f64)) -> Density {
    let inside: Vec<f64> = periods
        .iter()
        .copied()
        .filter(|p| *p >= lo - 1e-12 && *p <= hi + 1e-12)
        .collect();
    if inside.is_empty() {
        return Density::NotDense;
    }
    let mut gap = (inside[0] - lo).max(hi - inside[inside.len() - 1]);
    for w in inside.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    if gap >= hi - lo {
        Density::NotDense
    } else {
        Density::Dense(gap)
    }
}

/// Ergodic means along a ladder of half-widths and the decay verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicReport {
    pub ladder: Vec<f64>,
    pub means: Vec<f64>,
    /// Least-squares slope of `log M(T)` against `log T`.
    pub slope: f64,
    pub nonincreasing: bool,
    pub trending_to_zero: bool,
}

/// Decay verdict: means nonincreasing, final mean `< eps`, log-log slope `< -0.5`.
pub fn ergodic_report(
    f: &SampledSignal,
    ladder: &[f64],
    eps: f64,
) -> Result<ErgodicReport, ApError> {
    let means = ladder
        .iter()
        .map(|&t| ergodic_mean(f, t))
        .collect::<Result<Vec<_>, _>>()?;
    let nonincreasing = means
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
    let last = means.last().copied().unwrap_or(f64::INFINITY);
    let slope = if means.iter().all(|m| *m <= 1e-300) {
        f64::NEG_INFINITY
    } else {
        let lx: Vec<f64> = ladder.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = means.iter().map(|m| m.max(1e-300).ln()).collect();
        ls_slope(&lx, &ly)
    };
    Ok(ErgodicReport {
        ladder: ladder.to_vec(),
        means,
        slope,
        nonincreasing,
        trending_to_zero: nonincreasing && last < eps && slope < -0.5,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PapOptions {
    pub eps: f64,
    /// Translations are searched in `[0, tau_max]`.
    pub tau_max: f64,
    pub ladder: Vec<f64>,
    /// Impulse times whose `ε`-neighbourhoods are excluded.
    pub excluded: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PapVerdict {
    pub pass: bool,
    pub period_count: usize,
    pub density: Density,
    pub ergodic: ErgodicReport,
    pub criteria: Vec<Criterion>,
}

/// Checks a proposed split `f = f1 + f2` into an almost periodic part and an
/// ergodic part.
pub fn verify_pap_split(
    f: &SampledSignal,
    f1: &SampledSignal,
    f2: &SampledSignal,
    opts: &PapOptions,
) -> Result<PapVerdict, ApError> {
    let sum = f1.combine(1.0, f2, 1.0)?;
    if !sum.same_grid(f) {
        return Err(ApError::GridMismatch);
    }
    let max_err = sum
        .values
        .iter()
        .zip(&f.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if max_err > 1e-10 {
        return Err(ApError::SplitMismatch(max_err));
    }
    let periods = eps_almost_periods(f1, opts.eps, (0.0, opts.tau_max), &opts.excluded)?;
    let density = relative_density(&periods, (0.0, opts.tau_max));
    let ergodic = ergodic_report(f2, &opts.ladder, opts.eps)?;
    let dense = matches!(density, Density::Dense(_));
    let criteria = vec![
        Criterion::new(
            "almost periodic part: largest gap between eps-periods",
            density.gap().unwrap_or(f64::INFINITY),
            opts.tau_max,
            dense,
        ),
        Criterion::new(
            "ergodic part: final mean",
            *ergodic.means.last().unwrap_or(&f64::INFINITY),
            opts.eps,
            ergodic.means.last().is_some_and(|m| *m < opts.eps),
        ),
        Criterion::new(
            "ergodic part: log-log decay slope",
            ergodic.slope,
            -0.5,
            ergodic.slope < -0.5,
        ),
        Criterion::new(
            "ergodic part: means nonincreasing",
            ergodic.nonincreasing as u8 as f64,
            1.0,
            ergodic.nonincreasing,
        ),
    ];
    Ok(PapVerdict {
        pass: dense && ergodic.trending_to_zero,
        period_count: periods.len(),
        density,
        ergodic,
        criteria,
    })
}
