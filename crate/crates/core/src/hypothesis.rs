//! Sampled estimates of the constants in the existence hypotheses and the two
//! smallness conditions built from them.
//!
//! Every Lipschitz or growth constant here is the largest ratio seen on a
//! finite, seeded sample, so it is a lower bound on any valid constant. A pass
//! of the smallness conditions with such constants means "consistent with the
//! hypotheses", not a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase_space::{euclid, euclid_dist, PhaseSpaceError, WeightedHistory};
use crate::semigroup::{BasisKind, SemigroupError};
use crate::solver::{
    picard_solve, DelayKernel, LambdaMode, NeutralMap, ProblemSpec, SolveOptions, SolverError,
};
use crate::trajectory::Trajectory;

/// Input differences below this are treated as zero.
const DEGENERATE: f64 = 1e-12;
/// Relative slack when comparing an estimate with a declared constant, for rounding in the ratios.
const DECLARED_RTOL: f64 = 1e-8;
/// Trapezoid panels for fixed-history delay integrals.
const FIXED_PANELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HypothesisError {
    #[error("all sampled input differences for {0} are below 1e-12")]
    DegenerateSamples(&'static str),
    #[error("constant {0} is missing")]
    MissingConstant(&'static str),
    #[error("domination violated at t = {t}, s = {s}: {lhs:e} > {rhs:e}")]
    DominationViolated { t: f64, s: f64, lhs: f64, rhs: f64 },
    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    PhaseSpace(#[from] PhaseSpaceError),
}

/// How many random inputs to draw and from where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePlan {
    /// Pairs for the neutral map and impulse estimates.
    pub samples: usize,
    /// Pairs for estimates that evaluate a delay kernel.
    pub kernel_samples: usize,
    pub seed: u64,
    /// Grid step of sampled histories.
    pub history_step: f64,
    /// Bound on the sup norm of sampled histories and vectors.
    pub radius: f64,
    /// Time nodes for the growth integral.
    pub time_nodes: usize,
    /// Growth ladder `scale·2^j`, `j < ladder_len`.
    pub ladder_scale: f64,
    pub ladder_len: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            samples: 1000,
            kernel_samples: 100,
            seed: 0,
            history_step: 0.05,
            radius: 1.0,
            time_nodes: 11,
            ladder_scale: 1.0,
            ladder_len: 11,
        }
    }
}

impl SamplePlan {
    fn validate(&self) -> Result<(), HypothesisError> {
        if self.samples < 1000 {
            return Err(HypothesisError::InvalidPlan(format!(
                "need at least 1000 samples, got {}",
                self.samples
            )));
        }
        if self.kernel_samples == 0 || self.time_nodes < 2 || self.ladder_len < 2 {
            return Err(HypothesisError::InvalidPlan(
                "kernel_samples, time_nodes and ladder_len are too small".into(),
            ));
        }
        if !(self.history_step > 0.0 && self.radius > 0.0 && self.ladder_scale > 0.0) {
            return Err(HypothesisError::InvalidPlan(
                "history_step, radius and ladder_scale must be positive".into(),
            ));
        }
        Ok(())
    }

    fn ladder(&self) -> Vec<f64> {
        (0..self.ladder_len)
            .map(|j| self.ladder_scale * 2f64.powi(j as i32))
            .collect()
    }
}

/// One term `offset + wave·e^{rate·s} sin(freq·s + phase)` of a sampled history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryTerm {
    pub offset: Vec<f64>,
    pub wave: Vec<f64>,
    pub rate: f64,
    pub freq: f64,
    pub phase: f64,
}

/// A sampled history: the sum of its terms. Enough to regenerate a witness.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct HistorySample {
    pub terms: Vec<HistoryTerm>,
}

impl HistorySample {
    pub fn eval(&self, s: f64, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for term in &self.terms {
            let shape = (term.rate * s).exp() * (term.freq * s + term.phase).sin();
            for (o, (a, w)) in out.iter_mut().zip(term.offset.iter().zip(&term.wave)) {
                *o += a + w * shape;
            }
        }
        out
    }

    pub fn sample(
        &self,
        dim: usize,
        step: f64,
        s_min: f64,
    ) -> Result<WeightedHistory, PhaseSpaceError> {
        WeightedHistory::from_fn(step, s_min, dim, |s| self.eval(s, dim))
    }

    fn joined(&self, other: &HistorySample) -> HistorySample {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        HistorySample { terms }
    }

    fn scaled(mut self, c: f64) -> HistorySample {
        for term in &mut self.terms {
            term.offset.iter_mut().for_each(|x| *x *= c);
            term.wave.iter_mut().for_each(|x| *x *= c);
        }
        self
    }
}

/// One side of a witness pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleInput {
    pub history: HistorySample,
    pub vector: Vec<f64>,
}

/// The sampled pair attaining an estimate: `lhs = ‖output difference‖`,
/// `rhs = ‖input difference‖`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub s: Option<f64>,
    pub first: SampleInput,
    pub second: SampleInput,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub samples: usize,
    pub witness: Option<Witness>,
}

impl LipschitzEstimate {
    fn zero() -> Self {
        LipschitzEstimate {
            value: 0.0,
            samples: 0,
            witness: None,
        }
    }

    fn offer(&mut self, w: Witness) {
        self.samples += 1;
        let ratio = w.lhs / w.rhs;
        if ratio > self.value || ratio.is_nan() {
            self.value = if ratio.is_nan() { f64::INFINITY } else { ratio };
            self.witness = Some(w);
        }
    }
}

/// Seeded random inputs shaped for a problem.
struct Sampler<'a> {
    spec: &'a ProblemSpec,
    plan: &'a SamplePlan,
    dim: usize,
    /// Per-component amplitude profile, so sine-basis samples are smooth fields.
    profile: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a ProblemSpec, plan: &'a SamplePlan) -> Self {
        let dim = spec.dim();
        let profile = match spec.generator.kind() {
            BasisKind::SineDirichlet => (1..=dim).map(|n| 1.0 / (n * n) as f64).collect(),
            BasisKind::Scalar => vec![1.0; dim],
        };
        Sampler {
            spec,
            plan,
            dim,
            profile,
        }
    }

    /// An independent stream per (estimate, sample index), so prefixes of a
    /// larger plan reproduce a smaller one.
    fn rng(&self, tag: u64, index: usize) -> ChaCha8Rng {
        let mut r =
            ChaCha8Rng::seed_from_u64(self.plan.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        r.set_stream(index as u64);
        r
    }

    fn direction(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let v: Vec<f64> = self
                .profile
                .iter()
                .map(|p| p * rng.random_range(-1.0..1.0))
                .collect();
            let n = euclid(&v);
            if n > 1e-8 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    fn vector_with_norm(&self, rng: &mut ChaCha8Rng, norm: f64) -> Vec<f64> {
        self.direction(rng).into_iter().map(|x| x * norm).collect()
    }

    fn vector(&self, rng: &mut ChaCha8Rng, radius: f64) -> Vec<f64> {
        let r = radius * rng.random::<f64>();
        self.vector_with_norm(rng, r)
    }

    /// A history with sup norm at most `radius`.
    fn history(&self, rng: &mut ChaCha8Rng, radius: f64) -> HistorySample {
        let split = rng.random::<f64>();
        let offset = self.vector_with_norm(rng, radius * split);
        let wave = self.vector_with_norm(rng, radius * (1.0 - split));
        HistorySample {
            terms: vec![HistoryTerm {
                offset,
                wave,
                rate: rng.random_range(0.1..3.0),
                freq: rng.random_range(0.0..5.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }],
        }
    }

    /// A perturbation of norm up to `radius` that is often nearly constant,
    /// which is where history-Lipschitz ratios peak.
    fn perturbation(&self, rng: &mut ChaCha8Rng, radius: f64) -> HistorySample {
        let shape = rng.random::<f64>().powi(3);
        let h = self.history(rng, 1.0);
        let mut term = h.terms.into_iter().next().expect("one term");
        let total = euclid(&term.offset) + euclid(&term.wave);
        let off_norm = euclid(&term.offset).max(1e-3);
        term.offset = term.offset.iter().map(|x| x / off_norm).collect();
        term.wave = term
            .wave
            .iter()
            .map(|x| x * shape / total.max(1e-12))
            .collect();
        let scale = radius * rng.random_range(0.01..1.0) / (1.0 + shape);
        HistorySample { terms: vec![term] }.scaled(scale)
    }

    fn time(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.spec.horizon * rng.random::<f64>()
    }

    fn build(&self, h: &HistorySample) -> Result<WeightedHistory, PhaseSpaceError> {
        h.sample(self.dim, self.plan.history_step, self.spec.weight.s_min())
    }

    fn bmh(&self, h: &WeightedHistory) -> f64 {
        h.bmh_norm(&self.spec.weight)
    }
}

fn fixed_integral(k: Option<&dyn DelayKernel>, t: f64, psi: &WeightedHistory) -> Vec<f64> {
    match k {
        Some(k) => k.integrate_fixed(t, &psi.view(), FIXED_PANELS),
        None => vec![0.0; psi.dim()],
    }
}

/// `(G₁, G₂)` for the neutral map by max-ratio over pairs that differ in the
/// history only (for `G₁`) or in the vector argument only (for `G₂`).
pub fn estimate_lipschitz_g(
    spec: &ProblemSpec,
    plan: &SamplePlan,
) -> Result<(LipschitzEstimate, LipschitzEstimate), HypothesisError> {
    plan.validate()?;
    let Some(g) = spec.g.as_deref() else {
        return Ok((LipschitzEstimate::zero(), LipschitzEstimate::zero()));
    };
    neutral_pairs(g, spec, plan, 1)
}

fn neutral_pairs(
    map: &dyn NeutralMap,
    spec: &ProblemSpec,
    plan: &SamplePlan,
    tag: u64,
) -> Result<(LipschitzEstimate, LipschitzEstimate), HypothesisError> {
    let sm = Sampler::new(spec, plan);
    let mut hist = LipschitzEstimate::zero();
    let mut vect = LipschitzEstimate::zero();
    let mut max_input = 0.0f64;
    for i in 0..plan.samples {
        let mut rng = sm.rng(tag, i);
        let t = sm.time(&mut rng);
        let psi_s = sm.history(&mut rng, plan.radius);
        let x = sm.vector(&mut rng, plan.radius);
        let psi = sm.build(&psi_s)?;
        let a = map.eval(t, &psi.view(), &x);
        if i % 2 == 0 {
            let d = sm.perturbation(&mut rng, plan.radius);
            let chi_s = psi_s.joined(&d);
            let chi = sm.build(&chi_s)?;
            let rhs = sm.bmh(&chi.combine(1.0, &psi, -1.0));
            max_input = max_input.max(rhs);
            if rhs < DEGENERATE {
                continue;
            }
            let b = map.eval(t, &chi.view(), &x);
            hist.offer(Witness {
                t,
                s: None,
                first: SampleInput {
                    history: psi_s,
                    vector: x.clone(),
                },
                second: SampleInput {
                    history: chi_s,
                    vector: x,
                },
                lhs: euclid_dist(&a, &b),
                rhs,
            });
        } else {
            let d = sm.vector(&mut rng, plan.radius);
            let y: Vec<f64> = x.iter().zip(&d).map(|(p, q)| p + q).collect();
            let rhs = euclid_dist(&x, &y);
            max_input = max_input.max(rhs);
            if rhs < DEGENERATE {
                continue;
            }
            let b = map.eval(t, &psi.view(), &y);
            vect.offer(Witness {
                t,
                s: None,
                first: SampleInput {
                    history: psi_s.clone(),
                    vector: x,
                },
                second: SampleInput {
                    history: psi_s,
                    vector: y,
                },
                lhs: euclid_dist(&a, &b),
                rhs,
            });
        }
    }
    if max_input < DEGENERATE {
        return Err(HypothesisError::DegenerateSamples("neutral map"));
    }
    Ok((hist, vect))
}

/// `H`: `‖h(t,s,ψ) - h(t,s,χ)‖ ≤ H‖ψ - χ‖_{BM_h}` on `kernel_samples` pairs.
pub fn estimate_lipschitz_h(
    spec: &ProblemSpec,
    plan: &SamplePlan,
) -> Result<LipschitzEstimate, HypothesisError> {
    plan.validate()?;
    let Some(h) = spec.h.as_deref() else {
        return Ok(LipschitzEstimate::zero());
    };
    kernel_pairs(h, spec, plan, 2)
}

fn kernel_pairs(
    kernel: &dyn DelayKernel,
    spec: &ProblemSpec,
    plan: &SamplePlan,
    tag: u64,
) -> Result<LipschitzEstimate, HypothesisError> {
    let sm = Sampler::new(spec, plan);
    let mut est = LipschitzEstimate::zero();
    let mut max_input = 0.0f64;
    for i in 0..plan.kernel_samples {
        let mut rng = sm.rng(tag, i);
        let t = sm.time(&mut rng);
        let s = t * rng.random::<f64>();
        let psi_s = sm.history(&mut rng, plan.radius);
        let d = sm.perturbation(&mut rng, plan.radius);
        let chi_s = psi_s.joined(&d);
        let psi = sm.build(&psi_s)?;
        let chi = sm.build(&chi_s)?;
        let rhs = sm.bmh(&chi.combine(1.0, &psi, -1.0));
        max_input = max_input.max(rhs);
        if rhs < DEGENERATE {
            continue;
        }
        let a = kernel.eval(t, s, &psi.view());
        let b = kernel.eval(t, s, &chi.view());
        est.offer(Witness {
            t,
            s: Some(s),
            first: SampleInput {
                history: psi_s,
                vector: Vec::new(),
            },
            second: SampleInput {
                history: chi_s,
                vector: Vec::new(),
            },
            lhs: euclid_dist(&a, &b),
            rhs,
        });
    }
    if max_input < DEGENERATE {
        return Err(HypothesisError::DegenerateSamples("delay kernel"));
    }
    Ok(est)
}

/// `F₁`: Lipschitz constant in `BM_h` of `ψ ↦ (-A)^β f(t, ψ, ∫₀ᵗ k(t,s,ψ)ds)`.
///
/// The second argument is the delay integral of the same history, the form in
/// which `f` enters the equation; `β = 0` gives the plain Lipschitz constant.
pub fn estimate_lipschitz_f(
    spec: &ProblemSpec,
    plan: &SamplePlan,
    beta: f64,
) -> Result<LipschitzEstimate, HypothesisError> {
    plan.validate()?;
    let Some(f) = spec.f.as_deref() else {
        return Ok(LipschitzEstimate::zero());
    };
    let k = spec.k.as_deref();
    let n = if k.is_some() {
        plan.kernel_samples
    } else {
        plan.samples
    };
    let sm = Sampler::new(spec, plan);
    let mut est = LipschitzEstimate::zero();
    let mut max_input = 0.0f64;
    for i in 0..n {
        let mut rng = sm.rng(3, i);
        let t = sm.time(&mut rng);
        let psi_s = sm.history(&mut rng, plan.radius);
        let d = sm.perturbation(&mut rng, plan.radius);
        let chi_s = psi_s.joined(&d);
        let psi = sm.build(&psi_s)?;
        let chi = sm.build(&chi_s)?;
        let rhs = sm.bmh(&chi.combine(1.0, &psi, -1.0));
        max_input = max_input.max(rhs);
        if rhs < DEGENERATE {
            continue;
        }
        let vp = fixed_integral(k, t, &psi);
        let vc = fixed_integral(k, t, &chi);
        let a = f.eval(t, &psi.view(), &vp);
        let b = f.eval(t, &chi.view(), &vc);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
        let lhs = euclid(&spec.generator.fractional_power(&diff, beta)?);
        est.offer(Witness {
            t,
            s: None,
            first: SampleInput {
                history: psi_s,
                vector: vp,
            },
            second: SampleInput {
                history: chi_s,
                vector: vc,
            },
            lhs,
            rhs,
        });
    }
    if max_input < DEGENERATE {
        return Err(HypothesisError::DegenerateSamples("forcing"));
    }
    Ok(est)
}

/// Growth of `f`: the ladder of `(1/k)∫₀ᵇ α_k` and its tail minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthEstimate {
    pub ladder: Vec<f64>,
    /// `(1/k)∫₀ᵇ α_k(s) ds` per rung.
    pub normalized: Vec<f64>,
    /// Minimum over the top half of the ladder, `∞` if the tail keeps growing.
    pub mu: f64,
}

/// `μ̂` with `α_k(t)` the sampled sup of `‖f(t,ψ,x)‖` over `‖ψ‖_C, ‖x‖ ≤ k`.
pub fn growth_mu(
    spec: &ProblemSpec,
    b: f64,
    plan: &SamplePlan,
) -> Result<GrowthEstimate, HypothesisError> {
    plan.validate()?;
    let ladder = plan.ladder();
    let Some(f) = spec.f.as_deref() else {
        let normalized = vec![0.0; ladder.len()];
        return Ok(GrowthEstimate {
            ladder,
            normalized,
            mu: 0.0,
        });
    };
    let sm = Sampler::new(spec, plan);
    let nt = plan.time_nodes;
    let per = (plan.samples / (ladder.len() * nt)).max(8);
    let dt = b / (nt - 1) as f64;
    let mut normalized = Vec::with_capacity(ladder.len());
    for (j, &k) in ladder.iter().enumerate() {
        let mut integral = 0.0;
        for it in 0..nt {
            let t = it as f64 * dt;
            let mut alpha = 0.0f64;
            for m in 0..per {
                let mut rng = sm.rng(4, (j * nt + it) * per + m);
                let psi_s = sm.history(&mut rng, k);
                // half the draws sit on the sphere ‖x‖ = k
                let x = if m % 2 == 0 {
                    sm.vector_with_norm(&mut rng, k)
                } else {
                    sm.vector(&mut rng, k)
                };
                let psi = sm.build(&psi_s)?;
                let v = f.eval(t, &psi.view(), &x);
                alpha = alpha.max(euclid(&v));
            }
            let w = if it == 0 || it == nt - 1 { 0.5 } else { 1.0 };
            integral += w * dt * alpha;
        }
        normalized.push(integral / k);
    }
    let tail = &normalized[ladder.len() / 2..];
    let first = tail[0];
    let last = *tail.last().expect("non-empty tail");
    let mu = if !last.is_finite() || last > 1.5 * first + 1e-300 {
        f64::INFINITY
    } else {
        tail.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(GrowthEstimate {
        ladder,
        normalized,
        mu,
    })
}

/// Growth ratios `λ_k` per impulse and the common Lipschitz constant `L_I`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpulseEstimate {
    pub lambda_k: Vec<f64>,
    pub lipschitz: LipschitzEstimate,
}

/// `λ̂_k = min over the ladder tail of sup_{‖x‖≤σ}‖I_k(x)‖/σ`, and the max
/// difference ratio over pairs at scales from `1e-3` to `10`.
pub fn impulse_growth(
    spec: &ProblemSpec,
    plan: &SamplePlan,
) -> Result<ImpulseEstimate, HypothesisError> {
    plan.validate()?;
    let sm = Sampler::new(spec, plan);
    let ladder = plan.ladder();
    let per = (plan.samples / ladder.len()).max(8);
    let mut lambda_k = Vec::with_capacity(spec.impulses.len());
    let mut lipschitz = LipschitzEstimate::zero();
    for (idx, imp) in spec.impulses.iter().enumerate() {
        let mut ratios = Vec::with_capacity(ladder.len());
        for (j, &sigma) in ladder.iter().enumerate() {
            let mut sup = 0.0f64;
            for m in 0..per {
                let mut rng = sm.rng(5 + 16 * idx as u64, j * per + m);
                let x = if m % 2 == 0 {
                    sm.vector_with_norm(&mut rng, sigma)
                } else {
                    sm.vector(&mut rng, sigma)
                };
                sup = sup.max(euclid(&imp.map.jump(&x)));
            }
            ratios.push(sup / sigma);
        }
        let tail = &ratios[ladder.len() / 2..];
        lambda_k.push(tail.iter().cloned().fold(f64::INFINITY, f64::min));
        for m in 0..plan.samples {
            let mut rng = sm.rng(6 + 16 * idx as u64, m);
            let r = 10f64.powf(rng.random_range(-3.0..1.0));
            let x = sm.vector_with_norm(&mut rng, r);
            let dr = r * 10f64.powf(rng.random_range(-6.0..0.0));
            let d = sm.vector_with_norm(&mut rng, dr);
            let y: Vec<f64> = x.iter().zip(&d).map(|(p, q)| p + q).collect();
            let rhs = euclid_dist(&x, &y);
            if rhs < DEGENERATE {
                continue;
            }
            let lhs = euclid_dist(&imp.map.jump(&x), &imp.map.jump(&y));
            lipschitz.offer(Witness {
                t: imp.time,
                s: None,
                first: SampleInput {
                    history: HistorySample::default(),
                    vector: x,
                },
                second: SampleInput {
                    history: HistorySample::default(),
                    vector: y,
                },
                lhs,
                rhs,
            });
        }
    }
    Ok(ImpulseEstimate {
        lambda_k,
        lipschitz,
    })
}

/// `p̄` (or `q̄`): sup of `‖∫₀ᵗ h(t,s,ψ)ds‖ / ‖ψ‖_C` with `‖·‖_C` the window sup norm.
pub fn delay_integral_bound(
    spec: &ProblemSpec,
    kernel: Option<&dyn DelayKernel>,
    plan: &SamplePlan,
    tag: u64,
) -> Result<LipschitzEstimate, HypothesisError> {
    plan.validate()?;
    let Some(kernel) = kernel else {
        return Ok(LipschitzEstimate::zero());
    };
    let sm = Sampler::new(spec, plan);
    let mut est = LipschitzEstimate::zero();
    for i in 0..plan.kernel_samples {
        let mut rng = sm.rng(tag, i);
        // the last sample sits at the horizon, where the integral is longest
        let t = if i + 1 == plan.kernel_samples {
            spec.horizon
        } else {
            sm.time(&mut rng)
        };
        let psi_s = sm.history(&mut rng, plan.radius);
        let psi = sm.build(&psi_s)?;
        let rhs = psi.view().sup_norm();
        if rhs < DEGENERATE {
            continue;
        }
        let lhs = euclid(&kernel.integrate_fixed(t, &psi.view(), FIXED_PANELS));
        est.offer(Witness {
            t,
            s: None,
            first: SampleInput {
                history: psi_s,
                vector: Vec::new(),
            },
            second: SampleInput {
                history: HistorySample::default(),
                vector: Vec::new(),
            },
            lhs,
            rhs,
        });
    }
    Ok(est)
}

/// Every constant of the hypotheses. `None` means not estimated.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConstantEstimates {
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub h: Option<f64>,
    pub f1: Option<f64>,
    pub beta: Option<f64>,
    pub m: Option<f64>,
    pub m_bar: Option<f64>,
    pub delta: Option<f64>,
    pub kappa: Option<f64>,
    pub c_frac: Option<f64>,
    pub lambda_decay: Option<f64>,
    pub p_bar: Option<f64>,
    pub q_bar: Option<f64>,
    pub mu: Option<f64>,
    pub lambda_k: Option<Vec<f64>>,
    pub impulse_lipschitz: Option<f64>,
    pub l: Option<f64>,
    pub q: Option<f64>,
    pub q_prime: Option<f64>,
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64, HypothesisError> {
    v.ok_or(HypothesisError::MissingConstant(name))
}

impl ConstantEstimates {
    /// `ω̄ = max{1, p̄, q̄}`.
    pub fn omega_bar(&self) -> Result<f64, HypothesisError> {
        Ok(1f64
            .max(need(self.p_bar, "p_bar")?)
            .max(need(self.q_bar, "q_bar")?))
    }

    /// `K = l(G₁ + b G₂ H)`.
    pub fn contraction_constant(&self, b: f64) -> Result<f64, HypothesisError> {
        let l = need(self.l, "l")?;
        let g1 = need(self.g1, "g1")?;
        let g2 = need(self.g2, "g2")?;
        let h = need(self.h, "h")?;
        Ok(l * (g1 + b * g2 * h))
    }

    /// Replaces estimates by declared values where given.
    pub fn with_overrides(mut self, o: &ConstantOverrides) -> Self {
        let set = |slot: &mut Option<f64>, v: Option<f64>| {
            if v.is_some() {
                *slot = v;
            }
        };
        set(&mut self.g1, o.g1);
        set(&mut self.g2, o.g2);
        set(&mut self.h, o.h);
        set(&mut self.f1, o.f1);
        set(&mut self.p_bar, o.p_bar);
        set(&mut self.q_bar, o.q_bar);
        set(&mut self.mu, o.mu);
        set(&mut self.impulse_lipschitz, o.impulse_lipschitz);
        if o.impulse_growth.is_some() {
            self.lambda_k = o.impulse_growth.clone();
        }
        self
    }
}

/// Constants asserted in the configuration. They replace the estimates in the
/// smallness conditions and are checked against the samples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantOverrides {
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub h: Option<f64>,
    pub f1: Option<f64>,
    pub p_bar: Option<f64>,
    pub q_bar: Option<f64>,
    pub mu: Option<f64>,
    pub impulse_lipschitz: Option<f64>,
    pub impulse_growth: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition {
    pub value: f64,
    /// `1 - value`.
    pub margin: f64,
    pub pass: bool,
}

impl Condition {
    fn new(value: f64) -> Self {
        Condition {
            value,
            margin: 1.0 - value,
            pass: value < 1.0,
        }
    }
}

/// The contraction condition `K < 1` and the growth condition
/// `(G₁+G₂)ω̄l + M M̄ ω̄ l μ + M Σλ_k < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExistenceConditions {
    pub contraction: Condition,
    pub growth: Condition,
}

/// Evaluates both smallness conditions with a fixed order of operations.
pub fn existence_conditions(
    c: &ConstantEstimates,
    b: f64,
) -> Result<ExistenceConditions, HypothesisError> {
    let k = c.contraction_constant(b)?;
    let l = need(c.l, "l")?;
    let g1 = need(c.g1, "g1")?;
    let g2 = need(c.g2, "g2")?;
    let m = need(c.m, "m")?;
    let m_bar = need(c.m_bar, "m_bar")?;
    let mu = need(c.mu, "mu")?;
    let omega = c.omega_bar()?;
    let lambda_k = c
        .lambda_k
        .as_ref()
        .ok_or(HypothesisError::MissingConstant("lambda_k"))?;
    let sum_lambda: f64 = lambda_k.iter().sum();
    let value = (g1 + g2) * omega * l + m * m_bar * omega * l * mu + m * sum_lambda;
    Ok(ExistenceConditions {
        contraction: Condition::new(k),
        growth: Condition::new(value),
    })
}

/// Result of the integrability check of the convolution integrand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BochnerReport {
    pub pairs: usize,
    /// Largest `‖integrand‖ / majorant` over the grid pairs.
    pub max_ratio: f64,
    /// `∫₀ᵗ` of the majorant at each solution node, `C t^β/β (F₁ sup‖x_s‖ + c₂)` scaled.
    pub majorant_integrals: Vec<f64>,
    pub c2: f64,
}

/// Checks `‖S'(t-s) B f(s, x_s, ∫k)‖ ≤ (M̄λ/(λ-δ)) C_{1-β} (t-s)^{β-1} (F₁‖x_s‖_{BM_h} + c₂)`
/// at every grid pair `s < t` of a solved trajectory.
///
/// `c₂ = sup_t ‖(-A)^β f(t, 0, 0)‖` over the grid.
pub fn bochner_check(
    spec: &ProblemSpec,
    x: &Trajectory,
    beta: f64,
    f1: f64,
    c_frac: f64,
    m_bar: f64,
    lambda: LambdaMode,
) -> Result<BochnerReport, HypothesisError> {
    let n = x.steps();
    let dt = x.step();
    let dim = x.dim();
    let gen = &spec.generator;
    // M̄λ/(λ-δ) with δ = 0 for the diagonal generators
    let factor = m_bar;
    let Some(f) = spec.f.as_deref() else {
        return Ok(BochnerReport {
            pairs: 0,
            max_ratio: 0.0,
            majorant_integrals: vec![0.0; n + 1],
            c2: 0.0,
        });
    };
    let zero_hist = WeightedHistory::from_fn(dt, spec.weight.s_min(), dim, |_| vec![0.0; dim])?;
    let zero = vec![0.0; dim];
    let mut c2 = 0.0f64;
    for i in 0..=n {
        let v = f.eval(x.time(i), &zero_hist.view(), &zero);
        c2 = c2.max(euclid(&gen.fractional_power(&v, beta)?));
    }
    let v_along = match spec.k.as_deref() {
        Some(k) => k.integrate_along(x),
        None => vec![zero.clone(); n + 1],
    };
    let mut fs = Vec::with_capacity(n + 1);
    let mut norms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let seg = x.segment(i, false);
        let mut v = f.eval(x.time(i), &seg, &v_along[i]);
        if let LambdaMode::Finite(l) = lambda {
            v = gen.b_lambda(&v, l)?;
        }
        fs.push(v);
        norms.push(seg.bmh_norm(&spec.weight));
    }
    let mut max_ratio = 0.0f64;
    let mut pairs = 0;
    for i in 1..=n {
        let t = x.time(i);
        for j in 0..i {
            let s = x.time(j);
            let lhs = euclid(&gen.apply_semigroup(&fs[j], t - s)?);
            let rhs = factor * c_frac * (t - s).powf(beta - 1.0) * (f1 * norms[j] + c2);
            pairs += 1;
            if lhs > rhs * (1.0 + 1e-12) + 1e-14 {
                return Err(HypothesisError::DominationViolated { t, s, lhs, rhs });
            }
            if rhs > 0.0 {
                max_ratio = max_ratio.max(lhs / rhs);
            }
        }
    }
    let mut running = 0.0f64;
    let majorant_integrals = (0..=n)
        .map(|i| {
            running = running.max(norms[i]);
            let t = x.time(i);
            factor * c_frac * t.powf(beta) / beta * (f1 * running + c2)
        })
        .collect();
    Ok(BochnerReport {
        pairs,
        max_ratio,
        majorant_integrals,
        c2,
    })
}

/// Outcome for one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Status {
    VerifiedOnSamples,
    Violated { witness: Box<ViolationWitness> },
    NotCheckable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ViolationWitness {
    Pair(Witness),
    Point { t: f64, s: f64, lhs: f64, rhs: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisEntry {
    pub name: &'static str,
    pub statement: &'static str,
    #[serde(flatten)]
    pub status: Status,
    pub estimate: Option<f64>,
    pub declared: Option<f64>,
}

/// Options of the full check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsOptions {
    /// Exponent of the analytic smoothing bound.
    pub alpha: f64,
    /// Fractional power applied to the forcing.
    pub beta: f64,
    /// Decay rate in the smoothing bound; defaults to half the first rate.
    pub lambda_decay: Option<f64>,
    /// Radius `q` of the invariant ball.
    pub ball_radius: f64,
    pub declared: ConstantOverrides,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            alpha: 0.5,
            beta: 0.5,
            lambda_decay: None,
            ball_radius: 1.0,
            declared: ConstantOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub note: &'static str,
    pub constants: ConstantEstimates,
    pub contraction_constant: Option<f64>,
    pub hypotheses: Vec<HypothesisEntry>,
    pub conditions: Option<ExistenceConditions>,
    pub conditions_error: Option<String>,
    pub growth: Option<GrowthEstimate>,
    pub bochner: Option<BochnerReport>,
    /// "consistent with hypotheses" when every status is verified and both conditions pass.
    pub verdict: &'static str,
}

fn lipschitz_entry(
    name: &'static str,
    statement: &'static str,
    est: Result<LipschitzEstimate, HypothesisError>,
    declared: Option<f64>,
) -> (HypothesisEntry, Option<f64>) {
    let (status, estimate) = match est {
        Err(e) => (
            Status::NotCheckable {
                reason: e.to_string(),
            },
            None,
        ),
        Ok(est) => {
            let bad = !est.value.is_finite()
                || declared.is_some_and(|d| est.value > d * (1.0 + DECLARED_RTOL) + DEGENERATE);
            let status = match (bad, est.witness) {
                (true, Some(w)) => Status::Violated {
                    witness: Box::new(ViolationWitness::Pair(w)),
                },
                _ => Status::VerifiedOnSamples,
            };
            (status, Some(est.value))
        }
    };
    (
        HypothesisEntry {
            name,
            statement,
            status,
            estimate,
            declared,
        },
        estimate,
    )
}

/// Estimates every constant, checks each hypothesis on samples and evaluates
/// the smallness conditions. A solve with `solve_opts` feeds the integrability check.
pub fn check_hypotheses(
    spec: &ProblemSpec,
    plan: &SamplePlan,
    diag: &DiagnosticsOptions,
    solve_opts: &SolveOptions,
) -> Result<HypothesisReport, HypothesisError> {
    plan.validate()?;
    let b = spec.horizon;
    let dec = &diag.declared;
    let mut entries = Vec::new();
    let mut c = ConstantEstimates {
        beta: Some(diag.beta),
        l: Some(spec.weight.l()),
        q: Some(diag.ball_radius),
        ..Default::default()
    };

    match estimate_lipschitz_g(spec, plan) {
        Ok((g1, g2)) => {
            let (e, v) = lipschitz_entry(
                "neutral_history_lipschitz",
                "|g(t,psi,x) - g(t,chi,x)| <= G1 |psi - chi|_BMh",
                Ok(g1),
                dec.g1,
            );
            entries.push(e);
            c.g1 = v;
            let (e, v) = lipschitz_entry(
                "neutral_state_lipschitz",
                "|g(t,psi,x) - g(t,psi,y)| <= G2 |x - y|",
                Ok(g2),
                dec.g2,
            );
            entries.push(e);
            c.g2 = v;
        }
        Err(e) => {
            for name in ["neutral_history_lipschitz", "neutral_state_lipschitz"] {
                entries.push(HypothesisEntry {
                    name,
                    statement: "g Lipschitz in both arguments",
                    status: Status::NotCheckable {
                        reason: e.to_string(),
                    },
                    estimate: None,
                    declared: None,
                });
            }
        }
    }
    let (e, v) = lipschitz_entry(
        "delay_kernel_lipschitz",
        "|h(t,s,psi) - h(t,s,chi)| <= H |psi - chi|_BMh",
        estimate_lipschitz_h(spec, plan),
        dec.h,
    );
    entries.push(e);
    c.h = v;
    let (e, v) = lipschitz_entry(
        "forcing_fractional_lipschitz",
        "|(-A)^beta (f(t,psi,.) - f(t,chi,.))| <= F1 |psi - chi|_BMh",
        estimate_lipschitz_f(spec, plan, diag.beta),
        dec.f1,
    );
    entries.push(e);
    c.f1 = v;

    let lambda_decay = diag
        .lambda_decay
        .unwrap_or(0.5 * spec.generator.first_rate());
    c.lambda_decay = Some(lambda_decay);
    match spec.generator.bounds(diag.alpha, lambda_decay, b) {
        Ok(bd) => {
            c.m = Some(bd.m);
            c.m_bar = Some(bd.m_bar);
            c.delta = Some(bd.delta);
            c.kappa = Some(bd.kappa);
            c.c_frac = Some(bd.c_frac);
            entries.push(HypothesisEntry {
                name: "analytic_smoothing_bound",
                statement: "|(-A)^(1-alpha) S'(t)| <= C t^(alpha-1) e^(-lambda t)",
                status: Status::VerifiedOnSamples,
                estimate: Some(bd.c_frac),
                declared: None,
            });
        }
        Err(e) => entries.push(HypothesisEntry {
            name: "analytic_smoothing_bound",
            statement: "|(-A)^(1-alpha) S'(t)| <= C t^(alpha-1) e^(-lambda t)",
            status: Status::NotCheckable {
                reason: e.to_string(),
            },
            estimate: None,
            declared: None,
        }),
    }

    let (e, v) = lipschitz_entry(
        "neutral_integral_bound",
        "|int_0^t h(t,s,psi) ds| <= p(t) |psi|_C",
        delay_integral_bound(spec, spec.h.as_deref(), plan, 7),
        dec.p_bar,
    );
    entries.push(e);
    c.p_bar = v;
    let (e, v) = lipschitz_entry(
        "forcing_integral_bound",
        "|int_0^t k(t,s,psi) ds| <= q(t) |psi|_C",
        delay_integral_bound(spec, spec.k.as_deref(), plan, 8),
        dec.q_bar,
    );
    entries.push(e);
    c.q_bar = v;

    let growth = growth_mu(spec, b, plan)?;
    c.mu = Some(growth.mu);
    entries.push(HypothesisEntry {
        name: "forcing_growth",
        statement: "liminf (1/k) int_0^b alpha_k = mu < infinity",
        status: if growth.mu.is_finite() && dec.mu.is_none_or(|d| growth.mu <= d) {
            Status::VerifiedOnSamples
        } else {
            Status::NotCheckable {
                reason: format!(
                    "normalized growth ladder {:?} does not settle",
                    growth.normalized
                ),
            }
        },
        estimate: Some(growth.mu),
        declared: dec.mu,
    });

    let imp = impulse_growth(spec, plan)?;
    c.lambda_k = Some(imp.lambda_k.clone());
    let (e, v) = lipschitz_entry(
        "impulse_lipschitz",
        "|I_k(x) - I_k(y)| <= L_I |x - y|",
        Ok(imp.lipschitz),
        dec.impulse_lipschitz,
    );
    entries.push(e);
    c.impulse_lipschitz = v;
    let growth_ok = imp.lambda_k.iter().all(|v| v.is_finite());
    entries.push(HypothesisEntry {
        name: "impulse_growth",
        statement: "liminf L_k(sigma)/sigma = lambda_k < infinity",
        status: if growth_ok {
            Status::VerifiedOnSamples
        } else {
            Status::NotCheckable {
                reason: "impulse growth ratio is not finite".into(),
            }
        },
        estimate: Some(imp.lambda_k.iter().sum()),
        declared: None,
    });
    let gap = spec
        .impulses
        .windows(2)
        .map(|w| w[1].time - w[0].time)
        .fold(f64::INFINITY, f64::min);
    entries.push(HypothesisEntry {
        name: "impulse_separation",
        statement: "inf (t_(k+1) - t_k) > 0",
        status: Status::VerifiedOnSamples,
        estimate: gap.is_finite().then_some(gap),
        declared: None,
    });

    // ball radii
    let hist = spec.phi.sample(plan.history_step, spec.weight.s_min())?;
    if let Some(m) = c.m {
        let q = diag.ball_radius;
        c.q_prime =
            Some(spec.weight.l() * (q + m * euclid(hist.head())) + hist.bmh_norm(&spec.weight));
    }

    let bochner = match (c.f1, c.c_frac, c.m_bar) {
        (Some(f1), Some(cf), Some(mb)) => {
            let beta_bound = spec
                .generator
                .analytic_bound(diag.beta, lambda_decay, &log_grid(b))
                .unwrap_or(cf);
            match picard_solve(spec.clone(), solve_opts.clone()) {
                Ok(sol) => match bochner_check(
                    spec,
                    &sol.trajectory,
                    diag.beta,
                    f1,
                    beta_bound,
                    mb,
                    solve_opts.lambda,
                ) {
                    Ok(r) => {
                        entries.push(HypothesisEntry {
                            name: "convolution_integrability",
                            statement: "|S'(t-s) B f| <= C (t-s)^(beta-1) (F1 |x_s|_BMh + c2)",
                            status: Status::VerifiedOnSamples,
                            estimate: Some(r.max_ratio),
                            declared: None,
                        });
                        Some(r)
                    }
                    Err(HypothesisError::DominationViolated { t, s, lhs, rhs }) => {
                        entries.push(HypothesisEntry {
                            name: "convolution_integrability",
                            statement: "|S'(t-s) B f| <= C (t-s)^(beta-1) (F1 |x_s|_BMh + c2)",
                            status: Status::Violated {
                                witness: Box::new(ViolationWitness::Point { t, s, lhs, rhs }),
                            },
                            estimate: None,
                            declared: None,
                        });
                        None
                    }
                    Err(e) => return Err(e),
                },
                Err(e) => {
                    entries.push(HypothesisEntry {
                        name: "convolution_integrability",
                        statement: "|S'(t-s) B f| <= C (t-s)^(beta-1) (F1 |x_s|_BMh + c2)",
                        status: Status::NotCheckable {
                            reason: format!("solve failed: {e}"),
                        },
                        estimate: None,
                        declared: None,
                    });
                    None
                }
            }
        }
        _ => None,
    };

    let effective = c.clone().with_overrides(dec);
    let contraction_constant = effective.contraction_constant(b).ok();
    let (conditions, conditions_error) = match existence_conditions(&effective, b) {
        Ok(tc) => (Some(tc), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let all_verified = entries
        .iter()
        .all(|e| e.status == Status::VerifiedOnSamples);
    let verdict = match conditions {
        Some(tc) if all_verified && tc.contraction.pass && tc.growth.pass => {
            "consistent with hypotheses"
        }
        Some(_) if all_verified => "hypotheses hold on samples but a smallness condition fails",
        _ => "not consistent with hypotheses on samples",
    };
    Ok(HypothesisReport {
        note: "constants are empirical lower bounds from seeded samples, not proofs",
        constants: c,
        contraction_constant,
        hypotheses: entries,
        conditions,
        conditions_error,
        growth: Some(growth),
        bochner,
        verdict,
    })
}

fn log_grid(horizon: f64) -> Vec<f64> {
    (0..=400)
        .map(|i| 1e-6 * (horizon / 1e-6).powf(i as f64 / 400.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{HistoryView, WeightFunction};
    use crate::semigroup::DiagonalGenerator;
    use crate::solver::{ImpulseFn, InitialHistory, KernelFn, NeutralFn, PlantedContraction};
    use proptest::prelude::*;

    fn base(dim: usize) -> ProblemSpec {
        ProblemSpec::new(
            DiagonalGenerator::scalar((1..=dim).map(|n| n as f64).collect()).unwrap(),
            WeightFunction::exponential(2.0).unwrap(),
            1.0,
            InitialHistory::constant(vec![1.0; dim]),
        )
    }

    fn plan() -> SamplePlan {
        SamplePlan {
            kernel_samples: 400,
            ..SamplePlan::default()
        }
    }

    fn sample_constants() -> ConstantEstimates {
        ConstantEstimates {
            g1: Some(0.3),
            g2: Some(0.5),
            h: Some(0.4),
            l: Some(0.5),
            m: Some(1.0),
            m_bar: Some(1.0),
            mu: Some(0.1),
            p_bar: Some(0.5),
            q_bar: Some(1.5),
            lambda_k: Some(vec![0.1, 0.05]),
            ..Default::default()
        }
    }

    #[test]
    fn zero_neutral_map_gives_zero_constants() {
        let spec = base(1).with_neutral(NeutralFn(|_t: f64, _: &HistoryView<'_>, _: &[f64]| {
            vec![0.0]
        }));
        let (g1, g2) = estimate_lipschitz_g(&spec, &plan()).unwrap();
        assert_eq!((g1.value, g2.value), (0.0, 0.0));
    }

    #[test]
    fn state_only_neutral_map() {
        let spec = base(1).with_neutral(NeutralFn(|_t: f64, _: &HistoryView<'_>, v: &[f64]| {
            vec![0.5 * v[0]]
        }));
        let (g1, g2) = estimate_lipschitz_g(&spec, &plan()).unwrap();
        assert_eq!(g1.value, 0.0);
        assert!((g2.value - 0.5).abs() <= 0.025, "{}", g2.value);
    }

    #[test]
    fn planted_neutral_constants_are_recovered() {
        let p = PlantedContraction::new(0.3, 0.5, 0.4);
        let spec = p.to_problem().unwrap();
        let (g1, g2) = estimate_lipschitz_g(&spec, &plan()).unwrap();
        assert!((g1.value - 0.3).abs() <= 0.015, "G1 {}", g1.value);
        assert!((g2.value - 0.5).abs() <= 0.025, "G2 {}", g2.value);
        let h = estimate_lipschitz_h(&spec, &plan()).unwrap();
        assert!((h.value - 0.4).abs() <= 0.02, "H {}", h.value);
        assert!(g1.value <= 0.3 * (1.0 + 1e-9));
    }

    #[test]
    fn forcing_lipschitz_with_and_without_power() {
        let l = 0.5;
        let spec = base(2).with_forcing(NeutralFn(
            move |_t: f64, psi: &HistoryView<'_>, _: &[f64]| {
                psi.head().iter().map(|x| 0.2 * l * x).collect()
            },
        ));
        let plain = estimate_lipschitz_f(&spec, &plan(), 0.0).unwrap();
        assert!((plain.value - 0.2).abs() <= 0.01, "{}", plain.value);
        // (-A)^β with rates 1 and 2 stretches the second component by 2^β
        let half = estimate_lipschitz_f(&spec, &plan(), 0.5).unwrap();
        assert!(half.value > plain.value && half.value <= 0.2 * 2f64.sqrt() * (1.0 + 1e-9));
        assert!(half.value >= 0.95 * 0.2 * 2f64.sqrt());
    }

    #[test]
    fn growth_of_bounded_and_linear_forcing() {
        let bounded = base(1).with_forcing(NeutralFn(|t: f64, _: &HistoryView<'_>, _: &[f64]| {
            vec![t.cos()]
        }));
        let g = growth_mu(&bounded, 1.0, &plan()).unwrap();
        assert!(g.mu < 2e-3, "{}", g.mu);
        let linear = base(1).with_forcing(NeutralFn(|_t: f64, _: &HistoryView<'_>, x: &[f64]| {
            x.to_vec()
        }));
        let g = growth_mu(&linear, 1.0, &plan()).unwrap();
        assert!((g.mu - 1.0).abs() < 1e-12, "{}", g.mu);
        let quadratic =
            base(1).with_forcing(NeutralFn(|_t: f64, _: &HistoryView<'_>, x: &[f64]| {
                vec![x[0] * x[0]]
            }));
        assert_eq!(
            growth_mu(&quadratic, 1.0, &plan()).unwrap().mu,
            f64::INFINITY
        );
    }

    #[test]
    fn impulse_estimates() {
        let zero = base(1).with_impulse(0.5, ImpulseFn(|_: &[f64]| vec![0.0]));
        let e = impulse_growth(&zero, &plan()).unwrap();
        assert_eq!(e.lambda_k, vec![0.0]);
        assert_eq!(e.lipschitz.value, 0.0);
        let lin = base(1).with_impulse(0.5, ImpulseFn(|x: &[f64]| vec![0.2 * x[0]]));
        let e = impulse_growth(&lin, &plan()).unwrap();
        assert!((e.lambda_k[0] - 0.2).abs() < 1e-12);
        assert!((e.lipschitz.value - 0.2).abs() < 1e-9);
        let tanh = base(1).with_impulse(0.5, ImpulseFn(|x: &[f64]| vec![x[0].tanh()]));
        let e = impulse_growth(&tanh, &plan()).unwrap();
        assert!(e.lambda_k[0] < 0.05, "{}", e.lambda_k[0]);
        assert!(
            (e.lipschitz.value - 1.0).abs() <= 0.05,
            "{}",
            e.lipschitz.value
        );
    }

    #[test]
    fn contraction_condition_examples() {
        let c = sample_constants();
        let tc = existence_conditions(&c, 1.0).unwrap();
        assert_eq!(tc.contraction.value, 0.5 * (0.3 + 1.0 * 0.5 * 0.4));
        assert_eq!(tc.contraction.value, 0.25);
        assert!(tc.contraction.pass);
        let c2 = ConstantEstimates { g1: Some(2.0), ..c };
        let tc = existence_conditions(&c2, 1.0).unwrap();
        assert_eq!(tc.contraction.value, 0.5 * (2.0 + 1.0 * 0.5 * 0.4));
        assert!(!tc.contraction.pass);
    }

    #[test]
    fn missing_constant_is_named() {
        let c = ConstantEstimates {
            mu: None,
            ..sample_constants()
        };
        assert_eq!(
            existence_conditions(&c, 1.0).unwrap_err(),
            HypothesisError::MissingConstant("mu")
        );
    }

    #[test]
    fn degenerate_plan_is_rejected() {
        let small = SamplePlan {
            samples: 10,
            ..SamplePlan::default()
        };
        assert!(matches!(
            estimate_lipschitz_g(&base(1), &small),
            Err(HypothesisError::InvalidPlan(_))
        ));
    }

    #[test]
    fn delay_integral_bound_of_constant_kernel() {
        // ∫₀ᵗ ψ(0) ds = t ψ(0), so the ratio to the sup norm peaks at t = b
        let spec = base(1).with_neutral_kernel(KernelFn::time_independent(
            |_t: f64, _s: f64, psi: &HistoryView<'_>| psi.head().to_vec(),
        ));
        let p = delay_integral_bound(&spec, spec.h.as_deref(), &plan(), 7).unwrap();
        assert!(p.value <= 1.0 + 1e-12 && p.value > 0.5, "{}", p.value);
    }

    #[test]
    fn bochner_majorant_for_half_power() {
        let spec = base(1).with_forcing(NeutralFn(|_t: f64, _: &HistoryView<'_>, _: &[f64]| {
            vec![0.5]
        }));
        let sol = picard_solve(spec.clone(), SolveOptions::default()).unwrap();
        let r = bochner_check(
            &spec,
            &sol.trajectory,
            0.5,
            0.0,
            1.0,
            1.0,
            LambdaMode::Analytic,
        )
        .unwrap();
        assert!((r.c2 - 0.5).abs() < 1e-15);
        // ∫₀¹ (1-s)^{-1/2} ds = 2
        assert!((r.majorant_integrals.last().unwrap() - 2.0 * 0.5).abs() < 1e-12);
        assert!(r.max_ratio <= 1.0);
        let none = bochner_check(
            &base(1),
            &sol.trajectory,
            0.5,
            0.0,
            1.0,
            1.0,
            LambdaMode::Analytic,
        )
        .unwrap();
        assert_eq!(none.pairs, 0);
    }

    #[test]
    fn bochner_detects_understated_constant() {
        let spec = base(1).with_forcing(NeutralFn(|_t: f64, psi: &HistoryView<'_>, _: &[f64]| {
            vec![10.0 * psi.head()[0]]
        }));
        let sol = picard_solve(spec.clone(), SolveOptions::default()).unwrap();
        let err = bochner_check(
            &spec,
            &sol.trajectory,
            0.5,
            0.01,
            0.1,
            1.0,
            LambdaMode::Analytic,
        )
        .unwrap_err();
        assert!(matches!(err, HypothesisError::DominationViolated { .. }));
    }

    #[test]
    fn full_check_on_planted_problem() {
        let spec = PlantedContraction::new(0.3, 0.5, 0.4).to_problem().unwrap();
        let plan = SamplePlan {
            kernel_samples: 50,
            ..SamplePlan::default()
        };
        let r = check_hypotheses(
            &spec,
            &plan,
            &DiagnosticsOptions::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(r.conditions.is_some());
        let k = r.contraction_constant.unwrap();
        assert!(k <= 0.25 * (1.0 + 1e-9) && k > 0.2, "{k}");
        let declared = DiagnosticsOptions {
            declared: ConstantOverrides {
                g1: Some(0.1),
                ..Default::default()
            },
            ..DiagnosticsOptions::default()
        };
        let r = check_hypotheses(&spec, &plan, &declared, &SolveOptions::default()).unwrap();
        let g1 = r
            .hypotheses
            .iter()
            .find(|e| e.name == "neutral_history_lipschitz")
            .unwrap();
        assert!(matches!(g1.status, Status::Violated { .. }));
    }

    proptest! {
        #[test]
        fn contraction_constant_is_monotone(
            l in 0.0f64..2.0, g1 in 0.0f64..2.0, g2 in 0.0f64..2.0, h in 0.0f64..2.0,
            b in 0.0f64..3.0, bump in 0.0f64..1.0, which in 0usize..5,
        ) {
            let c = ConstantEstimates { l: Some(l), g1: Some(g1), g2: Some(g2), h: Some(h), ..Default::default() };
            let k0 = c.contraction_constant(b).unwrap();
            let mut d = c.clone();
            let mut b2 = b;
            match which {
                0 => d.l = Some(l + bump),
                1 => d.g1 = Some(g1 + bump),
                2 => d.g2 = Some(g2 + bump),
                3 => d.h = Some(h + bump),
                _ => b2 = b + bump,
            }
            prop_assert!(d.contraction_constant(b2).unwrap() >= k0);
        }

        #[test]
        fn conditions_are_pure(g1 in 0.0f64..1.0, mu in 0.0f64..1.0) {
            let c = ConstantEstimates { g1: Some(g1), mu: Some(mu), ..sample_constants() };
            let a = existence_conditions(&c, 1.0).unwrap();
            let b = existence_conditions(&c.clone(), 1.0).unwrap();
            prop_assert_eq!(a.contraction.value.to_bits(), b.contraction.value.to_bits());
            prop_assert_eq!(a.growth.value.to_bits(), b.growth.value.to_bits());
        }
    }

    #[test]
    fn more_samples_never_lower_estimates() {
        let spec = base(1).with_neutral(NeutralFn(|_t: f64, psi: &HistoryView<'_>, v: &[f64]| {
            vec![(psi.head()[0]).sin() * 0.2 + 0.3 * v[0].tanh()]
        }));
        let small = estimate_lipschitz_g(
            &spec,
            &SamplePlan {
                samples: 1000,
                ..plan()
            },
        )
        .unwrap();
        let large = estimate_lipschitz_g(
            &spec,
            &SamplePlan {
                samples: 3000,
                ..plan()
            },
        )
        .unwrap();
        assert!(large.0.value >= small.0.value);
        assert!(large.1.value >= small.1.value);
    }
}
