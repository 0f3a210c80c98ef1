//! Quadrature helpers shared by the weight, semigroup and heat modules.

/// Romberg integration of `f` over `[a, b]`.
///
/// Trapezoid sums are halved in step and Richardson-extrapolated until two
/// successive diagonal estimates differ by less than `max(abs_tol, rel_tol·|I|)`.
/// Returns `None` if no convergence within `max_level` halvings or a value is
/// not finite.
pub fn romberg(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_level: usize,
) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    let mut h = b - a;
    let mut prev = vec![0.5 * h * (f(a) + f(b))];
    if !prev[0].is_finite() {
        return None;
    }
    let mut points = 1usize;
    for level in 1..=max_level {
        h *= 0.5;
        let mut sum = 0.0;
        for i in 0..points {
            sum += f(a + (2 * i + 1) as f64 * h);
        }
        points *= 2;
        let mut row = Vec::with_capacity(level + 1);
        row.push(0.5 * prev[0] + h * sum);
        let mut factor = 1.0;
        for k in 1..=level {
            factor *= 4.0;
            let r = row[k - 1] + (row[k - 1] - prev[k - 1]) / (factor - 1.0);
            row.push(r);
        }
        let est = row[level];
        if !est.is_finite() {
            return None;
        }
        let diff = (est - prev[level - 1]).abs();
        if level >= 4 && diff <= abs_tol.max(rel_tol * est.abs()) {
            return Some(est);
        }
        prev = row;
    }
    None
}

const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Four-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre4(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GL4_NODES
        .iter()
        .zip(GL4_WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// `(1 - e^{-z}) / z`, accurate near zero.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        // Σ (-z)^k / (k+1)!
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..10 {
            term *= -z / (k + 1) as f64;
            sum += term;
        }
        sum
    } else {
        -(-z).exp_m1() / z
    }
}

/// `∫₀¹ v e^{-z v} dv = (1 - e^{-z}(1+z)) / z²`, accurate near zero.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 0.1 {
        // Σ (-z)^k / (k! (k+2))
        let mut fact = 1.0;
        let mut pow = 1.0;
        let mut sum = 0.5;
        for k in 1..20 {
            fact *= k as f64;
            pow *= -z;
            sum += pow / (fact * (k + 2) as f64);
        }
        sum
    } else {
        (1.0 - (-z).exp() * (1.0 + z)) / (z * z)
    }
}

/// Weights `(w_left, w_right)` with
/// `∫_{s0}^{s0+h} e^{-a(s0+h-s)} F(s) ds = w_left·F(s0) + w_right·F(s0+h)`
/// exactly for `F` linear on the panel.
pub fn exp_trapezoid_weights(a: f64, h: f64) -> (f64, f64) {
    let z = a * h;
    let i0 = h * phi1(z);
    let i1_over_h = h * phi2(z);
    (i1_over_h, i0 - i1_over_h)
}

/// Trapezoid weights for `n` equally spaced nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}

/// Median of a slice, `None` when empty. NaNs are ordered last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    num / den
}
