//! Quadrature rules: Gauss-Legendre, generalized Gauss-Laguerre, adaptive Gauss-Kronrod.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Ordering;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::tridiag::SymTridiagonal;

/// Nodes and weights of a fixed rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&n) {
        return r.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache.lock().unwrap().entry(n).or_insert(rule).clone()
}

fn compute_gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Composite Gauss-Legendre: `points`-point rule on every panel between consecutive breakpoints.
pub fn composite_gauss_legendre(breaks: &[f64], points: usize) -> Rule {
    let base = gauss_legendre(points);
    let mut nodes = Vec::with_capacity(points * breaks.len());
    let mut weights = Vec::with_capacity(points * breaks.len());
    for p in breaks.windows(2) {
        let (a, b) = (p[0], p[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in base.nodes.iter().zip(&base.weights) {
            nodes.push(mid + half * x);
            weights.push(half * w);
        }
    }
    Rule { nodes, weights }
}

/// Generalized Gauss-Laguerre rule for the probability weight `u^alpha e^{-u} / Gamma(alpha + 1)`.
///
/// Nodes are eigenvalues of the Jacobi matrix (Sturm bisection, then Newton polish on the
/// orthonormal recurrence); weights are `1 / sum_k p_k(x)^2`, so they sum to one.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (n, alpha.to_bits());
    if let Some(r) = cache.lock().unwrap().get(&key) {
        return r.clone();
    }
    let rule = Arc::new(compute_gauss_laguerre(n, alpha));
    cache.lock().unwrap().entry(key).or_insert(rule).clone()
}

struct OrthoEval {
    p: f64,
    dp: f64,
    /// `ln(sum_{k<n} p_k^2)`
    ln_sum_sq: f64,
}

fn laguerre_orthonormal(n: usize, alpha: f64, x: f64) -> OrthoEval {
    let a = |k: usize| 2.0 * k as f64 + alpha + 1.0;
    let b = |k: usize| ((k as f64) * (k as f64 + alpha)).sqrt();
    let (mut p_prev, mut p) = (0.0f64, 1.0f64);
    let (mut d_prev, mut d) = (0.0f64, 0.0f64);
    let mut sum_sq = 0.0f64;
    let mut ln_scale = 0.0f64;
    for k in 0..n {
        sum_sq += p * p;
        let bk = b(k);
        let bk1 = b(k + 1);
        let p_next = ((x - a(k)) * p - bk * p_prev) / bk1;
        let d_next = (p + (x - a(k)) * d - bk * d_prev) / bk1;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
        let mag = p.abs().max(p_prev.abs());
        if mag > 1e100 {
            p /= 1e100;
            p_prev /= 1e100;
            d /= 1e100;
            d_prev /= 1e100;
            sum_sq /= 1e200;
            ln_scale += 100.0 * std::f64::consts::LN_10;
        }
    }
    OrthoEval {
        p,
        dp: d,
        ln_sum_sq: sum_sq.ln() + 2.0 * ln_scale,
    }
}

fn compute_gauss_laguerre(n: usize, alpha: f64) -> Rule {
    assert!(n >= 1 && alpha > -1.0);
    let d: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let e: Vec<f64> = (1..n).map(|k| ((k as f64) * (k as f64 + alpha)).sqrt()).collect();
    let jac = SymTridiagonal::new(d, e);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for k in 0..n {
        let mut x = jac.eigenvalue(k, 0.0);
        for _ in 0..3 {
            let ev = laguerre_orthonormal(n, alpha, x);
            if ev.dp != 0.0 && ev.dp.is_finite() {
                let step = ev.p / ev.dp;
                if step.abs() < 1e-6 * x.abs().max(1e-300) {
                    x -= step;
                }
            }
        }
        let ev = laguerre_orthonormal(n, alpha, x);
        nodes.push(x);
        weights.push((-ev.ln_sum_sq).exp());
    }
    Rule { nodes, weights }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Globally adaptive 7/15-point Gauss-Kronrod over the panels given by `breaks`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol * |value|)`.
pub fn adaptive(
    mut f: impl FnMut(f64) -> f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_segments: usize,
) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    for p in breaks.windows(2) {
        let (v, e) = gk15(&mut f, p[0], p[1]);
        heap.push(Segment { a: p[0], b: p[1], value: v, error: e });
    }
    let mut evaluations = 15 * heap.len();
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Estimate { value, error, evaluations });
        }
        if heap.len() >= max_segments {
            return Err(Error::QuadratureNonConvergence {
                what: "adaptive Gauss-Kronrod".into(),
                change: if value != 0.0 { error / value.abs() } else { error },
                order: evaluations,
            });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            let value = heap.iter().map(|s| s.value).sum();
            return Ok(Estimate { value, error, evaluations });
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_gamma;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(10);
        for k in 0..20 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            let got = r.integrate(|x| x.powi(k));
            assert!((got - exact).abs() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn laguerre_moments() {
        for &alpha in &[0.0, 0.5, 3.0, 20.0] {
            let r = gauss_laguerre(32, alpha);
            let total: f64 = r.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-13, "alpha = {alpha}: {total}");
            // E[u^k] = Gamma(alpha + 1 + k) / Gamma(alpha + 1)
            for k in 1..10 {
                let exact = (ln_gamma(alpha + 1.0 + k as f64) - ln_gamma(alpha + 1.0)).exp();
                let got = r.integrate(|u| u.powi(k));
                assert!((got - exact).abs() / exact < 1e-12, "alpha = {alpha}, k = {k}");
            }
        }
    }

    #[test]
    fn large_laguerre_rule_is_finite() {
        let r = gauss_laguerre(512, 0.0);
        let total: f64 = r.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(r.nodes.windows(2).all(|p| p[1] > p[0]));
        let m1 = r.integrate(|u| u);
        assert!((m1 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_handles_endpoint_singularities() {
        let est = adaptive(|x| x.ln(), &[0.0, 1.0], 1e-12, 0.0, 1000).unwrap();
        assert!((est.value + 1.0).abs() < 1e-11);
        let est = adaptive(|x| 1.0 / x.sqrt(), &[0.0, 1.0], 1e-12, 0.0, 1000).unwrap();
        assert!((est.value - 2.0).abs() < 1e-10);
    }
}
