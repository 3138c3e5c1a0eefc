//! Symmetric tridiagonal eigenproblems: Sturm counts, bisection and inverse iteration.

/// Real symmetric tridiagonal matrix with diagonal `d` and off-diagonal `e` (`e.len() == d.len() - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    d: Vec<f64>,
    e: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Self {
        assert!(!d.is_empty() && e.len() + 1 == d.len(), "off-diagonal length must be n - 1");
        Self { d, e }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.d
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.e
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.d.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.e[i - 1].abs();
            }
            if i + 1 < n {
                r += self.e[i].abs();
            }
            lo = lo.min(self.d[i] - r);
            hi = hi.max(self.d[i] + r);
        }
        (lo, hi)
    }

    fn pivmin(&self) -> f64 {
        let m = self.e.iter().fold(1.0f64, |a, &b| a.max(b * b));
        f64::MIN_POSITIVE * m
    }

    /// Number of eigenvalues strictly below `x`, from the signs of the LDL^T pivots of `T - x I`.
    pub fn sturm_count(&self, x: f64) -> usize {
        let pivmin = self.pivmin();
        let mut count = 0;
        let mut q = self.d[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.d.len() {
            let e2 = self.e[i - 1] * self.e[i - 1];
            q = self.d[i] - x - e2 / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Number of sign agreements between consecutive terms of the Sturm sequence
    /// `p_k(x) = det(x I - T_k)` of leading principal minors.
    ///
    /// This is the classical characteristic-polynomial form and counts the eigenvalues below `x`;
    /// it is kept separate from [`sturm_count`](Self::sturm_count) as an independent path.
    pub fn sturm_sign_agreements(&self, x: f64) -> usize {
        let mut p_prev = 1.0f64;
        let mut p = x - self.d[0];
        let mut agreements = 0;
        let mut sign_prev = 1.0f64;
        let sign_of = |v: f64, prev: f64| if v == 0.0 { -prev } else { v.signum() };
        let mut s = sign_of(p, sign_prev);
        if s == sign_prev {
            agreements += 1;
        }
        sign_prev = s;
        for k in 1..self.d.len() {
            let e2 = self.e[k - 1] * self.e[k - 1];
            let next = (x - self.d[k]) * p - e2 * p_prev;
            p_prev = p;
            p = next;
            let scale = p.abs().max(p_prev.abs());
            if scale > 1e150 || (scale < 1e-150 && scale > 0.0) {
                p /= scale;
                p_prev /= scale;
            }
            s = sign_of(p, sign_prev);
            if s == sign_prev {
                agreements += 1;
            }
            sign_prev = s;
        }
        agreements
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection to absolute tolerance `tol`.
    pub fn eigenvalue(&self, k: usize, tol: f64) -> f64 {
        let (lo, hi) = self.gershgorin();
        self.eigenvalue_in(k, lo, hi, tol)
    }

    fn eigenvalue_in(&self, k: usize, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
        loop {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= tol || mid <= lo || mid >= hi {
                return mid;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    /// All eigenvalues strictly below `x`, ascending.
    pub fn eigenvalues_below(&self, x: f64, tol: f64) -> Vec<f64> {
        let (lo, hi) = self.gershgorin();
        let upper = x.min(hi);
        let count = self.sturm_count(x);
        (0..count)
            .map(|k| self.eigenvalue_in(k, lo, upper, tol))
            .collect()
    }

    /// The lowest `count` eigenvalues, ascending.
    pub fn lowest(&self, count: usize, tol: f64) -> Vec<f64> {
        let (lo, hi) = self.gershgorin();
        (0..count.min(self.len()))
            .map(|k| self.eigenvalue_in(k, lo, hi, tol))
            .collect()
    }

    /// Unit-norm (Euclidean) eigenvectors for the given eigenvalues by inverse iteration.
    ///
    /// Vectors whose eigenvalues lie within `1e-3` of the matrix scale are re-orthogonalised.
    pub fn eigenvectors(&self, eigenvalues: &[f64]) -> Vec<Vec<f64>> {
        let n = self.len();
        let (glo, ghi) = self.gershgorin();
        let scale = glo.abs().max(ghi.abs()).max(1.0);
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(eigenvalues.len());
        for (idx, &lam) in eigenvalues.iter().enumerate() {
            let shift = lam + 1e-13 * scale;
            let lu = TridiagLu::factor(&self.d, &self.e, shift, scale);
            let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * ((i as f64) * 0.618).sin()).collect();
            normalize(&mut v);
            for _ in 0..4 {
                lu.solve(&mut v);
                for (j, prev) in out.iter().enumerate() {
                    if (eigenvalues[j] - lam).abs() < 1e-3 * scale && j < idx {
                        let dot: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
                        v.iter_mut().zip(prev).for_each(|(x, p)| *x -= dot * p);
                    }
                }
                normalize(&mut v);
            }
            // Fix the overall sign so the largest component is positive.
            let (imax, _) = v
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
            if v[imax] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            out.push(v);
        }
        out
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// LU factorisation with partial pivoting of `T - shift I`.
struct TridiagLu {
    low: Vec<f64>,
    d: Vec<f64>,
    up: Vec<f64>,
    up2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(diag: &[f64], off: &[f64], shift: f64, scale: f64) -> Self {
        let n = diag.len();
        let tiny = f64::EPSILON * scale;
        let mut d: Vec<f64> = diag.iter().map(|x| x - shift).collect();
        let mut low = off.to_vec();
        let mut up = off.to_vec();
        let mut up2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= low[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = low[i] / d[i];
                low[i] = fact;
                d[i + 1] -= fact * up[i];
            } else {
                let fact = d[i] / low[i];
                d[i] = low[i];
                low[i] = fact;
                let temp = up[i];
                up[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    up2[i] = up[i + 1];
                    up[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self {
            low,
            d,
            up,
            up2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let t = b[i];
                b[i] = b[i + 1];
                b[i + 1] = t - self.low[i] * b[i];
            } else {
                b[i + 1] -= self.low[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.up[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.up[i] * b[i + 1] - self.up2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn laplacian_eigenvalues_match_closed_form() {
        let n = 50;
        let t = laplacian(n);
        let ev = t.lowest(n, 1e-14);
        for (k, lam) in ev.iter().enumerate() {
            let theta = (k + 1) as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64);
            let exact = 4.0 * theta.sin().powi(2);
            assert!((lam - exact).abs() < 1e-12, "k={k}: {lam} vs {exact}");
        }
    }

    #[test]
    fn two_sturm_paths_agree() {
        let n = 200;
        let d: Vec<f64> = (0..n).map(|i| ((i * 7919) % 97) as f64 / 13.0 - 3.0).collect();
        let e: Vec<f64> = (0..n - 1).map(|i| 0.3 + ((i * 31) % 11) as f64 / 10.0).collect();
        let t = SymTridiagonal::new(d, e);
        let (lo, hi) = t.gershgorin();
        for k in 0..=40 {
            let x = lo + (hi - lo) * (k as f64 + 0.37) / 41.0;
            assert_eq!(t.sturm_count(x), t.sturm_sign_agreements(x), "x = {x}");
        }
    }

    #[test]
    fn inverse_iteration_gives_eigenvectors() {
        let n = 64;
        let t = laplacian(n);
        let ev = t.lowest(3, 1e-14);
        let vecs = t.eigenvectors(&ev);
        for (lam, v) in ev.iter().zip(&vecs) {
            for i in 0..n {
                let mut tv = 2.0 * v[i];
                if i > 0 {
                    tv -= v[i - 1];
                }
                if i + 1 < n {
                    tv -= v[i + 1];
                }
                assert!((tv - lam * v[i]).abs() < 1e-10);
            }
        }
        let dot: f64 = vecs[0].iter().zip(&vecs[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
    }

    #[test]
    fn eigenvalues_below_respects_cutoff() {
        let t = laplacian(10);
        let below = t.eigenvalues_below(1.0, 1e-14);
        assert_eq!(below.len(), t.sturm_count(1.0));
        assert!(below.iter().all(|&x| x < 1.0));
    }
}
