//! Anderson acceleration for fixed-point maps `x = g(x)`.

use std::collections::VecDeque;

/// Anderson mixing with a bounded history of iterate and residual differences.
#[derive(Debug, Clone)]
pub struct Anderson {
    depth: usize,
    beta: f64,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    dx: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
}

impl Anderson {
    /// `depth = 0` reduces to linear mixing `x + beta (g(x) - x)`.
    pub fn new(depth: usize, beta: f64) -> Self {
        Self {
            depth,
            beta,
            prev: None,
            dx: VecDeque::new(),
            df: VecDeque::new(),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Drops the history and scales the mixing parameter.
    pub fn restart(&mut self, beta_factor: f64) {
        self.beta *= beta_factor;
        self.prev = None;
        self.dx.clear();
        self.df.clear();
    }

    /// Next iterate from the current iterate `x` and residual `f = g(x) - x`.
    pub fn step(&mut self, x: &[f64], f: &[f64]) -> Vec<f64> {
        if let Some((px, pf)) = self.prev.take() {
            if self.depth > 0 {
                self.dx.push_back(x.iter().zip(&px).map(|(a, b)| a - b).collect());
                self.df.push_back(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
                if self.dx.len() > self.depth {
                    self.dx.pop_front();
                    self.df.pop_front();
                }
            }
        }
        self.prev = Some((x.to_vec(), f.to_vec()));
        let mut next: Vec<f64> = x.iter().zip(f).map(|(a, b)| a + self.beta * b).collect();
        if self.df.is_empty() {
            return next;
        }
        let Some(gamma) = least_squares(&self.df, f) else {
            return next;
        };
        for (g, (dx, df)) in gamma.iter().zip(self.dx.iter().zip(&self.df)) {
            for i in 0..next.len() {
                next[i] -= g * (dx[i] + self.beta * df[i]);
            }
        }
        next
    }
}

/// `argmin_g |f - sum_j g_j cols_j|` by modified Gram-Schmidt QR; `None` if rank deficient.
fn least_squares(cols: &VecDeque<Vec<f64>>, f: &[f64]) -> Option<Vec<f64>> {
    let k = cols.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r = vec![vec![0.0; k]; k];
    for j in 0..k {
        let mut v = cols[j].clone();
        let norm0 = dot(&v, &v).sqrt();
        for i in 0..j {
            let c = dot(&q[i], &v);
            r[i][j] = c;
            v.iter_mut().zip(&q[i]).for_each(|(a, b)| *a -= c * b);
        }
        let norm = dot(&v, &v).sqrt();
        if !(norm > 1e-12 * norm0) || norm == 0.0 {
            return None;
        }
        r[j][j] = norm;
        v.iter_mut().for_each(|a| *a /= norm);
        q.push(v);
    }
    let rhs: Vec<f64> = q.iter().map(|qi| dot(qi, f)).collect();
    let mut g = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r[i][j] * g[j]).sum();
        g[i] = (rhs[i] - s) / r[i][i];
    }
    Some(g)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iterations(depth: usize) -> usize {
        // g(x) = A x + c with a contraction whose plain iteration is slow.
        let n = 20;
        let c: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let g = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let nb = if i > 0 { x[i - 1] } else { 0.0 } + if i + 1 < n { x[i + 1] } else { 0.0 };
                    0.49 * nb + c[i]
                })
                .collect()
        };
        let mut mix = Anderson::new(depth, 0.5);
        let mut x = vec![0.0; n];
        let mut iters = 0;
        loop {
            let gx = g(&x);
            let f: Vec<f64> = gx.iter().zip(&x).map(|(a, b)| a - b).collect();
            if f.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-10 {
                return iters;
            }
            x = mix.step(&x, &f);
            iters += 1;
            assert!(iters < 20_000, "no convergence at depth {depth}");
        }
    }

    #[test]
    fn history_beats_linear_mixing() {
        let plain = iterations(0);
        let anderson = iterations(6);
        assert!(anderson * 5 < plain, "anderson {anderson}, linear {plain}");
    }
}
