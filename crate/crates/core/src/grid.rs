//! Uniform z-grids for channel functions and hybrid radial grids for STF.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Symmetric uniform grid on `[-z_max, z_max]` with an odd node count, so `z = 0` is a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    z_max: f64,
    n: usize,
}

impl UniformGrid {
    pub fn new(z_max: f64, n: usize) -> Result<Self> {
        ensure(z_max.is_finite() && z_max > 0.0, || {
            format!("grid extent must be positive, got {z_max}")
        })?;
        ensure(n >= 3 && n % 2 == 1, || {
            format!("grid needs an odd node count >= 3, got {n}")
        })?;
        Ok(Self { z_max, n })
    }

    /// Smallest odd-node grid on `[-z_max, z_max]` with spacing at most `h`.
    pub fn with_spacing(z_max: f64, h: f64) -> Result<Self> {
        ensure(h > 0.0 && h.is_finite(), || format!("spacing must be positive, got {h}"))?;
        let half = (z_max / h).ceil().max(1.0) as usize;
        Self::new(z_max, 2 * half + 1)
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn z_min(&self) -> f64 {
        -self.z_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        2.0 * self.z_max / (self.n - 1) as f64
    }

    /// Index of the node at `z = 0`.
    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn z(&self, i: usize) -> f64 {
        let c = self.center() as f64;
        (i as f64 - c) * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.z(i)).collect()
    }

    /// Grid with half the spacing on the same box; every node of `self` is a node of the result.
    pub fn refined(&self) -> Self {
        Self {
            z_max: self.z_max,
            n: 2 * self.n - 1,
        }
    }

    /// Same spacing, box extended to at least `factor` times the current extent.
    pub fn extended(&self, factor: f64) -> Self {
        let half = ((self.center() as f64) * factor).ceil() as usize;
        let h = self.h();
        Self {
            z_max: half as f64 * h,
            n: 2 * half + 1,
        }
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    /// Stable identity string used in cache keys.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}:{}", self.z_max.to_bits(), self.n)
    }
}

/// Radial nodes, geometric near the origin and uniform further out, with trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    r: Vec<f64>,
    w: Vec<f64>,
}

impl RadialGrid {
    /// `n_geometric` nodes from `r1` to `r_switch` in geometric progression, then uniform to `r_max`.
    pub fn hybrid(r1: f64, r_switch: f64, r_max: f64, n: usize, n_geometric: usize) -> Result<Self> {
        ensure(r1 > 0.0 && r1 < r_switch && r_switch < r_max, || {
            format!("need 0 < r1 < r_switch < r_max, got {r1}, {r_switch}, {r_max}")
        })?;
        ensure(n_geometric >= 2 && n > n_geometric + 1, || {
            format!("bad node split: n = {n}, geometric = {n_geometric}")
        })?;
        let ratio = (r_switch / r1).powf(1.0 / (n_geometric - 1) as f64);
        let mut r: Vec<f64> = (0..n_geometric).map(|i| r1 * ratio.powi(i as i32)).collect();
        r[n_geometric - 1] = r_switch;
        let n_uniform = n - n_geometric;
        let h = (r_max - r_switch) / n_uniform as f64;
        r.extend((1..=n_uniform).map(|i| r_switch + i as f64 * h));
        r[n - 1] = r_max;
        Ok(Self::from_nodes(r))
    }

    /// Default layout for an atom of charge `z` in field `b`.
    ///
    /// Lengths scale with `l = z^{1/5} b^{-2/5}`; the neutral support radius is about `3.7 l`
    /// and is bounded by `3.3 pi^2 l`, so the box runs to twice that bound.
    pub fn for_atom(z: f64, b: f64, n: usize) -> Result<Self> {
        ensure(z > 0.0 && b > 0.0, || format!("need Z, B > 0, got {z}, {b}"))?;
        let l = crate::stf::length_scale(z, b);
        let r_max = 2.0 * crate::stf::SUPPORT_BOUND * l;
        Self::hybrid(1e-6 * l, 0.1 * 3.7 * l, r_max, n, (2 * n) / 5)
    }

    pub fn from_nodes(r: Vec<f64>) -> Self {
        let n = r.len();
        let mut w = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            let d = 0.5 * (r[i + 1] - r[i]);
            w[i] += d;
            w[i + 1] += d;
        }
        // The segment (0, r_0) is included as a half-cell on the first node.
        if n > 0 {
            w[0] += 0.5 * r[0];
        }
        Self { r, w }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.r
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap_or(&0.0)
    }

    /// Weights for `int 4 pi r^2 f(r) dr`.
    pub fn volume_weights(&self) -> Vec<f64> {
        self.r
            .iter()
            .zip(&self.w)
            .map(|(r, w)| 4.0 * std::f64::consts::PI * r * r * w)
            .collect()
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_layout() {
        let g = UniformGrid::new(2.0, 5).unwrap();
        assert_eq!(g.nodes(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(g.z(g.center()), 0.0);
        let f = g.refined();
        assert_eq!(f.len(), 9);
        assert_eq!(f.h(), 0.5);
        assert!(UniformGrid::new(1.0, 4).is_err());
        assert!(UniformGrid::new(-1.0, 5).is_err());
    }

    #[test]
    fn extended_keeps_spacing() {
        let g = UniformGrid::new(3.0, 7).unwrap();
        let e = g.extended(2.0);
        assert_eq!(e.h(), g.h());
        assert_eq!(e.z_max(), 6.0);
    }

    #[test]
    fn radial_weights_integrate_polynomials() {
        let g = RadialGrid::hybrid(1e-4, 0.5, 10.0, 4000, 800).unwrap();
        let vol: f64 = g
            .volume_weights()
            .iter()
            .zip(g.nodes())
            .filter(|(_, &r)| r <= 5.0)
            .map(|(w, _)| w)
            .sum();
        assert!(g.nodes().windows(2).all(|p| p[1] > p[0]));
        // Sum over nodes r <= 5 approximates (4/3) pi 5^3 up to one half-cell.
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 125.0;
        assert!((vol - exact).abs() / exact < 5e-3);
    }
}
