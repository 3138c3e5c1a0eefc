use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{form_factor_breaks, form_factors};
use crate::error::{ensure, Error, Result};
use crate::grid::UniformGrid;
use crate::quadrature::{composite_gauss_legendre, Rule};

/// Accuracy bookkeeping recorded with every table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    /// Gauss-Legendre points per panel of the form-factor rule.
    pub quadrature_order: usize,
    /// Panel subdivision factor that met the tolerance.
    pub refinement: usize,
    pub nodes: usize,
    /// Largest relative change between the last two refinements.
    pub achieved_tol: f64,
    pub requested_tol: f64,
}

/// Immutable tabulation of `V_m(z)` on a grid and `V_{m,n}(zeta)` on its difference grid.
///
/// Pair rows are stored for `m <= n` and `zeta = d h`, `d = 0..n_grid`; both kernels are even.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub(crate) b: f64,
    pub(crate) m_max: usize,
    pub(crate) grid: UniformGrid,
    pub(crate) single: Vec<Vec<f64>>,
    pub(crate) pair: Vec<Vec<f64>>,
    pub(crate) info: TableInfo,
}

fn pair_index(m: usize, n: usize) -> usize {
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    hi * (hi + 1) / 2 + lo
}

impl KernelTable {
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn info(&self) -> &TableInfo {
        &self.info
    }

    /// `V_m(z_j)` for every grid node.
    pub fn single(&self, m: usize) -> &[f64] {
        &self.single[m]
    }

    /// `V_{m,n}(d h)` for `d = 0..grid.len()`.
    pub fn pair_half(&self, m: usize, n: usize) -> &[f64] {
        &self.pair[pair_index(m, n)]
    }

    /// `V_{m,n}` on the full difference grid, `d = -(n-1)..=(n-1)`, index `d + n - 1`.
    pub fn pair_full(&self, m: usize, n: usize) -> Vec<f64> {
        let half = self.pair_half(m, n);
        let len = half.len();
        (0..2 * len - 1)
            .map(|i| half[(i as isize - (len as isize - 1)).unsigned_abs()])
            .collect()
    }

    /// `V_{m,n}(d h)` for a signed node offset `d`.
    pub fn pair_at(&self, m: usize, n: usize, d: isize) -> f64 {
        self.pair_half(m, n)[d.unsigned_abs()]
    }

    /// Copy restricted to channels `0..=m_max`.
    pub fn truncated(&self, m_max: usize) -> Result<Self> {
        ensure(m_max <= self.m_max, || format!("cannot extend table from {} to {m_max} channels", self.m_max))?;
        let pairs = (m_max + 1) * (m_max + 2) / 2;
        Ok(Self {
            b: self.b,
            m_max,
            grid: self.grid.clone(),
            single: self.single[..=m_max].to_vec(),
            pair: self.pair[..pairs].to_vec(),
            info: self.info.clone(),
        })
    }
}

/// Values of every single and pair kernel at the nonnegative offsets `c_j` (in units of `1/sqrt(2B)`).
fn tabulate(rule: &Rule, m_max: usize, scale: f64, cs: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k = rule.len();
    let mut single_w = vec![vec![0.0; k]; m_max + 1];
    let mut buf = Vec::new();
    for (i, &w) in rule.nodes.iter().enumerate() {
        form_factors(m_max, w, &mut buf);
        for m in 0..=m_max {
            single_w[m][i] = buf[m];
        }
    }
    let n_pairs = (m_max + 1) * (m_max + 2) / 2;
    let mut pair_w = vec![vec![0.0; k]; n_pairs];
    for n in 0..=m_max {
        for m in 0..=n {
            let row = &mut pair_w[pair_index(m, n)];
            for i in 0..k {
                row[i] = scale * rule.weights[i] * single_w[m][i] * single_w[n][i];
            }
        }
    }
    for row in single_w.iter_mut() {
        for i in 0..k {
            row[i] *= scale * rule.weights[i];
        }
    }
    let columns: Vec<(Vec<f64>, Vec<f64>)> = cs
        .par_iter()
        .map(|&c| {
            let e: Vec<f64> = rule.nodes.iter().map(|w| (-c * w).exp()).collect();
            let dot = |row: &Vec<f64>| row.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>();
            (single_w.iter().map(dot).collect(), pair_w.iter().map(dot).collect())
        })
        .collect();
    let mut single = vec![Vec::with_capacity(cs.len()); m_max + 1];
    let mut pair = vec![Vec::with_capacity(cs.len()); n_pairs];
    for (s, p) in columns {
        for (row, v) in single.iter_mut().zip(s) {
            row.push(v);
        }
        for (row, v) in pair.iter_mut().zip(p) {
            row.push(v);
        }
    }
    (single, pair)
}

/// Single-channel rows `m_lo..=m_hi` only.
fn tabulate_single(rule: &Rule, ms: RangeInclusive<usize>, scale: f64, cs: &[f64]) -> Vec<Vec<f64>> {
    let (m_lo, m_hi) = (*ms.start(), *ms.end());
    let k = rule.len();
    let mut rows = vec![vec![0.0; k]; m_hi + 1 - m_lo];
    let mut buf = Vec::new();
    for (i, &w) in rule.nodes.iter().enumerate() {
        form_factors(m_hi, w, &mut buf);
        for (row, f) in rows.iter_mut().zip(&buf[m_lo..]) {
            row[i] = scale * rule.weights[i] * f;
        }
    }
    let columns: Vec<Vec<f64>> = cs
        .par_iter()
        .map(|&c| {
            let e: Vec<f64> = rule.nodes.iter().map(|w| (-c * w).exp()).collect();
            rows.iter().map(|row| row.iter().zip(&e).map(|(a, b)| a * b).sum()).collect()
        })
        .collect();
    (0..rows.len()).map(|m| columns.iter().map(|col| col[m]).collect()).collect()
}

fn max_rel_change(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| ((x - y) / y).abs())
        .fold(0.0, f64::max)
}

/// Tabulates all kernels for channels `0..=m_max` on `grid` at field `b`.
///
/// The form-factor rule is refined by panel splitting until the largest relative change
/// over the whole table drops below `tol`.
pub fn build_kernel_table(
    b: f64,
    m_max: usize,
    grid: &UniformGrid,
    quadrature_order: usize,
    tol: f64,
) -> Result<KernelTable> {
    ensure(b.is_finite() && b > 0.0, || format!("field strength must be positive, got {b}"))?;
    ensure(quadrature_order >= 4, || format!("quadrature order must be at least 4, got {quadrature_order}"))?;
    ensure(tol > 0.0 && tol < 1.0, || format!("tolerance must lie in (0, 1), got {tol}"))?;
    let n = grid.len();
    let h = grid.h();
    let scale = (2.0 * b).sqrt();
    let cs: Vec<f64> = (0..n).map(|d| d as f64 * h * scale).collect();
    let c_max = *cs.last().expect("grid non-empty");
    let points = quadrature_order;
    let build = |split: usize| {
        let rule = composite_gauss_legendre(&form_factor_breaks(c_max, m_max, split), points);
        let (s, p) = tabulate(&rule, m_max, scale, &cs);
        (s, p, rule.len())
    };
    let mut split = 1;
    let (mut single, mut pair, _) = build(split);
    loop {
        let (s2, p2, nodes) = build(2 * split);
        let change = max_rel_change(&single, &s2).max(max_rel_change(&pair, &p2));
        split *= 2;
        single = s2;
        pair = p2;
        if change < tol || split >= 64 {
            if change >= tol {
                return Err(Error::QuadratureNonConvergence {
                    what: format!("kernel table (B = {b}, m_max = {m_max})"),
                    change,
                    order: nodes,
                });
            }
            let c = grid.center();
            let single = single
                .into_iter()
                .map(|row| (0..n).map(|i| row[i.abs_diff(c)]).collect())
                .collect();
            let info = TableInfo {
                quadrature_order: points,
                refinement: split,
                nodes,
                achieved_tol: change,
                requested_tol: tol,
            };
            let table = KernelTable {
                b,
                m_max,
                grid: grid.clone(),
                single,
                pair,
                info,
            };
            check_positive(&table)?;
            return Ok(table);
        }
    }
}

/// `V_m(z_j)` for the channels `ms` on every node of `grid`, without the pair kernels.
///
/// Same rule and refinement as [`build_kernel_table`].
pub fn single_channel_values(
    b: f64,
    ms: RangeInclusive<usize>,
    grid: &UniformGrid,
    quadrature_order: usize,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    ensure(b.is_finite() && b > 0.0, || format!("field strength must be positive, got {b}"))?;
    ensure(quadrature_order >= 4, || format!("quadrature order must be at least 4, got {quadrature_order}"))?;
    ensure(tol > 0.0 && tol < 1.0, || format!("tolerance must lie in (0, 1), got {tol}"))?;
    let n = grid.len();
    let h = grid.h();
    let scale = (2.0 * b).sqrt();
    let cs: Vec<f64> = (0..=grid.center()).map(|d| d as f64 * h * scale).collect();
    let c_max = *cs.last().expect("grid non-empty");
    ensure(ms.start() <= ms.end(), || format!("empty channel range {ms:?}"))?;
    let m_max = *ms.end();
    let build = |split: usize| {
        let rule = composite_gauss_legendre(&form_factor_breaks(c_max, m_max, split), quadrature_order);
        (tabulate_single(&rule, ms.clone(), scale, &cs), rule.len())
    };
    let mut split = 1;
    let (mut single, _) = build(split);
    loop {
        let (s2, nodes) = build(2 * split);
        let change = max_rel_change(&single, &s2);
        split *= 2;
        single = s2;
        if change < tol {
            break;
        }
        if split >= 64 {
            return Err(Error::QuadratureNonConvergence {
                what: format!("channel potentials (B = {b}, m_max = {m_max})"),
                change,
                order: nodes,
            });
        }
    }
    let c = grid.center();
    Ok(single.into_iter().map(|row| (0..n).map(|i| row[i.abs_diff(c)]).collect()).collect())
}

fn check_positive(t: &KernelTable) -> Result<()> {
    for n in 0..=t.m_max {
        for m in 0..=n {
            if let Some(d) = t.pair_half(m, n).iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Kernel {
                    m,
                    n,
                    zeta: d as f64 * t.grid.h(),
                    source: Box::new(Error::InvalidParameter("non-positive kernel value".into())),
                });
            }
        }
        if let Some(i) = t.single(n).iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Kernel {
                m: n,
                n,
                zeta: t.grid.z(i),
                source: Box::new(Error::InvalidParameter("non-positive single-channel value".into())),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{v_pair, v_single, OrbitalParams};

    #[test]
    fn single_values_match_table_rows() {
        let g = UniformGrid::new(2.0, 21).unwrap();
        let t = build_kernel_table(5.0, 3, &g, 16, 1e-11).unwrap();
        let v = single_channel_values(5.0, 2..=3, &g, 16, 1e-11).unwrap();
        for (k, m) in (2..=3).enumerate() {
            for (a, b) in v[k].iter().zip(t.single(m)) {
                assert!((a - b).abs() < 1e-10 * b);
            }
        }
    }

    #[test]
    fn three_point_table_matches_pointwise() {
        let g = UniformGrid::new(1.0, 3).unwrap();
        let t = build_kernel_table(1.0, 0, &g, 16, 1e-12).unwrap();
        for (i, z) in g.nodes().into_iter().enumerate() {
            let v = v_single(OrbitalParams::new(0, 1.0).unwrap(), z).unwrap();
            assert!((t.single(0)[i] - v).abs() < 1e-10 * v);
        }
    }

    #[test]
    fn table_matches_pointwise_pairs() {
        let g = UniformGrid::new(4.0, 41).unwrap();
        let t = build_kernel_table(3.0, 4, &g, 16, 1e-11).unwrap();
        for &(m, n, d) in &[(0usize, 0usize, 0usize), (1, 3, 7), (4, 2, 40), (4, 4, 11)] {
            let v = v_pair(m, n, 3.0, d as f64 * g.h()).unwrap();
            assert!((t.pair_half(m, n)[d] - v).abs() < 1e-10 * v);
            assert_eq!(t.pair_half(m, n), t.pair_half(n, m));
        }
        let full = t.pair_full(1, 2);
        assert_eq!(full.len(), 2 * g.len() - 1);
        assert_eq!(full[0], full[full.len() - 1]);
    }
}
