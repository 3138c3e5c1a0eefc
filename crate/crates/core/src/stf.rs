//! Strong Thomas-Fermi theory for a spherically symmetric atom in the lowest Landau band.
//!
//! Functional: `(4 pi^4 / 3B^2) int rho^3 - int Z rho / |x| + D(rho, rho)`.
//! TF equation: `4 pi^4 rho^2 / B^2 = [phi + nu]_+`, `phi = Z/|x| - rho * |x|^{-1}`.
//!
//! The problem is invariant under `x -> l x`, `rho -> (Z / l^3) rho` with `l = Z^{1/5} B^{-2/5}`:
//! energies scale as `Z^{9/5} B^{2/5}`, lengths as `l`, potentials as `Z / l`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::RadialGrid;
use crate::mixing::Anderson;

/// Upper bound on the neutral support radius in units of `Z^{1/5} B^{-2/5}`.
pub const SUPPORT_BOUND: f64 = 3.3 * PI * PI;

/// `Z^{1/5} B^{-2/5}`.
pub fn length_scale(z: f64, b: f64) -> f64 {
    z.powf(0.2) * b.powf(-0.4)
}

/// `Z^{9/5} B^{2/5}`.
pub fn energy_scale(z: f64, b: f64) -> f64 {
    z.powf(1.8) * b.powf(0.4)
}

/// Decomposed energy with particle number and chemical potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub kinetic_like: f64,
    pub attraction: f64,
    pub repulsion: f64,
    pub total: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub chemical_potential: f64,
}

impl EnergyReport {
    pub fn new(kinetic_like: f64, attraction: f64, repulsion: f64, n: f64, chemical_potential: f64) -> Self {
        Self {
            kinetic_like,
            attraction,
            repulsion,
            total: kinetic_like + attraction + repulsion,
            n,
            chemical_potential,
        }
    }
}

/// Radial density on a [`RadialGrid`] together with the atom it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialDensity {
    grid: RadialGrid,
    rho: Vec<f64>,
    z: f64,
    b: f64,
    nu: f64,
}

impl RadialDensity {
    pub fn new(grid: RadialGrid, rho: Vec<f64>, z: f64, b: f64, nu: f64) -> Result<Self> {
        ensure(rho.len() == grid.len(), || format!("density has {} values for {} nodes", rho.len(), grid.len()))?;
        ensure(rho.iter().all(|v| *v >= 0.0 && v.is_finite()), || "density must be finite and nonnegative".into())?;
        ensure(z > 0.0 && b > 0.0, || format!("need Z, B > 0, got {z}, {b}"))?;
        ensure(nu <= 0.0, || format!("chemical potential must be nonpositive, got {nu}"))?;
        Ok(Self { grid, rho, z, b, nu })
    }

    pub fn zero(grid: RadialGrid, z: f64, b: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![0.0; n], z, b, 0.0)
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `4 pi int rho r^2 dr`.
    pub fn particle_number(&self) -> f64 {
        self.grid.volume_weights().iter().zip(&self.rho).map(|(w, r)| w * r).sum()
    }

    /// Screening potential `rho * |x|^{-1}` at every node.
    pub fn screening(&self) -> Screening {
        Screening::new(&self.grid, &self.rho)
    }
}

/// Cumulative sums for Newton's theorem: `Phi(r) = M(r) / r + O(r)` with
/// `M(r) = int_{|y|<r} rho` and `O(r) = int_{|y|>r} rho / |y|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Screening {
    r: Vec<f64>,
    inner: Vec<f64>,
    outer: Vec<f64>,
    /// `4 pi r^2 rho`, the derivative of `M`.
    slope: Vec<f64>,
}

impl Screening {
    fn new(grid: &RadialGrid, rho: &[f64]) -> Self {
        let r = grid.nodes().to_vec();
        let wv = grid.volume_weights();
        let n = r.len();
        let mut inner = vec![0.0; n];
        let mut acc = 0.0;
        for i in 0..n {
            acc += wv[i] * rho[i];
            inner[i] = acc;
        }
        let mut outer = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n).rev() {
            outer[i] = acc;
            acc += wv[i] * rho[i] / r[i];
        }
        let slope = r.iter().zip(rho).map(|(x, p)| 4.0 * PI * x * x * p).collect();
        Self { r, inner, outer, slope }
    }

    /// `Phi` at node `i`.
    pub fn at_node(&self, i: usize) -> f64 {
        self.inner[i] / self.r[i] + self.outer[i]
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.r.len()).map(|i| self.at_node(i)).collect()
    }

    pub fn total_mass(&self) -> f64 {
        *self.inner.last().unwrap_or(&0.0)
    }

    /// `Phi(r)`, interpolating `M` and `O` between nodes by cubic Hermite polynomials with the
    /// exact derivatives `M' = 4 pi r^2 rho` and `O' = -M' / r`.
    pub fn at(&self, r: f64) -> f64 {
        let n = self.r.len();
        if r <= self.r[0] {
            return self.at_node(0);
        }
        if r >= self.r[n - 1] {
            return self.inner[n - 1] / r;
        }
        let i = match self.r.binary_search_by(|v| v.total_cmp(&r)) {
            Ok(i) => return self.at_node(i),
            Err(i) => i - 1,
        };
        let (r0, r1) = (self.r[i], self.r[i + 1]);
        let h = r1 - r0;
        let t = (r - r0) / h;
        let hermite = |y0: f64, y1: f64, d0: f64, d1: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
        };
        let (s0, s1) = (self.slope[i], self.slope[i + 1]);
        let m = hermite(self.inner[i], self.inner[i + 1], s0, s1);
        let o = hermite(self.outer[i], self.outer[i + 1], -s0 / r0, -s1 / r1);
        m / r + o
    }
}

/// `phi(r) = Z/r - (rho * |x|^{-1})(r)` by Newton's theorem.
pub fn newton_radial_potential(rho: &RadialDensity, r: f64) -> f64 {
    rho.z / r - rho.screening().at(r)
}

/// Coefficient `c` in `rho = c [phi + nu]_+^{1/2}`.
pub fn density_coefficient(b: f64) -> f64 {
    b / (2.0 * PI * PI)
}

/// Kinetic coefficient `4 pi^4 / (3 B^2)`.
pub fn kinetic_coefficient(b: f64) -> f64 {
    4.0 * PI.powi(4) / (3.0 * b * b)
}

pub fn stf_energy(rho: &RadialDensity) -> EnergyReport {
    let wv = rho.grid.volume_weights();
    let r = rho.grid.nodes();
    let phi = rho.screening().nodes();
    let kc = kinetic_coefficient(rho.b);
    let mut kin = 0.0;
    let mut att = 0.0;
    let mut rep = 0.0;
    for i in 0..r.len() {
        let p = rho.rho[i];
        kin += wv[i] * kc * p * p * p;
        att -= wv[i] * rho.z * p / r[i];
        rep += 0.5 * wv[i] * p * phi[i];
    }
    EnergyReport::new(kin, att, rep, rho.particle_number(), rho.nu)
}

/// `-(B / 3 pi^2) int [phi + nu]_+^{3/2} + nu N - D(rho, rho)`.
pub fn reconstructed_energy(rho: &RadialDensity) -> f64 {
    let wv = rho.grid.volume_weights();
    let r = rho.grid.nodes();
    let scr = rho.screening();
    let mut trace = 0.0;
    let mut rep = 0.0;
    for i in 0..r.len() {
        let phi_s = scr.at_node(i);
        let w = (rho.z / r[i] - phi_s + rho.nu).max(0.0);
        trace += wv[i] * w * w.sqrt();
        rep += 0.5 * wv[i] * rho.rho[i] * phi_s;
    }
    -rho.b / (3.0 * PI * PI) * trace + rho.nu * rho.particle_number() - rep
}

/// `sup_r |4 pi^4 rho^2 / B^2 - [phi + nu]_+| * r / Z`.
///
/// Weighting by `r / Z` measures the mismatch relative to the local nuclear potential `Z / r`.
pub fn tf_residual(rho: &RadialDensity) -> f64 {
    let r = rho.grid.nodes();
    let scr = rho.screening();
    let k = 3.0 * kinetic_coefficient(rho.b);
    (0..r.len())
        .map(|i| {
            let w = (rho.z / r[i] - scr.at_node(i) + rho.nu).max(0.0);
            (k * rho.rho[i] * rho.rho[i] - w).abs() * r[i] / rho.z
        })
        .fold(0.0, f64::max)
}

/// Particle-number target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Occupation {
    Neutral,
    Ionic(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StfOptions {
    pub mixing: f64,
    pub anderson_depth: usize,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for StfOptions {
    fn default() -> Self {
        Self {
            mixing: 0.2,
            anderson_depth: 4,
            tol: 1e-9,
            max_iterations: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StfSolution {
    pub density: RadialDensity,
    pub energy: EnergyReport,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// `nu <= 0` with `sum w c sqrt([a + nu]_+) = n_target`; `0` if even `nu = 0` holds less mass.
fn fit_chemical_potential(a: &[f64], wv: &[f64], c: f64, n_target: f64) -> f64 {
    let mass = |nu: f64| -> f64 {
        a.iter()
            .zip(wv)
            .map(|(&ai, &w)| {
                let v = ai + nu;
                if v > 0.0 {
                    w * c * v.sqrt()
                } else {
                    0.0
                }
            })
            .sum()
    };
    if mass(0.0) <= n_target {
        return 0.0;
    }
    let mut lo = -a.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > n_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

struct TfMap {
    z: f64,
    r: Vec<f64>,
    wv: Vec<f64>,
    c: f64,
    n_target: f64,
}

impl TfMap {
    /// TF density and chemical potential generated by the screening potential `phi_s`.
    fn density(&self, phi_s: &[f64]) -> (Vec<f64>, f64) {
        let a: Vec<f64> = (0..self.r.len()).map(|i| self.z / self.r[i] - phi_s[i]).collect();
        let nu = fit_chemical_potential(&a, &self.wv, self.c, self.n_target);
        let rho = a.iter().map(|ai| self.c * (ai + nu).max(0.0).sqrt()).collect();
        (rho, nu)
    }

    fn screening(&self, grid: &RadialGrid, rho: &[f64]) -> Vec<f64> {
        let scr = Screening::new(grid, rho);
        (0..self.r.len()).map(|i| scr.at_node(i)).collect()
    }
}

/// Iterations without halving the best residual before the mixer restarts.
const STALL: usize = 100;

/// Self-consistent STF density for `Z`, `B` and the requested occupation.
///
/// The iterate is the screening potential `Phi = rho * |x|^{-1}`: each step forms the TF density of
/// `Z/r - Phi`, fixes `nu <= 0` by bisection so that it carries exactly `N`, and advances by
/// Anderson mixing on `r Phi / Z`. Mixing the smooth potential avoids the kink of `rho` at the edge.
pub fn solve_stf(z: f64, b: f64, occupation: Occupation, grid: &RadialGrid, opts: &StfOptions) -> Result<StfSolution> {
    ensure(z > 0.0 && z.is_finite() && b > 0.0 && b.is_finite(), || format!("need Z, B > 0, got {z}, {b}"))?;
    ensure(opts.mixing > 0.0 && opts.mixing <= 1.0, || format!("mixing must lie in (0, 1], got {}", opts.mixing))?;
    let n_target = match occupation {
        Occupation::Neutral => z,
        Occupation::Ionic(n) => {
            ensure(n > 0.0 && n.is_finite(), || format!("particle number must be positive, got {n}"))?;
            if n > z * (1.0 + 1e-12) {
                return Err(Error::NExceedsZ { n, z });
            }
            n.min(z)
        }
    };
    let map = TfMap {
        z,
        r: grid.nodes().to_vec(),
        wv: grid.volume_weights(),
        c: density_coefficient(b),
        n_target,
    };
    let scale: Vec<f64> = map.r.iter().map(|r| r / z).collect();
    let (rho0, _) = map.density(&vec![0.0; map.r.len()]);
    let mut phi_s = map.screening(grid, &rho0);
    let mut mixer = Anderson::new(opts.anderson_depth, opts.mixing);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_at = 0;
    for it in 0..opts.max_iterations {
        let (rho, _) = map.density(&phi_s);
        let image = map.screening(grid, &rho);
        let f: Vec<f64> = image.iter().zip(&phi_s).zip(&scale).map(|((g, p), s)| (g - p) * s).collect();
        let residual = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        history.push(residual);
        if residual < opts.tol {
            let (rho, nu) = map.density(&image);
            let density = RadialDensity::new(grid.clone(), rho, z, b, nu)?;
            let energy = stf_energy(&density);
            let residual = tf_residual(&density);
            return Ok(StfSolution {
                density,
                energy,
                residual,
                iterations: it + 1,
                history,
            });
        }
        if residual > 1e3 * best || it - best_at > STALL {
            mixer.restart(0.5);
            best = residual;
            best_at = it;
        }
        if residual < 0.5 * best {
            best_at = it;
        }
        best = best.min(residual);
        let x: Vec<f64> = phi_s.iter().zip(&scale).map(|(p, s)| p * s).collect();
        let next = mixer.step(&x, &f);
        phi_s = next.iter().zip(&scale).map(|(v, s)| v / s).collect();
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

/// Support radius and edge behaviour of a solved density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportInfo {
    /// Last node with `rho > 1e-12 max rho`.
    pub radius: f64,
    pub node: usize,
    /// Edge location from the power-law fit.
    pub fitted_radius: f64,
    /// Exponent `p` in `r [phi + nu]_+ ~ C (r_S - r)^p`.
    pub edge_exponent: f64,
    pub fit_points: usize,
}

pub fn support_radius(rho: &RadialDensity) -> Result<SupportInfo> {
    let max = rho.rho.iter().fold(0.0f64, |m, v| m.max(*v));
    ensure(max > 0.0, || "density vanishes identically".into())?;
    let node = rho
        .rho
        .iter()
        .rposition(|&v| v > 1e-12 * max)
        .expect("positive maximum");
    let r = rho.grid.nodes();
    if node + 1 >= r.len() {
        return Err(Error::GridExtension(rho.grid.r_max()));
    }
    let (fitted_radius, edge_exponent, fit_points) = edge_fit(rho, node)?;
    Ok(SupportInfo {
        radius: r[node],
        node,
        fitted_radius,
        edge_exponent,
        fit_points,
    })
}

/// Least-squares fit of `ln(r V) = ln C + p ln(r_S - r)` on the outer edge.
///
/// The window is the contiguous run of nodes inside the support whose `r V` lies between
/// `1e-4` and `1e-1` of its maximum; the last few occupied nodes carry the discretization
/// tail and are excluded. `r_S` is a free parameter scanned beyond the window.
fn edge_fit(rho: &RadialDensity, node: usize) -> Result<(f64, f64, usize)> {
    const MIN_POINTS: usize = 6;
    let r = rho.grid.nodes();
    let k = 3.0 * kinetic_coefficient(rho.b);
    let rv: Vec<f64> = (0..=node).map(|i| r[i] * k * rho.rho[i] * rho.rho[i]).collect();
    let peak = rv.iter().fold(0.0f64, |m, v| m.max(*v));
    let (lo, hi) = (1e-4 * peak, 1e-1 * peak);
    let Some(last) = rv.iter().rposition(|&v| v >= lo) else {
        return Err(Error::InsufficientPoints(0));
    };
    let mut first = last;
    while first > 0 && rv[first - 1] <= hi && rv[first - 1] >= lo {
        first -= 1;
    }
    let idx: Vec<usize> = (first..=last).filter(|&i| rv[i] <= hi).collect();
    if idx.len() < MIN_POINTS {
        return Err(Error::InsufficientPoints(idx.len()));
    }
    let ys: Vec<f64> = idx.iter().map(|&i| rv[i].ln()).collect();
    let fit = |rs: f64| -> (f64, f64) {
        let xs: Vec<f64> = idx.iter().map(|&i| (rs - r[i]).ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
        (slope, sse)
    };
    let a = r[last];
    let span = 2.0 * (r[node + 1] - a);
    let mut best = (f64::INFINITY, a, 0.0);
    for j in 1..=4000 {
        let rs = a + span * j as f64 / 4000.0;
        let (slope, sse) = fit(rs);
        if sse < best.0 {
            best = (sse, rs, slope);
        }
    }
    Ok((best.1, best.2, idx.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_density_gives_bare_coulomb() {
        let g = RadialGrid::for_atom(3.0, 2.0, 400).unwrap();
        let rho = RadialDensity::zero(g.clone(), 3.0, 2.0).unwrap();
        for &r in &[1e-3, 0.5, 7.0] {
            assert_eq!(newton_radial_potential(&rho, r), 3.0 / r);
        }
        let e = stf_energy(&rho);
        assert_eq!((e.kinetic_like, e.attraction, e.repulsion, e.total), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn point_mass_in_first_cell() {
        let g = RadialGrid::for_atom(1.0, 1.0, 300).unwrap();
        let mut v = vec![0.0; g.len()];
        let n = 0.7;
        v[0] = n / g.volume_weights()[0];
        let rho = RadialDensity::new(g.clone(), v, 1.0, 1.0, 0.0).unwrap();
        for &r in &g.nodes()[1..] {
            let phi = newton_radial_potential(&rho, r);
            assert!((phi - (1.0 - n) / r).abs() <= 1e-12 * (1.0 - n) / r);
        }
    }

    #[test]
    fn chemical_potential_fit_hits_mass() {
        let a = vec![3.0, 2.0, 1.0, 0.5, -1.0];
        let w = vec![1.0; 5];
        let nu = fit_chemical_potential(&a, &w, 1.0, 2.0);
        let mass: f64 = a.iter().map(|x| (x + nu).max(0.0).sqrt()).sum();
        assert!((mass - 2.0).abs() < 1e-12 && nu < 0.0);
        assert_eq!(fit_chemical_potential(&a, &w, 1.0, 100.0), 0.0);
    }

    #[test]
    fn refuses_more_electrons_than_charge() {
        let g = RadialGrid::for_atom(1.0, 1.0, 200).unwrap();
        let err = solve_stf(1.0, 1.0, Occupation::Ionic(1.5), &g, &StfOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NExceedsZ { .. }));
    }
}
