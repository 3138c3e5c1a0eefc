//! Negative spectrum of `-d^2/dz^2 - W(z)` on a box or on the whole line.
//!
//! The operator is discretised by 3-point finite differences on a [`UniformGrid`], either with
//! Dirichlet walls at the ends or with the exterior eliminated exactly when `W` vanishes outside. Eigenvalues are located by Sturm bisection on the grid and on the grid with
//! half the spacing; reported values are the Richardson combination `(4 l_{h/2} - l_h) / 3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::tridiag::SymTridiagonal;

/// A real potential `W(z)`; the operator is `-d^2/dz^2 - W`.
pub trait Potential: Sync {
    fn value(&self, z: f64) -> f64;

    fn sample(&self, grid: &UniformGrid) -> Vec<f64> {
        grid.nodes().into_iter().map(|z| self.value(z)).collect()
    }

    fn label(&self) -> String;
}

/// `W = depth` on `|z| < a`, `depth / 2` at `|z| = a`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareWell {
    pub depth: f64,
    pub half_width: f64,
}

impl Potential for SquareWell {
    fn value(&self, z: f64) -> f64 {
        let a = z.abs();
        if a < self.half_width {
            self.depth
        } else if a == self.half_width {
            0.5 * self.depth
        } else {
            0.0
        }
    }

    fn label(&self) -> String {
        format!("well(depth={}, a={})", self.depth, self.half_width)
    }
}

/// `W = -omega^2 z^2`, eigenvalues `omega (2k + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub omega: f64,
}

impl Potential for Oscillator {
    fn value(&self, z: f64) -> f64 {
        -self.omega * self.omega * z * z
    }

    fn label(&self) -> String {
        format!("oscillator(omega={})", self.omega)
    }
}

/// `W = charge / sqrt(z^2 + a^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedCoulomb {
    pub charge: f64,
    pub a: f64,
}

impl Potential for RegularizedCoulomb {
    fn value(&self, z: f64) -> f64 {
        self.charge / (z * z + self.a * self.a).sqrt()
    }

    fn label(&self) -> String {
        format!("coulomb(charge={}, a={})", self.charge, self.a)
    }
}

/// Tabulated potential, linearly interpolated and zero outside the data range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPotential {
    z: Vec<f64>,
    w: Vec<f64>,
    label: String,
}

impl SampledPotential {
    pub fn new(z: Vec<f64>, w: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if z.len() != w.len() || z.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "sampled potential needs matching z/W columns of length >= 2, got {} and {}",
                z.len(),
                w.len()
            )));
        }
        if !z.windows(2).all(|p| p[1] > p[0]) {
            return Err(Error::InvalidParameter("sampled potential: z must be strictly increasing".into()));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sampled potential has non-finite value {bad}")));
        }
        Ok(Self {
            z,
            w,
            label: label.into(),
        })
    }

    /// Values on the nodes of `grid`, taken as-is.
    pub fn on_grid(grid: &UniformGrid, w: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        Self::new(grid.nodes(), w, label)
    }
}

impl Potential for SampledPotential {
    fn value(&self, z: f64) -> f64 {
        let n = self.z.len();
        if z < self.z[0] || z > self.z[n - 1] {
            return 0.0;
        }
        let i = match self.z.binary_search_by(|v| v.total_cmp(&z)) {
            Ok(i) => return self.w[i],
            Err(i) => i - 1,
        };
        let t = (z - self.z[i]) / (self.z[i + 1] - self.z[i]);
        self.w[i] + t * (self.w[i + 1] - self.w[i])
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Closure-backed potential.
pub struct FnPotential<F> {
    f: F,
    label: String,
}

impl<F: Fn(f64) -> f64 + Sync> FnPotential<F> {
    pub fn new(f: F, label: impl Into<String>) -> Self {
        Self { f, label: label.into() }
    }
}

impl<F: Fn(f64) -> f64 + Sync> Potential for FnPotential<F> {
    fn value(&self, z: f64) -> f64 {
        (self.f)(z)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Combine spacings `h` and `h/2`; otherwise report the raw grid eigenvalues.
    pub richardson: bool,
    /// A warning is recorded when `|l_h - l_{h/2}| > discretization_tol * max(1, |l|)`.
    pub discretization_tol: f64,
    /// Compute eigenvectors and fail if any has > 1% of its mass in the outer 10% of the box.
    /// Only meaningful with Dirichlet walls.
    pub check_box: bool,
    pub boundary: Boundary,
}

/// Treatment of the grid ends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// `psi = 0` at the first and last node.
    #[default]
    Dirichlet,
    /// `W = 0` beyond the grid; the decaying exterior solution `psi_{n+k} = psi_n q^k`,
    /// `q + 1/q = 2 + h^2 kappa^2`, is eliminated into the end nodes. Counts and eigenvalues are
    /// those of the finite-difference operator on the whole line.
    Open,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            richardson: true,
            discretization_tol: 1e-2,
            check_box: false,
            boundary: Boundary::Dirichlet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    /// Ascending, all strictly below `cutoff`.
    pub eigenvalues: Vec<f64>,
    pub cutoff: f64,
    pub potential_id: String,
    /// Raw eigenvalues at spacing `h` and `h/2`, index-matched with `eigenvalues` before filtering.
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SpectralResult {
    /// `sum_i [l_i - nu]_-` over the reported eigenvalues.
    pub fn sum_below(&self, nu: f64) -> f64 {
        self.eigenvalues.iter().filter(|&&l| l < nu).map(|l| l - nu).sum()
    }
}

/// Finite-difference matrix of `-d^2/dz^2 - W` on the interior nodes.
pub fn hamiltonian(grid: &UniformGrid, w: &[f64]) -> SymTridiagonal {
    let h2 = grid.h() * grid.h();
    let n = grid.len() - 2;
    let d = (1..=n).map(|i| 2.0 / h2 - w[i]).collect();
    let e = vec![-1.0 / h2; n - 1];
    SymTridiagonal::new(d, e)
}

/// Discrete operator for one boundary treatment.
enum Discrete {
    Walls(SymTridiagonal),
    /// Diagonal `2/h^2 - W` on all nodes; the end entries get `-q(x)/h^2` at each shift `x`.
    Open { d: Vec<f64>, h2: f64 },
}

impl Discrete {
    fn new(grid: &UniformGrid, w: &[f64], boundary: Boundary) -> Self {
        match boundary {
            Boundary::Dirichlet => Self::Walls(hamiltonian(grid, w)),
            Boundary::Open => {
                let h2 = grid.h() * grid.h();
                Self::Open {
                    d: w.iter().map(|v| 2.0 / h2 - v).collect(),
                    h2,
                }
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::Walls(t) => t.len(),
            Self::Open { d, .. } => d.len(),
        }
    }

    /// Exterior decay factor at shift `x`; eigenvalues of the open problem are negative.
    fn exterior(x: f64, h2: f64) -> f64 {
        let a = 0.5 * h2 * (-x).max(0.0);
        1.0 + a - (a * (a + 2.0)).sqrt()
    }

    fn at_shift(d: &[f64], h2: f64, x: f64) -> SymTridiagonal {
        let q = Self::exterior(x, h2);
        let mut d = d.to_vec();
        let n = d.len();
        d[0] -= q / h2;
        d[n - 1] -= q / h2;
        SymTridiagonal::new(d, vec![-1.0 / h2; n - 1])
    }

    /// Eigenvalues strictly below `x`. For the open problem this is the inertia of the Schur
    /// complement of the exterior block, which is positive definite for `x < 0`.
    fn count(&self, x: f64) -> usize {
        match self {
            Self::Walls(t) => t.sturm_count(x),
            Self::Open { d, h2 } => Self::at_shift(d, *h2, x.min(0.0)).sturm_count(x.min(0.0)),
        }
    }

    fn bracket(&self) -> (f64, f64) {
        match self {
            Self::Walls(t) => t.gershgorin(),
            Self::Open { d, h2 } => {
                let lo = d.iter().fold(f64::INFINITY, |a, v| a.min(*v)) - 2.0 / h2;
                (lo.min(-1.0), 0.0)
            }
        }
    }

    fn lowest(&self, count: usize, tol: f64) -> Vec<f64> {
        match self {
            Self::Walls(t) => t.lowest(count, tol),
            Self::Open { .. } => {
                let (lo0, hi0) = self.bracket();
                (0..count.min(self.count(0.0)))
                    .map(|k| {
                        let (mut lo, mut hi) = (lo0, hi0);
                        loop {
                            let mid = 0.5 * (lo + hi);
                            if hi - lo <= tol || mid <= lo || mid >= hi {
                                return mid;
                            }
                            if self.count(mid) > k {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                    })
                    .collect()
            }
        }
    }

    fn walls(&self) -> Option<&SymTridiagonal> {
        match self {
            Self::Walls(t) => Some(t),
            Self::Open { .. } => None,
        }
    }
}

fn sup_norm(w: &[f64]) -> f64 {
    w.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn bisection_tol(w: &[f64]) -> f64 {
    1e-10 * sup_norm(w).max(1.0)
}

struct Sampled {
    coarse: Vec<f64>,
    fine: Vec<f64>,
}

fn sample_both(w: &dyn Potential, grid: &UniformGrid, richardson: bool) -> Result<Sampled> {
    let (coarse, fine) = if richardson {
        let fine = w.sample(&grid.refined());
        let coarse = fine.iter().step_by(2).copied().collect();
        (coarse, fine)
    } else {
        (w.sample(grid), Vec::new())
    };
    if let Some(bad) = coarse.iter().chain(&fine).find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("potential {} is not finite on the grid ({bad})", w.label())));
    }
    Ok(Sampled { coarse, fine })
}

fn boundary_mass_check(grid: &UniformGrid, t: &SymTridiagonal, eigenvalues: &[f64]) -> Result<()> {
    let vecs = t.eigenvectors(eigenvalues);
    let z_cut = 0.9 * grid.z_max();
    for (lam, v) in eigenvalues.iter().zip(&vecs) {
        let outer: f64 = v
            .iter()
            .enumerate()
            .filter(|(i, _)| grid.z(i + 1).abs() > z_cut)
            .map(|(_, x)| x * x)
            .sum();
        if outer > 0.01 {
            return Err(Error::GridTooSmall(format!(
                "eigenvalue {lam:.6e} has {:.2}% of its mass in the outer 10% of [-{z}, {z}]",
                100.0 * outer,
                z = grid.z_max()
            )));
        }
    }
    Ok(())
}

fn check_simple(eigenvalues: &[f64], scale: f64, warnings: &mut Vec<String>) {
    for p in eigenvalues.windows(2) {
        if p[1] - p[0] < 1e-12 * scale {
            warnings.push(format!("near-degenerate eigenvalues {:.12e} and {:.12e}", p[0], p[1]));
        }
    }
}

/// Eigenvalues below `cutoff`, or the `lowest` ones when given.
fn solve(
    w: &dyn Potential,
    grid: &UniformGrid,
    cutoff: f64,
    lowest: Option<usize>,
    opts: &SpectralOptions,
) -> Result<SpectralResult> {
    let s = sample_both(w, grid, opts.richardson)?;
    if opts.boundary == Boundary::Open {
        if opts.check_box {
            return Err(Error::InvalidParameter("the box check needs Dirichlet walls".into()));
        }
        let ends = [s.coarse[0], s.coarse[s.coarse.len() - 1]];
        if ends.iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "open boundary needs W = 0 at the grid ends, got {} and {}",
                ends[0], ends[1]
            )));
        }
    }
    let tc = Discrete::new(grid, &s.coarse, opts.boundary);
    let tol_c = bisection_tol(&s.coarse);
    let mut warnings = Vec::new();
    let scale = sup_norm(&s.coarse).max(1.0);
    if !opts.richardson {
        let k = match lowest {
            Some(k) => k,
            None => tc.count(cutoff),
        };
        let eigenvalues = tc.lowest(k, tol_c);
        check_simple(&eigenvalues, scale, &mut warnings);
        if let (true, Some(t)) = (opts.check_box, tc.walls()) {
            boundary_mass_check(grid, t, &eigenvalues)?;
        }
        return Ok(SpectralResult {
            coarse: eigenvalues.clone(),
            fine: Vec::new(),
            eigenvalues,
            cutoff,
            potential_id: w.label(),
            warnings,
        });
    }
    let fine_grid = grid.refined();
    let tf = Discrete::new(&fine_grid, &s.fine, opts.boundary);
    let tol_f = bisection_tol(&s.fine);
    let k = match lowest {
        Some(k) => k.min(tc.len()),
        None => tc.count(cutoff).max(tf.count(cutoff)).min(tc.len()),
    };
    let coarse = tc.lowest(k, tol_c);
    let fine = tf.lowest(k, tol_f);
    let mut eigenvalues = Vec::with_capacity(k);
    for (&lc, &lf) in coarse.iter().zip(&fine) {
        let extrapolated = (4.0 * lf - lc) / 3.0;
        if (lf - lc).abs() > opts.discretization_tol * extrapolated.abs().max(1.0) {
            warnings.push(format!(
                "halving h moved eigenvalue {lc:.6e} to {lf:.6e} (tolerance {:.1e})",
                opts.discretization_tol
            ));
        }
        if lowest.is_some() || extrapolated < cutoff {
            eigenvalues.push(extrapolated);
        }
    }
    check_simple(&eigenvalues, scale, &mut warnings);
    if let (true, Some(t)) = (opts.check_box, tf.walls()) {
        boundary_mass_check(&fine_grid, t, &fine[..eigenvalues.len()])?;
    }
    Ok(SpectralResult {
        eigenvalues,
        cutoff,
        potential_id: w.label(),
        coarse,
        fine,
        warnings,
    })
}

/// All eigenvalues below `cutoff`.
pub fn negative_spectrum(w: &dyn Potential, grid: &UniformGrid, cutoff: f64) -> Result<SpectralResult> {
    negative_spectrum_with(w, grid, cutoff, &SpectralOptions::default())
}

pub fn negative_spectrum_with(
    w: &dyn Potential,
    grid: &UniformGrid,
    cutoff: f64,
    opts: &SpectralOptions,
) -> Result<SpectralResult> {
    if cutoff.is_nan() {
        return Err(Error::InvalidParameter("cutoff is NaN".into()));
    }
    solve(w, grid, cutoff, None, opts)
}

/// The lowest `count` eigenvalues regardless of sign (diagnostic mode).
pub fn lowest_eigenvalues(
    w: &dyn Potential,
    grid: &UniformGrid,
    count: usize,
    opts: &SpectralOptions,
) -> Result<SpectralResult> {
    solve(w, grid, f64::INFINITY, Some(count), opts)
}

/// `sum_i [l_i - nu]_-`.
pub fn sum_neg(w: &dyn Potential, grid: &UniformGrid, nu: f64) -> Result<f64> {
    check_shift(nu)?;
    Ok(negative_spectrum(w, grid, nu)?.sum_below(nu))
}

/// Number of eigenvalues below `nu`.
pub fn counting(w: &dyn Potential, grid: &UniformGrid, nu: f64) -> Result<usize> {
    Ok(negative_spectrum(w, grid, nu)?.eigenvalues.len())
}

fn check_shift(nu: f64) -> Result<()> {
    if nu.is_nan() || nu > 0.0 {
        return Err(Error::InvalidParameter(format!("shift must be nonpositive, got {nu}")));
    }
    Ok(())
}

/// Grid-level eigenvalue counts below `nu` from the two Sturm paths (pivot signs, sign agreements).
pub fn sturm_counts(w: &dyn Potential, grid: &UniformGrid, nu: f64) -> Result<(usize, usize)> {
    let s = sample_both(w, grid, false)?;
    let t = hamiltonian(grid, &s.coarse);
    Ok((t.sturm_count(nu), t.sturm_sign_agreements(nu)))
}

/// `sum_{l_i < nu} |psi_i(z)|^2` with `sum_j |psi_i(z_j)|^2 h = 1`, on the nodes of `grid`.
pub fn diagonal_density(w: &dyn Potential, grid: &UniformGrid, nu: f64) -> Result<Vec<f64>> {
    let s = sample_both(w, grid, false)?;
    let t = hamiltonian(grid, &s.coarse);
    let eigenvalues = t.eigenvalues_below(nu, bisection_tol(&s.coarse));
    boundary_mass_check(grid, &t, &eigenvalues)?;
    let vecs = t.eigenvectors(&eigenvalues);
    let h = grid.h();
    let mut density = vec![0.0; grid.len()];
    for v in &vecs {
        for (i, x) in v.iter().enumerate() {
            density[i + 1] += x * x / h;
        }
    }
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_laplacian_has_no_negative_spectrum() {
        let g = UniformGrid::new(10.0, 201).unwrap();
        let zero = FnPotential::new(|_| 0.0, "zero");
        assert!(negative_spectrum(&zero, &g, 0.0).unwrap().eigenvalues.is_empty());
        assert_eq!(sum_neg(&zero, &g, -0.5).unwrap(), 0.0);
        assert!(diagonal_density(&zero, &g, 0.0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn oscillator_levels() {
        let g = UniformGrid::new(10.0, 801).unwrap();
        let r = lowest_eigenvalues(&Oscillator { omega: 1.0 }, &g, 5, &SpectralOptions::default()).unwrap();
        for (k, l) in r.eigenvalues.iter().enumerate() {
            assert!((l - (2 * k + 1) as f64).abs() < 1e-6, "k={k}: {l}");
        }
    }

    #[test]
    fn sampled_potential_interpolates() {
        let p = SampledPotential::new(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, -1.0], "t").unwrap();
        assert_eq!(p.value(0.5), 2.0);
        assert_eq!(p.value(2.0), 1.0);
        assert_eq!(p.value(5.0), 0.0);
        assert!(SampledPotential::new(vec![1.0, 0.0], vec![0.0, 0.0], "t").is_err());
    }

    #[test]
    fn positive_shift_is_rejected() {
        let g = UniformGrid::new(1.0, 11).unwrap();
        assert!(sum_neg(&Oscillator { omega: 1.0 }, &g, 0.1).is_err());
    }
}
