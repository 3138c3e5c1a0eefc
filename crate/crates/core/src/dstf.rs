//! Discrete strong Thomas-Fermi theory: one density `rho_m(z)` per angular-momentum channel.
//!
//! Functional: `sum_m (kappa int rho_m^3 - Z int V_m rho_m) + (1/2) sum_{m,n} int int V_{m,n} rho_m rho_n`,
//! `kappa = pi^2/3`. TF equations: `3 kappa rho_m^2 = [Z V_m - sum_n V_{m,n} * rho_n + mu]_+`, `mu <= 0`.
//!
//! All integrals along the field use the trapezoid weights of the kernel grid, and the
//! convolution is the exact discrete sum on the difference grid, so the discrete TF
//! equations are the exact stationarity conditions of the discrete functional.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::grid::UniformGrid;
use crate::kernels::{v_single, KernelTable, OrbitalParams};
use crate::mixing::Anderson;
use crate::quadrature::{adaptive, gauss_legendre};
use crate::stf::{length_scale, EnergyReport};

pub const KAPPA: f64 = PI * PI / 3.0;

/// Neutral STF support radius in units of `Z^{1/5} B^{-2/5}`, used only for initial guesses.
const NEUTRAL_RADIUS: f64 = 3.72;

/// Iterations without halving the best residual before the mixer restarts.
const STALL: usize = 100;

/// Channel densities `rho_m(z_j)` for `m = 0..=m_max` on a symmetric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDensity {
    grid: UniformGrid,
    rho: Vec<Vec<f64>>,
    z: f64,
    b: f64,
    mu: f64,
}

impl ChannelDensity {
    pub fn new(grid: UniformGrid, rho: Vec<Vec<f64>>, z: f64, b: f64, mu: f64) -> Result<Self> {
        ensure(!rho.is_empty(), || "need at least one channel".into())?;
        ensure(z > 0.0 && z.is_finite() && b > 0.0 && b.is_finite(), || format!("need Z, B > 0, got {z}, {b}"))?;
        ensure(mu <= 0.0, || format!("chemical potential must be nonpositive, got {mu}"))?;
        for (m, row) in rho.iter().enumerate() {
            if row.len() != grid.len() {
                return Err(Error::Mismatch(format!("channel {m} has {} values for {} nodes", row.len(), grid.len())));
            }
            ensure(row.iter().all(|v| *v >= 0.0 && v.is_finite()), || {
                format!("channel {m} density must be finite and nonnegative")
            })?;
        }
        Ok(Self { grid, rho, z, b, mu })
    }

    pub fn zero(grid: UniformGrid, m_max: usize, z: f64, b: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![vec![0.0; n]; m_max + 1], z, b, 0.0)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn m_max(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.rho[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `int rho_m dz` for every channel.
    pub fn channel_masses(&self) -> Vec<f64> {
        let w = self.grid.trapezoid_weights();
        self.rho.iter().map(|row| dot(row, &w)).collect()
    }

    pub fn particle_number(&self) -> f64 {
        self.channel_masses().iter().sum()
    }

    /// Errors unless `table` was built for this field, grid and at least `m_max` channels.
    pub fn check_table(&self, table: &KernelTable) -> Result<()> {
        if table.grid() != &self.grid {
            return Err(Error::Mismatch(format!(
                "density grid {} vs table grid {}",
                self.grid.fingerprint(),
                table.grid().fingerprint()
            )));
        }
        if table.m_max() < self.m_max() {
            return Err(Error::Mismatch(format!("table covers m <= {}, density needs {}", table.m_max(), self.m_max())));
        }
        if (table.b() - self.b).abs() > 1e-14 * self.b {
            return Err(Error::Mismatch(format!("table field {} vs density field {}", table.b(), self.b)));
        }
        Ok(())
    }
}

/// Inner and outer radius of the annulus `sqrt(2m/B) <= |x_perp| <= sqrt(2(m+1)/B)`.
pub fn annulus(m: usize, b: f64) -> (f64, f64) {
    ((2.0 * m as f64 / b).sqrt(), (2.0 * (m + 1) as f64 / b).sqrt())
}

/// Three-dimensional density `(B/2pi) sum_m chi_m(x_perp) rho_m(z)`, constant on each annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MstfDensity {
    channels: ChannelDensity,
}

impl From<ChannelDensity> for MstfDensity {
    fn from(channels: ChannelDensity) -> Self {
        Self { channels }
    }
}

impl MstfDensity {
    pub fn channels(&self) -> &ChannelDensity {
        &self.channels
    }

    /// Annulus index containing the transverse radius `s`.
    pub fn annulus_of(&self, s: f64) -> usize {
        (0.5 * self.channels.b * s * s).floor() as usize
    }

    /// Density at transverse radius `s` and grid node `i`; zero outside the tabulated annuli.
    pub fn value(&self, s: f64, i: usize) -> f64 {
        let m = self.annulus_of(s);
        if m > self.channels.m_max() {
            0.0
        } else {
            self.channels.b / (2.0 * PI) * self.channels.rho[m][i]
        }
    }
}

/// Evaluates `U_m = sum_n V_{m,n} * (w rho_n)` on the grid by zero-padded FFT convolution.
pub struct Convolver {
    n: usize,
    m_max: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernels: Vec<Vec<Complex<f64>>>,
}

fn pair_slot(m: usize, n: usize) -> usize {
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    hi * (hi + 1) / 2 + lo
}

impl Convolver {
    pub fn new(table: &KernelTable, m_max: usize) -> Result<Self> {
        ensure(m_max <= table.m_max(), || format!("table covers m <= {}, need {m_max}", table.m_max()))?;
        let n = table.grid().len();
        let len = (3 * n - 2).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut kernels = Vec::with_capacity((m_max + 1) * (m_max + 2) / 2);
        for hi in 0..=m_max {
            for lo in 0..=hi {
                let mut buf: Vec<Complex<f64>> = table.pair_full(lo, hi).into_iter().map(|v| Complex::new(v, 0.0)).collect();
                buf.resize(len, Complex::new(0.0, 0.0));
                forward.process(&mut buf);
                kernels.push(buf);
            }
        }
        Ok(Self {
            n,
            m_max,
            len,
            forward,
            inverse,
            kernels,
        })
    }

    /// Repulsive channel potentials for densities `rho` with quadrature weights `w`.
    pub fn potentials(&self, rho: &[Vec<f64>], w: &[f64]) -> Vec<Vec<f64>> {
        let channels = rho.len();
        assert!(channels <= self.m_max + 1, "convolver built for {} channels", self.m_max + 1);
        let spectra: Vec<Vec<Complex<f64>>> = rho
            .par_iter()
            .map(|row| {
                let mut buf = vec![Complex::new(0.0, 0.0); self.len];
                for j in 0..self.n {
                    buf[j] = Complex::new(w[j] * row[j], 0.0);
                }
                self.forward.process(&mut buf);
                buf
            })
            .collect();
        let scale = 1.0 / self.len as f64;
        (0..channels)
            .into_par_iter()
            .map(|m| {
                let mut acc = vec![Complex::new(0.0, 0.0); self.len];
                for (nn, spec) in spectra.iter().enumerate() {
                    let k = &self.kernels[pair_slot(m, nn)];
                    for ((a, x), y) in acc.iter_mut().zip(k).zip(spec) {
                        *a += x * y;
                    }
                }
                self.inverse.process(&mut acc);
                (0..self.n).map(|i| acc[i + self.n - 1].re * scale).collect()
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn report(rho: &ChannelDensity, table: &KernelTable, repulsive: &[Vec<f64>]) -> EnergyReport {
    let w = rho.grid.trapezoid_weights();
    let mut kinetic = 0.0;
    let mut attraction = 0.0;
    let mut repulsion = 0.0;
    for (m, row) in rho.rho.iter().enumerate() {
        let v = table.single(m);
        for j in 0..row.len() {
            kinetic += w[j] * row[j] * row[j] * row[j];
            attraction += w[j] * v[j] * row[j];
            repulsion += w[j] * repulsive[m][j] * row[j];
        }
    }
    EnergyReport::new(KAPPA * kinetic, -rho.z * attraction, 0.5 * repulsion, rho.particle_number(), rho.mu)
}

/// DSTF energy of `rho`; the interaction uses the discrete convolution on the difference grid.
pub fn dstf_functional(rho: &ChannelDensity, table: &KernelTable) -> Result<EnergyReport> {
    rho.check_table(table)?;
    let conv = Convolver::new(table, rho.m_max())?;
    let u = conv.potentials(&rho.rho, &rho.grid.trapezoid_weights());
    Ok(report(rho, table, &u))
}

/// `sum_{m,n} int int V_{m,n}(z - z') f_m(z) g_n(z')` by the direct double sum.
fn direct_pair_energy(f: &[Vec<f64>], g: &[Vec<f64>], table: &KernelTable) -> f64 {
    let w = table.grid().trapezoid_weights();
    let n = w.len();
    (0..f.len())
        .into_par_iter()
        .map(|m| {
            let mut s = 0.0;
            for (k, gk) in g.iter().enumerate() {
                let v = table.pair_half(m, k);
                for i in 0..n {
                    if f[m][i] == 0.0 {
                        continue;
                    }
                    let inner: f64 = (0..n).map(|j| v[i.abs_diff(j)] * w[j] * gk[j]).sum();
                    s += w[i] * f[m][i] * inner;
                }
            }
            s
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// `int 2 pi s g(s) ds` over annulus `m` by Gauss-Legendre in `s`.
fn annulus_integral(m: usize, b: f64, points: usize, g: impl Fn(f64) -> f64) -> f64 {
    let (a, c) = annulus(m, b);
    let rule = gauss_legendre(points);
    let half = 0.5 * (c - a);
    let mid = 0.5 * (c + a);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(t, wt)| {
            let s = mid + half * t;
            wt * half * 2.0 * PI * s * g(s)
        })
        .sum()
}

/// MSTF energy of the boxcar reconstruction, evaluated in three dimensions.
///
/// Transverse integrals run over each annulus by quadrature of the reconstructed density; the
/// longitudinal interaction is a direct double sum. This path shares no code with
/// [`dstf_functional`] beyond the kernel table.
pub fn mstf_energy(rho: &MstfDensity, table: &KernelTable) -> Result<EnergyReport> {
    let ch = &rho.channels;
    ch.check_table(table)?;
    let b = ch.b;
    let w = ch.grid.trapezoid_weights();
    let n = w.len();
    let kin_coeff = 4.0 * PI.powi(4) / (3.0 * b * b);
    let mut kinetic = 0.0;
    let mut attraction = 0.0;
    // Transverse integral of the 3D density over annulus m, per grid node.
    let mut q = vec![vec![0.0; n]; ch.m_max() + 1];
    for m in 0..=ch.m_max() {
        let (a, c) = annulus(m, b);
        let probe = 0.5 * (a + c);
        for i in 0..n {
            let val = rho.value(probe, i);
            if val == 0.0 {
                continue;
            }
            let cube = annulus_integral(m, b, 4, |s| rho.value(s, i).powi(3));
            let first = annulus_integral(m, b, 4, |s| rho.value(s, i));
            kinetic += w[i] * kin_coeff * cube;
            attraction += w[i] * ch.z * table.single(m)[i] * first;
            q[m][i] = first;
        }
    }
    let repulsion = 0.5 * direct_pair_energy(&q, &q, table);
    Ok(EnergyReport::new(kinetic, -attraction, repulsion, ch.particle_number(), ch.mu))
}

/// MSTF functional of a cylindrically symmetric density `f(s, z)` restricted to annuli `0..=m_max`.
///
/// `points` Gauss-Legendre nodes per annulus resolve the transverse integrals.
pub fn mstf_functional_cylindrical(
    f: impl Fn(f64, f64) -> f64 + Sync,
    z: f64,
    table: &KernelTable,
    m_max: usize,
    points: usize,
) -> Result<EnergyReport> {
    ensure(m_max <= table.m_max(), || format!("table covers m <= {}, need {m_max}", table.m_max()))?;
    let b = table.b();
    let grid = table.grid();
    let w = grid.trapezoid_weights();
    let kin_coeff = 4.0 * PI.powi(4) / (3.0 * b * b);
    let avg = boxcar_average(&f, z, table, m_max, points)?;
    let mut kinetic = 0.0;
    let mut attraction = 0.0;
    for m in 0..=m_max {
        for i in 0..grid.len() {
            let zi = grid.z(i);
            kinetic += w[i] * kin_coeff * annulus_integral(m, b, points, |s| f(s, zi).powi(3));
            attraction += w[i] * z * table.single(m)[i] * avg.rho[m][i];
        }
    }
    let repulsion = 0.5 * direct_pair_energy(&avg.rho, &avg.rho, table);
    Ok(EnergyReport::new(kinetic, -attraction, repulsion, avg.particle_number(), 0.0))
}

/// Channel densities `rho_m(z) = int chi_m(x_perp) f(x_perp, z) dx_perp` of a cylindrical density.
pub fn boxcar_average(
    f: impl Fn(f64, f64) -> f64 + Sync,
    z: f64,
    table: &KernelTable,
    m_max: usize,
    points: usize,
) -> Result<ChannelDensity> {
    ensure(m_max <= table.m_max(), || format!("table covers m <= {}, need {m_max}", table.m_max()))?;
    let b = table.b();
    let grid = table.grid();
    let rho = (0..=m_max)
        .map(|m| {
            (0..grid.len())
                .map(|i| {
                    let zi = grid.z(i);
                    annulus_integral(m, b, points, |s| f(s, zi))
                })
                .collect()
        })
        .collect();
    ChannelDensity::new(grid.clone(), rho, z, b, 0.0)
}

/// Particle-number target for [`solve_dstf`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Filling {
    /// Fixed `N`; requests above the critical number saturate at `mu = 0`.
    Particles(f64),
    /// `mu = 0`: the maximal bound configuration.
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DstfOptions {
    pub mixing: f64,
    pub anderson_depth: usize,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for DstfOptions {
    fn default() -> Self {
        Self {
            mixing: 0.3,
            anderson_depth: 6,
            tol: 1e-9,
            max_iterations: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DstfSolution {
    pub density: ChannelDensity,
    pub energy: EnergyReport,
    /// Normalized TF residual of the returned density.
    pub residual: f64,
    pub iterations: usize,
    /// The requested `N` exceeded the mass bound at `mu = 0`.
    pub saturated: bool,
    /// The density reaches the box edge; only set by box-restricted solves.
    pub box_limited: bool,
    pub channel_masses: Vec<f64>,
    pub history: Vec<f64>,
}

struct DstfMap<'a> {
    z: f64,
    single: Vec<&'a [f64]>,
    w: Vec<f64>,
    conv: Convolver,
    target: Option<f64>,
    mu_floor: f64,
}

impl DstfMap<'_> {
    fn attraction(&self, rho: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let u = self.conv.potentials(rho, &self.w);
        u.into_iter()
            .zip(&self.single)
            .map(|(row, v)| row.iter().zip(v.iter()).map(|(r, vi)| self.z * vi - r).collect())
            .collect()
    }

    fn chemical_potential(&self, a: &[Vec<f64>]) -> f64 {
        self.target.map_or(0.0, |n| fit_mu(a, &self.w, n, self.mu_floor))
    }
}

fn image_mass(a: &[Vec<f64>], w: &[f64], mu: f64) -> f64 {
    a.iter()
        .map(|row| row.iter().zip(w).map(|(ai, wi)| wi * (ai + mu).max(0.0).sqrt()).sum::<f64>())
        .sum::<f64>()
        / PI
}

/// `mu` in `[floor, 0]` whose TF image carries mass `n`; `0` if even `mu = 0` holds less.
fn fit_mu(a: &[Vec<f64>], w: &[f64], n: f64, floor: f64) -> f64 {
    if image_mass(a, w, 0.0) <= n {
        return 0.0;
    }
    let (mut lo, mut hi) = (floor, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if image_mass(a, w, mid) > n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn tf_image(a: &[Vec<f64>], mu: f64) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| row.iter().map(|ai| (ai + mu).max(0.0).sqrt() / PI).collect())
        .collect()
}

/// `sup_{m,z} |3 kappa rho_m^2 - [Z V_m - sum_n V_{m,n} * rho_n + mu]_+| / (Z V_0(0))`.
pub fn tf_residual(rho: &ChannelDensity, table: &KernelTable) -> Result<f64> {
    rho.check_table(table)?;
    let conv = Convolver::new(table, rho.m_max())?;
    let u = conv.potentials(&rho.rho, &rho.grid.trapezoid_weights());
    let scale = rho.z * table.single(0)[rho.grid.center()];
    let mut worst = 0.0f64;
    for (m, row) in rho.rho.iter().enumerate() {
        let v = table.single(m);
        for j in 0..row.len() {
            let bracket = (rho.z * v[j] - u[m][j] + rho.mu).max(0.0);
            worst = worst.max((3.0 * KAPPA * row[j] * row[j] - bracket).abs());
        }
    }
    Ok(worst / scale)
}

/// Self-consistent DSTF densities for all channels of `table`.
///
/// Anderson mixing acts on the channel potentials `Z V_m - sum_n V_{m,n} * rho_n`; every density
/// built from a potential fixes `mu` in `[-Z V_0(0), 0]` by bisection so that it carries the
/// requested mass. Channels are updated simultaneously from the previous iterate.
pub fn solve_dstf(z: f64, b: f64, filling: Filling, table: &KernelTable, opts: &DstfOptions) -> Result<DstfSolution> {
    solve_in_box(z, b, filling, table, opts, false)
}

fn solve_in_box(
    z: f64,
    b: f64,
    filling: Filling,
    table: &KernelTable,
    opts: &DstfOptions,
    allow_box: bool,
) -> Result<DstfSolution> {
    ensure(z > 0.0 && z.is_finite(), || format!("nuclear charge must be positive, got {z}"))?;
    ensure((table.b() - b).abs() <= 1e-14 * b, || format!("table field {} differs from B = {b}", table.b()))?;
    ensure(opts.mixing > 0.0 && opts.mixing <= 1.0, || format!("mixing must lie in (0, 1], got {}", opts.mixing))?;
    ensure(opts.tol > 0.0 && opts.tol < 1.0, || format!("tolerance must lie in (0, 1), got {}", opts.tol))?;
    let target = match filling {
        Filling::Particles(n) => {
            ensure(n > 0.0 && n.is_finite(), || format!("particle number must be positive, got {n}"))?;
            ensure(n <= 4.0 * z, || format!("N = {n} exceeds 4Z = {}; no bound state exists", 4.0 * z))?;
            Some(n)
        }
        Filling::Critical => None,
    };
    let grid = table.grid().clone();
    let m_max = table.m_max();
    let center = grid.center();
    let v00 = table.single(0)[center];
    let map = DstfMap {
        z,
        single: (0..=m_max).map(|m| table.single(m)).collect(),
        w: grid.trapezoid_weights(),
        conv: Convolver::new(table, m_max)?,
        target,
        mu_floor: -z * v00,
    };
    // Interaction-free start; the critical problem starts from the neutral one.
    let bare: Vec<Vec<f64>> = map.single.iter().map(|v| v.iter().map(|x| z * x).collect()).collect();
    let mu0 = fit_mu(&bare, &map.w, target.unwrap_or(z), map.mu_floor);
    let mut field = map.attraction(&tf_image(&bare, mu0));
    let scale = (z * v00).sqrt() / PI;
    let mut mixer = Anderson::new(opts.anderson_depth, opts.mixing);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_at = 0;
    let n = grid.len();
    for it in 0..opts.max_iterations {
        let rho = tf_image(&field, map.chemical_potential(&field));
        let next_field = map.attraction(&rho);
        let mu = map.chemical_potential(&next_field);
        let image = tf_image(&next_field, mu);
        let residual = image
            .iter()
            .flatten()
            .zip(rho.iter().flatten())
            .map(|(g, x)| (g - x).abs())
            .fold(0.0, f64::max)
            / scale;
        history.push(residual);
        if residual < opts.tol {
            let density = ChannelDensity::new(grid.clone(), image, z, b, mu)?;
            let mut box_limited = false;
            for row in &density.rho {
                if row[0] > 0.0 || row[1] > 0.0 || row[n - 2] > 0.0 || row[n - 1] > 0.0 {
                    if !allow_box {
                        return Err(Error::GridExtension(grid.z_max()));
                    }
                    box_limited = true;
                }
            }
            let u = map.conv.potentials(&density.rho, &map.w);
            let energy = report(&density, table, &u);
            let residual = tf_residual(&density, table)?;
            let saturated = matches!(target, Some(t) if mu == 0.0 && energy.n < t * (1.0 - 1e-12));
            return Ok(DstfSolution {
                channel_masses: density.channel_masses(),
                density,
                energy,
                residual,
                iterations: it + 1,
                saturated,
                box_limited,
                history,
            });
        }
        // Restart with halved mixing on blow-up or when progress stalls.
        if residual > 1e3 * best || it - best_at > STALL {
            mixer.restart(0.5);
            best = residual;
            best_at = it;
        }
        if residual < 0.5 * best {
            best_at = it;
        }
        best = best.min(residual);
        let x: Vec<f64> = field.iter().flatten().copied().collect();
        let f: Vec<f64> = next_field.iter().flatten().zip(&x).map(|(g, p)| g - p).collect();
        field = mixer.step(&x, &f).chunks(n).map(|c| c.to_vec()).collect();
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

/// Critical particle number together with the `mu = 0` solution it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalNumber {
    pub n_c: f64,
    pub last_channel_mass: f64,
    pub solution: DstfSolution,
}

/// `N_c = sum_m int rho_m` at `mu = 0`.
///
/// Fails with a channel-truncation error when the outermost channel of `table` holds at least
/// `tol * Z`, since the infinite channel sum would then be underestimated.
pub fn critical_particle_number(z: f64, b: f64, table: &KernelTable, tol: f64, opts: &DstfOptions) -> Result<CriticalNumber> {
    let solution = solve_dstf(z, b, Filling::Critical, table, opts)?;
    let last = *solution.channel_masses.last().expect("at least one channel");
    if table.m_max() > 0 && last >= tol * z {
        return Err(Error::ChannelTruncation {
            m: table.m_max(),
            mass: last,
            threshold: tol * z,
        });
    }
    Ok(CriticalNumber {
        n_c: solution.energy.n,
        last_channel_mass: last,
        solution,
    })
}

/// One-dimensional theory: the `m = 0` channel alone.
///
/// In the absolute-minimum mode (`Filling::Critical`, `mu = 0`) the minimizer is not compactly
/// supported: its mass approaches the critical number only logarithmically in the box size. The
/// minimum is then taken over densities supported in the box, and `box_limited` is set when the
/// density reaches its edge.
pub fn solve_1dstf(z: f64, b: f64, filling: Filling, table: &KernelTable, opts: &DstfOptions) -> Result<DstfSolution> {
    let t = if table.m_max() == 0 { table.clone() } else { table.truncated(0)? };
    solve_in_box(z, b, filling, &t, opts, matches!(filling, Filling::Critical))
}

/// Box for the one-dimensional absolute minimum: half-width `max(40, 4 (pi lambda / 8)^2) / sqrt(B)`
/// and spacing `1 / (nodes_per_scale sqrt(B))`.
pub fn one_d_grid(z: f64, b: f64, nodes_per_scale: f64) -> Result<UniformGrid> {
    let s = b.sqrt().recip();
    let tail = (PI * one_d_lambda(z, b) / 8.0).powi(2);
    UniformGrid::with_spacing(40f64.max(4.0 * tail) * s, s / nodes_per_scale)
}

/// Box-restricted critical masses of the one-dimensional theory and their extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneDCritical {
    /// `(half-width, mass)` for every box, in increasing size.
    pub boxes: Vec<(f64, f64)>,
    /// Limit of `N(L) = N_inf - 1/(a + c ln L)` through the three largest boxes.
    pub extrapolated: f64,
}

/// Critical number of the one-dimensional theory from `mu = 0` solves on growing boxes.
pub fn one_d_critical_number(
    z: f64,
    b: f64,
    grids: &[UniformGrid],
    opts: &DstfOptions,
    mut tables: impl FnMut(&UniformGrid) -> Result<KernelTable>,
) -> Result<OneDCritical> {
    if grids.len() < 3 {
        return Err(Error::InsufficientPoints(grids.len()));
    }
    let mut boxes = Vec::with_capacity(grids.len());
    for g in grids {
        let sol = solve_1dstf(z, b, Filling::Critical, &tables(g)?, opts)?;
        boxes.push((g.z_max(), sol.energy.n));
    }
    boxes.sort_by(|p, q| p.0.total_cmp(&q.0));
    let k = boxes.len();
    let pts = [boxes[k - 3], boxes[k - 2], boxes[k - 1]];
    Ok(OneDCritical {
        extrapolated: log_law_limit(&pts),
        boxes,
    })
}

/// `N_inf` making `1/(N_inf - N)` collinear in `ln L` through three points; the largest mass if
/// the masses do not increase with a decreasing rate.
fn log_law_limit(p: &[(f64, f64); 3]) -> f64 {
    let x: Vec<f64> = p.iter().map(|q| q.0.ln()).collect();
    let bend = |n: f64| {
        let y: Vec<f64> = p.iter().map(|q| 1.0 / (n - q.1)).collect();
        (y[1] - y[0]) / (x[1] - x[0]) - (y[2] - y[1]) / (x[2] - x[1])
    };
    let top = p[2].1;
    let (d1, d2) = (p[1].1 - p[0].1, p[2].1 - p[1].1);
    if !(d1 > 0.0 && d2 > 0.0) {
        return top;
    }
    // bend -> -inf just above the largest mass; find a sign change further out.
    let mut lo = top + 1e-12 * top.abs().max(1.0);
    let mut hi = top + 1.0;
    let mut grow = 0;
    while bend(hi) < 0.0 {
        hi = top + 2.0 * (hi - top);
        grow += 1;
        if grow > 60 {
            return f64::INFINITY;
        }
    }
    if bend(lo) > 0.0 {
        return top;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bend(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `kappa int rho^3 - int V_0^1 rho + (1/lambda) int int V_{0,0}^1 rho rho` with a `B = 1` table.
pub fn scaled_1d_functional(rho: &[f64], table: &KernelTable, lambda: f64) -> Result<f64> {
    ensure((table.b() - 1.0).abs() < 1e-14, || format!("scaled functional needs a B = 1 table, got {}", table.b()))?;
    ensure(lambda > 0.0, || format!("lambda must be positive, got {lambda}"))?;
    let density = ChannelDensity::new(table.grid().clone(), vec![rho.to_vec()], 1.0, 1.0, 0.0)?;
    let conv = Convolver::new(table, 0)?;
    let u = conv.potentials(&density.rho, &density.grid.trapezoid_weights());
    let e = report(&density, table, &u);
    Ok(e.kinetic_like + e.attraction + 2.0 * e.repulsion / lambda)
}

/// `lambda = 2 B^{1/4} Z^{1/2}`.
pub fn one_d_lambda(z: f64, b: f64) -> f64 {
    2.0 * b.powf(0.25) * z.sqrt()
}

/// Minimum of `kappa int rho^3 - Z int V_0 rho` over the whole line:
/// `-(2/3pi) int (Z V_0)^{3/2} dz`.
///
/// The integral runs to `200/sqrt(B)` by adaptive quadrature; beyond, the expansion
/// `V_0 = 1/z - 1/(B z^3) + O(z^{-5})` is integrated in closed form.
pub fn weak_1d_energy(z: f64, b: f64) -> Result<f64> {
    ensure(z > 0.0 && b > 0.0 && z.is_finite() && b.is_finite(), || format!("need Z, B > 0, got {z}, {b}"))?;
    let p = OrbitalParams::new(0, b)?;
    let s = b.sqrt().recip();
    let cut = 200.0 * s;
    let breaks: Vec<f64> = [0.0, 0.5, 2.0, 8.0, 32.0, 100.0, 200.0].iter().map(|t| t * s).collect();
    let mut failure = None;
    let est = adaptive(
        |x| match v_single(p, x) {
            Ok(v) => v.powf(1.5),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &breaks,
        1e-12,
        0.0,
        4000,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let head = est?.value;
    let tail = 2.0 / cut.sqrt() - 0.6 / (b * cut.powf(2.5));
    Ok(-(2.0 / (3.0 * PI)) * z.powf(1.5) * 2.0 * (head + tail))
}

/// Initial channel count `B r^2 / 2` for the neutral STF radius `r`.
pub fn suggested_m_max(z: f64, b: f64) -> usize {
    let r = NEUTRAL_RADIUS * length_scale(z, b);
    (0.5 * b * r * r).ceil() as usize
}

/// Grid spacing and half-width suggested for a DSTF solve at `(Z, B)`.
pub fn suggested_grid(z: f64, b: f64, nodes_per_scale: f64) -> Result<UniformGrid> {
    let l = length_scale(z, b);
    let h = l.min(b.sqrt().recip()) / nodes_per_scale;
    UniformGrid::with_spacing(1.5 * NEUTRAL_RADIUS * l, h)
}

/// Solve with automatic box extension and channel growth.
///
/// `tables` supplies a kernel table for `(m_max, grid)`, which lets callers cache them. The
/// box doubles whenever the support touches it; channels grow by half until the outermost one
/// holds less than `channel_tol` of the total mass.
pub fn solve_dstf_adaptive(
    z: f64,
    b: f64,
    filling: Filling,
    grid: UniformGrid,
    m_max: usize,
    channel_tol: f64,
    opts: &DstfOptions,
    mut tables: impl FnMut(usize, &UniformGrid) -> Result<KernelTable>,
) -> Result<(DstfSolution, KernelTable)> {
    let mut grid = grid;
    let mut m_max = m_max;
    for _ in 0..12 {
        let table = tables(m_max, &grid)?;
        match solve_dstf(z, b, filling, &table, opts) {
            Err(Error::GridExtension(_)) => grid = grid.extended(2.0),
            Err(e) => return Err(e),
            Ok(sol) => {
                let last = *sol.channel_masses.last().expect("at least one channel");
                if m_max > 0 && last >= channel_tol * sol.energy.n {
                    m_max = m_max + m_max / 2 + 1;
                } else {
                    return Ok((sol, table));
                }
            }
        }
    }
    Err(Error::GridTooSmall(format!("no adequate box or channel count found up to m_max = {m_max}, extent {}", grid.z_max())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_kernel_table;

    fn small_table(m_max: usize) -> KernelTable {
        let g = UniformGrid::new(3.0, 61).unwrap();
        build_kernel_table(4.0, m_max, &g, 16, 1e-10).unwrap()
    }

    #[test]
    fn zero_density_has_zero_energy() {
        let t = small_table(2);
        let rho = ChannelDensity::zero(t.grid().clone(), 2, 3.0, 4.0).unwrap();
        let e = dstf_functional(&rho, &t).unwrap();
        assert_eq!((e.kinetic_like, e.attraction, e.repulsion, e.total), (0.0, 0.0, 0.0, 0.0));
        let e = mstf_energy(&MstfDensity::from(rho), &t).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let t = small_table(2);
        let g = t.grid().clone();
        let rho: Vec<Vec<f64>> = (0..3)
            .map(|m| g.nodes().iter().map(|z| (-(z - 0.3 * m as f64).powi(2)).exp()).collect())
            .collect();
        let w = g.trapezoid_weights();
        let u = Convolver::new(&t, 2).unwrap().potentials(&rho, &w);
        for m in 0..3 {
            for i in [0, 17, 30, 60] {
                let direct: f64 = (0..3)
                    .map(|n| (0..g.len()).map(|j| t.pair_at(m, n, i as isize - j as isize) * w[j] * rho[n][j]).sum::<f64>())
                    .sum();
                assert!((u[m][i] - direct).abs() < 1e-13 * direct, "m={m} i={i}");
            }
        }
    }

    #[test]
    fn mismatched_table_is_rejected() {
        let t = small_table(1);
        let rho = ChannelDensity::zero(t.grid().clone(), 3, 1.0, 4.0).unwrap();
        assert!(matches!(dstf_functional(&rho, &t), Err(Error::Mismatch(_))));
        let other = ChannelDensity::zero(UniformGrid::new(3.0, 63).unwrap(), 1, 1.0, 4.0).unwrap();
        assert!(matches!(dstf_functional(&other, &t), Err(Error::Mismatch(_))));
    }

    #[test]
    fn annuli_have_equal_area() {
        for m in [0, 1, 7, 40] {
            let (a, c) = annulus(m, 2.5);
            assert!((PI * (c * c - a * a) - 2.0 * PI / 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn too_many_particles_is_rejected() {
        let t = small_table(0);
        let err = solve_dstf(1.0, 4.0, Filling::Particles(4.5), &t, &DstfOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }
}
