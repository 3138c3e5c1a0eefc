//! Lowest-band quantum trace of `-d^2/dz^2 - phi(x)` against its phase-space counterpart.
//!
//! The projected operator splits into channels: `Tr[Pi_0 (-d_z^2 - phi - nu) Pi_0]_- =
//! sum_m Tr[-d_z^2 - phi_m - nu]_-`, with `phi_m(z)` the average of `phi` over `|phi_m(x_perp)|^2`.
//! The semiclassical side integrates out the momentum exactly:
//! `(B/2pi) int int dp dx / 2pi [p^2 - phi - nu]_- = -(B / 3 pi^2) int [phi + nu]_+^{3/2}`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dstf::annulus;
use crate::error::{ensure, Error, Result};
use crate::grid::{RadialGrid, UniformGrid};
use crate::kernels::single_channel_values;
use crate::quadrature::{adaptive, composite_gauss_legendre, gauss_legendre};
use crate::special::ln_factorial;
use crate::spectral::{negative_spectrum_with, Boundary, SampledPotential, SpectralOptions};
use crate::stf::{solve_stf, support_radius, Occupation, RadialDensity, Screening, StfOptions};

/// A spherically symmetric potential `phi(r) = q/r + g(r)` with bounded `g`.
pub trait RadialPotential: Sync {
    /// Strength `q` of the Coulomb singularity.
    fn coulomb_charge(&self) -> f64;

    /// The bounded remainder `g(r)`.
    fn regular(&self, r: f64) -> f64;

    fn value(&self, r: f64) -> f64 {
        self.coulomb_charge() / r + self.regular(r)
    }

    /// A radius beyond which `phi + nu <= 0`; `None` when the positive part is not compactly supported.
    fn extent(&self, nu: f64) -> Option<f64>;

    /// Radius beyond which `phi` vanishes identically, if any.
    fn support(&self) -> Option<f64> {
        None
    }

    /// Ascending radii where `g` is not smooth; channel averages break their panels there.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }

    fn label(&self) -> String;
}

/// `Z / r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coulomb {
    pub z: f64,
}

impl RadialPotential for Coulomb {
    fn coulomb_charge(&self) -> f64 {
        self.z
    }

    fn regular(&self, _: f64) -> f64 {
        0.0
    }

    fn extent(&self, nu: f64) -> Option<f64> {
        (nu < 0.0).then(|| self.z / -nu)
    }

    fn label(&self) -> String {
        format!("coulomb(Z={})", self.z)
    }
}

/// `phi = c` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPotential {
    pub c: f64,
}

impl RadialPotential for ConstantPotential {
    fn coulomb_charge(&self) -> f64 {
        0.0
    }

    fn regular(&self, _: f64) -> f64 {
        self.c
    }

    fn extent(&self, nu: f64) -> Option<f64> {
        (self.c + nu <= 0.0).then_some(0.0)
    }

    fn support(&self) -> Option<f64> {
        (self.c == 0.0).then_some(0.0)
    }

    fn label(&self) -> String {
        format!("constant({})", self.c)
    }
}

/// Largest relative mass deficit [`StfPotential::neutral`] attributes to discretization.
const NEUTRAL_SLACK: f64 = 1e-3;

/// Effective STF potential `Z/r - rho * |x|^{-1}` of a solved density.
#[derive(Debug, Clone)]
pub struct StfPotential {
    z: f64,
    screening: Screening,
    grid: RadialGrid,
    support: f64,
    neutral: bool,
}

impl StfPotential {
    /// Potential of `rho` as given; a deficit `Z - N > 0` leaves a `(Z - N) / r` tail.
    pub fn new(rho: &RadialDensity) -> Result<Self> {
        Self::build(rho, false)
    }

    /// Potential of a neutral atom. The discrete density misses `Z` by its discretization error,
    /// so it is rescaled to carry exactly `Z`; `phi` then vanishes beyond the support.
    pub fn neutral(rho: &RadialDensity) -> Result<Self> {
        let n = rho.particle_number();
        ensure(n > 0.0 && (rho.z() - n).abs() <= NEUTRAL_SLACK * rho.z(), || {
            format!("density carries {n} for Z = {}, not a neutral atom", rho.z())
        })?;
        let values = rho.values().iter().map(|v| v * rho.z() / n).collect();
        let scaled = RadialDensity::new(rho.grid().clone(), values, rho.z(), rho.b(), rho.nu())?;
        Self::build(&scaled, true)
    }

    fn build(rho: &RadialDensity, neutral: bool) -> Result<Self> {
        Ok(Self {
            z: rho.z(),
            screening: rho.screening(),
            grid: rho.grid().clone(),
            support: support_radius(rho)?.radius,
            neutral,
        })
    }
}

impl RadialPotential for StfPotential {
    fn coulomb_charge(&self) -> f64 {
        self.z
    }

    fn regular(&self, r: f64) -> f64 {
        -self.screening.at(r)
    }

    /// First node past the last one where `phi + nu` exceeds rounding level.
    fn extent(&self, nu: f64) -> Option<f64> {
        let r = self.grid.nodes();
        let last = (0..r.len()).rev().find(|&i| self.value(r[i]) + nu > 1e-12 * self.z / r[i])?;
        if last + 1 == r.len() && nu >= 0.0 {
            return None;
        }
        Some(r[(last + 1).min(r.len() - 1)])
    }

    /// A neutral atom has `phi = 0` from the first node past the support on.
    fn support(&self) -> Option<f64> {
        let r = self.grid.nodes();
        self.neutral.then(|| r[r.partition_point(|&x| x <= self.support).min(r.len() - 1)])
    }

    /// The screening interpolant is piecewise cubic, so every radial node inside the support
    /// (and the one past it) is a break; beyond that `g = -N / r` is smooth.
    fn kinks(&self) -> Vec<f64> {
        let r = self.grid.nodes();
        let end = r.partition_point(|&x| x <= self.support);
        r[..(end + 1).min(r.len())].to_vec()
    }

    fn label(&self) -> String {
        format!("stf(Z={}, N={:.6})", self.z, self.screening.total_mass())
    }
}

/// Regular radial potential from a closure, with a declared support radius.
pub struct FnRadial<F> {
    f: F,
    extent: f64,
    label: String,
}

impl<F: Fn(f64) -> f64 + Sync> FnRadial<F> {
    /// `f` must vanish (or be nonpositive) beyond `extent`.
    pub fn new(f: F, extent: f64, label: impl Into<String>) -> Self {
        Self {
            f,
            extent,
            label: label.into(),
        }
    }
}

impl<F: Fn(f64) -> f64 + Sync> RadialPotential for FnRadial<F> {
    fn coulomb_charge(&self) -> f64 {
        0.0
    }

    fn regular(&self, r: f64) -> f64 {
        (self.f)(r)
    }

    fn extent(&self, nu: f64) -> Option<f64> {
        (nu <= 0.0).then_some(self.extent)
    }

    fn support(&self) -> Option<f64> {
        Some(self.extent)
    }

    fn kinks(&self) -> Vec<f64> {
        vec![self.extent]
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// `phi(r) = a phi_1(r / l)`: a potential carried to another length and energy scale.
pub struct Scaled<P> {
    inner: P,
    amplitude: f64,
    length: f64,
}

impl<P: RadialPotential> Scaled<P> {
    pub fn new(inner: P, amplitude: f64, length: f64) -> Result<Self> {
        ensure(amplitude > 0.0 && length > 0.0, || format!("scales must be positive, got {amplitude}, {length}"))?;
        Ok(Self {
            inner,
            amplitude,
            length,
        })
    }

    /// The STF potential at `(Z, B)` from the one at `(1, 1)`: amplitude `Z^{4/5} B^{2/5}`,
    /// length `Z^{1/5} B^{-2/5}`.
    pub fn stf(unit: P, z: f64, b: f64) -> Result<Self> {
        let l = crate::stf::length_scale(z, b);
        Self::new(unit, z / l, l)
    }
}

impl<P: RadialPotential> RadialPotential for Scaled<P> {
    fn coulomb_charge(&self) -> f64 {
        self.amplitude * self.length * self.inner.coulomb_charge()
    }

    fn regular(&self, r: f64) -> f64 {
        self.amplitude * self.inner.regular(r / self.length)
    }

    fn extent(&self, nu: f64) -> Option<f64> {
        self.inner.extent(nu / self.amplitude).map(|r| r * self.length)
    }

    fn support(&self) -> Option<f64> {
        self.inner.support().map(|r| r * self.length)
    }

    fn kinks(&self) -> Vec<f64> {
        self.inner.kinks().into_iter().map(|r| r * self.length).collect()
    }

    fn label(&self) -> String {
        format!("{} scaled by ({}, {})", self.inner.label(), self.amplitude, self.length)
    }
}

/// Accuracy settings for channel averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelQuadrature {
    /// Gauss-Legendre points per panel for the Coulomb part.
    pub panel_points: usize,
    pub kernel_tol: f64,
    /// Panels for the regular part are doubled from 4 until it changes by less than this
    /// (relative to its largest magnitude) or 1024 panels are reached.
    pub regular_tol: f64,
}

impl Default for ChannelQuadrature {
    fn default() -> Self {
        Self {
            panel_points: 16,
            kernel_tol: 1e-10,
            regular_tol: 1e-9,
        }
    }
}

/// Gauss-Legendre points per panel of the transverse average.
const PANEL_POINTS: usize = 4;

/// Panel breaks in `t = sqrt(u)`, `u = B s^2 / 2`, covering the bulk of `u^m e^{-u} / m!`.
fn transverse_breaks(m: usize, b: f64, z: f64, kinks: &[f64], panels: usize) -> Vec<f64> {
    let (mf, sd) = (m as f64, (m as f64 + 1.0).sqrt());
    let lo = (mf - 9.0 * sd).max(0.0).sqrt();
    let hi = (mf + 9.0 * sd + 40.0).sqrt();
    let mut breaks: Vec<f64> = (0..=panels).map(|k| lo + (hi - lo) * k as f64 / panels as f64).collect();
    if lo == 0.0 {
        // Grade toward the cusp of g at r = 0, which sits at distance ~ |z| sqrt(B/2) from t = 0.
        let floor = (0.5 * z.abs() * (0.5 * b).sqrt()).max(1e-10 * hi);
        let mut t = breaks[1] / 2.0;
        while t > floor {
            breaks.push(t);
            t /= 2.0;
        }
    }
    let r_of = |t: f64| (2.0 * t * t / b + z * z).sqrt();
    let (r_lo, r_hi) = (r_of(lo), r_of(hi));
    let first = kinks.partition_point(|&r| r <= r_lo);
    for &r in kinks[first..].iter().take_while(|&&r| r < r_hi) {
        let t = (0.5 * b * (r * r - z * z)).sqrt();
        if t > lo && t < hi {
            breaks.push(t);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks
}

/// `int_0^inf u^m e^{-u} / m! g(sqrt(2u/B + z^2)) du` at `|z|` for each node, mirrored in `z`.
fn regular_average(phi: &dyn RadialPotential, m: usize, b: f64, nodes: &[f64], panels: usize) -> Vec<f64> {
    let kinks = phi.kinks();
    let ln_norm = ln_factorial(m);
    nodes
        .iter()
        .map(|z| {
            let rule = composite_gauss_legendre(&transverse_breaks(m, b, *z, &kinks, panels), PANEL_POINTS);
            rule.integrate(|t| {
                if t <= 0.0 {
                    return 0.0;
                }
                let w = 2.0 * ((2 * m + 1) as f64 * t.ln() - t * t - ln_norm).exp();
                w * phi.regular((2.0 * t * t / b + z * z).sqrt())
            })
        })
        .collect()
}

fn regular_channel(phi: &dyn RadialPotential, m: usize, b: f64, nodes: &[f64], q: &ChannelQuadrature) -> Result<Vec<f64>> {
    if phi.kinks().is_empty() && phi.regular(0.0) == 0.0 && phi.regular(1.0) == 0.0 {
        return Ok(vec![0.0; nodes.len()]);
    }
    // g depends on |z| only, so evaluate the nonnegative half of the symmetric grid.
    let center = nodes.len() / 2;
    let half = &nodes[center..];
    let mirror = |v: Vec<f64>| -> Vec<f64> { v[1..].iter().rev().chain(v.iter()).copied().collect() };
    let mut panels = 4;
    let mut prev = regular_average(phi, m, b, half, panels);
    loop {
        panels *= 2;
        let next = regular_average(phi, m, b, half, panels);
        let scale = next.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let change = next.iter().zip(&prev).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale;
        if change < q.regular_tol {
            return Ok(mirror(next));
        }
        if panels >= 1024 {
            return Err(Error::QuadratureNonConvergence {
                what: format!("channel {m} average of {}", phi.label()),
                change,
                order: panels * PANEL_POINTS,
            });
        }
        prev = next;
    }
}

/// `phi_m(z_j) = int |phi_m(x_perp)|^2 phi(x_perp, z_j) dx_perp` for the channels `ms`.
///
/// The Coulomb part is `q V_m(z)`; the regular part averages `g` over `u = B |x_perp|^2 / 2` with
/// weight `u^m e^{-u} / m!`, by composite Gauss-Legendre in `sqrt(u)`.
pub fn channel_potentials(
    phi: &dyn RadialPotential,
    b: f64,
    ms: std::ops::RangeInclusive<usize>,
    grid: &UniformGrid,
    q: &ChannelQuadrature,
) -> Result<Vec<Vec<f64>>> {
    ensure(b > 0.0 && b.is_finite(), || format!("field strength must be positive, got {b}"))?;
    let nodes = grid.nodes();
    let charge = phi.coulomb_charge();
    let support = phi.support();
    let ms: Vec<usize> = ms.collect();
    // Each channel is tabulated on its own, so values do not depend on how channels are batched.
    ms.par_iter()
        .map(|&m| {
            let mut row = regular_channel(phi, m, b, &nodes, q)?;
            if charge != 0.0 {
                let vm = single_channel_values(b, m..=m, grid, q.panel_points, q.kernel_tol)?.remove(0);
                for (v, vm) in row.iter_mut().zip(&vm) {
                    *v += charge * vm;
                }
            }
            // Beyond the support the two parts cancel only up to quadrature error.
            if let Some(r) = support {
                for (v, z) in row.iter_mut().zip(&nodes) {
                    if z.abs() >= r {
                        *v = 0.0;
                    }
                }
            }
            Ok(row)
        })
        .collect()
}

/// Single-channel convenience wrapper around [`channel_potentials`].
pub fn channel_potential(phi: &dyn RadialPotential, m: usize, b: f64, grid: &UniformGrid) -> Result<Vec<f64>> {
    Ok(channel_potentials(phi, b, m..=m, grid, &ChannelQuadrature::default())?.remove(0))
}

/// How many channels enter the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChannelPolicy {
    /// Stop at the first channel whose `|trace|` is below `threshold` times the running total.
    Adaptive { threshold: f64, max_channels: usize },
    /// Channels `0..=m_max`.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub policy: ChannelPolicy,
    /// Eigenvalues within `shallow_cutoff * sup phi_0` of `nu` are dropped from traces and counts.
    pub shallow_cutoff: f64,
    pub quadrature: ChannelQuadrature,
    /// Channels evaluated per parallel batch.
    pub batch: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            policy: ChannelPolicy::Adaptive {
                threshold: 1e-6,
                max_channels: 4096,
            },
            shallow_cutoff: 1e-6,
            quadrature: ChannelQuadrature::default(),
            batch: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrace {
    pub m: usize,
    /// `sum_i [l_i - nu]_-` over the channel eigenvalues below the shallow cutoff.
    pub trace: f64,
    /// Eigenvalues below `nu` minus the shallow cutoff, ascending.
    pub eigenvalues: Vec<f64>,
}

impl ChannelTrace {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Channel-summed quantum side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSum {
    pub total: f64,
    pub per_channel: Vec<ChannelTrace>,
    /// Absolute energy below which eigenvalues were kept: `nu - shallow`.
    pub cutoff: f64,
    pub warnings: Vec<String>,
}

impl ChannelSum {
    pub fn channels_used(&self) -> usize {
        self.per_channel.len()
    }

    pub fn count(&self) -> usize {
        self.per_channel.iter().map(ChannelTrace::count).sum()
    }

    /// `n`-th lowest eigenvalue (1-based) of the projected operator among the kept ones.
    pub fn lambda(&self, n: usize) -> Option<f64> {
        let mut all: Vec<f64> = self.per_channel.iter().flat_map(|c| c.eigenvalues.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        n.checked_sub(1).and_then(|i| all.get(i).copied())
    }
}

fn channel_trace(m: usize, w: Vec<f64>, grid: &UniformGrid, nu: f64, cutoff: f64, boundary: Boundary) -> Result<ChannelTrace> {
    let fine = grid.refined();
    let pot = SampledPotential::on_grid(&fine, w, format!("channel {m}"))?;
    let opts = SpectralOptions {
        boundary,
        ..SpectralOptions::default()
    };
    let spec = negative_spectrum_with(&pot, grid, cutoff, &opts)?;
    let trace = spec.eigenvalues.iter().map(|l| l - nu).sum();
    Ok(ChannelTrace {
        m,
        trace,
        eigenvalues: spec.eigenvalues,
    })
}

/// Whole-line channels when `grid` covers the support of `phi`, Dirichlet walls otherwise.
fn boundary_for(phi: &dyn RadialPotential, grid: &UniformGrid) -> Boundary {
    match phi.support() {
        Some(r) if grid.z_max() >= r => Boundary::Open,
        _ => Boundary::Dirichlet,
    }
}

/// Depth scale `sup_z phi_0(z)` used by the shallow cutoff.
fn depth(phi: &dyn RadialPotential, b: f64, grid: &UniformGrid, q: &ChannelQuadrature) -> Result<f64> {
    let g = UniformGrid::new(grid.h(), 3)?;
    let v = channel_potentials(phi, b, 0..=0, &g, q)?;
    Ok(v[0][1].max(0.0))
}

/// `sum_m Tr[-d^2/dz^2 - phi_m - nu]_-` on `grid`, Richardson-extrapolated.
///
/// If `phi` vanishes beyond a radius inside the grid, each channel is solved on the whole line;
/// otherwise the grid ends are Dirichlet walls.
///
/// Channels are evaluated in parallel batches and summed in channel order.
pub fn quantum_trace(phi: &dyn RadialPotential, b: f64, nu: f64, grid: &UniformGrid, opts: &TraceOptions) -> Result<ChannelSum> {
    ensure(nu <= 0.0, || format!("nu must be nonpositive, got {nu}"))?;
    ensure(opts.batch > 0, || "batch size must be positive".into())?;
    let shallow = opts.shallow_cutoff * depth(phi, b, grid, &opts.quadrature)?;
    let cutoff = nu - shallow;
    let boundary = boundary_for(phi, grid);
    let fine = grid.refined();
    let (threshold, last_allowed) = match opts.policy {
        ChannelPolicy::Adaptive { threshold, max_channels } => (Some(threshold), max_channels.max(1) - 1),
        ChannelPolicy::Fixed(m) => (None, m),
    };
    let mut per_channel: Vec<ChannelTrace> = Vec::new();
    let mut total = 0.0f64;
    let mut warnings = Vec::new();
    let mut m_lo = 0;
    'batches: while m_lo <= last_allowed {
        let m_hi = (m_lo + opts.batch - 1).min(last_allowed);
        let pots = channel_potentials(phi, b, m_lo..=m_hi, &fine, &opts.quadrature)?;
        let traces: Vec<ChannelTrace> = pots
            .into_par_iter()
            .enumerate()
            .map(|(k, w)| channel_trace(m_lo + k, w, grid, nu, cutoff, boundary))
            .collect::<Result<_>>()?;
        for t in traces {
            let small = threshold.is_some_and(|th| t.trace.abs() <= th * total.abs());
            total += t.trace;
            per_channel.push(t);
            if small {
                break 'batches;
            }
        }
        m_lo = m_hi + 1;
    }
    if let (Some(th), Some(last)) = (threshold, per_channel.last()) {
        if last.trace.abs() > th * total.abs() {
            warnings.push(
                Error::ChannelTruncation {
                    m: last.m,
                    mass: last.trace.abs(),
                    threshold: th * total.abs(),
                }
                .to_string(),
            );
        }
    }
    Ok(ChannelSum {
        total,
        per_channel,
        cutoff,
        warnings,
    })
}

/// `4 pi int r^2 [phi(r) + nu]_+^p dr`.
fn phase_space_integral(phi: &dyn RadialPotential, nu: f64, p: f64) -> Result<f64> {
    let r_max = phi.extent(nu).ok_or_else(|| {
        Error::InvalidParameter(format!("[{} + {nu}]_+ is not compactly supported; the phase-space integral diverges", phi.label()))
    })?;
    if r_max <= 0.0 {
        return Ok(0.0);
    }
    let mut breaks = vec![0.0];
    let mut r = r_max * 1e-9;
    while r < 0.5 * r_max {
        breaks.push(r);
        r *= 4.0;
    }
    breaks.push(r_max);
    let est = adaptive(
        |r| {
            let w = phi.value(r) + nu;
            if w > 0.0 {
                4.0 * PI * r * r * w.powf(p)
            } else {
                0.0
            }
        },
        &breaks,
        1e-11,
        0.0,
        20_000,
    )?;
    Ok(est.value)
}

/// `-(B / 3 pi^2) int [phi + nu]_+^{3/2} d^3x`.
pub fn semiclassical_trace(phi: &dyn RadialPotential, b: f64, nu: f64) -> Result<f64> {
    ensure(nu <= 0.0, || format!("nu must be nonpositive, got {nu}"))?;
    Ok(-b / (3.0 * PI * PI) * phase_space_integral(phi, nu, 1.5)?)
}

/// `(B / 2 pi^2) int [phi + nu]_+^{1/2} d^3x`, the phase-space count of states below `-nu`.
pub fn semiclassical_count(phi: &dyn RadialPotential, b: f64, nu: f64) -> Result<f64> {
    ensure(nu <= 0.0, || format!("nu must be nonpositive, got {nu}"))?;
    Ok(b / (2.0 * PI * PI) * phase_space_integral(phi, nu, 0.5)?)
}

/// Both sides of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub z: f64,
    pub b: f64,
    pub nu: f64,
    pub quantum_trace: f64,
    pub semiclassical_trace: f64,
    /// `(m, channel trace, eigenvalue count)`.
    pub per_channel: Vec<(usize, f64, usize)>,
    pub channels_used: usize,
    pub difference: f64,
    /// `N`-th lowest eigenvalue of the projected operator, when requested and resolved.
    pub lambda_n: Option<f64>,
    pub warnings: Vec<String>,
}

impl TraceReport {
    pub fn from_parts(z: f64, b: f64, nu: f64, quantum: &ChannelSum, semiclassical: f64) -> Self {
        Self {
            z,
            b,
            nu,
            quantum_trace: quantum.total,
            semiclassical_trace: semiclassical,
            per_channel: quantum.per_channel.iter().map(|c| (c.m, c.trace, c.count())).collect(),
            channels_used: quantum.channels_used(),
            difference: quantum.total - semiclassical,
            lambda_n: None,
            warnings: quantum.warnings.clone(),
        }
    }
}

pub fn trace_report(
    phi: &dyn RadialPotential,
    z: f64,
    b: f64,
    nu: f64,
    grid: &UniformGrid,
    opts: &TraceOptions,
) -> Result<TraceReport> {
    let q = quantum_trace(phi, b, nu, grid, opts)?;
    let s = semiclassical_trace(phi, b, nu)?;
    Ok(TraceReport::from_parts(z, b, nu, &q, s))
}

/// Channel count minus phase-space count, both with the same shallow cutoff: quantum states
/// below `nu - e` against `(B / 2 pi^2) int [phi + nu - e]_+^{1/2}`.
pub fn counting_difference(phi: &dyn RadialPotential, b: f64, nu: f64, grid: &UniformGrid, opts: &TraceOptions) -> Result<f64> {
    let q = quantum_trace(phi, b, nu, grid, opts)?;
    let s = semiclassical_count(phi, b, q.cutoff)?;
    Ok(q.count() as f64 - s)
}

/// Boxcar rearrangement `sum_m chi_m(x_perp) phi_m(z)` of a radial potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildePotential {
    b: f64,
    grid: UniformGrid,
    boundary: Boundary,
    /// `phi_m` on `grid.refined()`.
    channels: Vec<Vec<f64>>,
}

/// Tabulates `phi_m` for `m = 0..=m_max` on the refined `grid`.
pub fn tilde_potential(phi: &dyn RadialPotential, b: f64, grid: &UniformGrid, m_max: usize) -> Result<TildePotential> {
    let channels = channel_potentials(phi, b, 0..=m_max, &grid.refined(), &ChannelQuadrature::default())?;
    Ok(TildePotential {
        b,
        grid: grid.clone(),
        boundary: boundary_for(phi, grid),
        channels,
    })
}

impl TildePotential {
    pub fn m_max(&self) -> usize {
        self.channels.len() - 1
    }

    pub fn annulus_of(&self, s: f64) -> usize {
        (0.5 * self.b * s * s).floor() as usize
    }

    /// Values along the field line at transverse radius `s` on the refined grid; `None` outside
    /// the tabulated annuli.
    pub fn line(&self, s: f64) -> Option<&[f64]> {
        self.channels.get(self.annulus_of(s)).map(Vec::as_slice)
    }

    /// `(B / 2pi) int dx_perp Tr[-d^2/dz^2 - phi~(x_perp, .) - nu]_-` over the tabulated annuli.
    ///
    /// The transverse integral runs over each annulus with Gauss-Legendre in `|x_perp|`; the trace
    /// on a line depends only on the annulus, so it is computed once per annulus.
    pub fn transverse_trace(&self, nu: f64, cutoff: f64) -> Result<f64> {
        let rule = gauss_legendre(2);
        let mut cache: Vec<Option<f64>> = vec![None; self.channels.len()];
        let mut total = 0.0;
        for m in 0..self.channels.len() {
            let (a, c) = annulus(m, self.b);
            let (mid, half) = (0.5 * (a + c), 0.5 * (c - a));
            let mut integral = 0.0;
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                let s = mid + half * t;
                let k = self.annulus_of(s).min(self.m_max());
                let tr = match cache[k] {
                    Some(v) => v,
                    None => {
                        let v = channel_trace(k, self.channels[k].clone(), &self.grid, nu, cutoff, self.boundary)?.trace;
                        cache[k] = Some(v);
                        v
                    }
                };
                integral += w * half * 2.0 * PI * s * tr;
            }
            total += self.b / (2.0 * PI) * integral;
        }
        Ok(total)
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    ensure(x.len() == y.len(), || format!("{} abscissae for {} ordinates", x.len(), y.len()))?;
    if x.len() < 2 {
        return Err(Error::InsufficientPoints(x.len()));
    }
    ensure(x.iter().chain(y).all(|v| *v > 0.0 && v.is_finite()), || "log-log fit needs positive data".into())?;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(a, b)| b - intercept - slope * a).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
        residuals,
    })
}

/// Numerical settings for one point of the error-scaling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub radial_nodes: usize,
    pub stf: StfOptions,
    pub trace: TraceOptions,
    /// Channel grid spacing is `min(B^{-1/2}, (Z sqrt(B))^{-1/2}) / nodes_per_scale`.
    pub nodes_per_scale: f64,
    /// Channel box half-width in units of the STF support radius; at least 1 puts every channel
    /// on the whole line.
    pub box_factor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            radial_nodes: 2000,
            stf: StfOptions::default(),
            trace: TraceOptions::default(),
            nodes_per_scale: 8.0,
            box_factor: 1.1,
        }
    }
}

/// Neutral STF atom at `(Z, B)` compared with its channel-summed quantum trace; `lambda_n` is
/// taken at `N = round(Z)`.
pub fn neutral_comparison(z: f64, b: f64, opts: &SweepOptions) -> Result<TraceReport> {
    let grid = RadialGrid::for_atom(z, b, opts.radial_nodes)?;
    let sol = solve_stf(z, b, Occupation::Neutral, &grid, &opts.stf)?;
    let phi = StfPotential::neutral(&sol.density)?;
    compare(&phi, z, b, sol.density.nu(), opts)
}

/// As [`neutral_comparison`], with the potential scaled from a neutral `(1, 1)` solution.
pub fn scaled_neutral_comparison(unit: &StfPotential, z: f64, b: f64, opts: &SweepOptions) -> Result<TraceReport> {
    ensure(unit.z == 1.0, || format!("unit potential must have Z = 1, got {}", unit.z))?;
    let phi = Scaled::stf(unit.clone(), z, b)?;
    compare(&phi, z, b, 0.0, opts)
}

fn compare(phi: &dyn RadialPotential, z: f64, b: f64, nu: f64, opts: &SweepOptions) -> Result<TraceReport> {
    let support = phi.support().ok_or_else(|| Error::InvalidParameter(format!("{} has no compact support", phi.label())))?;
    let h = b.sqrt().recip().min((z * b.sqrt()).sqrt().recip()) / opts.nodes_per_scale;
    let channel_grid = UniformGrid::with_spacing(opts.box_factor * support, h)?;
    let q = quantum_trace(phi, b, nu, &channel_grid, &opts.trace)?;
    let s = semiclassical_trace(phi, b, nu)?;
    let mut report = TraceReport::from_parts(z, b, nu, &q, s);
    report.lambda_n = q.lambda(z.round() as usize);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub beta: f64,
    pub rows: Vec<TraceReport>,
    pub fit: LogLogFit,
    /// `4 beta / 5 + 3/5`.
    pub predicted_slope: f64,
}

/// `|quantum - semiclassical|` for neutral atoms along `B = Z^beta`, with a log-log fit in `Z`.
/// Points run in parallel and are collected in input order.
pub fn error_scaling_sweep(z_list: &[f64], beta: f64, opts: &SweepOptions) -> Result<SweepReport> {
    sweep(z_list, beta, |z, b| neutral_comparison(z, b, opts))
}

/// The sweep with every potential scaled from one neutral `(1, 1)` solution.
pub fn scaled_error_scaling_sweep(z_list: &[f64], beta: f64, opts: &SweepOptions) -> Result<SweepReport> {
    let grid = RadialGrid::for_atom(1.0, 1.0, opts.radial_nodes)?;
    let sol = solve_stf(1.0, 1.0, Occupation::Neutral, &grid, &opts.stf)?;
    let unit = StfPotential::neutral(&sol.density)?;
    sweep(z_list, beta, |z, b| scaled_neutral_comparison(&unit, z, b, opts))
}

fn sweep(z_list: &[f64], beta: f64, point: impl Fn(f64, f64) -> Result<TraceReport> + Sync) -> Result<SweepReport> {
    if z_list.len() < 4 {
        return Err(Error::InsufficientPoints(z_list.len()));
    }
    ensure(z_list.iter().all(|z| *z >= 1.0 && z.is_finite()), || "sweep charges must be >= 1".into())?;
    ensure(beta.is_finite(), || format!("beta must be finite, got {beta}"))?;
    let rows: Vec<TraceReport> = z_list.par_iter().map(|&z| point(z, z.powf(beta))).collect::<Result<_>>()?;
    let diffs: Vec<f64> = rows.iter().map(|r| r.difference.abs()).collect();
    let fit = log_log_fit(z_list, &diffs)?;
    Ok(SweepReport {
        beta,
        rows,
        fit,
        predicted_slope: 0.8 * beta + 0.6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{v_single, OrbitalParams};

    #[test]
    fn coulomb_channel_is_v_single() {
        let g = UniformGrid::new(2.0, 9).unwrap();
        let v = channel_potential(&Coulomb { z: 3.0 }, 2, 5.0, &g).unwrap();
        for (i, z) in g.nodes().into_iter().enumerate() {
            let exact = 3.0 * v_single(OrbitalParams::new(2, 5.0).unwrap(), z).unwrap();
            assert!((v[i] - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn constant_is_preserved() {
        let g = UniformGrid::new(1.0, 5).unwrap();
        for m in [0, 3, 17] {
            let v = channel_potential(&ConstantPotential { c: 0.7 }, m, 2.0, &g).unwrap();
            // Exact up to rounding accumulated over the quadrature panels.
            let worst = v.iter().map(|x| (x - 0.7).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-13 * 0.7, "m={m}: {worst:e}");
        }
    }

    #[test]
    fn zero_potential_has_empty_traces() {
        let g = UniformGrid::new(3.0, 61).unwrap();
        let zero = ConstantPotential { c: 0.0 };
        let q = quantum_trace(&zero, 2.0, 0.0, &g, &TraceOptions::default()).unwrap();
        assert_eq!(q.total, 0.0);
        assert_eq!(semiclassical_trace(&zero, 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(counting_difference(&zero, 2.0, 0.0, &g, &TraceOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn divergent_phase_space_is_an_error() {
        assert!(semiclassical_trace(&Coulomb { z: 1.0 }, 1.0, 0.0).is_err());
        assert!(semiclassical_trace(&Coulomb { z: 1.0 }, 1.0, -0.5).is_ok());
    }

    #[test]
    fn fit_recovers_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        let f = log_log_fit(&x, &y).unwrap();
        assert!((f.slope - 1.7).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(error_scaling_sweep(&[], 1.5, &SweepOptions::default()), Err(Error::InsufficientPoints(0))));
    }
}
