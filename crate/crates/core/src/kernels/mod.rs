//! Lowest-Landau-band orbital densities and channel Coulomb kernels.
//!
//! `V_m(z)` is the Coulomb potential of a unit point charge averaged over the transverse
//! density `|phi_m|^2`; `V_{m,n}(zeta)` is the interaction of two such transverse densities
//! separated by `zeta` along the field.
//!
//! Three independent evaluation routes are provided:
//! * direct radial integral for `V_m` (smooth substitution, composite Gauss-Legendre),
//! * transverse Fourier (form-factor) integral for both kernels, used for tabulation,
//! * tensor radial quadrature with the elliptic-integral angular average for `V_{m,n}`.

mod cache;
mod table;

pub use cache::{cache_key, read_table, write_table};
pub use table::{build_kernel_table, single_channel_values, KernelTable, TableInfo};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::quadrature::{adaptive, composite_gauss_legendre, gauss_laguerre};
use crate::special::{ellip_k_complement, laguerre_all, ln_factorial};

/// Angular-momentum channel `m` at field strength `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalParams {
    m: usize,
    b: f64,
}

impl OrbitalParams {
    pub fn new(m: usize, b: f64) -> Result<Self> {
        ensure(b.is_finite() && b > 0.0, || format!("field strength must be positive, got {b}"))?;
        Ok(Self { m, b })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// `|phi_m(x_perp)|^2 = (B/2pi) (B r^2/2)^m e^{-B r^2/2} / m!`, evaluated in log space.
pub fn orbital_density(p: OrbitalParams, r: f64) -> f64 {
    let s = 0.5 * p.b * r * r;
    let m = p.m as f64;
    let log_pow = if p.m == 0 { 0.0 } else if s == 0.0 { return 0.0 } else { m * s.ln() };
    ((p.b / (2.0 * PI)).ln() + log_pow - s - ln_factorial(p.m)).exp()
}

/// Method for the two-channel kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PairMethod {
    /// Transverse Fourier integral over Laguerre form factors.
    #[default]
    FormFactor,
    /// Tensor radial quadrature with the elliptic-integral angular average.
    Elliptic,
}

/// Accuracy controls for pointwise kernel evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Initial number of quadrature nodes; doubled until the relative change is below `tol`.
    pub order: usize,
    pub max_order: usize,
    pub tol: f64,
    pub pair_method: PairMethod,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            order: 64,
            max_order: 1 << 15,
            tol: 1e-10,
            pair_method: PairMethod::FormFactor,
        }
    }
}

/// Points per Gauss-Legendre panel in the composite rules.
const PANEL_POINTS: usize = 16;

fn refine_until<F>(what: impl Fn() -> String, cfg: &KernelConfig, mut eval: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut order = cfg.order.max(PANEL_POINTS);
    let mut prev = eval(order)?;
    loop {
        let next_order = 2 * order;
        let next = eval(next_order)?;
        let change = if next != 0.0 { ((next - prev) / next).abs() } else { (next - prev).abs() };
        if change < cfg.tol {
            return Ok(next);
        }
        if next_order >= cfg.max_order {
            return Err(Error::QuadratureNonConvergence {
                what: what(),
                change,
                order: next_order,
            });
        }
        prev = next;
        order = next_order;
    }
}

/// `V_m(z) = (1/m!) int_0^inf u^m e^{-u} (2u/B + z^2)^{-1/2} du`.
///
/// With `s = B z^2 / 2` and `u + s = (y + sqrt(s))^2` the square-root singularity at `z = 0`
/// disappears: `V_m = sqrt(B/2) (2/m!) int_0^inf q^m e^{-q} dy`, `q = y^2 + 2 a y`, `a = sqrt(s)`.
/// The smooth integrand is integrated by composite Gauss-Legendre with node doubling.
pub fn v_single(p: OrbitalParams, z: f64) -> Result<f64> {
    v_single_with(p, z, &KernelConfig::default())
}

pub fn v_single_with(p: OrbitalParams, z: f64, cfg: &KernelConfig) -> Result<f64> {
    ensure(z.is_finite(), || format!("z must be finite, got {z}"))?;
    let m = p.m as f64;
    let a = z.abs() * (0.5 * p.b).sqrt();
    let q_max = m + 40.0 + 12.0 * (m + 1.0).sqrt();
    let y_max = q_max / (a + (a * a + q_max).sqrt());
    let lf = ln_factorial(p.m);
    let integrand = |y: f64| {
        let q = y * (y + 2.0 * a);
        if q <= 0.0 {
            return if p.m == 0 { 2.0 } else { 0.0 };
        }
        2.0 * (m * q.ln() - q - lf).exp()
    };
    let prefactor = (0.5 * p.b).sqrt();
    refine_until(
        || format!("V_{}(z = {z}) at B = {}", p.m, p.b),
        cfg,
        |order| {
            let panels = order / PANEL_POINTS;
            let breaks: Vec<f64> = (0..=panels).map(|i| y_max * i as f64 / panels as f64).collect();
            Ok(prefactor * composite_gauss_legendre(&breaks, PANEL_POINTS).integrate(integrand))
        },
    )
}

/// Composite rule in the form-factor variable `w = k / sqrt(2B)`.
///
/// Geometric panels resolve `e^{-c w}` down to `w ~ 1/c`; uniform panels narrow enough for the
/// Laguerre oscillations (`~ pi / sqrt(m)`) cover the rest up to `w = 9`, where the Gaussian
/// envelope `e^{-w^2/2}` has dropped below `1e-17`.
pub(crate) fn form_factor_breaks(c_max: f64, m_max: usize, split: usize) -> Vec<f64> {
    let w_end = 9.0;
    let w_geo = 0.25;
    let width = (1.5 / ((m_max + 1) as f64).sqrt()).min(w_geo);
    let mut breaks = vec![0.0];
    let mut w = 1e-3 / (1.0 + c_max);
    while w < w_geo {
        breaks.push(w);
        w *= 2.0;
    }
    let n_uniform = ((w_end - w_geo) / width).ceil() as usize;
    for i in 0..=n_uniform {
        breaks.push(w_geo + (w_end - w_geo) * i as f64 / n_uniform as f64);
    }
    let mut out = Vec::with_capacity(breaks.len() * split);
    out.push(0.0);
    for p in breaks.windows(2) {
        for j in 1..=split {
            out.push(p[0] + (p[1] - p[0]) * j as f64 / split as f64);
        }
    }
    out
}

/// `e^{-w^2} L_m(w^2)` for `m = 0..=m_max`: the form factor of `|phi_m|^2` at `k = sqrt(2B) w`.
pub(crate) fn form_factors(m_max: usize, w: f64, buf: &mut Vec<f64>) {
    let t = w * w;
    laguerre_all(m_max, t, buf);
    let g = (-t).exp();
    buf.iter_mut().for_each(|v| *v *= g);
}

/// `V_m(z) = sqrt(2B) int_0^inf e^{-w^2} L_m(w^2) e^{-|z| sqrt(2B) w} dw` (form-factor route).
pub fn v_single_form_factor(p: OrbitalParams, z: f64, cfg: &KernelConfig) -> Result<f64> {
    let c = z.abs() * (2.0 * p.b).sqrt();
    let mut buf = Vec::new();
    refine_until(
        || format!("form-factor V_{}(z = {z})", p.m),
        cfg,
        |order| {
            let split = (order / 64).max(1);
            let rule = composite_gauss_legendre(&form_factor_breaks(c, p.m, split), PANEL_POINTS);
            Ok((2.0 * p.b).sqrt()
                * rule.integrate(|w| {
                    form_factors(p.m, w, &mut buf);
                    buf[p.m] * (-c * w).exp()
                }))
        },
    )
}

/// Two-channel kernel `V_{m,n}(zeta)` with the default method.
pub fn v_pair(m: usize, n: usize, b: f64, zeta: f64) -> Result<f64> {
    v_pair_with(m, n, b, zeta, &KernelConfig::default())
}

pub fn v_pair_with(m: usize, n: usize, b: f64, zeta: f64, cfg: &KernelConfig) -> Result<f64> {
    ensure(b.is_finite() && b > 0.0, || format!("field strength must be positive, got {b}"))?;
    ensure(zeta.is_finite(), || format!("zeta must be finite, got {zeta}"))?;
    // Both routes are symmetric in (m, n) analytically; ordering the pair makes it exact.
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    let result = match cfg.pair_method {
        PairMethod::FormFactor => v_pair_form_factor(lo, hi, b, zeta, cfg),
        PairMethod::Elliptic => v_pair_elliptic(lo, hi, b, zeta, cfg),
    };
    result.map_err(|e| Error::Kernel {
        m,
        n,
        zeta,
        source: Box::new(e),
    })
}

fn v_pair_form_factor(m: usize, n: usize, b: f64, zeta: f64, cfg: &KernelConfig) -> Result<f64> {
    let c = zeta.abs() * (2.0 * b).sqrt();
    let mut buf = Vec::new();
    refine_until(
        || format!("form-factor V_{{{m},{n}}}(zeta = {zeta})"),
        cfg,
        |order| {
            let split = (order / 64).max(1);
            let rule = composite_gauss_legendre(&form_factor_breaks(c, n, split), PANEL_POINTS);
            Ok((2.0 * b).sqrt()
                * rule.integrate(|w| {
                    form_factors(n, w, &mut buf);
                    buf[m] * buf[n] * (-c * w).exp()
                }))
        },
    )
}

/// Azimuthal average of `1/|x - x'|` for transverse radii `r, r'` and separation `zeta`.
pub fn ring_kernel(r: f64, rp: f64, zeta: f64) -> Result<f64> {
    let sum2 = (r + rp) * (r + rp) + zeta * zeta;
    let diff2 = (r - rp) * (r - rp) + zeta * zeta;
    let kp = (diff2 / sum2).sqrt();
    Ok(2.0 / PI * ellip_k_complement(kp)? / sum2.sqrt())
}

fn v_pair_elliptic(m: usize, n: usize, b: f64, zeta: f64, cfg: &KernelConfig) -> Result<f64> {
    let nf = n as f64;
    let ln_norm = ln_factorial(n);
    let weight = |u: f64| {
        if u <= 0.0 {
            return if n == 0 { 1.0 } else { 0.0 };
        }
        (nf * u.ln() - u - ln_norm).exp()
    };
    let u_end = nf + 45.0 + 12.0 * (nf + 1.0).sqrt();
    let radius = |u: f64| (2.0 * u / b).sqrt();
    let inner = |u: f64| -> Result<f64> {
        let r = radius(u);
        let mut failure = None;
        let f = |up: f64| match ring_kernel(r, radius(up), zeta) {
            Ok(g) => weight(up) * g,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        };
        // Splitting at u' = u puts the logarithmic singularity of K at a panel end,
        // where the Kronrod nodes never land and bisection converges geometrically.
        let mut breaks = vec![0.0];
        if u > 0.0 && u < u_end {
            breaks.push(u);
        }
        let peak = nf;
        if peak > 0.0 && (peak - u).abs() > 1e-3 && peak < u_end {
            breaks.push(peak);
        }
        breaks.push(u_end);
        breaks.sort_by(f64::total_cmp);
        let est = adaptive(f, &breaks, 0.1 * cfg.tol, 1e-300, 4000)?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(est.value)
    };
    refine_until(
        || format!("elliptic V_{{{m},{n}}}(zeta = {zeta})"),
        &KernelConfig {
            order: cfg.order.max(16),
            max_order: cfg.max_order.min(1024),
            ..*cfg
        },
        |order| {
            let rule = gauss_laguerre(order, m as f64);
            let mut total = 0.0;
            for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                if w < 1e-300 {
                    continue;
                }
                total += w * inner(u)?;
            }
            Ok(total)
        },
    )
}

/// `(1/V_m(z) + 1/V_n(z) + 1/V_m(z') + 1/V_n(z')) V_{m,n}(z - z') - 1`.
pub fn kernel_inequality_residual(m: usize, n: usize, b: f64, z: f64, zp: f64) -> Result<f64> {
    let pm = OrbitalParams::new(m, b)?;
    let pn = OrbitalParams::new(n, b)?;
    let inv = 1.0 / v_single(pm, z)? + 1.0 / v_single(pn, z)? + 1.0 / v_single(pm, zp)? + 1.0 / v_single(pn, zp)?;
    Ok(inv * v_pair(m, n, b, z - zp)? - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(m: usize, b: f64) -> OrbitalParams {
        OrbitalParams::new(m, b).unwrap()
    }

    #[test]
    fn orbital_density_at_origin() {
        assert!((orbital_density(p(0, 1.0), 0.0) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(orbital_density(p(3, 1.0), 0.0), 0.0);
        assert!(orbital_density(p(400, 2.0), 20.0).is_finite());
    }

    #[test]
    fn v_single_closed_form_at_origin() {
        for &b in &[0.3, 1.0, 7.0] {
            let exact = (PI * b / 2.0).sqrt();
            assert!((v_single(p(0, b), 0.0).unwrap() - exact).abs() < 1e-12);
        }
        // V_m(0) = sqrt(B/2) Gamma(m + 1/2) / m!
        let m = 5;
        let exact = (0.5f64).sqrt() * (crate::special::ln_gamma(m as f64 + 0.5) - ln_factorial(m)).exp();
        assert!((v_single(p(m, 1.0), 0.0).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn single_routes_agree() {
        let cfg = KernelConfig::default();
        for &m in &[0usize, 1, 4, 15] {
            for &z in &[0.0, 0.05, 0.7, 3.0, 40.0] {
                let a = v_single(p(m, 2.0), z).unwrap();
                let b = v_single_form_factor(p(m, 2.0), z, &cfg).unwrap();
                assert!(((a - b) / a).abs() < 1e-9, "m={m} z={z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pair_closed_form_at_origin() {
        // V_00(0) = sqrt(pi B) / 2
        for &b in &[1.0, 10.0] {
            let v = v_pair(0, 0, b, 0.0).unwrap();
            assert!((v - (PI * b).sqrt() / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_routes_agree() {
        let ell = KernelConfig {
            pair_method: PairMethod::Elliptic,
            tol: 1e-8,
            ..KernelConfig::default()
        };
        for &(m, n, zeta) in &[(0usize, 0usize, 0.0), (0, 2, 0.3), (1, 3, 1.5), (2, 2, 0.0), (0, 1, 6.0)] {
            let a = v_pair(m, n, 1.0, zeta).unwrap();
            let b = v_pair_with(m, n, 1.0, zeta, &ell).unwrap();
            assert!(((a - b) / a).abs() < 1e-6, "({m},{n},{zeta}): {a} vs {b}");
        }
    }

    #[test]
    fn ring_kernel_matches_direct_angle_average() {
        let (r, rp, zeta) = (0.7, 1.3, 0.4);
        let est = adaptive(
            |t: f64| 1.0 / (r * r + rp * rp - 2.0 * r * rp * t.cos() + zeta * zeta).sqrt() / (2.0 * PI),
            &[0.0, PI, 2.0 * PI],
            1e-13,
            0.0,
            1000,
        )
        .unwrap();
        assert!((ring_kernel(r, rp, zeta).unwrap() - est.value).abs() < 1e-12);
    }
}
