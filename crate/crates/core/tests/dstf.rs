use std::f64::consts::PI;

use llband::dstf::{
    dstf_functional, mstf_energy, mstf_functional_cylindrical, solve_dstf, suggested_grid, weak_1d_energy,
    ChannelDensity, DstfOptions, Filling, MstfDensity, KAPPA,
};
use llband::grid::UniformGrid;
use llband::kernels::{build_kernel_table, v_single, KernelTable, OrbitalParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(z: f64, b: f64, m_max: usize) -> KernelTable {
    build_kernel_table(b, m_max, &suggested_grid(z, b, 20.0).unwrap(), 16, 1e-10).unwrap()
}

fn bumps(grid: &UniformGrid, m_max: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.z_max();
    (0..=m_max)
        .map(|_| {
            let (a, c, w) = (rng.gen_range(0.05..1.0), rng.gen_range(-0.3..0.3) * l, rng.gen_range(0.1..0.4) * l);
            grid.nodes().iter().map(|z| a * (-((z - c) / w).powi(2)).exp() * (1.0 - (z / l).powi(2))).collect()
        })
        .collect()
}

#[test]
fn boxcar_and_channel_energies_agree() {
    let t = table(4.0, 10.0, 6);
    for seed in 0..3 {
        let rho = ChannelDensity::new(t.grid().clone(), bumps(t.grid(), 6, seed), 4.0, 10.0, 0.0).unwrap();
        let d = dstf_functional(&rho, &t).unwrap();
        let m = mstf_energy(&MstfDensity::from(rho.clone()), &t).unwrap();
        assert!((d.total - m.total).abs() < 1e-12 * d.total.abs(), "{} vs {}", d.total, m.total);
        // The same density through the generic cylindrical path.
        let b = 10.0;
        let rows = rho.channels().to_vec();
        let h = t.grid().h();
        let z0 = t.grid().z_min();
        let f = move |s: f64, z: f64| {
            let m = (0.5 * b * s * s).floor() as usize;
            let i = ((z - z0) / h).round() as usize;
            rows.get(m).map_or(0.0, |r| b / (2.0 * PI) * r[i])
        };
        let c = mstf_functional_cylindrical(f, 4.0, &t, 6, 8).unwrap();
        assert!((c.total - d.total).abs() < 1e-9 * d.total.abs(), "{} vs {}", c.total, d.total);
    }
}

/// Samples a point of the orbital reconstruction `sum_m rho_m(z) |phi_m(x_perp)|^2`.
fn sample_point(rng: &mut ChaCha8Rng, cdf: &[(usize, usize, f64)], grid: &UniformGrid, b: f64) -> [f64; 3] {
    let u = rng.gen::<f64>() * cdf.last().unwrap().2;
    let k = cdf.partition_point(|c| c.2 < u);
    let (m, i, _) = cdf[k];
    let z = grid.z(i) + (rng.gen::<f64>() - 0.5) * grid.h();
    let g: f64 = (0..=m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).sum();
    let r = (2.0 * g / b).sqrt();
    let t = 2.0 * PI * rng.gen::<f64>();
    [r * t.cos(), r * t.sin(), z]
}

#[test]
fn channel_repulsion_matches_monte_carlo() {
    let (z, b, m_max) = (3.0, 4.0, 3);
    let t = table(z, b, m_max);
    let grid = t.grid().clone();
    let rows = bumps(&grid, m_max, 42);
    let rho = ChannelDensity::new(grid.clone(), rows.clone(), z, b, 0.0).unwrap();
    let d = dstf_functional(&rho, &t).unwrap();
    let w = grid.trapezoid_weights();
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    for (m, row) in rows.iter().enumerate() {
        for i in 0..grid.len() {
            acc += w[i] * row[i];
            cdf.push((m, i, acc));
        }
    }
    let n = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples = 400_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let p = sample_point(&mut rng, &cdf, &grid, b);
        let q = sample_point(&mut rng, &cdf, &grid, b);
        let v = 1.0 / ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        s += v;
        s2 += v * v;
    }
    let mean = s / samples as f64;
    let err = ((s2 / samples as f64 - mean * mean) / samples as f64).sqrt();
    let mc = 0.5 * n * n * mean;
    let tol = 0.5 * n * n * 4.0 * err + 0.01 * mc;
    assert!((d.repulsion - mc).abs() < tol, "{} vs {mc} +- {}", d.repulsion, 0.5 * n * n * err);
}

#[test]
fn weak_energy_matches_pointwise_minimization() {
    // min_rho (kappa rho^3 - V rho) per point by golden section, integrated on a log grid.
    let pointwise = |v: f64| {
        let f = |x: f64| KAPPA * x * x * x - v * x;
        let (mut a, mut c) = (0.0, (v / KAPPA).sqrt());
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = c - g * (c - a);
            let x2 = a + g * (c - a);
            if f(x1) < f(x2) {
                c = x2;
            } else {
                a = x1;
            }
        }
        f(0.5 * (a + c))
    };
    for (z, b) in [(1.0, 1.0), (3.0, 20.0)] {
        let p = OrbitalParams::new(0, b).unwrap();
        let s = 1.0 / b.sqrt();
        let (lo, hi, n) = (1e-6 * s, 1e10 * s, 24_000);
        let ratio: f64 = (hi / lo).powf(1.0 / n as f64);
        let e = |x: f64| pointwise(z * v_single(p, x).unwrap());
        let mut total = lo * e(0.0);
        let mut x0 = lo;
        let mut f0 = e(x0);
        for _ in 0..n {
            let x1 = x0 * ratio;
            let f1 = e(x1);
            total += 0.5 * (f0 + f1) * (x1 - x0);
            (x0, f0) = (x1, f1);
        }
        // f ~ -(2/3pi) Z^{3/2} x^{-3/2} beyond the grid.
        total += -(2.0 / (3.0 * PI)) * z.powf(1.5) * 2.0 / hi.sqrt();
        let oracle = 2.0 * total;
        let ew = weak_1d_energy(z, b).unwrap();
        assert!((ew - oracle).abs() < 1e-4 * ew.abs(), "{ew} vs {oracle}");
    }
}

#[test]
fn energy_curve_is_convex_and_mu_is_its_slope() {
    let (z, b) = (2.0, 5.0);
    let t = table(z, b, 8);
    let opts = DstfOptions::default();
    let ns = [0.4, 0.8, 1.2, 1.6, 2.0];
    let e: Vec<f64> = ns.iter().map(|n| solve_dstf(z, b, Filling::Particles(*n), &t, &opts).unwrap().energy.total).collect();
    for k in 1..ns.len() - 1 {
        assert!(e[k] < e[k - 1]);
        assert!(e[k] <= 0.5 * (e[k - 1] + e[k + 1]));
    }
    let d = 1e-3;
    let mid = solve_dstf(z, b, Filling::Particles(1.0), &t, &opts).unwrap();
    let lo = solve_dstf(z, b, Filling::Particles(1.0 - d), &t, &opts).unwrap();
    let hi = solve_dstf(z, b, Filling::Particles(1.0 + d), &t, &opts).unwrap();
    let slope = (hi.energy.total - lo.energy.total) / (2.0 * d);
    let mu = mid.energy.chemical_potential;
    assert!((slope - mu).abs() < 1e-3 * mu.abs(), "{slope} vs {mu}");
}

#[test]
fn requests_past_the_critical_number_saturate() {
    let (z, b) = (2.0, 5.0);
    let t = table(z, b, 8);
    let opts = DstfOptions::default();
    let crit = solve_dstf(z, b, Filling::Critical, &t, &opts).unwrap();
    let over = solve_dstf(z, b, Filling::Particles(2.0 * crit.energy.n), &t, &opts).unwrap();
    assert!(over.saturated);
    assert_eq!(over.energy.chemical_potential, 0.0);
    assert!((over.energy.total - crit.energy.total).abs() < 1e-8 * crit.energy.total.abs());
    assert!(crit.energy.n > z);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_terms_have_their_signs(seed in 0u64..1000, scale in 0.01f64..5.0) {
        let t = table(2.0, 5.0, 3);
        let rows: Vec<Vec<f64>> = bumps(t.grid(), 3, seed).into_iter().map(|r| r.into_iter().map(|v| v * scale).collect()).collect();
        let rho = ChannelDensity::new(t.grid().clone(), rows, 2.0, 5.0, 0.0).unwrap();
        let e = dstf_functional(&rho, &t).unwrap();
        prop_assert!(e.kinetic_like >= 0.0 && e.attraction <= 0.0 && e.repulsion >= 0.0);
        prop_assert!((e.total - (e.kinetic_like + e.attraction + e.repulsion)).abs() <= 1e-12 * e.total.abs().max(1.0));
    }
}
