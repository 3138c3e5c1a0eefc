use std::f64::consts::PI;

use llband::grid::UniformGrid;
use llband::kernels::{
    build_kernel_table, kernel_inequality_residual, orbital_density, v_pair, v_single, OrbitalParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `B r^2 / 2` is Gamma(m + 1, 1) under `|phi_m|^2`; a random direction completes the point.
fn sample_orbital(rng: &mut ChaCha8Rng, m: usize, b: f64) -> (f64, f64) {
    let g: f64 = (0..=m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).sum();
    let r = (2.0 * g / b).sqrt();
    let t = 2.0 * PI * rng.gen::<f64>();
    (r * t.cos(), r * t.sin())
}

/// Sample mean and standard error.
fn mc(samples: usize, mut f: impl FnMut() -> f64) -> (f64, f64) {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let v = f();
        s += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s / n;
    (mean, ((s2 / n - mean * mean) / n).sqrt())
}

#[test]
fn single_channel_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (m, b, z) in [(0, 1.0, 0.3), (3, 2.0, 0.5), (7, 10.0, 0.1)] {
        let (mean, err) = mc(400_000, || {
            let (x, y) = sample_orbital(&mut rng, m, b);
            1.0 / (x * x + y * y + z * z).sqrt()
        });
        let v = v_single(OrbitalParams::new(m, b).unwrap(), z).unwrap();
        assert!((v - mean).abs() < 4.0 * err, "m={m}: {v} vs {mean} +- {err}");
    }
}

#[test]
fn pair_kernel_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (m, n, zeta) in [(0, 0, 0.5), (0, 2, 1.0), (3, 1, 0.25)] {
        let b = 1.5;
        let (mean, err) = mc(400_000, || {
            let (x1, y1) = sample_orbital(&mut rng, m, b);
            let (x2, y2) = sample_orbital(&mut rng, n, b);
            1.0 / ((x1 - x2).powi(2) + (y1 - y2).powi(2) + zeta * zeta).sqrt()
        });
        let v = v_pair(m, n, b, zeta).unwrap();
        assert!((v - mean).abs() < 4.0 * err, "({m},{n}): {v} vs {mean} +- {err}");
    }
}

#[test]
fn contact_values_are_closed_form() {
    for b in [0.5, 1.0, 7.0] {
        let v0 = v_single(OrbitalParams::new(0, b).unwrap(), 0.0).unwrap();
        assert!((v0 - (PI * b / 2.0).sqrt()).abs() < 1e-9 * v0);
        let v00 = v_pair(0, 0, b, 0.0).unwrap();
        assert!((v00 - (PI * b).sqrt() / 2.0).abs() < 1e-9 * v00);
    }
}

#[test]
fn orbital_densities_are_normalized() {
    for m in [0usize, 1, 5, 20] {
        let p = OrbitalParams::new(m, 3.0).unwrap();
        let r_max = (2.0 * (m as f64 + 40.0) / 3.0).sqrt();
        let n = 20_000;
        let h = r_max / n as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let r = (i as f64 + 0.5) * h;
                2.0 * PI * r * orbital_density(p, r) * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "m={m}: {total}");
    }
}

#[test]
fn table_agrees_with_direct_evaluation() {
    let grid = UniformGrid::new(4.0, 41).unwrap();
    let t = build_kernel_table(2.0, 3, &grid, 16, 1e-10).unwrap();
    for m in 0..=3 {
        for (i, z) in grid.nodes().iter().enumerate() {
            let direct = v_single(OrbitalParams::new(m, 2.0).unwrap(), *z).unwrap();
            assert!((t.single(m)[i] - direct).abs() < 1e-9 * direct);
        }
    }
    for (m, n) in [(0, 0), (1, 3), (2, 2)] {
        for d in 0..grid.len() as isize {
            let direct = v_pair(m, n, 2.0, d as f64 * grid.h()).unwrap();
            assert!((t.pair_at(m, n, d) - direct).abs() < 1e-9 * direct);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_kernel_is_even_and_decreasing(m in 0usize..12, lb in -1.0f64..2.0, z in 0.0f64..20.0, dz in 0.01f64..5.0) {
        let p = OrbitalParams::new(m, 10f64.powf(lb)).unwrap();
        let a = v_single(p, z).unwrap();
        prop_assert!((a - v_single(p, -z).unwrap()).abs() <= 1e-12 * a);
        prop_assert!(v_single(p, z + dz).unwrap() < a);
        prop_assert!(a * z <= 1.0 + 1e-9);
    }

    #[test]
    fn pair_kernel_is_symmetric(m in 0usize..8, n in 0usize..8, zeta in 0.0f64..10.0) {
        let a = v_pair(m, n, 1.0, zeta).unwrap();
        let b = v_pair(n, m, 1.0, zeta).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
        prop_assert!(a > 0.0);
    }

    #[test]
    fn kernel_inequality_holds(m in 0usize..8, n in 0usize..8, lb in -0.5f64..1.5, z in -4.0f64..4.0, zp in -4.0f64..4.0) {
        let b = 10f64.powf(lb);
        let s = b.sqrt().recip();
        prop_assert!(kernel_inequality_residual(m, n, b, z * s, zp * s).unwrap() >= -1e-6);
    }
}
