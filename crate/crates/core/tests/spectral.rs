use std::f64::consts::PI;

use llband::grid::UniformGrid;
use llband::spectral::{
    counting, diagonal_density, lowest_eigenvalues, negative_spectrum, negative_spectrum_with, sturm_counts, sum_neg,
    Boundary, FnPotential, Oscillator, SpectralOptions, SquareWell,
};
use proptest::prelude::*;

fn open() -> SpectralOptions {
    SpectralOptions {
        boundary: Boundary::Open,
        ..SpectralOptions::default()
    }
}

/// Bound states of the finite well from the parity-resolved matching conditions, by bisection
/// between the poles of `tan` and `cot`.
fn well_oracle(v: f64, a: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        // Even states have ka in (j pi, j pi + pi/2), odd ones in (j pi + pi/2, (j + 1) pi).
        let (lo, even) = (0.5 * PI * j as f64, j % 2 == 0);
        let hi = (lo + 0.5 * PI).min(v.sqrt() * a);
        if lo >= hi {
            break;
        }
        let g = |ka: f64| {
            let k = ka / a;
            let kappa = (v - k * k).max(0.0).sqrt();
            if even {
                k * ka.sin() - kappa * ka.cos()
            } else {
                -k * ka.cos() - kappa * ka.sin()
            }
        };
        let (mut x0, mut x1) = (lo + 1e-14, hi);
        if g(x0).signum() != g(x1).signum() {
            for _ in 0..200 {
                let mid = 0.5 * (x0 + x1);
                if g(mid).signum() == g(x0).signum() {
                    x0 = mid;
                } else {
                    x1 = mid;
                }
            }
            let k = 0.5 * (x0 + x1) / a;
            out.push(k * k - v);
        }
        j += 1;
    }
    out.sort_by(f64::total_cmp);
    out
}

#[test]
fn oscillator_levels() {
    for omega in [0.5f64, 1.0, 3.0] {
        let grid = UniformGrid::with_spacing(12.0 / omega.sqrt(), 0.02 / omega.sqrt()).unwrap();
        let s = lowest_eigenvalues(&Oscillator { omega }, &grid, 6, &SpectralOptions::default()).unwrap();
        for (k, l) in s.eigenvalues.iter().enumerate() {
            let exact = omega * (2 * k + 1) as f64;
            assert!((l - exact).abs() < 1e-6 * exact, "omega={omega}, k={k}: {l}");
        }
    }
}

#[test]
fn finite_well_on_the_whole_line() {
    for (v, a) in [(12.0, 1.0), (3.0, 0.5), (40.0, 2.0)] {
        let exact = well_oracle(v, a);
        let grid = UniformGrid::with_spacing(2.0 * a, 0.005).unwrap();
        let s = negative_spectrum_with(&SquareWell { depth: v, half_width: a }, &grid, 0.0, &open()).unwrap();
        assert_eq!(s.eigenvalues.len(), exact.len(), "depth {v}");
        for (l, e) in s.eigenvalues.iter().zip(&exact) {
            assert!((l - e).abs() < 1e-6 * v, "depth {v}: {l} vs {e}");
        }
    }
}

#[test]
fn open_levels_do_not_depend_on_the_box() {
    let w = SquareWell { depth: 12.0, half_width: 1.0 };
    let a = negative_spectrum_with(&w, &UniformGrid::with_spacing(1.5, 0.01).unwrap(), 0.0, &open()).unwrap();
    let b = negative_spectrum_with(&w, &UniformGrid::with_spacing(6.0, 0.01).unwrap(), 0.0, &open()).unwrap();
    assert_eq!(a.eigenvalues.len(), b.eigenvalues.len());
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn walls_raise_every_level() {
    let w = SquareWell { depth: 12.0, half_width: 1.0 };
    let grid = UniformGrid::with_spacing(1.5, 0.01).unwrap();
    let walls = negative_spectrum(&w, &grid, 0.0).unwrap();
    let line = negative_spectrum_with(&w, &grid, 0.0, &open()).unwrap();
    assert!(walls.eigenvalues.len() <= line.eigenvalues.len());
    for (d, o) in walls.eigenvalues.iter().zip(&line.eigenvalues) {
        assert!(d > o);
    }
}

#[test]
fn constant_well_in_a_box() {
    // -d^2/dz^2 - c on (-L, L) with walls: (k pi / 2L)^2 - c.
    let (c, l) = (20.0, 2.0);
    let grid = UniformGrid::with_spacing(l, 0.01).unwrap();
    let s = negative_spectrum(&FnPotential::new(move |_| c, "flat"), &grid, 0.0).unwrap();
    let exact: Vec<f64> = (1..).map(|k| (k as f64 * PI / (2.0 * l)).powi(2) - c).take_while(|e| *e < 0.0).collect();
    assert_eq!(s.eigenvalues.len(), exact.len());
    for (x, e) in s.eigenvalues.iter().zip(&exact) {
        assert!((x - e).abs() < 1e-5, "{x} vs {e}");
    }
}

#[test]
fn sturm_paths_agree_and_density_counts_states() {
    let w = SquareWell { depth: 30.0, half_width: 1.0 };
    let grid = UniformGrid::with_spacing(3.0, 0.01).unwrap();
    let (a, b) = sturm_counts(&w, &grid, -1.0).unwrap();
    assert_eq!(a, b);
    let n = counting(&w, &grid, -1.0).unwrap();
    assert_eq!(n, a);
    let rho = diagonal_density(&w, &grid, -1.0).unwrap();
    let mass: f64 = rho.iter().zip(grid.trapezoid_weights()).map(|(r, w)| r * w).sum();
    assert!((mass - n as f64).abs() < 1e-9, "{mass} vs {n}");
}

#[test]
fn positive_shift_is_rejected() {
    let grid = UniformGrid::new(1.0, 11).unwrap();
    assert!(sum_neg(&SquareWell { depth: 1.0, half_width: 0.5 }, &grid, 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trace_is_nonpositive_and_monotone(depth in 0.1f64..40.0, extra in 0.0f64..10.0, a in 0.2f64..2.0, nu in -5.0f64..0.0, dnu in 0.0f64..3.0) {
        let grid = UniformGrid::with_spacing(3.0, 0.02).unwrap();
        let w = SquareWell { depth, half_width: a };
        let deeper = SquareWell { depth: depth + extra, half_width: a };
        let t = sum_neg(&w, &grid, nu).unwrap();
        prop_assert!(t <= 0.0);
        prop_assert!(sum_neg(&deeper, &grid, nu).unwrap() <= t + 1e-12);
        prop_assert!(sum_neg(&w, &grid, nu - dnu).unwrap() >= t - 1e-12);
    }

    #[test]
    fn eigenvalues_are_sorted_and_below_cutoff(depth in 1.0f64..60.0, a in 0.2f64..2.0, cutoff in -10.0f64..0.0) {
        let grid = UniformGrid::with_spacing(2.5, 0.02).unwrap();
        let s = negative_spectrum_with(&SquareWell { depth, half_width: a }, &grid, cutoff, &open()).unwrap();
        prop_assert!(s.eigenvalues.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(s.eigenvalues.iter().all(|l| *l < cutoff && *l > -depth));
    }
}
