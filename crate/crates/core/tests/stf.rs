use std::f64::consts::PI;

use llband::grid::RadialGrid;
use llband::stf::{
    energy_scale, length_scale, newton_radial_potential, reconstructed_energy, solve_stf, stf_energy, support_radius,
    tf_residual, Occupation, RadialDensity, StfOptions, StfSolution,
};
use proptest::prelude::*;
use statrs::function::erf::erf;

fn solve(z: f64, b: f64, occ: Occupation) -> StfSolution {
    let grid = RadialGrid::for_atom(z, b, 2000).unwrap();
    solve_stf(z, b, occ, &grid, &StfOptions::default()).unwrap()
}

#[test]
fn screening_of_a_gaussian_cloud() {
    // rho = e^{-r^2} / pi^{3/2} carries unit charge and screens as erf(r) / r.
    let grid = RadialGrid::hybrid(1e-4, 0.1, 12.0, 6000, 600).unwrap();
    let rho: Vec<f64> = grid.nodes().iter().map(|r| (-r * r).exp() / PI.powf(1.5)).collect();
    let d = RadialDensity::new(grid, rho, 1.0, 1.0, 0.0).unwrap();
    assert!((d.particle_number() - 1.0).abs() < 1e-6, "{}", d.particle_number());
    for r in [0.05, 0.3, 1.0, 2.5, 7.0] {
        let exact = 1.0 / r - erf(r) / r;
        let got = newton_radial_potential(&d, r);
        assert!((got - exact).abs() < 1e-5 * (1.0 / r), "r={r}: {got} vs {exact}");
    }
}

#[test]
fn neutral_atom_is_self_consistent() {
    let s = solve(6.0, 20.0, Occupation::Neutral);
    assert!(s.residual < 1e-6);
    assert!(tf_residual(&s.density) < 1e-6);
    assert!((s.density.particle_number() - 6.0).abs() < 1e-3 * 6.0);
    assert_eq!(s.density.nu(), 0.0);
    let e = stf_energy(&s.density);
    assert!((e.total - s.energy.total).abs() < 1e-12 * e.total.abs());
    // The minimizer satisfies E = -(B/3pi^2) int [phi + nu]_+^{3/2} + nu N - D.
    let rec = reconstructed_energy(&s.density);
    assert!((rec - e.total).abs() < 1e-6 * e.total.abs(), "{rec} vs {}", e.total);
}

#[test]
fn ion_chemical_potential_is_the_energy_slope() {
    let (z, b) = (5.0, 10.0);
    let n = 3.0;
    let d = 1e-3;
    let mid = solve(z, b, Occupation::Ionic(n));
    let lo = solve(z, b, Occupation::Ionic(n - d));
    let hi = solve(z, b, Occupation::Ionic(n + d));
    assert!((mid.density.particle_number() - n).abs() < 1e-8);
    let slope = (hi.energy.total - lo.energy.total) / (2.0 * d);
    let nu = mid.density.nu();
    assert!(nu < 0.0);
    assert!((slope - nu).abs() < 1e-3 * nu.abs(), "slope {slope}, nu {nu}");
}

#[test]
fn ions_lie_above_the_neutral_atom() {
    let neutral = solve(4.0, 10.0, Occupation::Neutral).energy.total;
    let mut prev = f64::NEG_INFINITY;
    for n in [3.5, 2.5, 1.0] {
        let e = solve(4.0, 10.0, Occupation::Ionic(n)).energy.total;
        assert!(e > neutral && e > prev, "N={n}: {e}");
        prev = e;
    }
}

#[test]
fn neutral_radius_and_edge() {
    let s = solve(1.0, 1.0, Occupation::Neutral);
    let info = support_radius(&s.density).unwrap();
    // Converged value from grids of 1000 to 16000 nodes.
    assert!((info.fitted_radius - 3.651).abs() < 5e-3, "{}", info.fitted_radius);
    assert!((3.5..=4.5).contains(&info.edge_exponent));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn neutral_atoms_obey_scaling(lz in 0.0f64..2.0, lb in -1.0f64..3.0) {
        let (z, b) = (10f64.powf(lz), 10f64.powf(lb));
        let s = solve(z, b, Occupation::Neutral);
        let unit = solve(1.0, 1.0, Occupation::Neutral);
        let ratio = s.energy.total / energy_scale(z, b);
        prop_assert!((ratio - unit.energy.total).abs() < 1e-3 * unit.energy.total.abs());
        let r = support_radius(&s.density).unwrap().fitted_radius / length_scale(z, b);
        let r1 = support_radius(&unit.density).unwrap().fitted_radius;
        prop_assert!((r - r1).abs() < 2e-3 * r1);
    }
}
