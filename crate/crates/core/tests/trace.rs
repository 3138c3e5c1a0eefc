use std::f64::consts::PI;

use llband::grid::{RadialGrid, UniformGrid};
use llband::stf::{solve_stf, stf_energy, Occupation, StfOptions};
use llband::trace::{
    channel_potential, channel_potentials, neutral_comparison, quantum_trace, scaled_neutral_comparison,
    semiclassical_count, semiclassical_trace, tilde_potential, ChannelPolicy, ConstantPotential, FnRadial,
    StfPotential, SweepOptions, TraceOptions,
};
use proptest::prelude::*;

fn fixed(m: usize) -> TraceOptions {
    TraceOptions {
        policy: ChannelPolicy::Fixed(m),
        ..TraceOptions::default()
    }
}

/// `g(r) = a (1 - r^2/R^2)^3` on `r < R`: smooth enough for the channel quadrature, compactly supported.
fn bump(a: f64, r0: f64) -> FnRadial<impl Fn(f64) -> f64 + Sync> {
    FnRadial::new(move |r: f64| if r < r0 { a * (1.0 - (r / r0).powi(2)).powi(3) } else { 0.0 }, r0, "bump")
}

#[test]
fn gaussian_channels_are_closed_form() {
    // Under |phi_m|^2, B s^2 / 2 is Gamma(m + 1), so the average of e^{-s^2} is (1 + 2/B)^{-(m+1)}.
    let b = 3.0;
    let phi = FnRadial::new(|r: f64| (-r * r).exp(), 12.0, "gauss");
    let grid = UniformGrid::new(3.0, 61).unwrap();
    let rows = channel_potentials(&phi, b, 0..=6, &grid, &Default::default()).unwrap();
    for (m, row) in rows.iter().enumerate() {
        for (i, z) in grid.nodes().iter().enumerate() {
            let exact = (-z * z).exp() * (1.0 + 2.0 / b).powi(-(m as i32 + 1));
            assert!((row[i] - exact).abs() < 1e-8, "m={m}, z={z}: {} vs {exact}", row[i]);
        }
    }
}

#[test]
fn channels_decrease_for_a_decreasing_potential() {
    let phi = bump(5.0, 2.0);
    let grid = UniformGrid::new(2.5, 51).unwrap();
    let rows: Vec<Vec<f64>> = (0..8).map(|m| channel_potential(&phi, m, 2.0, &grid).unwrap()).collect();
    for m in 1..rows.len() {
        for i in 0..grid.len() {
            assert!(rows[m][i] <= rows[m - 1][i] + 1e-12);
        }
    }
}

#[test]
fn neutral_phase_space_integrals() {
    let (z, b) = (8.0, 22.6);
    // The node quadrature of the solver and the interpolated potential agree to O(n^{-5/2}).
    let grid = RadialGrid::for_atom(z, b, 8000).unwrap();
    let sol = solve_stf(z, b, Occupation::Neutral, &grid, &StfOptions::default()).unwrap();
    let phi = StfPotential::neutral(&sol.density).unwrap();
    let n = semiclassical_count(&phi, b, 0.0).unwrap();
    assert!((n - z).abs() < 1e-5 * z, "{n}");
    // At nu = 0: E = -(B/3pi^2) int phi_+^{3/2} - D.
    let e = stf_energy(&sol.density);
    let tr = semiclassical_trace(&phi, b, 0.0).unwrap();
    assert!((tr - (e.total + e.repulsion)).abs() < 1e-5 * tr.abs(), "{tr} vs {}", e.total + e.repulsion);
}

#[test]
fn constant_channels_in_a_box() {
    // Every channel of phi = c sees -d^2/dz^2 - c with walls at +-L.
    let (c, l) = (15.0, 2.0);
    let grid = UniformGrid::with_spacing(l, 0.01).unwrap();
    let q = quantum_trace(&ConstantPotential { c }, 1.0, 0.0, &grid, &fixed(3)).unwrap();
    let one: f64 = (1..).map(|k| (k as f64 * PI / (2.0 * l)).powi(2) - c).take_while(|e| *e < 0.0).sum();
    for ch in &q.per_channel {
        assert!((ch.trace - one).abs() < 1e-4 * one.abs(), "{} vs {one}", ch.trace);
    }
    assert!((q.total - 4.0 * one).abs() < 4e-4 * one.abs());
    let tilde = tilde_potential(&ConstantPotential { c }, 1.0, &grid, 3).unwrap();
    let t = tilde.transverse_trace(0.0, q.cutoff).unwrap();
    assert!((t - q.total).abs() < 1e-12 * q.total.abs());
}

#[test]
fn boxcar_trace_equals_channel_sum() {
    let phi = bump(20.0, 1.5);
    let grid = UniformGrid::with_spacing(1.6, 0.01).unwrap();
    let q = quantum_trace(&phi, 4.0, -0.5, &grid, &fixed(5)).unwrap();
    let t = tilde_potential(&phi, 4.0, &grid, 5).unwrap().transverse_trace(-0.5, q.cutoff).unwrap();
    assert!((t - q.total).abs() < 1e-12 * q.total.abs(), "{t} vs {}", q.total);
}

#[test]
fn scaled_and_direct_comparisons_agree() {
    let opts = SweepOptions::default();
    let (z, b) = (8.0, 8f64.powf(1.5));
    let direct = neutral_comparison(z, b, &opts).unwrap();
    let grid = RadialGrid::for_atom(1.0, 1.0, opts.radial_nodes).unwrap();
    let unit = solve_stf(1.0, 1.0, Occupation::Neutral, &grid, &opts.stf).unwrap();
    let scaled = scaled_neutral_comparison(&StfPotential::neutral(&unit.density).unwrap(), z, b, &opts).unwrap();
    assert!((direct.difference - scaled.difference).abs() < 1e-4 * direct.difference.abs());
    assert!(direct.quantum_trace < 0.0 && direct.semiclassical_trace < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn channel_traces_are_ordered(a in 2.0f64..40.0, r0 in 0.5f64..2.0, lb in -0.5f64..1.0, nu in -1.0f64..0.0) {
        let b = 10f64.powf(lb);
        let phi = bump(a, r0);
        let grid = UniformGrid::with_spacing(r0 * 1.1, 0.02).unwrap();
        let q = quantum_trace(&phi, b, nu, &grid, &fixed(6)).unwrap();
        let sum: f64 = q.per_channel.iter().map(|c| c.trace).sum();
        prop_assert!((q.total - sum).abs() <= 1e-12 * sum.abs().max(1e-300));
        prop_assert!(q.per_channel.iter().all(|c| c.trace <= 0.0));
        for w in q.per_channel.windows(2) {
            prop_assert!(w[1].trace >= w[0].trace - 1e-10);
        }
    }

    #[test]
    fn semiclassical_trace_is_monotone_in_nu(a in 1.0f64..30.0, r0 in 0.5f64..3.0, nu in -0.9f64..0.0, d in 0.0f64..1.0) {
        let phi = bump(a, r0);
        let t1 = semiclassical_trace(&phi, 2.0, nu).unwrap();
        let t2 = semiclassical_trace(&phi, 2.0, nu - d * a).unwrap();
        prop_assert!(t1 <= 0.0);
        prop_assert!(t2 >= t1 - 1e-12 * t1.abs());
    }
}
