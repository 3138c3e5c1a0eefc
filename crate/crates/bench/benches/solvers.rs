use criterion::{black_box, criterion_group, criterion_main, Criterion};
use llband::dstf::{solve_dstf, suggested_grid, DstfOptions, Filling};
use llband::grid::{RadialGrid, UniformGrid};
use llband::kernels::build_kernel_table;
use llband::spectral::{negative_spectrum, SquareWell};
use llband::stf::{solve_stf, Occupation, StfOptions};

fn kernel_table(c: &mut Criterion) {
    let grid = UniformGrid::new(6.0, 121).unwrap();
    c.bench_function("kernel table m<=4, 121 nodes", |b| {
        b.iter(|| build_kernel_table(black_box(2.0), 4, &grid, 16, 1e-10).unwrap())
    });
}

fn spectrum(c: &mut Criterion) {
    let grid = UniformGrid::with_spacing(4.0, 0.005).unwrap();
    let well = SquareWell { depth: 40.0, half_width: 2.0 };
    c.bench_function("square well, 1601 nodes", |b| b.iter(|| negative_spectrum(black_box(&well), &grid, 0.0).unwrap()));
}

fn stf(c: &mut Criterion) {
    let grid = RadialGrid::for_atom(10.0, 100.0, 2000).unwrap();
    c.bench_function("neutral STF (10, 100)", |b| {
        b.iter(|| solve_stf(black_box(10.0), 100.0, Occupation::Neutral, &grid, &StfOptions::default()).unwrap())
    });
}

fn dstf(c: &mut Criterion) {
    let (z, b) = (2.0, 5.0);
    let table = build_kernel_table(b, 8, &suggested_grid(z, b, 20.0).unwrap(), 16, 1e-10).unwrap();
    c.bench_function("DSTF (2, 5), N = 1", |bench| {
        bench.iter(|| solve_dstf(z, b, Filling::Particles(black_box(1.0)), &table, &DstfOptions::default()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = kernel_table, spectrum, stf, dstf
}
criterion_main!(benches);
