//! Benchmarks of the data-parallel kernels against their sequential
//! fallbacks, plus the per-step costs of the solver pipeline.
//!
//! With the default `parallel` feature the `csr` matvec entry uses rayon
//! while `csr_seq` pins the sequential path, so a single `cargo bench` run
//! shows the comparison. Build with `--no-default-features` to measure the
//! fully sequential crate.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use stab_core::fem::{assemble_block_system, assemble_mass, ModelParams};
use stab_core::kernels;
use stab_core::mesh::{build_unit_square_mesh, ControlRegion};
use stab_core::spectral::{discrete_eigs, Which};
use stab_core::timestep::{bdf2_step, ClosedLoopOperator};

fn bench_assembly(c: &mut Criterion) {
    let mesh = build_unit_square_mesh(6).unwrap();
    let mut g = c.benchmark_group("assembly_L6");
    g.sample_size(20);
    g.bench_function("mass", |b| b.iter(|| black_box(assemble_mass(&mesh))));
    g.finish();
}

fn bench_matvec(c: &mut Criterion) {
    let mesh = build_unit_square_mesh(6).unwrap();
    let region = ControlRegion::full_domain(&mesh);
    let system = assemble_block_system(&mesh, &ModelParams::example(), &region).unwrap();
    let n2 = system.a.nrows();
    let x = kernels::seeded_vector(n2, 3);
    let mut y = vec![0.0; n2];
    // raw CSR arrays for the pinned-sequential entry
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for r in 0..system.a.nrows() {
        let (cols, vals) = system.a.row(r);
        indices.extend_from_slice(cols);
        values.extend_from_slice(vals);
        indptr.push(indices.len());
    }
    let mut g = c.benchmark_group("matvec_L6");
    g.bench_function("csr", |b| b.iter(|| system.a.matvec(black_box(&x), &mut y)));
    g.bench_function("csr_seq", |b| {
        b.iter(|| kernels::csr_matvec_seq(&indptr, &indices, &values, black_box(&x), &mut y))
    });
    g.finish();
}

fn bench_banded_factor(c: &mut Criterion) {
    let mesh = build_unit_square_mesh(5).unwrap();
    let region = ControlRegion::full_domain(&mesh);
    let system = assemble_block_system(&mesh, &ModelParams::example(), &region).unwrap();
    let mut g = c.benchmark_group("banded_L5");
    g.sample_size(20);
    g.bench_function("factor_real", |b| {
        b.iter(|| black_box(system.factor_pencil::<f64>(-1e-3, 1.5).unwrap()))
    });
    g.finish();
}

fn bench_bdf2_step(c: &mut Criterion) {
    let mesh = build_unit_square_mesh(4).unwrap();
    let region = ControlRegion::full_domain(&mesh);
    let system = assemble_block_system(&mesh, &ModelParams::example(), &region).unwrap();
    let n2 = system.a.nrows();
    let y0 = kernels::seeded_vector(n2, 5);
    let y1 = kernels::seeded_vector(n2, 6);
    let op = ClosedLoopOperator::open_loop(&system);
    let mut g = c.benchmark_group("timestep_L4");
    g.sample_size(20);
    g.bench_function("bdf2_step", |b| {
        b.iter(|| black_box(bdf2_step(&op, black_box(&y0), black_box(&y1), 1e-3).unwrap()))
    });
    g.finish();
}

fn bench_eigs(c: &mut Criterion) {
    let mesh = build_unit_square_mesh(4).unwrap();
    let region = ControlRegion::full_domain(&mesh);
    let system = assemble_block_system(&mesh, &ModelParams::example(), &region).unwrap();
    let mut g = c.benchmark_group("eigs_L4");
    g.sample_size(10);
    g.bench_function("rightmost_4", |b| {
        b.iter(|| black_box(discrete_eigs(&system, 4, Which::LargestReal).unwrap()))
    });
    g.finish();
}

criterion_group!(
    benches,
    bench_assembly,
    bench_matvec,
    bench_banded_factor,
    bench_bdf2_step,
    bench_eigs
);
criterion_main!(benches);
