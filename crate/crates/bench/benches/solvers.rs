use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hjcell_core::cell::{CellOptions, CellProblem};
use hjcell_core::effective::sweep_levels;
use hjcell_core::env::benchmarks::{double_well, quadratic_cosine};
use hjcell_core::pde::{cfl_time_step, solve_viscous_hj, BoundaryMode, Grid1D, SchemeSettings};

fn poincare(c: &mut Criterion) {
    let cell = CellProblem::new(quadratic_cosine(), 6.0, CellOptions::default()).unwrap();
    c.bench_function("poincare_displacement", |b| {
        b.iter(|| cell.poincare_displacement(black_box(3.0), black_box(1.2)).unwrap())
    });
}

fn sweep(c: &mut Criterion) {
    let cell = CellProblem::new(double_well(2.0), 3.0, CellOptions::default()).unwrap();
    let mut g = c.benchmark_group("level_sweep");
    g.sample_size(10);
    g.bench_function("double_well_8_levels", |b| b.iter(|| sweep_levels(&cell, 2.5, 9.0, 8).unwrap()));
    g.finish();
}

fn pde_steps(c: &mut Criterion) {
    let env = quadratic_cosine();
    let dx = 0.005;
    let dt = cfl_time_step(dx, 1.0, 6.0, 0.45);
    let grid = Grid1D::new(0.0, 1.0, 201, dt, 200.0 * dt).unwrap();
    let init: Vec<f64> = grid.nodes().iter().map(|x| 0.5 * x).collect();
    let settings = SchemeSettings {
        tilt: 0.5,
        far_slopes: (0.5, 0.5),
        dissipation: 6.0,
        a_max: 1.0,
        gradient_limit: 50.0,
        probe_times: vec![],
        probe_x: 0.0,
        keep_profiles: false,
    };
    c.bench_function("pde_200_steps", |b| {
        b.iter(|| solve_viscous_hj(&env, 1.0, &init, &grid, BoundaryMode::TiltedPeriodic, &settings).unwrap())
    });
}

criterion_group!(benches, poincare, sweep, pde_steps);
criterion_main!(benches);
