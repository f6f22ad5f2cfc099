//! Per-iteration cost of the solvers and baselines on a mid-size instance.
//!
//! The point of comparison: the extrapolating methods pay a handful of
//! matrix-vector products per step, while the exact forward-backward
//! iteration pays a triangular solve against its cached factorization (and
//! would pay a full refactorization whenever the stepsizes change).

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use saddle_core::apdg::{apdg_step, schedule_params, ApdgState};
use saddle_core::baselines::{extragradient_step, ForwardBackward};
use saddle_core::gdae::{gdae_step, schedule_gdae_params, GdaeState};
use saddle_core::problem::{IteratePair, RegimeChoice, SmoothnessSpec, Vector};
use saddle_core::problems::make_quadratic_saddle;

fn target_spec() -> SmoothnessSpec {
    SmoothnessSpec::new(16.0, 1.0, 16.0, 1.0, 4.0, 1.0, 1.0, true, true).unwrap()
}

fn bench_steps(c: &mut Criterion) {
    let dim = 100;
    let inst = make_quadratic_saddle(dim, dim, &target_spec(), 2718).unwrap();
    let problem = inst.problem();
    let general = inst.general_problem();
    let start = IteratePair::new(
        Vector::from_element(dim, 1.0),
        Vector::from_element(dim, -1.0),
    );

    let params = schedule_params(problem.spec(), RegimeChoice::Auto).unwrap();
    let state = ApdgState::new(&problem, &start).unwrap();
    c.bench_function("apdg_step_100", |b| {
        b.iter_batched(
            || state.clone(),
            |s| apdg_step(&problem, &params, &s),
            BatchSize::SmallInput,
        )
    });

    let gparams = schedule_gdae_params(general.spec(), RegimeChoice::Auto).unwrap();
    let gstate = GdaeState::new(&general, &start).unwrap();
    c.bench_function("gdae_step_100", |b| {
        b.iter_batched(
            || gstate.clone(),
            |s| gdae_step(&general, &gparams, &s),
            BatchSize::SmallInput,
        )
    });

    c.bench_function("extragradient_step_100", |b| {
        b.iter_batched(
            || start.clone(),
            |p| extragradient_step(&general, 0.01, &p),
            BatchSize::SmallInput,
        )
    });

    let fb = ForwardBackward::new(&problem, 0.01, 0.01).unwrap();
    c.bench_function("forward_backward_step_100", |b| {
        b.iter_batched(
            || start.clone(),
            |p| fb.step(&problem, &p),
            BatchSize::SmallInput,
        )
    });

    c.bench_function("forward_backward_factorize_100", |b| {
        b.iter(|| ForwardBackward::new(&problem, 0.01, 0.01).unwrap())
    });
}

fn bench_scheduling(c: &mut Criterion) {
    let spec = target_spec();
    c.bench_function("schedule_params", |b| {
        b.iter(|| schedule_params(&spec, RegimeChoice::Auto).unwrap())
    });
}

criterion_group!(benches, bench_steps, bench_scheduling);
criterion_main!(benches);
