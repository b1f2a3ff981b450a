use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ehpc_bench::{iid_states, projection_input};
use ehpc_core::controller::{DriftPlusPenalty, PowerController};
use ehpc_core::environment::BatteryState;
use ehpc_core::oracle::{average_utility, solve_upper_bound, AscentOptions, OracleProblem};
use ehpc_core::projection::project_capped_simplex;
use ehpc_core::utility::water_filling;
use ehpc_core::{derive_algorithm_params, derive_params, LogUtility};

fn projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("project_capped_simplex");
    for n in [2usize, 10, 100, 1000] {
        let x = projection_input(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| project_capped_simplex(black_box(x), 5.0).unwrap())
        });
    }
    group.finish();
}

fn controller_step(c: &mut Criterion) {
    let pp = derive_params(2, 5.0, 3.0, &[4.0, 4.0]).unwrap();
    let ap = derive_algorithm_params(&pp, 40.0, 1).unwrap();
    let states = iid_states(1024);
    let battery = BatteryState::new(ap.recommended_capacity, ap.recommended_capacity).unwrap();
    c.bench_function("alg1_end_of_slot", |b| {
        let mut ctl = DriftPlusPenalty::new(pp.clone(), ap.clone(), LogUtility);
        let mut k = 0;
        b.iter(|| {
            let p = ctl.current_power().clone();
            ctl.end_of_slot(black_box(&states[k % states.len()]), &p, &battery)
                .unwrap();
            k += 1;
        })
    });
}

fn water_filling_bench(c: &mut Criterion) {
    let s = [0.45, 1.2, 0.8, 2.5, 0.1, 3.3, 1.7, 0.9];
    c.bench_function("water_filling_n8", |b| {
        b.iter(|| water_filling(black_box(&s), 3.0))
    });
}

fn oracle(c: &mut Criterion) {
    let states = iid_states(100_000);
    c.bench_function("average_utility_1e5", |b| {
        b.iter(|| average_utility(&LogUtility, black_box(&[0.4, 1.1]), &states))
    });
    let problem = OracleProblem {
        states,
        mean_energy: 1.5,
        p_max: 5.0,
        channel_support_max: vec![4.0, 4.0],
    };
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("solve_upper_bound_1e5", |b| {
        b.iter(|| solve_upper_bound(&problem, &LogUtility, &AscentOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    projection,
    controller_step,
    water_filling_bench,
    oracle
);
criterion_main!(benches);
