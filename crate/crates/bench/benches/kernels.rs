use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hjmp_bench::{particle_crowd, random_batch, train_batch};
use hjmp_core::grid::{solve_brt, Grid, SolveOptions};
use hjmp_core::neural::{init_network, loss_and_gradient, Architecture};
use hjmp_core::planner::{plan_step, PlanProblem};
use hjmp_core::value::BoundaryValue;
use hjmp_core::{PlanConfig, SystemSpec, Variant};

fn hamiltonian(c: &mut Criterion) {
    for sys in [SystemSpec::air3d(), SystemSpec::simple_arm()] {
        let (_, xs) = random_batch(&sys, 256, 1);
        let (_, ps) = random_batch(&sys, 256, 2);
        c.bench_function(&format!("hamiltonian/{}", sys.kind().name()), |b| {
            b.iter(|| xs.iter().zip(&ps).map(|(x, p)| sys.hamiltonian(x, p)).sum::<f64>())
        });
    }
}

fn grid_solve(c: &mut Criterion) {
    let sys = SystemSpec::air3d();
    let grid = Grid::uniform(&sys, 21).unwrap();
    let mut group = c.benchmark_group("grid");
    group.sample_size(10);
    group.bench_function("air3d_21", |b| b.iter(|| solve_brt(&sys, &grid, &SolveOptions::default()).unwrap()));
    group.finish();
}

fn network(c: &mut Criterion) {
    let sys = SystemSpec::simple_arm();
    let net = init_network(&sys, Variant::BcSym, &Architecture::default(), 0).unwrap();
    let (ts, xs) = random_batch(&sys, 256, 3);
    c.bench_function("network/evaluate_256", |b| b.iter(|| net.evaluate_batch(&ts, &xs).unwrap()));
    let batch = train_batch(&sys, 500, 4);
    let mut group = c.benchmark_group("network");
    group.sample_size(20);
    for variant in [Variant::Bc, Variant::Deepreach] {
        let net = init_network(&sys, variant, &Architecture::default(), 0).unwrap();
        group.bench_function(format!("loss_gradient_500/{}", variant.name()), |b| {
            b.iter(|| loss_and_gradient(&net, &batch, 10.0).unwrap())
        });
    }
    group.finish();
}

fn planning(c: &mut Criterion) {
    let config = PlanConfig { enforce_timeout: false, neighbor_radius: Some(0.25), ..PlanConfig::default() };
    for m in [8, 32] {
        let scenario = particle_crowd(m, 7);
        let value = BoundaryValue::new(scenario.system.clone());
        c.bench_function(&format!("plan_step/particle_{m}"), |b| {
            b.iter_batched(
                || PlanProblem {
                    value: &value,
                    agent: 0,
                    own: scenario.starts[0].clone(),
                    others: (1..m).map(|j| (j, scenario.starts[j].clone())).collect(),
                    goal: scenario.goals[0].clone(),
                    config: &config,
                    seed: 0,
                },
                |p| black_box(plan_step(&p).unwrap()),
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, hamiltonian, grid_solve, network, planning);
criterion_main!(benches);
