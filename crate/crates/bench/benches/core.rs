use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ddrmpc_bench::{windows, Fixture};
use ddrmpc_core::control::CostSpec;
use ddrmpc_core::robust::{assemble_gadf_program, RobustProblem};
use ddrmpc_core::solver::solve;
use ddrmpc_core::svc::{train_svc, SvcTrainConfig};

fn svc_training(c: &mut Criterion) {
    let data = windows(7, 330, 8, false);
    let cfg = SvcTrainConfig::default();
    c.bench_function("svc_train_330x8", |b| b.iter(|| train_svc(black_box(&data), &cfg).unwrap()));
}

fn gadf(c: &mut Criterion) {
    let mut group = c.benchmark_group("gadf");
    group.sample_size(10);
    for h in [4, 8] {
        let f = Fixture::new(h);
        let problem = RobustProblem {
            dynamics: &f.dynamics,
            constraints: &f.constraints,
            eta_set: &f.eta,
            xi_set: &f.xi,
            x0: f.x0,
            v_forecast: &f.v,
            cost: CostSpec::default(),
            lifted_moments: Some(&f.moments),
            soft: false,
        };
        group.bench_function(format!("assemble_h{h}"), |b| {
            b.iter(|| assemble_gadf_program(black_box(&problem)).unwrap())
        });
        let prog = assemble_gadf_program(&problem).unwrap();
        group.bench_function(format!("solve_h{h}"), |b| b.iter(|| solve(black_box(&prog.program)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, svc_training, gadf);
criterion_main!(benches);
