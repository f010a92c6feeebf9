use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Vector3;
use std::hint::black_box;

use quadnmpc::dynamics::integrate_erk4;
use quadnmpc::ocp::{OcpConfig, ReferenceTrajectory};
use quadnmpc::qp::{IpmSettings, PreparedQp, SolverKind};
use quadnmpc::rti::{RtiController, RtiSettings};
use quadnmpc::{QuadrotorParams, RotorInput, State};
use quadnmpc_bench::{step_qp, TARGET};

fn qp_solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("qp_solve");
    group.sample_size(20);
    for n in [10, 20, 30, 40, 50] {
        let qp = step_qp(n);
        for kind in [SolverKind::Riccati, SolverKind::Dense] {
            group.bench_with_input(BenchmarkId::new(kind.as_str(), n), &qp, |b, qp| {
                b.iter(|| {
                    let mut p = PreparedQp::new(qp.clone(), kind, 5.min(n), IpmSettings::default()).unwrap();
                    black_box(p.solve().unwrap())
                })
            });
        }
    }
    group.finish();
}

fn rti_cycle(c: &mut Criterion) {
    let params = QuadrotorParams::default();
    let cfg = OcpConfig::default();
    let target = Vector3::from(TARGET);
    let refs = ReferenceTrajectory::hover(&params, target, cfg.horizon);
    let x = State::hover_at(target);
    let mut ctrl = RtiController::new(cfg, params, RtiSettings::default(), target).unwrap();
    c.bench_function("rti_cycle_hover_n50", |b| {
        b.iter(|| black_box(ctrl.step(&refs, &x).unwrap()))
    });
}

fn dynamics(c: &mut Criterion) {
    let params = QuadrotorParams::default();
    let x = State::hover_at(Vector3::zeros());
    let u = RotorInput::uniform(params.hover_speed() + 1.0);
    c.bench_function("rk4_step_1ms", |b| b.iter(|| black_box(integrate_erk4(&x, &u, &params, 1e-3))));
}

criterion_group!(benches, qp_solvers, rti_cycle, dynamics);
criterion_main!(benches);
