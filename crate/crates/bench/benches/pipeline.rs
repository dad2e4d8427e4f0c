//! Benchmarks for the hot paths: the QP solver, certificate derivation, and
//! one receding-horizon step of each controller.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{dmatrix, dvector, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ihmpc::certificates::{certify_setpoint, certify_zone, terminal_weight, CertificateOptions};
use ihmpc::model::OpomModel;
use ihmpc::rect::Rectangle;
use ihmpc::sampling::{random_model, random_qp, random_spd};
use ihmpc::setpoint::SetpointSpec;
use ihmpc::zone::ZoneSpec;

fn qp_solver(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances: Vec<_> = (0..32).map(|_| random_qp(&mut rng, 4, 2)).collect();
    c.bench_function("qp_solve_32_instances", |b| {
        b.iter(|| {
            for qp in &instances {
                black_box(ihmpc::qp::solve(qp).unwrap());
            }
        })
    });
}

fn terminal_certificate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // Eight decaying states: the largest size the library targets by default.
    let model = random_model(&mut rng, 3, 3, 2, 3, 0.9);
    let q = random_spd(&mut rng, 3, 0.5, 2.0);
    c.bench_function("terminal_weight_nd8", |b| {
        b.iter(|| black_box(terminal_weight(model.f(), model.psi(), &q).unwrap()))
    });
}

fn tall_setpoint_spec() -> SetpointSpec {
    let model = OpomModel::new(
        dmatrix![0.5, 0.0; 0.0, 0.7],
        dmatrix![1.0; 2.0],
        dmatrix![0.5; 1.4],
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let q = DMatrix::identity(2, 2);
    let r = dmatrix![1.0];
    let u_box = Rectangle::symmetric(1, 1.0).unwrap();
    let du_box = Rectangle::symmetric(1, 0.5).unwrap();
    let target = dvector![0.3, 0.6];
    let bundle =
        certify_setpoint(&model, &q, &r, 3, &u_box, &target, &CertificateOptions::default())
            .unwrap();
    SetpointSpec::new(
        model,
        3,
        q,
        r,
        bundle.slack_weight,
        bundle.q_bar,
        target,
        u_box,
        du_box,
    )
    .unwrap()
}

fn scalar_zone_spec() -> ZoneSpec {
    let model =
        OpomModel::new(dmatrix![0.5], dmatrix![1.0], dmatrix![0.5], dmatrix![1.0]).unwrap();
    let qy = dmatrix![1.0];
    let qu = dmatrix![1.0];
    let r = dmatrix![1.0];
    let u_box = Rectangle::symmetric(1, 2.0).unwrap();
    let du_box = Rectangle::symmetric(1, 1.0).unwrap();
    let u_des = dvector![0.8];
    let y_zone = Rectangle::new(dvector![0.0], dvector![2.0]).unwrap();
    let bundle = certify_zone(
        &model,
        &qy,
        &qu,
        &r,
        3,
        &u_box,
        &u_des,
        2.0,
        &CertificateOptions::default(),
    )
    .unwrap();
    ZoneSpec::new(
        model,
        3,
        qy,
        qu,
        r,
        bundle.output_slack_weight,
        bundle.input_slack_weight,
        bundle.q_bar,
        u_des,
        y_zone,
        u_box,
        du_box,
    )
    .unwrap()
}

fn controller_step(c: &mut Criterion) {
    let setpoint = tall_setpoint_spec();
    let state = setpoint.model().origin();
    c.bench_function("setpoint_step", |b| {
        b.iter(|| black_box(setpoint.solve_step(&state).unwrap()))
    });

    let zone = scalar_zone_spec();
    let state = zone.model().origin();
    c.bench_function("zone_step", |b| {
        b.iter(|| black_box(zone.solve_step(&state).unwrap()))
    });
}

criterion_group!(benches, qp_solver, terminal_certificate, controller_step);
criterion_main!(benches);
