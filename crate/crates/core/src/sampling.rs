//! Seeded random instances for verification commands and tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::certificates::terminal_weight;
use crate::model::{Mode, OpomModel, PlantState};
use crate::qp::QuadProgram;
use crate::rect::Rectangle;
use crate::setpoint::SetpointSpec;
use crate::zone::ZoneSpec;

/// Random orthogonal matrix (QR factor of a dense uniform sample).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    a.qr().q()
}

/// Random symmetric positive definite matrix with eigenvalues in
/// `[eig_lo, eig_hi]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, eig_lo: f64, eig_hi: f64) -> DMatrix<f64> {
    assert!(0.0 < eig_lo && eig_lo <= eig_hi);
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let q = random_orthogonal(rng, n);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let lam = eig_lo + (eig_hi - eig_lo) * rng.random::<f64>();
        let qi = q.column(i);
        m += lam * qi * qi.transpose();
    }
    // Exact symmetry despite rounding in the outer products.
    let mt = m.transpose();
    (m + mt) * 0.5
}

/// Random `ny x nu` matrix of the given rank with singular values in
/// `[smin, smax]`, built from random orthogonal factors.
pub fn random_rank_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    ny: usize,
    nu: usize,
    rank: usize,
    smin: f64,
    smax: f64,
) -> DMatrix<f64> {
    assert!(rank <= ny.min(nu));
    assert!(0.0 < smin && smin <= smax);
    let u = random_orthogonal(rng, ny);
    let v = random_orthogonal(rng, nu);
    let mut m = DMatrix::zeros(ny, nu);
    for i in 0..rank {
        let s = smin + (smax - smin) * rng.random::<f64>();
        m += s * u.column(i) * v.column(i).transpose();
    }
    m
}

/// Random stable model built from modes: `n_real` real poles and `n_complex`
/// conjugate pairs with magnitudes at most `rho_max`, channels drawn
/// uniformly, plus a dense random gain matrix.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    ny: usize,
    nu: usize,
    n_real: usize,
    n_complex: usize,
    rho_max: f64,
) -> OpomModel {
    let mut modes = Vec::new();
    for _ in 0..n_real {
        modes.push(Mode {
            pole_re: (rng.random::<f64>() * 2.0 - 1.0) * rho_max,
            pole_im: 0.0,
            residue_re: rng.random::<f64>() * 2.0 - 1.0,
            residue_im: 0.0,
            output_index: rng.random_range(0..ny),
            input_index: rng.random_range(0..nu),
        });
    }
    for _ in 0..n_complex {
        let mag = rho_max * (0.2 + 0.8 * rng.random::<f64>());
        let ang = std::f64::consts::PI * rng.random::<f64>();
        modes.push(Mode {
            pole_re: mag * ang.cos(),
            pole_im: mag * ang.sin(),
            residue_re: rng.random::<f64>() * 2.0 - 1.0,
            residue_im: rng.random::<f64>() * 2.0 - 1.0,
            output_index: rng.random_range(0..ny),
            input_index: rng.random_range(0..nu),
        });
    }
    let d0 = DMatrix::from_fn(ny, nu, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    OpomModel::from_modes(ny, nu, d0, &modes).expect("sampled modes are stable and in range")
}

/// Random strictly convex QP with a known feasible interior point: variable
/// boxes containing the origin, up to `max_eq` equality rows, and one general
/// two-sided row. Eigenvalues of `P` stay in `[0.5, 5]` so the instances are
/// well conditioned.
pub fn random_qp<R: Rng + ?Sized>(rng: &mut R, max_n: usize, max_eq: usize) -> QuadProgram {
    let n = rng.random_range(1..=max_n);
    let p = random_spd(rng, n, 0.5, 5.0);
    let q = DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0);

    let mut lo = DVector::zeros(n + 1);
    let mut hi = DVector::zeros(n + 1);
    let mut a_ineq = DMatrix::zeros(n + 1, n);
    for j in 0..n {
        a_ineq[(j, j)] = 1.0;
        lo[j] = -(0.1 + 1.9 * rng.random::<f64>());
        hi[j] = 0.1 + 1.9 * rng.random::<f64>();
    }
    // Interior point the equality rows and the general row are built around.
    let z0 = DVector::from_fn(n, |j, _| {
        let t = rng.random::<f64>();
        0.5 * (lo[j] + t * (hi[j] - lo[j]))
    });
    let a = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let t0 = a.dot(&z0);
    for j in 0..n {
        a_ineq[(n, j)] = a[j];
    }
    lo[n] = t0 - (0.2 + rng.random::<f64>());
    hi[n] = t0 + 0.2 + rng.random::<f64>();

    let neq = if n > 1 { rng.random_range(0..=max_eq.min(n - 1)) } else { 0 };
    let a_eq = DMatrix::from_fn(neq, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let b_eq = &a_eq * &z0;

    QuadProgram { p, q, a_eq, b_eq, a_ineq, lo, hi }
}

fn random_box<R: Rng + ?Sized>(rng: &mut R, dim: usize, lo_max: f64, hi_max: f64) -> Rectangle {
    let lo = DVector::from_fn(dim, |_, _| -(0.2 + (lo_max - 0.2) * rng.random::<f64>()));
    let hi = DVector::from_fn(dim, |_, _| 0.2 + (hi_max - 0.2) * rng.random::<f64>());
    Rectangle::new(lo, hi).expect("sampled bounds straddle zero")
}

fn random_state<R: Rng + ?Sized>(rng: &mut R, model: &OpomModel, u_box: &Rectangle) -> PlantState {
    // Keep the starting input level strictly inside its box so a zero move
    // plan is always admissible.
    let u = u_box.sample(rng) * 0.6;
    PlantState {
        xs: DVector::from_fn(model.ny(), |_, _| rng.random::<f64>() * 2.0 - 1.0),
        xd: DVector::from_fn(model.nd(), |_, _| rng.random::<f64>() - 0.5),
        u,
    }
}

/// Random tracking-controller scenario: a stable model, well-conditioned
/// weights with the exact resting-transient penalty, boxes that straddle
/// zero, and a starting state whose input level sits inside its box. Every
/// such scenario keeps a zero move plan admissible, so the receding-horizon
/// step stays solvable indefinitely.
pub fn random_setpoint_scenario<R: Rng + ?Sized>(rng: &mut R) -> (SetpointSpec, PlantState) {
    let ny = rng.random_range(1..=3);
    let nu = rng.random_range(1..=3);
    let n_real = rng.random_range(0..=2);
    let n_complex = rng.random_range(0..=2);
    let model = random_model(rng, ny, nu, n_real, n_complex, 0.9);
    let horizon = rng.random_range(1..=4);
    let q = random_spd(rng, ny, 0.5, 2.0);
    let q_bar = terminal_weight(model.f(), model.psi(), &q).expect("sampled model is stable");
    let u_box = random_box(rng, nu, 2.0, 2.0);
    let target = DVector::from_fn(ny, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let initial = random_state(rng, &model, &u_box);
    let spec = SetpointSpec::new(
        model,
        horizon,
        q,
        random_spd(rng, nu, 0.5, 2.0),
        random_spd(rng, ny, 0.5, 5.0),
        q_bar,
        target,
        u_box,
        random_box(rng, nu, 1.0, 1.0),
    )
    .expect("sampled weights are admissible");
    (spec, initial)
}

/// Random zone-controller scenario, mirroring [`random_setpoint_scenario`]:
/// the desired input level lies inside its box and the zero move plan is
/// admissible from the starting state.
pub fn random_zone_scenario<R: Rng + ?Sized>(rng: &mut R) -> (ZoneSpec, PlantState) {
    let ny = rng.random_range(1..=3);
    let nu = rng.random_range(1..=3);
    let n_real = rng.random_range(0..=2);
    let n_complex = rng.random_range(0..=2);
    let model = random_model(rng, ny, nu, n_real, n_complex, 0.9);
    let horizon = rng.random_range(1..=4);
    let qy = random_spd(rng, ny, 0.5, 2.0);
    let q_bar = terminal_weight(model.f(), model.psi(), &qy).expect("sampled model is stable");
    let u_box = random_box(rng, nu, 2.0, 2.0);
    let u_des = u_box.sample(rng) * 0.5;
    let initial = random_state(rng, &model, &u_box);
    let spec = ZoneSpec::new(
        model,
        horizon,
        qy,
        random_spd(rng, nu, 0.5, 2.0),
        random_spd(rng, nu, 0.5, 2.0),
        random_spd(rng, ny, 0.5, 5.0),
        random_spd(rng, nu, 1.0, 4.0),
        q_bar,
        u_des,
        random_box(rng, ny, 1.5, 1.5),
        u_box,
        random_box(rng, nu, 1.0, 1.0),
    )
    .expect("sampled weights are admissible");
    (spec, initial)
}
