//! Property tests for the certificate quantities against independent
//! oracles: the terminal weight against its defining series, the slack
//! metric against the pull-back norm it is supposed to realize.

use ihmpc::certificates::{
    is_positive_semidefinite, kernel_decomposition, phi_lower_bound, slack_metric,
    tail_weight, terminal_residual, terminal_weight, PhiOptions, DEFAULT_RANK_TOL,
};
use ihmpc::sampling::{random_rank_matrix, random_model, random_spd};
use ihmpc::Rectangle;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sums `(F^j)' W F^j` for `j >= 1` until the terms fall below working
/// precision. Deliberately ignorant of the Kronecker solve.
fn series_weight(f: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let nd = f.nrows();
    let mut acc = DMatrix::zeros(nd, nd);
    let mut fj = f.clone();
    for _ in 0..200_000 {
        let term = fj.transpose() * w * &fj;
        let size = term.amax();
        acc += term;
        fj = &fj * f;
        if size <= 1e-16 * (1.0 + acc.amax()) {
            break;
        }
    }
    acc
}

#[test]
fn terminal_weight_matches_the_defining_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..100 {
        let ny = rng.random_range(1..=3);
        let nu = rng.random_range(1..=3);
        let n_real = rng.random_range(0..=3);
        let n_complex = rng.random_range(0..=2);
        let model = random_model(&mut rng, ny, nu, n_real, n_complex, 0.95);
        let q = random_spd(&mut rng, ny, 0.5, 3.0);
        let q_bar = terminal_weight(model.f(), model.psi(), &q).unwrap();

        let w = model.psi().transpose() * &q * model.psi();
        let series = series_weight(model.f(), &w);
        let err = (&q_bar - &series).amax();
        assert!(
            err <= 1e-8 * (1.0 + series.amax()),
            "case {case}: series mismatch {err:.3e}"
        );

        let resid = terminal_residual(model.f(), model.psi(), &q, &q_bar);
        assert!(
            resid <= 1e-10 * (1.0 + q_bar.amax()),
            "case {case}: fixed-point residual {resid:.3e}"
        );
        assert_eq!(q_bar, q_bar.transpose(), "case {case}: not exactly symmetric");
        assert!(
            is_positive_semidefinite(&q_bar, 1e-12),
            "case {case}: not positive semidefinite"
        );
    }
}

#[test]
fn tail_weight_is_horizon_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..30 {
        let model = random_model(&mut rng, 2, 2, 2, 1, 0.9);
        let q = random_spd(&mut rng, 2, 0.5, 2.0);
        let q_bar = terminal_weight(model.f(), model.psi(), &q).unwrap();
        let compact = model.psi().transpose() * &q * model.psi() + &q_bar;
        for m in [1usize, 2, 5, 9] {
            let g = tail_weight(model.f(), model.psi(), &q, &q_bar, m).unwrap();
            let err = (&g - &compact).amax();
            assert!(err <= 1e-10 * (1.0 + compact.amax()), "m={m}: {err:.3e}");
        }
    }
}

/// The slack metric must pull a steady output `D0 v` back to the norm of the
/// row-space part of `v`, and act as the identity off the column space.
#[test]
fn slack_metric_is_an_isometry_at_every_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for trial in 0..60 {
        let ny: usize = rng.random_range(1..=4);
        let nu: usize = rng.random_range(1..=4);
        let full = ny.min(nu);
        for rank in [full, full.saturating_sub(1).max(1), 1] {
            let d0 = random_rank_matrix(&mut rng, ny, nu, rank, 0.3, 3.0);
            let dec = kernel_decomposition(&d0, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(dec.rank, rank, "trial {trial}: rank detection");
            let s = slack_metric(&d0, DEFAULT_RANK_TOL).unwrap();

            for _ in 0..5 {
                let v = DVector::from_fn(nu, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                let y = &d0 * &v;
                let pulled = (y.transpose() * &s * &y)[(0, 0)];
                let row_part = dec.row_space.transpose() * &v;
                let expect = row_part.norm_squared();
                assert!(
                    (pulled - expect).abs() <= 1e-9 * (1.0 + expect),
                    "trial {trial} rank {rank}: pull-back {pulled} vs {expect}"
                );
            }
            for c in 0..dec.range_complement.ncols() {
                let w = dec.range_complement.column(c).into_owned();
                let val = (w.transpose() * &s * &w)[(0, 0)];
                assert!(
                    (val - 1.0).abs() <= 1e-9,
                    "trial {trial} rank {rank}: complement norm {val}"
                );
            }
        }
    }
}

#[test]
fn slack_metric_reduces_to_the_inverse_gram_for_square_gains() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..40 {
        let n = rng.random_range(1..=4);
        let d0 = random_rank_matrix(&mut rng, n, n, n, 0.5, 2.0);
        let s = slack_metric(&d0, DEFAULT_RANK_TOL).unwrap();
        let inv = d0.clone().try_inverse().unwrap();
        let direct = inv.transpose() * &inv;
        let err = (&s - &direct).amax();
        assert!(err <= 1e-9 * (1.0 + direct.amax()), "mismatch {err:.3e}");
    }
}

#[test]
fn phi_estimates_are_reproducible_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let d0 = random_rank_matrix(&mut rng, 2, 3, 1, 0.5, 2.0);
    let dec = kernel_decomposition(&d0, DEFAULT_RANK_TOL).unwrap();
    let boxed = Rectangle::symmetric(3, 1.0).unwrap();
    let u_r = DVector::zeros(3);
    let opts = PhiOptions { samples: 3000, ..PhiOptions::default() };
    let a = phi_lower_bound(&dec, &boxed, &u_r, &opts).unwrap();
    let b = phi_lower_bound(&dec, &boxed, &u_r, &opts).unwrap();
    assert_eq!(a, b, "same seed must give the same estimate");
    assert!(a > 0.0 && a <= 1.0, "estimate out of range: {a}");
}
