//! Stability certificates: the quantities the convergence guarantees of the
//! two controllers are built from.
//!
//! The central object is the terminal weight `Q̄`, the solution of a discrete
//! Lyapunov-type equation over the decaying state block. From it derive the
//! tail cost Gram `G`, the per-move cost curvature `Z`, the output slack
//! metric `Ŝ` (an isometry between steady outputs and their pre-images), the
//! transversality constant `φ` of the input box, and finally the slack
//! weights `S = β Ŝ` and `Su` that make the optimal costs strict Lyapunov
//! functions for the closed loop.
//!
//! Everything here is deterministic; the only sampled quantity (`φ` for
//! rank-deficient gains) draws from a seeded generator.

use nalgebra::{DMatrix, DVector, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{spectral_radius, OpomModel};
use crate::qp::{self, QpStatus, QuadProgram};
use crate::rect::Rectangle;

/// Relative singular-value threshold used to decide numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Solves `X - Fᵀ X F = Fᵀ Ψᵀ Q Ψ F` for the terminal weight `X` of the
/// decaying block, via the Kronecker linearization of the fixed point.
///
/// `f` must be square with spectral radius below one; the result is
/// symmetrized exactly. An empty `f` (no decaying modes) yields an empty
/// weight.
pub fn terminal_weight(
    f: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let nd = f.nrows();
    if f.ncols() != nd {
        return Err(Error::Dimension(format!(
            "state matrix must be square, got {}x{}",
            f.nrows(),
            f.ncols()
        )));
    }
    if psi.ncols() != nd || psi.nrows() != q.nrows() || !q.is_square() {
        return Err(Error::Dimension(format!(
            "weight dimensions do not line up: psi is {}x{}, q is {}x{}",
            psi.nrows(),
            psi.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if nd == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let rho = spectral_radius(f);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let w = psi.transpose() * q * psi;
    let rhs = f.transpose() * &w * f;
    let ft = f.transpose();
    let sys = DMatrix::identity(nd * nd, nd * nd) - ft.kronecker(&ft);
    let vec = DVector::from_column_slice(rhs.as_slice());
    let sol = sys
        .lu()
        .solve(&vec)
        .ok_or_else(|| Error::Numerical("terminal weight system is singular".into()))?;
    let x = DMatrix::from_column_slice(nd, nd, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Worst-case residual of the terminal weight fixed point, normalized the
/// way [`terminal_weight`] is expected to satisfy it.
pub fn terminal_residual(
    f: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    q: &DMatrix<f64>,
    q_bar: &DMatrix<f64>,
) -> f64 {
    let w = psi.transpose() * q * psi;
    let r = q_bar - f.transpose() * q_bar * f - f.transpose() * w * f;
    r.amax()
}

/// Cost Gram of the decaying state over the tail of the horizon:
/// `G = Σ_{j<m} (Fʲ)ᵀ Ψᵀ Q Ψ Fʲ + (F^{m-1})ᵀ Q̄ F^{m-1}`.
///
/// By the fixed-point property of `Q̄` this telescopes to `Ψᵀ Q Ψ + Q̄` for
/// every horizon; the explicit sum is kept so tests can cross-check the two
/// routes.
pub fn tail_weight(
    f: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    q: &DMatrix<f64>,
    q_bar: &DMatrix<f64>,
    m: usize,
) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::Invalid("horizon must be at least one move".into()));
    }
    let nd = f.nrows();
    if q_bar.nrows() != nd || q_bar.ncols() != nd {
        return Err(Error::Dimension(format!(
            "terminal weight is {}x{}, expected {nd}x{nd}",
            q_bar.nrows(),
            q_bar.ncols()
        )));
    }
    let w = psi.transpose() * q * psi;
    let mut g = w.clone();
    let mut fj = DMatrix::identity(nd, nd);
    for _ in 1..m {
        fj = &fj * f;
        g += fj.transpose() * &w * &fj;
    }
    g += fj.transpose() * q_bar * &fj;
    let gt = g.transpose();
    Ok((g + gt) * 0.5)
}

/// Total cost curvature of a single input move applied at steady state:
/// `Z = R + Ddᵀ G Dd`.
pub fn move_weight(
    r: &DMatrix<f64>,
    dd: &DMatrix<f64>,
    tail: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if dd.nrows() != tail.nrows() || r.nrows() != dd.ncols() || !r.is_square() {
        return Err(Error::Dimension(format!(
            "move weight dimensions do not line up: r {}x{}, dd {}x{}, tail {}x{}",
            r.nrows(),
            r.ncols(),
            dd.nrows(),
            dd.ncols(),
            tail.nrows(),
            tail.ncols()
        )));
    }
    let z = r + dd.transpose() * tail * dd;
    let zt = z.transpose();
    Ok((z + zt) * 0.5)
}

/// Orthonormal bases attached to a gain matrix: its column space and the
/// complement, its row space and the kernel.
#[derive(Debug, Clone)]
pub struct KernelDecomposition {
    /// Orthonormal basis of the column space (`ny x rank`).
    pub range: DMatrix<f64>,
    /// Orthonormal completion of `range` (`ny x (ny - rank)`).
    pub range_complement: DMatrix<f64>,
    /// Orthonormal basis of the row space (`nu x rank`).
    pub row_space: DMatrix<f64>,
    /// Orthonormal basis of the null space (`nu x (nu - rank)`).
    pub kernel: DMatrix<f64>,
    pub rank: usize,
    pub singular_values: DVector<f64>,
}

/// Rank-revealing decomposition of `d0` with orthonormal completions; rank
/// counts singular values above `rank_tol` times the largest one.
pub fn kernel_decomposition(d0: &DMatrix<f64>, rank_tol: f64) -> Result<KernelDecomposition> {
    let (ny, nu) = (d0.nrows(), d0.ncols());
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::Invalid(format!(
            "rank tolerance must lie in (0, 1), got {rank_tol}"
        )));
    }
    let svd = SVD::new(d0.clone(), true, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("singular value decomposition failed".into()))?;
    let sigma = svd.singular_values;
    let smax = if sigma.is_empty() { 0.0 } else { sigma.max() };
    let rank = if smax > 0.0 {
        sigma.iter().filter(|&&s| s > rank_tol * smax).count()
    } else {
        0
    };
    // The singular values are accurate but the factored vectors are not
    // always; one subspace-iteration pass through the matrix pins the bases
    // onto the true column and row spaces to working precision.
    let (range, row_space) = if rank > 0 {
        let seed = v_t.rows(0, rank).transpose();
        let range = (d0 * seed).qr().q();
        let row_space = (d0.transpose() * &range).qr().q();
        (range, row_space)
    } else {
        (DMatrix::zeros(ny, 0), DMatrix::zeros(nu, 0))
    };
    let range_complement = orthonormal_completion(&range, ny);
    let kernel = orthonormal_completion(&row_space, nu);
    Ok(KernelDecomposition {
        range,
        range_complement,
        row_space,
        kernel,
        rank,
        singular_values: sigma,
    })
}

/// Extends the orthonormal columns of `basis` to a full orthonormal basis of
/// dimension `dim` and returns the added columns. Greedy: each step picks the
/// coordinate axis with the largest residual, which is bounded away from zero
/// as long as columns remain to be added.
fn orthonormal_completion(basis: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    debug_assert_eq!(basis.nrows(), dim);
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    let mut added = Vec::new();
    while cols.len() < dim {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..dim {
            let mut v = DVector::zeros(dim);
            v[i] = 1.0;
            // Two rounds of Gram-Schmidt keep the completion orthogonal to
            // working precision.
            for _ in 0..2 {
                for q in &cols {
                    let coeff = q.dot(&v);
                    v -= q * coeff;
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.expect("dimension is positive");
        let v = v / norm;
        cols.push(v.clone());
        added.push(v);
    }
    if added.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&added)
    }
}

/// Output slack metric `Ŝ` for a gain `d0`: on the column space it pulls a
/// steady output back to the norm of its minimal pre-image, on the
/// complement it is the identity. For square invertible gains this reduces
/// to `(D0⁻¹)ᵀ D0⁻¹`.
pub fn slack_metric(d0: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    let dec = kernel_decomposition(d0, rank_tol)?;
    slack_metric_from(&dec, d0)
}

/// [`slack_metric`] with a precomputed decomposition.
pub fn slack_metric_from(dec: &KernelDecomposition, d0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = dec.rank;
    let mut s = &dec.range_complement * dec.range_complement.transpose();
    if k > 0 {
        // Reduced gain between row space and column space, and the
        // lower-triangular factor of its LQ factorization.
        let m = dec.range.transpose() * d0 * &dec.row_space;
        let qr = m.transpose().qr();
        let l = qr.r().transpose();
        let inv_l = l
            .solve_lower_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| Error::Numerical("reduced gain factor is singular".into()))?;
        s += &dec.range * (inv_l.transpose() * &inv_l) * dec.range.transpose();
    }
    let st = s.transpose();
    Ok((s + st) * 0.5)
}

/// Square root of the largest eigenvalue of a symmetric positive
/// semidefinite matrix (zero for an empty one).
pub fn gamma(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let ev = m.clone().symmetric_eigen().eigenvalues;
    ev.max().max(0.0).sqrt()
}

/// Smallest eigenvalue of a symmetric matrix (treats an empty matrix as
/// unconstrained, returning infinity).
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Whether a symmetric matrix is positive semidefinite up to a relative
/// eigenvalue tolerance.
pub fn is_positive_semidefinite(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.is_empty() {
        return true;
    }
    let ev = m.clone().symmetric_eigen().eigenvalues;
    ev.min() >= -tol * ev.max().max(1.0)
}

/// Contraction constant `C₃ = 2 φ⁻² max(Γ_Z², 2 Γ_Q̄ Γ_{Z-R})` entering the
/// slack weight scale.
pub fn contraction_constant(gamma_z: f64, gamma_qbar: f64, gamma_zr: f64, phi: f64) -> f64 {
    2.0 / (phi * phi) * (gamma_z * gamma_z).max(2.0 * gamma_qbar * gamma_zr)
}

/// Slack weight scale `β = 6 C₃ (1 + margin)`; any `margin > 0` keeps the
/// decrease argument strict.
pub fn slack_scale(c3: f64, margin: f64) -> f64 {
    6.0 * c3 * (1.0 + margin)
}

/// Whether a slack scale is large enough for the decrease argument.
pub fn slack_scale_sufficient(beta: f64, c3: f64) -> bool {
    beta > 6.0 * c3
}

/// Steady input reproducing a target output as closely as the input box
/// allows, with the attained residual.
#[derive(Debug, Clone)]
pub struct SteadyInput {
    pub input: DVector<f64>,
    pub residual: f64,
    pub admissible: bool,
}

/// Minimizes `‖D0 u - target‖` over the input box. The quadratic is
/// regularized by a tiny multiple of the identity so rank-deficient gains
/// yield the minimum-norm representative; `admissible` reflects whether the
/// target is reproduced up to rounding.
pub fn steady_input_for(
    d0: &DMatrix<f64>,
    target: &DVector<f64>,
    u_box: &Rectangle,
) -> Result<SteadyInput> {
    let (ny, nu) = (d0.nrows(), d0.ncols());
    if target.len() != ny || u_box.dim() != nu {
        return Err(Error::Dimension(format!(
            "gain is {ny}x{nu} but target has {} entries and the box {}",
            target.len(),
            u_box.dim()
        )));
    }
    let gram = d0.transpose() * d0;
    let lmax = if gram.is_empty() {
        0.0
    } else {
        gram.clone().symmetric_eigen().eigenvalues.max().max(0.0)
    };
    let eps = 1e-10 * (1.0 + lmax);
    let p = (gram + DMatrix::identity(nu, nu) * eps) * 2.0;
    let q = d0.transpose() * target * -2.0;
    let qp = QuadProgram {
        a_ineq: DMatrix::identity(nu, nu),
        lo: u_box.lo().clone(),
        hi: u_box.hi().clone(),
        ..QuadProgram::unconstrained(p, q)
    };
    let sol = qp::solve(&qp)?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::Numerical(format!(
            "steady input search ended with status {:?}",
            sol.status
        )));
    }
    let residual = (d0 * &sol.z - target).norm();
    let admissible = residual <= 1e-8 * (1.0 + target.norm());
    Ok(SteadyInput { input: sol.z, residual, admissible })
}

/// Projects `x` onto the set of box inputs that share the steady output of
/// `u_r`, i.e. onto `(u_r + ker D0) ∩ U`.
pub fn project_onto_matching_inputs(
    dec: &KernelDecomposition,
    u_box: &Rectangle,
    u_r: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let nu = u_box.dim();
    if u_r.len() != nu || x.len() != nu || dec.kernel.nrows() != nu {
        return Err(Error::Dimension(
            "projection arguments disagree on the input dimension".into(),
        ));
    }
    let kdim = dec.kernel.ncols();
    if kdim == 0 {
        return Ok(u_r.clone());
    }
    let diff = x - u_r;
    let p = DMatrix::identity(kdim, kdim) * 2.0;
    let q = dec.kernel.transpose() * &diff * -2.0;
    let qp = QuadProgram {
        a_ineq: dec.kernel.clone(),
        lo: u_box.lo() - u_r,
        hi: u_box.hi() - u_r,
        ..QuadProgram::unconstrained(p, q)
    };
    let sol = qp::solve(&qp)?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::Numerical(format!(
            "input projection ended with status {:?}",
            sol.status
        )));
    }
    Ok(u_r + &dec.kernel * sol.z)
}

/// Sampling options for the transversality constant.
#[derive(Debug, Clone)]
pub struct PhiOptions {
    pub samples: usize,
    /// Multiplier below one applied to the sampled minimum.
    pub safety: f64,
    pub seed: u64,
}

impl Default for PhiOptions {
    fn default() -> Self {
        Self { samples: 100_000, safety: 0.9, seed: 2026 }
    }
}

/// Lower bound `φ` on the fraction of a displacement from the matching-input
/// set that is visible through the gain. Exactly one when the kernel is
/// trivial; otherwise a safety-scaled Monte Carlo minimum over the input
/// box.
pub fn phi_lower_bound(
    dec: &KernelDecomposition,
    u_box: &Rectangle,
    u_r: &DVector<f64>,
    opts: &PhiOptions,
) -> Result<f64> {
    if dec.kernel.ncols() == 0 {
        return Ok(1.0);
    }
    if !(opts.safety > 0.0 && opts.safety <= 1.0) {
        return Err(Error::Invalid(format!(
            "safety factor must lie in (0, 1], got {}",
            opts.safety
        )));
    }
    if !u_box.contains(u_r, 1e-9) {
        return Err(Error::Invalid(
            "steady input lies outside the input box".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..opts.samples {
        let x = u_box.sample(&mut rng);
        let p = project_onto_matching_inputs(dec, u_box, u_r, &x)?;
        let d = &x - &p;
        let dist = d.norm();
        if dist <= 1e-9 {
            continue;
        }
        let along_kernel = &dec.kernel * (dec.kernel.transpose() * &d);
        let transverse = (&d - along_kernel).norm();
        let ratio = transverse / dist;
        if ratio < min_ratio {
            min_ratio = ratio;
        }
    }
    if !min_ratio.is_finite() {
        // Every sample already matched the steady output; any constant works.
        return Ok(1.0);
    }
    Ok((opts.safety * min_ratio).min(1.0))
}

/// Curvature bound `H` on the zone cost as a function of one input move:
/// `H = (m-1) D0ᵀ Qy D0 + (Ψ Dd)ᵀ Qy (Ψ Dd) + Ddᵀ Q̄ Dd + (m-1) Qu + R`.
#[allow(clippy::too_many_arguments)]
pub fn input_move_curvature(
    d0: &DMatrix<f64>,
    dd: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    qy: &DMatrix<f64>,
    qu: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q_bar: &DMatrix<f64>,
    m: usize,
) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::Invalid("horizon must be at least one move".into()));
    }
    let nu = d0.ncols();
    if qu.nrows() != nu || r.nrows() != nu || !qu.is_square() || !r.is_square() {
        return Err(Error::Dimension(format!(
            "input weights must be {nu}x{nu}, got qu {}x{} and r {}x{}",
            qu.nrows(),
            qu.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    let tail_moves = (m - 1) as f64;
    let psi_dd = psi * dd;
    let h = d0.transpose() * qy * d0 * tail_moves
        + psi_dd.transpose() * qy * psi_dd
        + dd.transpose() * q_bar * dd
        + qu * tail_moves
        + r;
    let ht = h.transpose();
    Ok((h + ht) * 0.5)
}

/// Input slack weight `Su = H + shift·I`; any `shift > 1` satisfies the
/// strictness condition checked by [`input_slack_weight_sufficient`].
pub fn input_slack_weight(h: &DMatrix<f64>, shift: f64) -> Result<DMatrix<f64>> {
    if shift <= 1.0 {
        return Err(Error::Invalid(format!(
            "input slack shift must exceed one, got {shift}"
        )));
    }
    Ok(h + DMatrix::identity(h.nrows(), h.ncols()) * shift)
}

/// Whether `Su` exceeds the curvature bound by strictly more than the
/// identity, the condition the zone decrease argument needs.
pub fn input_slack_weight_sufficient(su: &DMatrix<f64>, h: &DMatrix<f64>) -> bool {
    let gap = su - h - DMatrix::identity(h.nrows(), h.ncols());
    lambda_min(&gap) > 0.0
}

/// Tuning knobs shared by both certificate bundles.
#[derive(Debug, Clone, Default)]
pub struct CertificateOptions {
    /// Extra fraction on the minimum slack scale; defaults to 0.1.
    pub margin: Option<f64>,
    /// Overrides the derived slack scale `β` when set.
    pub beta: Option<f64>,
    /// Overrides the transversality constant when set.
    pub phi: Option<f64>,
    pub phi_opts: PhiOptions,
    /// Overrides the rank threshold; defaults to [`DEFAULT_RANK_TOL`].
    pub rank_tol: Option<f64>,
}

/// Everything the setpoint controller needs for its guarantees.
#[derive(Debug, Clone)]
pub struct SetpointCertificates {
    pub q_bar: DMatrix<f64>,
    pub tail: DMatrix<f64>,
    pub move_weight: DMatrix<f64>,
    pub slack_metric: DMatrix<f64>,
    pub decomposition: KernelDecomposition,
    pub steady_input: SteadyInput,
    pub phi: f64,
    pub c3: f64,
    pub beta: f64,
    /// Output slack weight `S = β Ŝ`.
    pub slack_weight: DMatrix<f64>,
}

/// Derives the full setpoint certificate bundle for a model, weights,
/// horizon, input box, and target output.
pub fn certify_setpoint(
    model: &OpomModel,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    m: usize,
    u_box: &Rectangle,
    target: &DVector<f64>,
    opts: &CertificateOptions,
) -> Result<SetpointCertificates> {
    let (ny, nu) = (model.ny(), model.nu());
    if q.nrows() != ny || !q.is_square() {
        return Err(Error::Dimension(format!(
            "output weight must be {ny}x{ny}, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if r.nrows() != nu || !r.is_square() {
        return Err(Error::Dimension(format!(
            "move weight must be {nu}x{nu}, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    if u_box.dim() != nu {
        return Err(Error::Dimension(format!(
            "input box has dimension {}, expected {nu}",
            u_box.dim()
        )));
    }
    let rank_tol = opts.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    let q_bar = terminal_weight(model.f(), model.psi(), q)?;
    let tail = tail_weight(model.f(), model.psi(), q, &q_bar, m)?;
    let z = move_weight(r, model.dd(), &tail)?;
    let dec = kernel_decomposition(model.d0(), rank_tol)?;
    let s_hat = slack_metric_from(&dec, model.d0())?;
    let steady = steady_input_for(model.d0(), target, u_box)?;
    if !steady.admissible {
        return Err(Error::Infeasible(format!(
            "target output is not reachable inside the input box (residual {:.3e})",
            steady.residual
        )));
    }
    let phi = match opts.phi {
        Some(v) if v > 0.0 && v <= 1.0 => v,
        Some(v) => {
            return Err(Error::Invalid(format!(
                "transversality constant must lie in (0, 1], got {v}"
            )))
        }
        None => phi_lower_bound(&dec, u_box, &steady.input, &opts.phi_opts)?,
    };
    let c3 = contraction_constant(gamma(&z), gamma(&q_bar), gamma(&(&z - r)), phi);
    let margin = opts.margin.unwrap_or(0.1);
    if opts.beta.is_none() && margin <= 0.0 {
        return Err(Error::Invalid(format!(
            "slack scale margin must be positive, got {margin}"
        )));
    }
    let beta = opts.beta.unwrap_or_else(|| slack_scale(c3, margin));
    let slack_weight = &s_hat * beta;
    Ok(SetpointCertificates {
        q_bar,
        tail,
        move_weight: z,
        slack_metric: s_hat,
        decomposition: dec,
        steady_input: steady,
        phi,
        c3,
        beta,
        slack_weight,
    })
}

/// Everything the zone controller needs for its guarantees.
#[derive(Debug, Clone)]
pub struct ZoneCertificates {
    pub q_bar: DMatrix<f64>,
    pub tail: DMatrix<f64>,
    pub move_weight: DMatrix<f64>,
    pub slack_metric: DMatrix<f64>,
    pub decomposition: KernelDecomposition,
    pub phi: f64,
    pub c3: f64,
    pub beta: f64,
    /// Output slack weight `Sy = β Ŝ`.
    pub output_slack_weight: DMatrix<f64>,
    /// Curvature bound `H` the input slack weight must dominate.
    pub curvature: DMatrix<f64>,
    /// Input slack weight `Su`.
    pub input_slack_weight: DMatrix<f64>,
}

/// Derives the zone certificate bundle for a model, weights, horizon, input
/// box, and desired resting input.
#[allow(clippy::too_many_arguments)]
pub fn certify_zone(
    model: &OpomModel,
    qy: &DMatrix<f64>,
    qu: &DMatrix<f64>,
    r: &DMatrix<f64>,
    m: usize,
    u_box: &Rectangle,
    u_des: &DVector<f64>,
    su_shift: f64,
    opts: &CertificateOptions,
) -> Result<ZoneCertificates> {
    let (ny, nu) = (model.ny(), model.nu());
    if qy.nrows() != ny || !qy.is_square() {
        return Err(Error::Dimension(format!(
            "output weight must be {ny}x{ny}, got {}x{}",
            qy.nrows(),
            qy.ncols()
        )));
    }
    if u_box.dim() != nu || u_des.len() != nu {
        return Err(Error::Dimension(format!(
            "input box has dimension {} and desired input {}, expected {nu}",
            u_box.dim(),
            u_des.len()
        )));
    }
    if !u_box.contains(u_des, 0.0) {
        return Err(Error::Infeasible(
            "desired input lies outside the input box".into(),
        ));
    }
    let rank_tol = opts.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    let q_bar = terminal_weight(model.f(), model.psi(), qy)?;
    let tail = tail_weight(model.f(), model.psi(), qy, &q_bar, m)?;
    let z = move_weight(r, model.dd(), &tail)?;
    let dec = kernel_decomposition(model.d0(), rank_tol)?;
    let s_hat = slack_metric_from(&dec, model.d0())?;
    let phi = match opts.phi {
        Some(v) if v > 0.0 && v <= 1.0 => v,
        Some(v) => {
            return Err(Error::Invalid(format!(
                "transversality constant must lie in (0, 1], got {v}"
            )))
        }
        None => phi_lower_bound(&dec, u_box, u_des, &opts.phi_opts)?,
    };
    let c3 = contraction_constant(gamma(&z), gamma(&q_bar), gamma(&(&z - r)), phi);
    let margin = opts.margin.unwrap_or(0.1);
    if opts.beta.is_none() && margin <= 0.0 {
        return Err(Error::Invalid(format!(
            "slack scale margin must be positive, got {margin}"
        )));
    }
    let beta = opts.beta.unwrap_or_else(|| slack_scale(c3, margin));
    let output_slack_weight = &s_hat * beta;
    let curvature =
        input_move_curvature(model.d0(), model.dd(), model.psi(), qy, qu, r, &q_bar, m)?;
    let su = input_slack_weight(&curvature, su_shift)?;
    Ok(ZoneCertificates {
        q_bar,
        tail,
        move_weight: z,
        slack_metric: s_hat,
        decomposition: dec,
        phi,
        c3,
        beta,
        output_slack_weight,
        curvature,
        input_slack_weight: su,
    })
}
