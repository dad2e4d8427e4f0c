//! Dense solver for strictly convex quadratic programs
//!
//! ```text
//! minimize    1/2 z' P z + q' z
//! subject to  Aeq z = beq
//!             lo <= Aineq z <= hi
//! ```
//!
//! with `P` symmetric positive definite, so the minimizer is unique. Sides of
//! two-sided rows may be `+-inf` (that side is simply absent).
//!
//! The solver is a dual active-set method: starting from the unconstrained
//! minimum it adds the most violated constraint, taking full or partial steps
//! in primal-dual space until the constraint becomes active, dropping active
//! constraints whose multiplier would turn negative. Equality rows are forced
//! in first and never dropped. Step directions come from a fresh KKT solve
//! per iteration (the problems here are small), and a final equality-
//! constrained re-solve polishes the result to machine-level KKT residuals.
//! All arithmetic is deterministic: identical inputs give identical outputs.

mod brute;

pub use brute::{brute_force, BruteForce};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default KKT tolerance; an accepted solution has residual
/// `<= DEFAULT_TOL * (1 + ||q||_inf)`.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadProgram {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// A program together with the constant the quadratic form drops, so that
/// the value being minimized equals `objective + offset`.
#[derive(Debug, Clone)]
pub struct AssembledQp {
    pub qp: QuadProgram,
    pub offset: f64,
}

/// Solver output. Multiplier signs follow the stationarity convention
/// `P z + q = Aeq' duals_eq + Aineq' duals_ineq`: an inequality multiplier is
/// positive when the lower side binds and negative when the upper side binds.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub duals_eq: DVector<f64>,
    pub duals_ineq: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt_residual: f64,
}

impl QuadProgram {
    /// Unconstrained problem.
    pub fn unconstrained(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            p,
            q,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, n),
            lo: DVector::zeros(0),
            hi: DVector::zeros(0),
        }
    }

    pub fn nvars(&self) -> usize {
        self.q.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.nvars();
        if self.p.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "P is {}x{} for {} variables",
                self.p.nrows(),
                self.p.ncols(),
                n
            )));
        }
        if self.a_eq.ncols() != n && self.a_eq.nrows() > 0 {
            return Err(Error::Dimension("Aeq column count".into()));
        }
        if self.b_eq.len() != self.a_eq.nrows() {
            return Err(Error::Dimension("beq length".into()));
        }
        if self.a_ineq.ncols() != n && self.a_ineq.nrows() > 0 {
            return Err(Error::Dimension("Aineq column count".into()));
        }
        if self.lo.len() != self.a_ineq.nrows() || self.hi.len() != self.a_ineq.nrows() {
            return Err(Error::Dimension("bound lengths".into()));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.p) || !finite(&self.a_eq) || !finite(&self.a_ineq) {
            return Err(Error::Invalid("non-finite matrix entry".into()));
        }
        if !self.q.iter().all(|v| v.is_finite()) || !self.b_eq.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("non-finite vector entry".into()));
        }
        let pmax = self.p.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.p[(i, j)] - self.p[(j, i)]).abs() > 1e-10 * pmax {
                    return Err(Error::Invalid("P is not symmetric".into()));
                }
            }
        }
        for i in 0..self.lo.len() {
            if self.lo[i].is_nan() || self.hi[i].is_nan() {
                return Err(Error::Invalid("NaN bound".into()));
            }
            if self.lo[i] > self.hi[i] {
                return Err(Error::Invalid(format!(
                    "row {i}: lo {} exceeds hi {}",
                    self.lo[i], self.hi[i]
                )));
            }
        }
        Ok(())
    }
}

/// One-sided view `normal' z >= rhs` of an original constraint.
#[derive(Clone)]
struct OneSided {
    normal: DVector<f64>,
    rhs: f64,
    /// (equality row, sign) or inequality (row, side). Side +1 = lower.
    source: Source,
}

#[derive(Clone, Copy, PartialEq)]
enum Source {
    Eq { row: usize, flipped: bool },
    Ineq { row: usize, lower: bool },
}

struct Active {
    cons: usize,
    dual: f64,
}

/// Solves with the default tolerance.
pub fn solve(qp: &QuadProgram) -> Result<QpSolution> {
    solve_with(qp, DEFAULT_TOL)
}

/// Solves with an explicit KKT tolerance (scaled internally by `1 + ||q||`).
pub fn solve_with(qp: &QuadProgram, tol: f64) -> Result<QpSolution> {
    qp.validate()?;
    let chol = nalgebra::Cholesky::new(qp.p.clone())
        .ok_or(Error::NotPositiveDefinite("P"))?;

    // Equality rows must be independent; inconsistent dependent rows are an
    // infeasibility, consistent dependent rows a caller error.
    let neq = qp.a_eq.nrows();
    if neq > 0 {
        let svd = qp.a_eq.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-12 * smax.max(1.0))
            .count();
        if rank < neq {
            let ls = svd.solve(&qp.b_eq, 1e-12 * smax.max(1.0)).map_err(|e| {
                Error::Numerical(format!("equality least squares: {e}"))
            })?;
            let res = (&qp.a_eq * &ls - &qp.b_eq).amax();
            if res > 1e-9 * (1.0 + qp.b_eq.amax()) {
                return Ok(infeasible_solution(qp, chol.solve(&(-&qp.q))));
            }
            return Err(Error::Invalid(
                "equality rows are linearly dependent; remove duplicates".into(),
            ));
        }
    }

    let mut cons: Vec<OneSided> = Vec::new();
    for r in 0..neq {
        cons.push(OneSided {
            normal: qp.a_eq.row(r).transpose(),
            rhs: qp.b_eq[r],
            source: Source::Eq { row: r, flipped: false },
        });
    }
    for r in 0..qp.a_ineq.nrows() {
        let a = qp.a_ineq.row(r).transpose();
        if a.amax() == 0.0 {
            if qp.lo[r] > 0.0 || qp.hi[r] < 0.0 {
                return Ok(infeasible_solution(qp, chol.solve(&(-&qp.q))));
            }
            continue;
        }
        if qp.lo[r].is_finite() {
            cons.push(OneSided {
                normal: a.clone(),
                rhs: qp.lo[r],
                source: Source::Ineq { row: r, lower: true },
            });
        }
        if qp.hi[r].is_finite() {
            cons.push(OneSided {
                normal: -&a,
                rhs: -qp.hi[r],
                source: Source::Ineq { row: r, lower: false },
            });
        }
    }

    let mut z = chol.solve(&(-&qp.q));
    let mut active: Vec<Active> = Vec::new();
    let max_outer = 50 * (cons.len() + 1);
    let mut outer = 0;

    // Force equalities into the active set first.
    for e in 0..neq {
        let slack = cons[e].normal.dot(&z) - cons[e].rhs;
        if slack > 0.0 {
            cons[e].normal = -cons[e].normal.clone();
            cons[e].rhs = -cons[e].rhs;
            if let Source::Eq { row, .. } = cons[e].source {
                cons[e].source = Source::Eq { row, flipped: true };
            }
        }
        match add_constraint(&chol, &cons, &mut active, &mut z, e) {
            AddOutcome::Added => {}
            AddOutcome::Infeasible => {
                return Ok(infeasible_solution(qp, z));
            }
        }
        outer += 1;
        if outer > max_outer {
            return Ok(finalize(qp, z, &active, &cons, tol, QpStatus::NumericalFailure));
        }
    }

    loop {
        outer += 1;
        if outer > max_outer {
            return Ok(finalize(qp, z, &active, &cons, tol, QpStatus::NumericalFailure));
        }
        // Most violated inactive one-sided constraint, normalized.
        let feas_tol = 1e-11 * (1.0 + z.amax());
        let mut worst = None;
        let mut worst_val = -feas_tol;
        for (i, c) in cons.iter().enumerate().skip(neq) {
            if active.iter().any(|a| a.cons == i) {
                continue;
            }
            let v = (c.normal.dot(&z) - c.rhs) / c.normal.norm();
            if v < worst_val {
                worst_val = v;
                worst = Some(i);
            }
        }
        let Some(p) = worst else {
            return Ok(finalize(qp, z, &active, &cons, tol, QpStatus::Optimal));
        };
        match add_constraint(&chol, &cons, &mut active, &mut z, p) {
            AddOutcome::Added => {}
            AddOutcome::Infeasible => {
                return Ok(infeasible_solution(qp, z));
            }
        }
    }
}

enum AddOutcome {
    Added,
    Infeasible,
}

/// Drives constraint `p` to activity, dropping blocking inequality
/// multipliers along the way. Equality rows were sign-flipped so their
/// violation is nonpositive too, which keeps every step length nonnegative;
/// they are exempt from the blocking scan and so are never dropped.
fn add_constraint(
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    cons: &[OneSided],
    active: &mut Vec<Active>,
    z: &mut DVector<f64>,
    p: usize,
) -> AddOutcome {
    let mut entering_dual = 0.0;
    let guard = 4 * (cons.len() + 1);
    for _ in 0..guard {
        let a_p = &cons[p].normal;
        let slack = a_p.dot(z) - cons[p].rhs;
        if slack >= -1e-14 * (1.0 + cons[p].rhs.abs()) {
            // Satisfied to rounding: activate with the accumulated dual.
            active.push(Active { cons: p, dual: entering_dual });
            return AddOutcome::Added;
        }
        let na = active.len();
        let (d, udot) = if na == 0 {
            (chol.solve(a_p), DVector::zeros(0))
        } else {
            let mut nmat = DMatrix::zeros(z.len(), na);
            for (j, a) in active.iter().enumerate() {
                nmat.set_column(j, &cons[a.cons].normal);
            }
            let g = chol.solve(a_p);
            let pinv_n = chol.solve(&nmat);
            let m = nmat.transpose() * &pinv_n;
            let rhs = nmat.transpose() * &g;
            match m.lu().solve(&rhs) {
                Some(w) => (g - pinv_n * &w, w),
                None => return AddOutcome::Infeasible,
            }
        };
        // a_p' d = d' P d, so a nonpositive value means d = 0: the new normal
        // lies in the span of the active ones and only dual motion is left.
        let apd = a_p.dot(&d);
        let dependent = apd <= 1e-12 * a_p.norm_squared().max(1e-300);

        // Longest step before an active inequality multiplier reaches zero.
        let mut t1 = f64::INFINITY;
        let mut blocker = None;
        for (j, a) in active.iter().enumerate() {
            if matches!(cons[a.cons].source, Source::Eq { .. }) {
                continue;
            }
            if udot[j] > 1e-14 {
                let t = a.dual / udot[j];
                if t < t1 {
                    t1 = t;
                    blocker = Some(j);
                }
            }
        }

        if dependent {
            // No primal motion possible; either transfer dual mass off a
            // blocking constraint or conclude the system is inconsistent.
            match blocker {
                None => return AddOutcome::Infeasible,
                Some(j) => {
                    for (k, a) in active.iter_mut().enumerate() {
                        a.dual -= t1 * udot[k];
                    }
                    entering_dual += t1;
                    active.remove(j);
                    continue;
                }
            }
        }

        let t2 = -slack / apd; // full step: constraint p becomes active
        let t = t2.min(t1).max(0.0);
        *z += &d * t;
        for (k, a) in active.iter_mut().enumerate() {
            a.dual -= t * udot[k];
        }
        entering_dual += t;
        if t2 <= t1 {
            active.push(Active { cons: p, dual: entering_dual });
            return AddOutcome::Added;
        }
        match blocker {
            Some(j) => active.remove(j),
            None => return AddOutcome::Infeasible,
        };
    }
    AddOutcome::Infeasible
}

/// Re-solves the equality-constrained problem on the final active set and
/// packs multipliers back onto the original rows.
fn finalize(
    qp: &QuadProgram,
    z_iter: DVector<f64>,
    active: &[Active],
    cons: &[OneSided],
    tol: f64,
    status: QpStatus,
) -> QpSolution {
    let n = qp.nvars();
    let na = active.len();
    let mut z = z_iter;
    let mut duals: Vec<f64> = active.iter().map(|a| a.dual).collect();
    if status == QpStatus::Optimal {
        // KKT polish: [P, -N; N', 0] [z; v] = [-q; b_active].
        let mut kkt = DMatrix::zeros(n + na, n + na);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
        for (j, a) in active.iter().enumerate() {
            let col = &cons[a.cons].normal;
            for i in 0..n {
                kkt[(i, n + j)] = -col[i];
                kkt[(n + j, i)] = col[i];
            }
        }
        let mut rhs = DVector::zeros(n + na);
        for i in 0..n {
            rhs[i] = -qp.q[i];
        }
        for (j, a) in active.iter().enumerate() {
            rhs[n + j] = cons[a.cons].rhs;
        }
        if let Some(sol) = kkt.lu().solve(&rhs) {
            let z_new = sol.rows(0, n).into_owned();
            let v = sol.rows(n, na).into_owned();
            let ineq_dual_ok = active
                .iter()
                .enumerate()
                .all(|(j, a)| matches!(cons[a.cons].source, Source::Eq { .. }) || v[j] >= -1e-9);
            if ineq_dual_ok {
                z = z_new;
                for j in 0..na {
                    duals[j] = v[j];
                }
            }
        }
    }

    let mut duals_eq = DVector::zeros(qp.a_eq.nrows());
    let mut duals_ineq = DVector::zeros(qp.a_ineq.nrows());
    for (j, a) in active.iter().enumerate() {
        let d = duals[j];
        match cons[a.cons].source {
            Source::Eq { row, flipped } => {
                duals_eq[row] = if flipped { -d } else { d };
            }
            Source::Ineq { row, lower } => {
                let d = d.max(0.0);
                duals_ineq[row] += if lower { d } else { -d };
            }
        }
    }
    let objective = 0.5 * z.dot(&(&qp.p * &z)) + qp.q.dot(&z);
    let mut sol = QpSolution {
        z,
        duals_eq,
        duals_ineq,
        objective,
        status,
        kkt_residual: 0.0,
    };
    sol.kkt_residual = kkt_residual(qp, &sol);
    if sol.status == QpStatus::Optimal && sol.kkt_residual > tol * (1.0 + qp.q.amax()) {
        sol.status = QpStatus::NumericalFailure;
    }
    sol
}

fn infeasible_solution(qp: &QuadProgram, z: DVector<f64>) -> QpSolution {
    let objective = 0.5 * z.dot(&(&qp.p * &z)) + qp.q.dot(&z);
    QpSolution {
        z,
        duals_eq: DVector::zeros(qp.a_eq.nrows()),
        duals_ineq: DVector::zeros(qp.a_ineq.nrows()),
        objective,
        status: QpStatus::Infeasible,
        kkt_residual: f64::INFINITY,
    }
}

/// Max-norm KKT residual of a candidate solution: stationarity, primal
/// feasibility, and complementarity (multiplier times distance to the side it
/// claims, so a positive multiplier on an inactive row is penalized).
pub fn kkt_residual(qp: &QuadProgram, sol: &QpSolution) -> f64 {
    let mut resid: f64 = 0.0;
    let mut stat = &qp.p * &sol.z + &qp.q;
    if qp.a_eq.nrows() > 0 {
        stat -= qp.a_eq.transpose() * &sol.duals_eq;
    }
    if qp.a_ineq.nrows() > 0 {
        stat -= qp.a_ineq.transpose() * &sol.duals_ineq;
    }
    resid = resid.max(stat.amax());
    if qp.a_eq.nrows() > 0 {
        resid = resid.max((&qp.a_eq * &sol.z - &qp.b_eq).amax());
    }
    for r in 0..qp.a_ineq.nrows() {
        let t = qp.a_ineq.row(r).transpose().dot(&sol.z);
        if qp.lo[r].is_finite() {
            resid = resid.max(qp.lo[r] - t);
        }
        if qp.hi[r].is_finite() {
            resid = resid.max(t - qp.hi[r]);
        }
        let mu = sol.duals_ineq[r];
        if mu != 0.0 {
            let dist_lo = if qp.lo[r].is_finite() { (t - qp.lo[r]).abs() } else { f64::INFINITY };
            let dist_hi = if qp.hi[r].is_finite() { (t - qp.hi[r]).abs() } else { f64::INFINITY };
            let dist = match (dist_lo.is_finite(), dist_hi.is_finite()) {
                (false, false) => 1.0,
                _ => {
                    if mu > 0.0 && dist_lo.is_finite() {
                        dist_lo
                    } else if mu < 0.0 && dist_hi.is_finite() {
                        dist_hi
                    } else {
                        dist_lo.min(dist_hi)
                    }
                }
            };
            resid = resid.max(mu.abs() * dist);
        }
    }
    resid
}
