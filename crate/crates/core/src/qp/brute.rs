//! Brute-force minimizer used as an independent oracle for [`super::solve`].
//!
//! Exhaustive grid scan over a bounding box, refined by projected gradient
//! descent (Dykstra's alternating projections handle the constraint
//! intersection) and a final equality-constrained polish on the detected
//! active set. Deliberately shares no code with the active-set solver.

use nalgebra::{DMatrix, DVector};

use super::QuadProgram;
use crate::error::{Error, Result};

/// Exhaustive-search result.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub z: DVector<f64>,
    pub objective: f64,
}

const MAX_VARS: usize = 4;
const MAX_SIDES: usize = 16;

/// Minimizes a small strictly convex QP (`n <= 4`) by search; `resolution`
/// is the number of grid points per axis.
pub fn brute_force(qp: &QuadProgram, resolution: usize) -> Result<BruteForce> {
    let n = qp.nvars();
    if n == 0 || n > MAX_VARS {
        return Err(Error::Invalid(format!(
            "brute force supports 1..={MAX_VARS} variables, got {n}"
        )));
    }
    if resolution < 2 {
        return Err(Error::Invalid("grid resolution must be at least 2".into()));
    }
    let eig = qp.p.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite("P"));
    }

    let proj = Projector::new(qp)?;
    let (lo, hi) = bounding_box(qp, &proj);

    let obj = |z: &DVector<f64>| 0.5 * z.dot(&(&qp.p * z)) + qp.q.dot(z);

    // Grid scan: project each node onto the equality subspace, keep feasible
    // candidates.
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut idx = vec![0usize; n];
    loop {
        let mut z = DVector::zeros(n);
        for d in 0..n {
            let t = idx[d] as f64 / (resolution - 1) as f64;
            z[d] = lo[d] + t * (hi[d] - lo[d]);
        }
        let z = proj.onto_equalities(&z);
        if feasible(qp, &z, 1e-6) {
            let v = obj(&z);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, z));
            }
        }
        // Odometer increment over the grid.
        let mut d = 0;
        loop {
            if d == n {
                break;
            }
            idx[d] += 1;
            if idx[d] < resolution {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == n {
            break;
        }
    }
    let start = match best {
        Some((_, z)) => z,
        // No grid node projected into the feasible set; fall back to the
        // projection of the box center.
        None => proj.onto_feasible(&DVector::from_fn(n, |i, _| 0.5 * (lo[i] + hi[i]))),
    };

    // Projected gradient descent with step 1/L.
    let step = 1.0 / lmax;
    let mut z = start;
    for _ in 0..2000 {
        let grad = &qp.p * &z + &qp.q;
        let next = proj.onto_feasible(&(&z - grad * step));
        let moved = (&next - &z).amax();
        z = next;
        if moved <= 1e-13 * (1.0 + z.amax()) {
            break;
        }
    }

    // Polish: the gradient search can stall a noticeable distance short of
    // the optimal vertex (or leave a small equality residual), so re-solve
    // the equality-constrained problem over every candidate active set and
    // keep the best feasible result. With at most four variables the number
    // of constraint sides stays small enough to enumerate exhaustively;
    // beyond the cap only the sides closest to activity at the search point
    // are kept.
    let mut out: Option<(f64, DVector<f64>)> = if feasible(qp, &z, 1e-8) {
        Some((obj(&z), z.clone()))
    } else {
        None
    };
    let mut sides = constraint_sides(qp);
    sides.sort_by(|a, b| {
        let sa = (a.1.dot(&z) - a.2).abs();
        let sb = (b.1.dot(&z) - b.2).abs();
        sa.total_cmp(&sb)
    });
    sides.truncate(MAX_SIDES);
    for mask in 0usize..(1 << sides.len()) {
        let picked: Vec<&(usize, DVector<f64>, f64)> = sides
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, s)| s)
            .collect();
        // Opposite sides of one row contradict each other.
        let contradictory = picked
            .iter()
            .enumerate()
            .any(|(i, a)| picked[..i].iter().any(|b| b.0 == a.0));
        if contradictory {
            continue;
        }
        let forced: Vec<(DVector<f64>, f64)> =
            picked.iter().map(|s| (s.1.clone(), s.2)).collect();
        if let Some(cand) = polish(qp, &forced) {
            if feasible(qp, &cand, 1e-8) {
                let v = obj(&cand);
                if out.as_ref().is_none_or(|(b, _)| v < *b) {
                    out = Some((v, cand));
                }
            }
        }
    }
    let (objective, z) = out.ok_or(Error::Numerical(
        "search produced no feasible candidate".into(),
    ))?;
    Ok(BruteForce { z, objective })
}

fn feasible(qp: &QuadProgram, z: &DVector<f64>, tol: f64) -> bool {
    for r in 0..qp.a_eq.nrows() {
        let t = qp.a_eq.row(r).transpose().dot(z);
        if (t - qp.b_eq[r]).abs() > tol * (1.0 + qp.b_eq[r].abs()) {
            return false;
        }
    }
    for r in 0..qp.a_ineq.nrows() {
        let t = qp.a_ineq.row(r).transpose().dot(z);
        let scale = 1.0 + z.amax();
        if qp.lo[r].is_finite() && t < qp.lo[r] - tol * scale {
            return false;
        }
        if qp.hi[r].is_finite() && t > qp.hi[r] + tol * scale {
            return false;
        }
    }
    true
}

/// Per-variable box: explicit single-coefficient rows where available,
/// otherwise a margin around an equality-feasible anchor point.
fn bounding_box(qp: &QuadProgram, proj: &Projector) -> (DVector<f64>, DVector<f64>) {
    let n = qp.nvars();
    let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
    let mut hi = DVector::from_element(n, f64::INFINITY);
    for r in 0..qp.a_ineq.nrows() {
        let row = qp.a_ineq.row(r);
        let nz: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
        if nz.len() != 1 {
            continue;
        }
        let j = nz[0];
        let c = row[j];
        let (mut a, mut b) = (qp.lo[r] / c, qp.hi[r] / c);
        if c < 0.0 {
            std::mem::swap(&mut a, &mut b);
        }
        lo[j] = lo[j].max(a);
        hi[j] = hi[j].min(b);
    }
    let anchor = proj.anchor(qp);
    for j in 0..n {
        let margin = 1.0 + 2.0 * anchor[j].abs();
        if !lo[j].is_finite() {
            lo[j] = anchor[j] - margin;
        }
        if !hi[j].is_finite() {
            hi[j] = anchor[j] + margin;
        }
    }
    (lo, hi)
}

/// Closed-form projections onto the equality subspace and each slab, plus
/// Dykstra's algorithm for their intersection.
struct Projector {
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    gram_inv: Option<DMatrix<f64>>,
    slabs: Vec<(DVector<f64>, f64, f64)>,
}

impl Projector {
    fn new(qp: &QuadProgram) -> Result<Self> {
        let gram_inv = if qp.a_eq.nrows() > 0 {
            let g = &qp.a_eq * qp.a_eq.transpose();
            Some(g.clone().try_inverse().ok_or(Error::Invalid(
                "equality rows are linearly dependent".into(),
            ))?)
        } else {
            None
        };
        let mut slabs = Vec::new();
        for r in 0..qp.a_ineq.nrows() {
            let a = qp.a_ineq.row(r).transpose();
            if a.amax() == 0.0 {
                continue;
            }
            slabs.push((a, qp.lo[r], qp.hi[r]));
        }
        Ok(Self {
            a_eq: qp.a_eq.clone(),
            b_eq: qp.b_eq.clone(),
            gram_inv,
            slabs,
        })
    }

    fn onto_equalities(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.gram_inv {
            None => z.clone(),
            Some(gi) => {
                let resid = &self.a_eq * z - &self.b_eq;
                z - self.a_eq.transpose() * (gi * resid)
            }
        }
    }

    fn onto_slab(slab: &(DVector<f64>, f64, f64), z: &DVector<f64>) -> DVector<f64> {
        let (a, lo, hi) = slab;
        let t = a.dot(z);
        let clipped = t.clamp(*lo, *hi);
        if clipped == t {
            z.clone()
        } else {
            z - a * ((t - clipped) / a.norm_squared())
        }
    }

    /// Dykstra's alternating projections onto the intersection.
    fn onto_feasible(&self, z0: &DVector<f64>) -> DVector<f64> {
        let nsets = self.slabs.len() + usize::from(self.gram_inv.is_some());
        if nsets == 0 {
            return z0.clone();
        }
        let n = z0.len();
        let mut z = z0.clone();
        let mut corr = vec![DVector::<f64>::zeros(n); nsets];
        for _ in 0..400 {
            let before = z.clone();
            let mut set = 0;
            if self.gram_inv.is_some() {
                let y = &z + &corr[set];
                let p = self.onto_equalities(&y);
                corr[set] = y - &p;
                z = p;
                set += 1;
            }
            for slab in &self.slabs {
                let y = &z + &corr[set];
                let p = Self::onto_slab(slab, &y);
                corr[set] = y - &p;
                z = p;
                set += 1;
            }
            if (&z - before).amax() <= 1e-15 * (1.0 + z.amax()) {
                break;
            }
        }
        z
    }

    /// Equality-feasible anchor for the fallback box: the cost minimizer
    /// restricted to the equality subspace (plain KKT linear solve).
    fn anchor(&self, qp: &QuadProgram) -> DVector<f64> {
        let n = qp.nvars();
        let p = self.a_eq.nrows();
        if p == 0 {
            return match qp.p.clone().cholesky() {
                Some(ch) => ch.solve(&(-&qp.q)),
                None => DVector::zeros(n),
            };
        }
        let mut kkt = DMatrix::zeros(n + p, n + p);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
        kkt.view_mut((0, n), (n, p)).copy_from(&self.a_eq.transpose());
        kkt.view_mut((n, 0), (p, n)).copy_from(&self.a_eq);
        let mut rhs = DVector::zeros(n + p);
        for i in 0..n {
            rhs[i] = -qp.q[i];
        }
        for r in 0..p {
            rhs[n + r] = self.b_eq[r];
        }
        match kkt.lu().solve(&rhs) {
            Some(sol) => sol.rows(0, n).into_owned(),
            None => DVector::zeros(n),
        }
    }
}

/// Every finite side of every nonzero inequality row as `(row, normal, rhs)`.
fn constraint_sides(qp: &QuadProgram) -> Vec<(usize, DVector<f64>, f64)> {
    let mut sides = Vec::new();
    for r in 0..qp.a_ineq.nrows() {
        let a = qp.a_ineq.row(r).transpose();
        if a.amax() == 0.0 {
            continue;
        }
        if qp.lo[r].is_finite() {
            sides.push((r, a.clone(), qp.lo[r]));
        }
        if qp.hi[r].is_finite() {
            sides.push((r, a.clone(), qp.hi[r]));
        }
    }
    sides
}

/// Re-solve with the equality rows plus `extra` forced active.
fn polish(qp: &QuadProgram, extra: &[(DVector<f64>, f64)]) -> Option<DVector<f64>> {
    let n = qp.nvars();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for r in 0..qp.a_eq.nrows() {
        rows.push((qp.a_eq.row(r).transpose(), qp.b_eq[r]));
    }
    rows.extend_from_slice(extra);
    let p = rows.len();
    if p > n {
        return None;
    }
    let mut kkt = DMatrix::zeros(n + p, n + p);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    for (j, (a, _)) in rows.iter().enumerate() {
        for i in 0..n {
            kkt[(i, n + j)] = a[i];
            kkt[(n + j, i)] = a[i];
        }
    }
    let mut rhs = DVector::zeros(n + p);
    for i in 0..n {
        rhs[i] = -qp.q[i];
    }
    for (j, (_, b)) in rows.iter().enumerate() {
        rhs[n + j] = *b;
    }
    kkt.lu().solve(&rhs).map(|sol| sol.rows(0, n).into_owned())
}
