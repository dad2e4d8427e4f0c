//! Zone-tracking controller with an infinite prediction horizon.
//!
//! Instead of a fixed target, the output only has to settle inside a band:
//! the resting point `y_sp` is itself a decision variable constrained to the
//! zone, while a separate input target `u_des` expresses where the inputs
//! should come to rest. Two slacks keep every step feasible: `δy` on the
//! steady-output equality and `δu` on the resting-input equality. With the
//! certificate-sized weights `Sy` and `Su` the optimal cost again decreases
//! along the closed loop.
//!
//! Decision variables: `z = [Δu(0), …, Δu(m-1), y_sp, δy, δu]`.

use nalgebra::{DMatrix, DVector};

use crate::certificates::is_positive_semidefinite;
use crate::error::{Error, Result};
use crate::model::{OpomModel, PlantState};
use crate::qp::{self, AssembledQp, QpStatus, QuadProgram};
use crate::rect::Rectangle;

/// Controller definition: model, horizon, weights, zone, and boxes.
#[derive(Debug, Clone)]
pub struct ZoneSpec {
    model: OpomModel,
    horizon: usize,
    qy: DMatrix<f64>,
    qu: DMatrix<f64>,
    r: DMatrix<f64>,
    sy: DMatrix<f64>,
    su: DMatrix<f64>,
    q_bar: DMatrix<f64>,
    u_des: DVector<f64>,
    y_zone: Rectangle,
    u_box: Rectangle,
    du_box: Rectangle,
}

/// A feasible (not necessarily optimal) decision: move plan, resting
/// output, output slack, input slack.
pub type ZoneCandidate = (Vec<DVector<f64>>, DVector<f64>, DVector<f64>, DVector<f64>);

/// One optimized step: move plan, chosen resting output, and both slacks.
#[derive(Debug, Clone)]
pub struct ZoneSolution {
    pub du: Vec<DVector<f64>>,
    pub y_sp: DVector<f64>,
    pub delta_y: DVector<f64>,
    pub delta_u: DVector<f64>,
    /// Optimal cost, offset included.
    pub v_star: f64,
    pub kkt_residual: f64,
    /// First predicted output deviation `y(1) - y_sp - δy`.
    pub first_output_dev: DVector<f64>,
    /// First input-level deviation `u(0) - u_des - δu`.
    pub first_input_dev: DVector<f64>,
}

fn check_symmetric(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::Invalid(format!(
            "{name} must be symmetric (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

fn check_pd(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(name, m)?;
    if m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(name));
    }
    Ok(())
}

fn check_psd(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(name, m)?;
    if !is_positive_semidefinite(m, 1e-10) {
        return Err(Error::NotPositiveSemidefinite(name));
    }
    Ok(())
}

impl ZoneSpec {
    /// Validates dimensions and definiteness and freezes the controller.
    ///
    /// `qy`, `qu`, and `q_bar` may be semidefinite; `r`, `sy`, and `su` must
    /// be definite so the per-step program stays strictly convex. The
    /// desired input must lie inside the input box.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: OpomModel,
        horizon: usize,
        qy: DMatrix<f64>,
        qu: DMatrix<f64>,
        r: DMatrix<f64>,
        sy: DMatrix<f64>,
        su: DMatrix<f64>,
        q_bar: DMatrix<f64>,
        u_des: DVector<f64>,
        y_zone: Rectangle,
        u_box: Rectangle,
        du_box: Rectangle,
    ) -> Result<Self> {
        let (ny, nu, nd) = (model.ny(), model.nu(), model.nd());
        if horizon == 0 {
            return Err(Error::Invalid("horizon must be at least one move".into()));
        }
        check_psd("output weight", &qy)?;
        check_psd("input weight", &qu)?;
        check_pd("move weight", &r)?;
        check_pd("output slack weight", &sy)?;
        check_pd("input slack weight", &su)?;
        check_psd("terminal weight", &q_bar)?;
        if qy.nrows() != ny || sy.nrows() != ny {
            return Err(Error::Dimension(format!(
                "output weights must be {ny}x{ny}"
            )));
        }
        if qu.nrows() != nu || r.nrows() != nu || su.nrows() != nu {
            return Err(Error::Dimension(format!("input weights must be {nu}x{nu}")));
        }
        if q_bar.nrows() != nd {
            return Err(Error::Dimension(format!(
                "terminal weight must be {nd}x{nd}"
            )));
        }
        if u_des.len() != nu || u_box.dim() != nu || du_box.dim() != nu {
            return Err(Error::Dimension(format!(
                "desired input and input boxes must have dimension {nu}"
            )));
        }
        if y_zone.dim() != ny {
            return Err(Error::Dimension(format!(
                "output zone must have dimension {ny}"
            )));
        }
        if !u_box.contains(&u_des, 0.0) {
            return Err(Error::Infeasible(
                "desired input lies outside the input box".into(),
            ));
        }
        Ok(Self {
            model,
            horizon,
            qy,
            qu,
            r,
            sy,
            su,
            q_bar,
            u_des,
            y_zone,
            u_box,
            du_box,
        })
    }

    pub fn model(&self) -> &OpomModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn qy(&self) -> &DMatrix<f64> {
        &self.qy
    }

    pub fn qu(&self) -> &DMatrix<f64> {
        &self.qu
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn sy(&self) -> &DMatrix<f64> {
        &self.sy
    }

    pub fn su(&self) -> &DMatrix<f64> {
        &self.su
    }

    pub fn q_bar(&self) -> &DMatrix<f64> {
        &self.q_bar
    }

    pub fn u_des(&self) -> &DVector<f64> {
        &self.u_des
    }

    pub fn y_zone(&self) -> &Rectangle {
        &self.y_zone
    }

    pub fn u_box(&self) -> &Rectangle {
        &self.u_box
    }

    pub fn du_box(&self) -> &Rectangle {
        &self.du_box
    }

    fn check_state(&self, state: &PlantState) -> Result<()> {
        let (ny, nu, nd) = (self.model.ny(), self.model.nu(), self.model.nd());
        if state.xs.len() != ny || state.xd.len() != nd || state.u.len() != nu {
            return Err(Error::Dimension(format!(
                "state dims ({}, {}, {}) do not match model ({ny}, {nd}, {nu})",
                state.xs.len(),
                state.xd.len(),
                state.u.len()
            )));
        }
        Ok(())
    }

    /// Builds the per-step program at a state. The returned offset restores
    /// the constant cost term the quadratic form drops.
    pub fn assemble(&self, state: &PlantState) -> Result<AssembledQp> {
        self.check_state(state)?;
        let (ny, nu, nd, m) = (self.model.ny(), self.model.nu(), self.model.nd(), self.horizon);
        // Variable layout: m move blocks, then y_sp, delta_y, delta_u.
        let n = m * nu + 2 * ny + nu;
        let off_ysp = m * nu;
        let off_dy = m * nu + ny;
        let off_du = m * nu + 2 * ny;

        let mut fpow = Vec::with_capacity(m + 1);
        fpow.push(DMatrix::identity(nd, nd));
        for j in 1..=m {
            fpow.push(&fpow[j - 1] * self.model.f());
        }
        let tblk: Vec<DMatrix<f64>> = (0..m)
            .map(|l| self.model.d0() + self.model.psi() * &fpow[l] * self.model.dd())
            .collect();

        let mut p = DMatrix::zeros(n, n);
        let mut qv = DVector::zeros(n);
        let mut offset = 0.0;
        let neg_eye_y = -DMatrix::<f64>::identity(ny, ny);

        // Output deviations from the slacked resting point.
        for j in 0..m {
            let mut ej = DMatrix::zeros(ny, n);
            for i in 0..=j {
                ej.view_mut((0, i * nu), (ny, nu)).copy_from(&tblk[j - i]);
            }
            ej.view_mut((0, off_ysp), (ny, ny)).copy_from(&neg_eye_y);
            ej.view_mut((0, off_dy), (ny, ny)).copy_from(&neg_eye_y);
            let cj = &state.xs + self.model.psi() * &fpow[j + 1] * &state.xd;
            let qe = &self.qy * &ej;
            p += ej.transpose() * &qe * 2.0;
            qv += qe.transpose() * &cj * 2.0;
            offset += (&self.qy * &cj).dot(&cj);
        }

        // Terminal term on the decaying state after the last move.
        if nd > 0 {
            let mut xrow = DMatrix::zeros(nd, n);
            for i in 0..m {
                xrow.view_mut((0, i * nu), (nd, nu))
                    .copy_from(&(&fpow[m - 1 - i] * self.model.dd()));
            }
            let xc = &fpow[m] * &state.xd;
            let qx = &self.q_bar * &xrow;
            p += xrow.transpose() * &qx * 2.0;
            qv += qx.transpose() * &xc * 2.0;
            offset += (&self.q_bar * &xc).dot(&xc);
        }

        // Input-level deviations from the slacked resting input.
        for i in 0..m {
            let mut li = DMatrix::zeros(nu, n);
            for l in 0..=i {
                li.view_mut((0, l * nu), (nu, nu))
                    .copy_from(&DMatrix::identity(nu, nu));
            }
            li.view_mut((0, off_du), (nu, nu))
                .copy_from(&(-DMatrix::<f64>::identity(nu, nu)));
            let ci = &state.u - &self.u_des;
            let ql = &self.qu * &li;
            p += li.transpose() * &ql * 2.0;
            qv += ql.transpose() * &ci * 2.0;
            offset += (&self.qu * &ci).dot(&ci);
        }

        // Move and slack penalties.
        let r2 = &self.r * 2.0;
        for i in 0..m {
            let mut blk = p.view_mut((i * nu, i * nu), (nu, nu));
            blk += &r2;
        }
        {
            let mut blk = p.view_mut((off_dy, off_dy), (ny, ny));
            blk += &self.sy * 2.0;
        }
        {
            let mut blk = p.view_mut((off_du, off_du), (nu, nu));
            blk += &self.su * 2.0;
        }
        let pt = p.transpose();
        p = (p + pt) * 0.5;

        // Two resting equalities: the steady output lands on the slacked
        // resting point, the final input level on the slacked input target.
        let mut a_eq = DMatrix::zeros(ny + nu, n);
        for i in 0..m {
            a_eq.view_mut((0, i * nu), (ny, nu)).copy_from(self.model.d0());
            a_eq.view_mut((ny, i * nu), (nu, nu))
                .copy_from(&DMatrix::identity(nu, nu));
        }
        a_eq.view_mut((0, off_ysp), (ny, ny)).copy_from(&neg_eye_y);
        a_eq.view_mut((0, off_dy), (ny, ny)).copy_from(&neg_eye_y);
        a_eq.view_mut((ny, off_du), (nu, nu))
            .copy_from(&(-DMatrix::<f64>::identity(nu, nu)));
        let mut b_eq = DVector::zeros(ny + nu);
        b_eq.rows_mut(0, ny).copy_from(&(-&state.xs));
        b_eq.rows_mut(ny, nu).copy_from(&(&self.u_des - &state.u));

        // Per-move boxes, cumulative input-level boxes, then the zone rows.
        let nrows = 2 * m * nu + ny;
        let mut a_ineq = DMatrix::zeros(nrows, n);
        let mut lo = DVector::zeros(nrows);
        let mut hi = DVector::zeros(nrows);
        for i in 0..m {
            for c in 0..nu {
                a_ineq[(i * nu + c, i * nu + c)] = 1.0;
                lo[i * nu + c] = self.du_box.lo()[c];
                hi[i * nu + c] = self.du_box.hi()[c];
            }
            let row0 = (m + i) * nu;
            for l in 0..=i {
                for c in 0..nu {
                    a_ineq[(row0 + c, l * nu + c)] = 1.0;
                }
            }
            for c in 0..nu {
                lo[row0 + c] = self.u_box.lo()[c] - state.u[c];
                hi[row0 + c] = self.u_box.hi()[c] - state.u[c];
            }
        }
        let zrow0 = 2 * m * nu;
        for c in 0..ny {
            a_ineq[(zrow0 + c, off_ysp + c)] = 1.0;
            lo[zrow0 + c] = self.y_zone.lo()[c];
            hi[zrow0 + c] = self.y_zone.hi()[c];
        }

        Ok(AssembledQp {
            qp: QuadProgram { p, q: qv, a_eq, b_eq, a_ineq, lo, hi },
            offset,
        })
    }

    /// Assembles and solves the per-step program.
    pub fn solve_step(&self, state: &PlantState) -> Result<ZoneSolution> {
        let asm = self.assemble(state)?;
        let sol = qp::solve(&asm.qp)?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                return Err(Error::Infeasible(
                    "no move plan satisfies the input boxes and the zone".into(),
                ))
            }
            QpStatus::NumericalFailure => {
                return Err(Error::Numerical(format!(
                    "step program solved to residual {:.3e} only",
                    sol.kkt_residual
                )))
            }
        }
        let (ny, nu, m) = (self.model.ny(), self.model.nu(), self.horizon);
        let du: Vec<DVector<f64>> =
            (0..m).map(|i| sol.z.rows(i * nu, nu).into_owned()).collect();
        let y_sp = sol.z.rows(m * nu, ny).into_owned();
        let delta_y = sol.z.rows(m * nu + ny, ny).into_owned();
        let delta_u = sol.z.rows(m * nu + 2 * ny, nu).into_owned();
        let y1 = &state.xs
            + self.model.d0() * &du[0]
            + self.model.psi() * (self.model.f() * &state.xd + self.model.dd() * &du[0]);
        let first_output_dev = y1 - &y_sp - &delta_y;
        let first_input_dev = &state.u + &du[0] - &self.u_des - &delta_u;
        Ok(ZoneSolution {
            du,
            y_sp,
            delta_y,
            delta_u,
            v_star: sol.objective + asm.offset,
            kkt_residual: sol.kkt_residual,
            first_output_dev,
            first_input_dev,
        })
    }

    /// Evaluates the cost of an arbitrary candidate by simulating the model
    /// forward, sharing nothing with [`ZoneSpec::assemble`].
    pub fn cost_of(
        &self,
        state: &PlantState,
        moves: &[DVector<f64>],
        y_sp: &DVector<f64>,
        delta_y: &DVector<f64>,
        delta_u: &DVector<f64>,
    ) -> Result<f64> {
        if moves.len() != self.horizon {
            return Err(Error::Invalid(format!(
                "candidate has {} moves, expected {}",
                moves.len(),
                self.horizon
            )));
        }
        let ny = self.model.ny();
        let nu = self.model.nu();
        if y_sp.len() != ny || delta_y.len() != ny || delta_u.len() != nu {
            return Err(Error::Dimension(
                "candidate slack dimensions do not match the model".into(),
            ));
        }
        let pred = self.model.predict(state, moves)?;
        let mut v = 0.0;
        for y in &pred.y {
            let dev = y - y_sp - delta_y;
            v += (&self.qy * &dev).dot(&dev);
        }
        let xdm = &pred.xd[self.horizon - 1];
        v += (&self.q_bar * xdm).dot(xdm);
        for lvl in &pred.u {
            let dev = lvl - &self.u_des - delta_u;
            v += (&self.qu * &dev).dot(&dev);
        }
        for du in moves {
            v += (&self.r * du).dot(du);
        }
        v += (&self.sy * delta_y).dot(delta_y);
        v += (&self.su * delta_u).dot(delta_u);
        Ok(v)
    }

    /// Whether a candidate satisfies the boxes, the zone, and both resting
    /// equalities at a state.
    #[allow(clippy::too_many_arguments)]
    pub fn candidate_is_feasible(
        &self,
        state: &PlantState,
        moves: &[DVector<f64>],
        y_sp: &DVector<f64>,
        delta_y: &DVector<f64>,
        delta_u: &DVector<f64>,
        tol: f64,
    ) -> bool {
        if moves.len() != self.horizon || !self.y_zone.contains(y_sp, tol) {
            return false;
        }
        let mut level = state.u.clone();
        let mut steady = state.xs.clone();
        for du in moves {
            if !self.du_box.contains(du, tol) {
                return false;
            }
            level += du;
            if !self.u_box.contains(&level, tol) {
                return false;
            }
            steady += self.model.d0() * du;
        }
        let out_resid = (&steady - y_sp - delta_y).amax();
        let in_resid = (&level - &self.u_des - delta_u).amax();
        out_resid <= tol * (1.0 + steady.amax()) && in_resid <= tol * (1.0 + level.amax())
    }

    /// The standard warm-start candidate for the *next* state: drop the
    /// executed move, append a zero move, keep the resting point and slacks.
    pub fn shifted_candidate(
        &self,
        sol: &ZoneSolution,
    ) -> (Vec<DVector<f64>>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let mut moves: Vec<DVector<f64>> = sol.du[1..].to_vec();
        moves.push(DVector::zeros(self.model.nu()));
        (moves, sol.y_sp.clone(), sol.delta_y.clone(), sol.delta_u.clone())
    }

    /// Cost decrease the shifted candidate realizes exactly:
    /// `‖y(1) - y_sp - δy‖²_Qy + ‖u(0) - u_des - δu‖²_Qu + ‖Δu(0)‖²_R`.
    pub fn stage_decrease(&self, sol: &ZoneSolution) -> f64 {
        (&self.qy * &sol.first_output_dev).dot(&sol.first_output_dev)
            + (&self.qu * &sol.first_input_dev).dot(&sol.first_input_dev)
            + (&self.r * &sol.du[0]).dot(&sol.du[0])
    }

    /// Cost of compressing the whole plan into a single immediate move,
    /// `Δũ(0) = ΣΔu*`: evaluates to `‖F x_d + Dd ΣΔu*‖²_G + ‖ΣΔu*‖²_R`
    /// plus the slack terms. Returns `None` when that single move violates
    /// the move box.
    pub fn consolidated_cost(&self, state: &PlantState, sol: &ZoneSolution) -> Result<Option<f64>> {
        self.check_state(state)?;
        let mut total = DVector::zeros(self.model.nu());
        for du in &sol.du {
            total += du;
        }
        if !self.du_box.contains(&total, 0.0) {
            return Ok(None);
        }
        let g = self.model.psi().transpose() * &self.qy * self.model.psi() + &self.q_bar;
        let w = self.model.f() * &state.xd + self.model.dd() * &total;
        let mut v = (&g * &w).dot(&w) + (&self.r * &total).dot(&total);
        v += (&self.sy * &sol.delta_y).dot(&sol.delta_y);
        v += (&self.su * &sol.delta_u).dot(&sol.delta_u);
        Ok(Some(v))
    }

    /// Slack-contracting candidate at the same state: scales both slacks by
    /// `alpha`, retargets the resting point toward `D0 u_des`, and absorbs
    /// the input correction into the last move. Only exists on states whose
    /// steady output is consistent with the input level (which the closed
    /// loop preserves from the origin); errors out when the corrected move
    /// or resting point leaves its box.
    pub fn contracted_candidate(
        &self,
        state: &PlantState,
        sol: &ZoneSolution,
        alpha: f64,
    ) -> Result<ZoneCandidate> {
        self.check_state(state)?;
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::Invalid(format!(
                "contraction factor must lie in (0, 1), got {alpha}"
            )));
        }
        let manifold = (&state.xs - self.model.d0() * &state.u).amax();
        if manifold > 1e-9 * (1.0 + state.xs.amax()) {
            return Err(Error::StateMismatch(format!(
                "steady output disagrees with the input level by {manifold:.3e}"
            )));
        }
        let mut moves = sol.du.clone();
        let last = moves.last_mut().expect("horizon is at least one");
        *last -= &sol.delta_u * (1.0 - alpha);
        if !self.du_box.contains(last, 1e-12) {
            return Err(Error::Infeasible(
                "corrected final move leaves the move box".into(),
            ));
        }
        let y_sp = &sol.y_sp * alpha + self.model.d0() * &self.u_des * (1.0 - alpha);
        if !self.y_zone.contains(&y_sp, 1e-12) {
            return Err(Error::Infeasible(
                "contracted resting point leaves the zone".into(),
            ));
        }
        Ok((moves, y_sp, &sol.delta_y * alpha, &sol.delta_u * alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::terminal_weight;
    use crate::model::Mode;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn static_scalar_model() -> OpomModel {
        OpomModel::new(
            DMatrix::zeros(0, 0),
            dmatrix![1.0],
            DMatrix::zeros(0, 1),
            DMatrix::zeros(1, 0),
        )
        .unwrap()
    }

    fn scalar_zone_spec() -> ZoneSpec {
        ZoneSpec::new(
            static_scalar_model(),
            1,
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![3.0],
            DMatrix::zeros(0, 0),
            dvector![1.0],
            Rectangle::new(dvector![0.0], dvector![2.0]).unwrap(),
            Rectangle::symmetric(1, 2.0).unwrap(),
            Rectangle::symmetric(1, 2.0).unwrap(),
        )
        .unwrap()
    }

    fn oscillatory_model() -> OpomModel {
        // One underdamped pair: pole 0.3 + 0.4i, residue 1 - 0.5i.
        OpomModel::from_modes(
            1,
            1,
            dmatrix![1.0],
            &[Mode {
                pole_re: 0.3,
                pole_im: 0.4,
                residue_re: 1.0,
                residue_im: -0.5,
                output_index: 0,
                input_index: 0,
            }],
        )
        .unwrap()
    }

    fn oscillatory_zone_spec() -> ZoneSpec {
        let model = oscillatory_model();
        let q_bar = terminal_weight(model.f(), model.psi(), &dmatrix![1.0]).unwrap();
        ZoneSpec::new(
            model,
            3,
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![5.0],
            dmatrix![8.0],
            q_bar,
            dvector![0.8],
            Rectangle::new(dvector![0.0], dvector![2.0]).unwrap(),
            Rectangle::symmetric(1, 2.0).unwrap(),
            Rectangle::symmetric(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_move_program_matches_hand_solution() {
        let spec = scalar_zone_spec();
        let sol = spec.solve_step(&spec.model().origin()).unwrap();
        assert_relative_eq!(sol.du[0][0], 0.75, epsilon = 1e-9);
        assert_relative_eq!(sol.y_sp[0], 0.75, epsilon = 1e-9);
        assert_relative_eq!(sol.delta_y[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(sol.delta_u[0], -0.25, epsilon = 1e-9);
        assert_relative_eq!(sol.v_star, 0.75, epsilon = 1e-9);
    }

    #[test]
    fn simulated_cost_agrees_with_the_program_objective() {
        let spec = oscillatory_zone_spec();
        let state = spec.model().origin();
        let sol = spec.solve_step(&state).unwrap();
        let direct = spec
            .cost_of(&state, &sol.du, &sol.y_sp, &sol.delta_y, &sol.delta_u)
            .unwrap();
        assert_relative_eq!(direct, sol.v_star, epsilon = 1e-9);
        assert!(spec.candidate_is_feasible(
            &state,
            &sol.du,
            &sol.y_sp,
            &sol.delta_y,
            &sol.delta_u,
            1e-8
        ));
    }

    #[test]
    fn shifted_candidate_realizes_the_stage_decrease() {
        let spec = oscillatory_zone_spec();
        let state = spec.model().origin();
        let sol = spec.solve_step(&state).unwrap();
        let next = spec.model().step(&state, &sol.du[0]).unwrap();
        let (moves, y_sp, dy, du_s) = spec.shifted_candidate(&sol);
        assert!(spec.candidate_is_feasible(&next, &moves, &y_sp, &dy, &du_s, 1e-8));
        let shifted_cost = spec.cost_of(&next, &moves, &y_sp, &dy, &du_s).unwrap();
        let expect = sol.v_star - spec.stage_decrease(&sol);
        assert_relative_eq!(shifted_cost, expect, epsilon = 1e-9);
    }

    #[test]
    fn consolidated_candidate_agrees_with_the_simulated_route() {
        let spec = oscillatory_zone_spec();
        let state = spec.model().origin();
        let sol = spec.solve_step(&state).unwrap();
        let compact = spec.consolidated_cost(&state, &sol).unwrap();
        let total = sol.du.iter().fold(DVector::zeros(1), |acc, d| acc + d);
        if let Some(v) = compact {
            let mut one_move = vec![total];
            one_move.resize(spec.horizon(), DVector::zeros(1));
            let direct = spec
                .cost_of(&state, &one_move, &sol.y_sp, &sol.delta_y, &sol.delta_u)
                .unwrap();
            assert_relative_eq!(v, direct, epsilon = 1e-9);
            // Optimality: no feasible candidate beats the program.
            assert!(v >= sol.v_star - 1e-9);
        } else {
            assert!(!spec.du_box().contains(&total, 0.0));
        }
    }

    #[test]
    fn contracted_candidate_is_feasible_and_never_better() {
        let spec = oscillatory_zone_spec();
        let state = spec.model().origin();
        let sol = spec.solve_step(&state).unwrap();
        for alpha in [0.25, 0.5, 0.9] {
            let (moves, y_sp, dy, du_s) =
                spec.contracted_candidate(&state, &sol, alpha).unwrap();
            assert!(spec.candidate_is_feasible(&state, &moves, &y_sp, &dy, &du_s, 1e-8));
            let v = spec.cost_of(&state, &moves, &y_sp, &dy, &du_s).unwrap();
            assert!(v >= sol.v_star - 1e-9, "alpha {alpha}: {v} < {}", sol.v_star);
        }
    }

    #[test]
    fn contracted_candidate_requires_a_consistent_state() {
        let spec = oscillatory_zone_spec();
        let state = spec.model().origin();
        let sol = spec.solve_step(&state).unwrap();
        let off_manifold = PlantState {
            xs: dvector![0.5],
            ..state
        };
        let err = spec.contracted_candidate(&off_manifold, &sol, 0.5).unwrap_err();
        assert!(matches!(err, Error::StateMismatch(_)));
    }

    #[test]
    fn rejects_desired_inputs_outside_the_box() {
        let err = ZoneSpec::new(
            static_scalar_model(),
            1,
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![3.0],
            DMatrix::zeros(0, 0),
            dvector![5.0],
            Rectangle::new(dvector![0.0], dvector![2.0]).unwrap(),
            Rectangle::symmetric(1, 2.0).unwrap(),
            Rectangle::symmetric(1, 2.0).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }
}
