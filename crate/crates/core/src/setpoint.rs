//! Setpoint-tracking controller with an infinite prediction horizon.
//!
//! Each step minimizes the accumulated squared tracking error over *all*
//! future samples, compressed to a finite program by the terminal weight on
//! the decaying state: output deviations beyond the move horizon telescope
//! into `‖x_d‖²_Q̄`. A slack `δ` on the terminal tracking equality keeps the
//! program feasible when the target cannot be reached within the input box,
//! and its weight `S` (sized by the certificates) makes the optimal cost a
//! Lyapunov function for the closed loop.
//!
//! Decision variables: the `m` input moves followed by the slack,
//! `z = [Δu(0), …, Δu(m-1), δ]`.

use nalgebra::{DMatrix, DVector};

use crate::certificates::is_positive_semidefinite;
use crate::error::{Error, Result};
use crate::model::{OpomModel, PlantState};
use crate::qp::{self, AssembledQp, QpStatus, QuadProgram};
use crate::rect::Rectangle;

/// Controller definition: model, horizon, weights, target, and boxes.
#[derive(Debug, Clone)]
pub struct SetpointSpec {
    model: OpomModel,
    horizon: usize,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    s: DMatrix<f64>,
    q_bar: DMatrix<f64>,
    target: DVector<f64>,
    u_box: Rectangle,
    du_box: Rectangle,
}

/// One optimized step: the move plan, the slack, and the optimal cost.
#[derive(Debug, Clone)]
pub struct SetpointSolution {
    pub du: Vec<DVector<f64>>,
    pub delta: DVector<f64>,
    /// Optimal cost, offset included.
    pub v_star: f64,
    pub kkt_residual: f64,
    /// First predicted tracking error `e(0) = y(1) - target`.
    pub e0: DVector<f64>,
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

impl SetpointSpec {
    /// Validates dimensions and definiteness and freezes the controller.
    ///
    /// `q` and `q_bar` may be semidefinite; `r` and `s` must be definite so
    /// the per-step program stays strictly convex.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: OpomModel,
        horizon: usize,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        s: DMatrix<f64>,
        q_bar: DMatrix<f64>,
        target: DVector<f64>,
        u_box: Rectangle,
        du_box: Rectangle,
    ) -> Result<Self> {
        let (ny, nu, nd) = (model.ny(), model.nu(), model.nd());
        if horizon == 0 {
            return Err(Error::Invalid("horizon must be at least one move".into()));
        }
        check_psd("output weight", &q)?;
        check_pd("move weight", &r)?;
        check_pd("slack weight", &s)?;
        check_psd("terminal weight", &q_bar)?;
        if q.nrows() != ny || s.nrows() != ny {
            return Err(Error::Dimension(format!(
                "output and slack weights must be {ny}x{ny}"
            )));
        }
        if r.nrows() != nu {
            return Err(Error::Dimension(format!("move weight must be {nu}x{nu}")));
        }
        if q_bar.nrows() != nd {
            return Err(Error::Dimension(format!(
                "terminal weight must be {nd}x{nd}"
            )));
        }
        if target.len() != ny {
            return Err(Error::Dimension(format!(
                "target has {} entries, expected {ny}",
                target.len()
            )));
        }
        if u_box.dim() != nu || du_box.dim() != nu {
            return Err(Error::Dimension(format!(
                "input boxes must have dimension {nu}"
            )));
        }
        Ok(Self { model, horizon, q, r, s, q_bar, target, u_box, du_box })
    }

    pub fn model(&self) -> &OpomModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn q_bar(&self) -> &DMatrix<f64> {
        &self.q_bar
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
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
        let n = m * nu + ny;

        // Powers of the decay matrix up to F^m.
        let mut fpow = Vec::with_capacity(m + 1);
        fpow.push(DMatrix::identity(nd, nd));
        for j in 1..=m {
            fpow.push(&fpow[j - 1] * self.model.f());
        }
        // Move-to-error blocks T(l) = D0 + Psi F^l Dd.
        let tblk: Vec<DMatrix<f64>> = (0..m)
            .map(|l| self.model.d0() + self.model.psi() * &fpow[l] * self.model.dd())
            .collect();

        let mut p = DMatrix::zeros(n, n);
        let mut qv = DVector::zeros(n);
        let mut offset = 0.0;

        // Tracking terms: one per predicted output over the move horizon.
        for j in 0..m {
            let mut ej = DMatrix::zeros(ny, n);
            for i in 0..=j {
                ej.view_mut((0, i * nu), (ny, nu)).copy_from(&tblk[j - i]);
            }
            ej.view_mut((0, m * nu), (ny, ny))
                .copy_from(&(-DMatrix::<f64>::identity(ny, ny)));
            let cj = (&state.xs - &self.target) + self.model.psi() * &fpow[j + 1] * &state.xd;
            let qe = &self.q * &ej;
            p += ej.transpose() * &qe * 2.0;
            qv += qe.transpose() * &cj * 2.0;
            offset += (&self.q * &cj).dot(&cj);
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

        // Move and slack penalties.
        let r2 = &self.r * 2.0;
        for i in 0..m {
            let mut blk = p.view_mut((i * nu, i * nu), (nu, nu));
            blk += &r2;
        }
        {
            let mut blk = p.view_mut((m * nu, m * nu), (ny, ny));
            blk += &self.s * 2.0;
        }
        let pt = p.transpose();
        p = (p + pt) * 0.5;

        // Terminal tracking equality: the steady output lands on the slacked
        // target, which is what makes the infinite tail summable.
        let mut a_eq = DMatrix::zeros(ny, n);
        for i in 0..m {
            a_eq.view_mut((0, i * nu), (ny, nu)).copy_from(self.model.d0());
        }
        a_eq.view_mut((0, m * nu), (ny, ny))
            .copy_from(&(-DMatrix::<f64>::identity(ny, ny)));
        let b_eq = &self.target - &state.xs;

        // Per-move boxes, then cumulative input-level boxes.
        let mut a_ineq = DMatrix::zeros(2 * m * nu, n);
        let mut lo = DVector::zeros(2 * m * nu);
        let mut hi = DVector::zeros(2 * m * nu);
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

        Ok(AssembledQp {
            qp: QuadProgram { p, q: qv, a_eq, b_eq, a_ineq, lo, hi },
            offset,
        })
    }

    /// Assembles and solves the per-step program.
    pub fn solve_step(&self, state: &PlantState) -> Result<SetpointSolution> {
        let asm = self.assemble(state)?;
        let sol = qp::solve(&asm.qp)?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                return Err(Error::Infeasible(
                    "no move plan satisfies the input boxes".into(),
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
        let delta = sol.z.rows(m * nu, ny).into_owned();
        let e0 = (&state.xs - &self.target)
            + self.model.psi() * (self.model.f() * &state.xd + self.model.dd() * &du[0])
            + self.model.d0() * &du[0];
        Ok(SetpointSolution {
            du,
            delta,
            v_star: sol.objective + asm.offset,
            kkt_residual: sol.kkt_residual,
            e0,
        })
    }

    /// Evaluates the cost of an arbitrary candidate by simulating the model
    /// forward, sharing nothing with [`SetpointSpec::assemble`].
    pub fn cost_of(
        &self,
        state: &PlantState,
        moves: &[DVector<f64>],
        delta: &DVector<f64>,
    ) -> Result<f64> {
        if moves.len() != self.horizon {
            return Err(Error::Invalid(format!(
                "candidate has {} moves, expected {}",
                moves.len(),
                self.horizon
            )));
        }
        if delta.len() != self.model.ny() {
            return Err(Error::Dimension(format!(
                "slack has {} entries, expected {}",
                delta.len(),
                self.model.ny()
            )));
        }
        let pred = self.model.predict(state, moves)?;
        let mut v = 0.0;
        for y in &pred.y {
            let dev = y - &self.target - delta;
            v += (&self.q * &dev).dot(&dev);
        }
        let xdm = &pred.xd[self.horizon - 1];
        v += (&self.q_bar * xdm).dot(xdm);
        for du in moves {
            v += (&self.r * du).dot(du);
        }
        v += (&self.s * delta).dot(delta);
        Ok(v)
    }

    /// Whether a candidate satisfies the boxes and the terminal tracking
    /// equality at a state.
    pub fn candidate_is_feasible(
        &self,
        state: &PlantState,
        moves: &[DVector<f64>],
        delta: &DVector<f64>,
        tol: f64,
    ) -> bool {
        if moves.len() != self.horizon {
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
        let resid = (&steady - delta - &self.target).amax();
        resid <= tol * (1.0 + self.target.amax())
    }

    /// The standard warm-start candidate for the *next* state: drop the
    /// executed move, append a zero move, keep the slack.
    pub fn shifted_candidate(
        &self,
        sol: &SetpointSolution,
    ) -> (Vec<DVector<f64>>, DVector<f64>) {
        let mut moves: Vec<DVector<f64>> = sol.du[1..].to_vec();
        moves.push(DVector::zeros(self.model.nu()));
        (moves, sol.delta.clone())
    }

    /// Cost decrease the shifted candidate realizes exactly:
    /// `‖e(0) - δ‖²_Q + ‖Δu(0)‖²_R`.
    pub fn stage_decrease(&self, sol: &SetpointSolution) -> f64 {
        let dev = &sol.e0 - &sol.delta;
        (&self.q * &dev).dot(&dev) + (&self.r * &sol.du[0]).dot(&sol.du[0])
    }

    /// Cost of freezing the input: all moves zero, slack absorbing the
    /// whole tracking error. Evaluates to `‖F x_d‖²_G + ‖x_s - target‖²_S`
    /// with `G` the tail Gram.
    pub fn null_candidate_cost(&self, state: &PlantState) -> Result<f64> {
        self.check_state(state)?;
        let g = self.model.psi().transpose() * &self.q * self.model.psi() + &self.q_bar;
        let w = self.model.f() * &state.xd;
        let miss = &state.xs - &self.target;
        Ok((&g * &w).dot(&w) + (&self.s * &miss).dot(&miss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn scalar_spec(du_half: f64) -> SetpointSpec {
        SetpointSpec::new(
            static_scalar_model(),
            1,
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            DMatrix::zeros(0, 0),
            dvector![1.0],
            Rectangle::symmetric(1, 2.0).unwrap(),
            Rectangle::symmetric(1, du_half).unwrap(),
        )
        .unwrap()
    }

    fn first_order_model() -> OpomModel {
        // Pole 0.5 with unit residue on the single channel, steady gain 1.
        OpomModel::from_modes(
            1,
            1,
            dmatrix![1.0],
            &[Mode {
                pole_re: 0.5,
                pole_im: 0.0,
                residue_re: 1.0,
                residue_im: 0.0,
                output_index: 0,
                input_index: 0,
            }],
        )
        .unwrap()
    }

    fn first_order_spec() -> SetpointSpec {
        let model = first_order_model();
        let q_bar =
            crate::certificates::terminal_weight(model.f(), model.psi(), &dmatrix![1.0]).unwrap();
        SetpointSpec::new(
            model,
            3,
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![5.0],
            q_bar,
            dvector![1.0],
            Rectangle::symmetric(1, 2.0).unwrap(),
            Rectangle::symmetric(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_move_program_matches_hand_solution() {
        let spec = scalar_spec(2.0);
        let sol = spec.solve_step(&spec.model().origin()).unwrap();
        assert_relative_eq!(sol.du[0][0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(sol.delta[0], -0.5, epsilon = 1e-9);
        assert_relative_eq!(sol.v_star, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn clamped_move_shifts_cost_to_the_slack() {
        let spec = scalar_spec(0.3);
        let sol = spec.solve_step(&spec.model().origin()).unwrap();
        assert_relative_eq!(sol.du[0][0], 0.3, epsilon = 1e-9);
        assert_relative_eq!(sol.delta[0], -0.7, epsilon = 1e-9);
        assert_relative_eq!(sol.v_star, 0.58, epsilon = 1e-9);
    }

    #[test]
    fn simulated_cost_agrees_with_the_program_objective() {
        let spec = first_order_spec();
        let sol = spec.solve_step(&spec.model().origin()).unwrap();
        let direct = spec
            .cost_of(&spec.model().origin(), &sol.du, &sol.delta)
            .unwrap();
        assert_relative_eq!(direct, sol.v_star, epsilon = 1e-9);
        assert!(spec.candidate_is_feasible(&spec.model().origin(), &sol.du, &sol.delta, 1e-8));
    }

    #[test]
    fn shifted_candidate_realizes_the_stage_decrease() {
        let spec = first_order_spec();
        let state = spec.model().origin();
        let sol = spec.solve_step(&state).unwrap();
        let next = spec.model().step(&state, &sol.du[0]).unwrap();
        let (moves, delta) = spec.shifted_candidate(&sol);
        assert!(spec.candidate_is_feasible(&next, &moves, &delta, 1e-8));
        let shifted_cost = spec.cost_of(&next, &moves, &delta).unwrap();
        let expect = sol.v_star - spec.stage_decrease(&sol);
        assert_relative_eq!(shifted_cost, expect, epsilon = 1e-9);
    }

    #[test]
    fn null_candidate_cost_matches_the_simulated_route() {
        let spec = first_order_spec();
        // A state away from the origin with a live transient.
        let state = PlantState {
            xs: dvector![0.4],
            xd: dvector![0.3],
            u: dvector![0.4],
        };
        let zeros = vec![DVector::zeros(1); 3];
        let delta = &state.xs - spec.target();
        let direct = spec.cost_of(&state, &zeros, &delta).unwrap();
        let compact = spec.null_candidate_cost(&state).unwrap();
        assert_relative_eq!(direct, compact, epsilon = 1e-10);
    }

    #[test]
    fn optimum_never_exceeds_the_null_candidate() {
        let spec = first_order_spec();
        let state = PlantState {
            xs: dvector![0.4],
            xd: dvector![0.3],
            u: dvector![0.4],
        };
        let sol = spec.solve_step(&state).unwrap();
        assert!(sol.v_star <= spec.null_candidate_cost(&state).unwrap() + 1e-10);
    }

    #[test]
    fn rejects_semidefinite_move_weights() {
        let err = SetpointSpec::new(
            static_scalar_model(),
            1,
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![1.0],
            DMatrix::zeros(0, 0),
            dvector![1.0],
            Rectangle::symmetric(1, 2.0).unwrap(),
            Rectangle::symmetric(1, 1.0).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)));
    }
}
