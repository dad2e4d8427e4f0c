//! Step-response plant models in incremental form.
//!
//! The state splits into an integrating part `x_s` that accumulates the
//! steady-state effect of input moves and a strictly stable transient `x_d`:
//!
//! ```text
//! x_s(k+1) = x_s(k) + D0 du(k+1)
//! x_d(k+1) = F x_d(k) + Dd du(k+1)
//! y(k)     = x_s(k) + Psi x_d(k)
//! ```
//!
//! `F` collects the step-response poles. Complex poles are realified into
//! 2x2 rotation-scaling blocks so all arithmetic stays in `f64`; a model
//! built from [`Mode`]s reproduces the complex-arithmetic recursion exactly
//! (see the realification tests). `nd = 0` (pure integrators) is a valid
//! degenerate case: `F`, `Dd`, `Psi` are then empty and `y = x_s`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One pole of a step response, assigned to a single output/input channel.
///
/// A complex pole stands for the conjugate pair; supply it once (either sign
/// of the imaginary part, the pair is normalized internally). The residue
/// scales the channel's modal response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub pole_re: f64,
    pub pole_im: f64,
    pub residue_re: f64,
    pub residue_im: f64,
    pub output_index: usize,
    pub input_index: usize,
}

/// Plant state: integrating component, stable transient, and the input level
/// the next move is taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub xs: DVector<f64>,
    pub xd: DVector<f64>,
    pub u: DVector<f64>,
}

/// Predicted trajectory for a move sequence; entry `j` is the state reached
/// after moves `0..=j` have been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub xs: Vec<DVector<f64>>,
    pub xd: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpomModel {
    ny: usize,
    nu: usize,
    nd: usize,
    f: DMatrix<f64>,
    d0: DMatrix<f64>,
    dd: DMatrix<f64>,
    psi: DMatrix<f64>,
}

/// Largest eigenvalue magnitude of a square matrix; 0 for the empty matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

impl OpomModel {
    /// Builds a model from explicit matrices. `f` must be strictly stable.
    pub fn new(
        f: DMatrix<f64>,
        d0: DMatrix<f64>,
        dd: DMatrix<f64>,
        psi: DMatrix<f64>,
    ) -> Result<Self> {
        let (ny, nu) = d0.shape();
        let nd = f.nrows();
        if f.ncols() != nd {
            return Err(Error::Dimension(format!(
                "F must be square, got {}x{}",
                f.nrows(),
                f.ncols()
            )));
        }
        if dd.shape() != (nd, nu) {
            return Err(Error::Dimension(format!(
                "Dd must be {}x{}, got {}x{}",
                nd,
                nu,
                dd.nrows(),
                dd.ncols()
            )));
        }
        if psi.shape() != (ny, nd) {
            return Err(Error::Dimension(format!(
                "Psi must be {}x{}, got {}x{}",
                ny,
                nd,
                psi.nrows(),
                psi.ncols()
            )));
        }
        let rho = spectral_radius(&f);
        if rho >= 1.0 {
            return Err(Error::Unstable(rho));
        }
        Ok(Self { ny, nu, nd, f, d0, dd, psi })
    }

    /// Builds the realified model from per-channel modes.
    ///
    /// Real pole `p`: a 1x1 block `p` in `F`, a unit drive entry in `Dd`, and
    /// the residue in `Psi`. Complex pole `a + bi` with residue `rho`: the
    /// block `[[a, b], [-b, a]]`, drive pattern `[1; 0]`, and `Psi` entries
    /// `[2 Re rho, -2 Im rho]`, which reproduces the conjugate-pair response
    /// `2 Re(conj(rho) w)` for `w(k+1) = p w(k) + du`.
    pub fn from_modes(ny: usize, nu: usize, d0: DMatrix<f64>, modes: &[Mode]) -> Result<Self> {
        if d0.shape() != (ny, nu) {
            return Err(Error::Dimension(format!(
                "D0 must be {}x{}, got {}x{}",
                ny,
                nu,
                d0.nrows(),
                d0.ncols()
            )));
        }
        let mut nd = 0;
        for (idx, mode) in modes.iter().enumerate() {
            let mag = (mode.pole_re * mode.pole_re + mode.pole_im * mode.pole_im).sqrt();
            if mag >= 1.0 {
                return Err(Error::UnstableMode { index: idx, magnitude: mag });
            }
            if mode.output_index >= ny || mode.input_index >= nu {
                return Err(Error::Dimension(format!(
                    "mode {idx} addresses channel ({}, {}) outside {}x{}",
                    mode.output_index, mode.input_index, ny, nu
                )));
            }
            if mode.pole_im == 0.0 && mode.residue_im != 0.0 {
                return Err(Error::Invalid(format!(
                    "mode {idx}: real pole with complex residue"
                )));
            }
            nd += if mode.pole_im == 0.0 { 1 } else { 2 };
        }
        let mut f = DMatrix::zeros(nd, nd);
        let mut dd = DMatrix::zeros(nd, nu);
        let mut psi = DMatrix::zeros(ny, nd);
        let mut s = 0;
        for mode in modes {
            let (o, i) = (mode.output_index, mode.input_index);
            if mode.pole_im == 0.0 {
                f[(s, s)] = mode.pole_re;
                dd[(s, i)] = 1.0;
                psi[(o, s)] = mode.residue_re;
                s += 1;
            } else {
                // Conjugating pole and residue together describes the same
                // pair; normalize to a positive imaginary part.
                let sign = if mode.pole_im > 0.0 { 1.0 } else { -1.0 };
                let (a, b) = (mode.pole_re, sign * mode.pole_im);
                let (rr, ri) = (mode.residue_re, sign * mode.residue_im);
                f[(s, s)] = a;
                f[(s, s + 1)] = b;
                f[(s + 1, s)] = -b;
                f[(s + 1, s + 1)] = a;
                dd[(s, i)] = 1.0;
                psi[(o, s)] = 2.0 * rr;
                psi[(o, s + 1)] = -2.0 * ri;
                s += 2;
            }
        }
        Self::new(f, d0, dd, psi)
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn nd(&self) -> usize {
        self.nd
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn d0(&self) -> &DMatrix<f64> {
        &self.d0
    }

    pub fn dd(&self) -> &DMatrix<f64> {
        &self.dd
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// Origin steady state (zero output, zero transient, zero input level).
    pub fn origin(&self) -> PlantState {
        PlantState {
            xs: DVector::zeros(self.ny),
            xd: DVector::zeros(self.nd),
            u: DVector::zeros(self.nu),
        }
    }

    fn check_state(&self, state: &PlantState) -> Result<()> {
        if state.xs.len() != self.ny || state.xd.len() != self.nd || state.u.len() != self.nu {
            return Err(Error::Dimension(format!(
                "state dims ({}, {}, {}) do not match model ({}, {}, {})",
                state.xs.len(),
                state.xd.len(),
                state.u.len(),
                self.ny,
                self.nd,
                self.nu
            )));
        }
        Ok(())
    }

    /// Applies one input move.
    pub fn step(&self, state: &PlantState, du: &DVector<f64>) -> Result<PlantState> {
        self.check_state(state)?;
        if du.len() != self.nu {
            return Err(Error::Dimension(format!(
                "move of length {} for {} inputs",
                du.len(),
                self.nu
            )));
        }
        Ok(PlantState {
            xs: &state.xs + &self.d0 * du,
            xd: &self.f * &state.xd + &self.dd * du,
            u: &state.u + du,
        })
    }

    /// Measured output at a state.
    pub fn output(&self, state: &PlantState) -> Result<DVector<f64>> {
        self.check_state(state)?;
        Ok(&state.xs + &self.psi * &state.xd)
    }

    /// Open-loop prediction: iterated [`OpomModel::step`] over the move
    /// sequence, recording each intermediate state and output.
    pub fn predict(&self, state: &PlantState, moves: &[DVector<f64>]) -> Result<Prediction> {
        self.check_state(state)?;
        let mut pred = Prediction {
            xs: Vec::with_capacity(moves.len()),
            xd: Vec::with_capacity(moves.len()),
            y: Vec::with_capacity(moves.len()),
            u: Vec::with_capacity(moves.len()),
        };
        let mut cur = state.clone();
        for du in moves {
            cur = self.step(&cur, du)?;
            pred.y.push(self.output(&cur)?);
            pred.xs.push(cur.xs.clone());
            pred.xd.push(cur.xd.clone());
            pred.u.push(cur.u.clone());
        }
        Ok(pred)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_model() -> OpomModel {
        OpomModel::new(
            dmatrix![0.5],
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
        )
        .unwrap()
    }

    #[test]
    fn from_modes_real_pole() {
        let m = OpomModel::from_modes(
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
        .unwrap();
        assert_eq!(m.nd(), 1);
        assert_eq!(m.f()[(0, 0)], 0.5);
        assert_eq!(m.dd()[(0, 0)], 1.0);
        assert_eq!(m.psi()[(0, 0)], 1.0);
    }

    #[test]
    fn from_modes_complex_pair() {
        let m = OpomModel::from_modes(
            1,
            1,
            dmatrix![1.0],
            &[Mode {
                pole_re: 0.3,
                pole_im: 0.4,
                residue_re: 1.0,
                residue_im: 0.0,
                output_index: 0,
                input_index: 0,
            }],
        )
        .unwrap();
        assert_eq!(m.nd(), 2);
        let expect = dmatrix![0.3, 0.4; -0.4, 0.3];
        assert_eq!(m.f(), &expect);
        assert_relative_eq!(spectral_radius(m.f()), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn from_modes_rejects_bad_input() {
        let unstable = Mode {
            pole_re: 1.0,
            pole_im: 0.0,
            residue_re: 1.0,
            residue_im: 0.0,
            output_index: 0,
            input_index: 0,
        };
        assert!(matches!(
            OpomModel::from_modes(1, 1, dmatrix![1.0], &[unstable]),
            Err(Error::UnstableMode { .. })
        ));
        let out_of_range = Mode { pole_re: 0.5, output_index: 2, ..unstable };
        assert!(matches!(
            OpomModel::from_modes(1, 1, dmatrix![1.0], &[out_of_range]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn empty_mode_list_gives_pure_integrator() {
        let m = OpomModel::from_modes(2, 1, dmatrix![1.0; 2.0], &[]).unwrap();
        assert_eq!(m.nd(), 0);
        let s = m.origin();
        let y = m.output(&s).unwrap();
        assert_eq!(y, dvector![0.0, 0.0]);
    }

    #[test]
    fn step_matches_hand_computation() {
        let m = scalar_model();
        let s = PlantState { xs: dvector![0.0], xd: dvector![1.0], u: dvector![0.0] };
        assert_relative_eq!(m.output(&s).unwrap()[0], 1.0);
        let next = m.step(&s, &dvector![0.2]).unwrap();
        assert_relative_eq!(next.xs[0], 0.2);
        assert_relative_eq!(next.xd[0], 0.7);
        assert_relative_eq!(next.u[0], 0.2);
        assert_relative_eq!(m.output(&next).unwrap()[0], 0.9);
    }

    #[test]
    fn zero_move_leaves_integrator_fixed() {
        let m = scalar_model();
        let s = PlantState { xs: dvector![0.4], xd: dvector![0.8], u: dvector![0.1] };
        let next = m.step(&s, &dvector![0.0]).unwrap();
        assert_eq!(next.xs[0], 0.4);
        assert_eq!(next.u[0], 0.1);
        assert_relative_eq!(next.xd[0], 0.4);
    }

    #[test]
    fn predict_is_iterated_step() {
        let m = scalar_model();
        let s = PlantState { xs: dvector![0.1], xd: dvector![-0.3], u: dvector![0.2] };
        let moves = [dvector![0.2], dvector![-0.1], dvector![0.05]];
        let pred = m.predict(&s, &moves).unwrap();
        let mut cur = s;
        for (j, mv) in moves.iter().enumerate() {
            cur = m.step(&cur, mv).unwrap();
            assert_eq!(pred.xs[j], cur.xs);
            assert_eq!(pred.xd[j], cur.xd);
            assert_eq!(pred.u[j], cur.u);
            assert_eq!(pred.y[j], m.output(&cur).unwrap());
        }
    }

    #[test]
    fn rejects_dimension_mismatches() {
        let m = scalar_model();
        let bad = PlantState { xs: dvector![0.0, 0.0], xd: dvector![0.0], u: dvector![0.0] };
        assert!(m.output(&bad).is_err());
        let s = m.origin();
        assert!(m.step(&s, &dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_unstable_f() {
        let err = OpomModel::new(dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0]);
        assert!(matches!(err, Err(Error::Unstable(_))));
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&DMatrix::zeros(0, 0)), 0.0);
        assert_relative_eq!(
            spectral_radius(&dmatrix![0.5, 0.0; 0.0, -0.7]),
            0.7,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            spectral_radius(&dmatrix![0.3, 0.4; -0.4, 0.3]),
            0.5,
            max_relative = 1e-10
        );
    }
}
