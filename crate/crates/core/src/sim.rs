//! Closed-loop simulation and trace analysis.
//!
//! [`run_closed_loop`] applies either controller in receding-horizon
//! fashion — solve, apply the first move, advance the plant — and records
//! everything a later audit needs. [`analyze`] then works from the trace
//! alone: it recomputes the cost of every recorded plan by forward
//! simulation, checks that the optimal cost decreased by at least the stage
//! amount each step, and evaluates the closed-form upper bounds. Nothing in
//! the analysis re-solves a program, so it doubles as an independent check
//! of stored traces.

use std::time::Instant;

use nalgebra::DVector;

use crate::certificates::{kernel_decomposition, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::model::{OpomModel, PlantState};
use crate::setpoint::{SetpointSpec, SetpointSolution};
use crate::zone::{ZoneSpec, ZoneSolution};

/// Either controller, frozen for a run.
#[derive(Debug, Clone)]
pub enum ControllerSpec {
    Setpoint(SetpointSpec),
    Zone(ZoneSpec),
}

/// Per-step slack variables, matching the controller kind.
#[derive(Debug, Clone)]
pub enum StepSlacks {
    Setpoint {
        delta: DVector<f64>,
    },
    Zone {
        y_sp: DVector<f64>,
        delta_y: DVector<f64>,
        delta_u: DVector<f64>,
    },
}

/// Everything recorded about one closed-loop step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub state_before: PlantState,
    /// Measured output before the move applies.
    pub y: DVector<f64>,
    /// The full optimized move plan; only the first entry is applied.
    pub du: Vec<DVector<f64>>,
    pub slacks: StepSlacks,
    pub v_star: f64,
    pub kkt_residual: f64,
    /// Seconds spent in the step program (zero for replayed traces).
    pub wall_time: f64,
}

/// A completed (or failed) run: controller snapshot, initial state, one
/// record per step, and the state reached.
#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    pub controller: ControllerSpec,
    pub initial: PlantState,
    pub records: Vec<StepRecord>,
    pub final_state: PlantState,
}

/// A failed run, carrying whatever completed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("closed loop failed at step {step}: {source}")]
pub struct ClosedLoopError {
    pub step: usize,
    pub partial: ClosedLoopTrace,
    pub source: Error,
}

impl ControllerSpec {
    pub fn model(&self) -> &OpomModel {
        match self {
            Self::Setpoint(s) => s.model(),
            Self::Zone(z) => z.model(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Self::Setpoint(s) => s.horizon(),
            Self::Zone(z) => z.horizon(),
        }
    }

    fn solve_at(&self, state: &PlantState) -> Result<(Vec<DVector<f64>>, StepSlacks, f64, f64)> {
        match self {
            Self::Setpoint(s) => {
                let SetpointSolution { du, delta, v_star, kkt_residual, .. } =
                    s.solve_step(state)?;
                Ok((du, StepSlacks::Setpoint { delta }, v_star, kkt_residual))
            }
            Self::Zone(z) => {
                let ZoneSolution {
                    du,
                    y_sp,
                    delta_y,
                    delta_u,
                    v_star,
                    kkt_residual,
                    ..
                } = z.solve_step(state)?;
                Ok((
                    du,
                    StepSlacks::Zone { y_sp, delta_y, delta_u },
                    v_star,
                    kkt_residual,
                ))
            }
        }
    }

    /// Cost of a recorded plan, by forward simulation.
    pub fn plan_cost(
        &self,
        state: &PlantState,
        du: &[DVector<f64>],
        slacks: &StepSlacks,
    ) -> Result<f64> {
        match (self, slacks) {
            (Self::Setpoint(s), StepSlacks::Setpoint { delta }) => s.cost_of(state, du, delta),
            (Self::Zone(z), StepSlacks::Zone { y_sp, delta_y, delta_u }) => {
                z.cost_of(state, du, y_sp, delta_y, delta_u)
            }
            _ => Err(Error::Invalid(
                "slack kind does not match the controller kind".into(),
            )),
        }
    }

    /// Stage decrease implied by a record, recomputed from the stored state
    /// and plan.
    pub fn record_stage_decrease(&self, rec: &StepRecord) -> Result<f64> {
        let model = self.model();
        let du0 = &rec.du[0];
        let state = &rec.state_before;
        match (self, &rec.slacks) {
            (Self::Setpoint(s), StepSlacks::Setpoint { delta }) => {
                let e0 = (&state.xs - s.target())
                    + model.psi() * (model.f() * &state.xd + model.dd() * du0)
                    + model.d0() * du0;
                let dev = e0 - delta;
                Ok((s.q() * &dev).dot(&dev) + (s.r() * du0).dot(du0))
            }
            (Self::Zone(z), StepSlacks::Zone { y_sp, delta_y, delta_u }) => {
                let y1 = &state.xs
                    + model.d0() * du0
                    + model.psi() * (model.f() * &state.xd + model.dd() * du0);
                let fod = y1 - y_sp - delta_y;
                let fid = &state.u + du0 - z.u_des() - delta_u;
                Ok((z.qy() * &fod).dot(&fod)
                    + (z.qu() * &fid).dot(&fid)
                    + (z.r() * du0).dot(du0))
            }
            _ => Err(Error::Invalid(
                "slack kind does not match the controller kind".into(),
            )),
        }
    }
}

/// Runs `steps` closed-loop iterations from `initial`. On a step failure the
/// error carries the partial trace.
pub fn run_closed_loop(
    controller: &ControllerSpec,
    initial: &PlantState,
    steps: usize,
) -> std::result::Result<ClosedLoopTrace, Box<ClosedLoopError>> {
    let model = controller.model();
    let mut records = Vec::with_capacity(steps);
    let mut state = initial.clone();
    for k in 0..steps {
        let started = Instant::now();
        let step = (|| -> Result<(StepRecord, PlantState)> {
            let y = model.output(&state)?;
            let (du, slacks, v_star, kkt_residual) = controller.solve_at(&state)?;
            let next = model.step(&state, &du[0])?;
            let rec = StepRecord {
                state_before: state.clone(),
                y,
                du,
                slacks,
                v_star,
                kkt_residual,
                wall_time: started.elapsed().as_secs_f64(),
            };
            Ok((rec, next))
        })();
        match step {
            Ok((rec, next)) => {
                records.push(rec);
                state = next;
            }
            Err(source) => {
                return Err(Box::new(ClosedLoopError {
                    step: k,
                    partial: ClosedLoopTrace {
                        controller: controller.clone(),
                        initial: initial.clone(),
                        records,
                        final_state: state,
                    },
                    source,
                }))
            }
        }
    }
    Ok(ClosedLoopTrace {
        controller: controller.clone(),
        initial: initial.clone(),
        records,
        final_state: state,
    })
}

/// Controller-specific convergence figures, all taken from the last record.
#[derive(Debug, Clone)]
pub enum ControllerReport {
    Setpoint {
        /// Norm of the component of the total planned move that still
        /// changes the steady output; vanishes at convergence.
        final_plan_visible_norm: f64,
        final_slack_norm: f64,
    },
    Zone {
        /// Norm of the total planned move; vanishes at convergence.
        final_plan_norm: f64,
        final_output_slack_norm: f64,
        final_input_slack_norm: f64,
        /// Distance of the reached input level from the desired one.
        final_input_error: f64,
    },
}

/// Trace audit: recorded costs against replayed plans, step decrease, and
/// the closed-form upper bound.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub steps: usize,
    pub v_final: f64,
    /// Worst positive jump `(V_{k+1} - V_k) / (1 + V_k)`.
    pub monotone_max_violation: f64,
    /// Worst violation of `V_{k+1} <= V_k - stage decrease`, normalized.
    pub decrease_max_violation: f64,
    /// Worst relative gap between a recorded cost and the simulated cost of
    /// its own plan.
    pub plan_cost_max_err: f64,
    /// Closed-form resting bound on every cost along an origin-started run.
    pub upper_bound: f64,
    /// Worst positive excess of a recorded cost over the bound.
    pub upper_bound_max_excess: f64,
    /// Whether the bound argument applies (origin start and, for zones, a
    /// resting output inside the zone).
    pub upper_bound_applicable: bool,
    /// `‖F x_d + Dd Δu(0)‖` at the last record: the transient remaining
    /// after the final applied move.
    pub final_transient_norm: f64,
    pub detail: ControllerReport,
}

fn is_origin(state: &PlantState) -> bool {
    state.xs.amax() <= 1e-12 && state.xd.amax() <= 1e-12 && state.u.amax() <= 1e-12
}

/// Audits a trace. Costs are recomputed by forward simulation only; no
/// program is re-solved.
pub fn analyze(trace: &ClosedLoopTrace) -> Result<AnalysisReport> {
    if trace.records.is_empty() {
        return Err(Error::Invalid("trace has no records to analyze".into()));
    }
    let ctrl = &trace.controller;
    let model = ctrl.model();
    let records = &trace.records;

    let mut monotone = 0.0f64;
    let mut decrease = 0.0f64;
    let mut plan_err = 0.0f64;
    for (k, rec) in records.iter().enumerate() {
        let replayed = ctrl.plan_cost(&rec.state_before, &rec.du, &rec.slacks)?;
        let gap = (replayed - rec.v_star).abs() / (1.0 + rec.v_star.abs());
        plan_err = plan_err.max(gap);
        if k + 1 < records.len() {
            let v = rec.v_star;
            let v_next = records[k + 1].v_star;
            monotone = monotone.max((v_next - v) / (1.0 + v));
            let dec = ctrl.record_stage_decrease(rec)?;
            decrease = decrease.max((v_next - (v - dec)) / (1.0 + v));
        }
    }

    let (upper_bound, bound_candidate_ok) = match ctrl {
        ControllerSpec::Setpoint(s) => {
            let t = s.target();
            ((s.s() * t).dot(t), true)
        }
        ControllerSpec::Zone(z) => {
            let rest_y = model.d0() * z.u_des();
            let bound = (z.sy() * &rest_y).dot(&rest_y) + (z.su() * z.u_des()).dot(z.u_des());
            (bound, z.y_zone().contains(&rest_y, 0.0))
        }
    };
    let upper_bound_applicable = is_origin(&trace.initial) && bound_candidate_ok;
    let mut excess = 0.0f64;
    for rec in records {
        excess = excess.max(rec.v_star - upper_bound);
    }

    let last = records.last().expect("checked nonempty");
    let final_transient =
        model.f() * &last.state_before.xd + model.dd() * &last.du[0];
    let total_plan: DVector<f64> = last
        .du
        .iter()
        .fold(DVector::zeros(model.nu()), |acc, d| acc + d);

    let detail = match (ctrl, &last.slacks) {
        (ControllerSpec::Setpoint(_), StepSlacks::Setpoint { delta }) => {
            let dec = kernel_decomposition(model.d0(), DEFAULT_RANK_TOL)?;
            let visible = dec.row_space.transpose() * &total_plan;
            ControllerReport::Setpoint {
                final_plan_visible_norm: visible.norm(),
                final_slack_norm: delta.norm(),
            }
        }
        (ControllerSpec::Zone(z), StepSlacks::Zone { delta_y, delta_u, .. }) => {
            let reached = &last.state_before.u + &last.du[0];
            ControllerReport::Zone {
                final_plan_norm: total_plan.norm(),
                final_output_slack_norm: delta_y.norm(),
                final_input_slack_norm: delta_u.norm(),
                final_input_error: (reached - z.u_des()).norm(),
            }
        }
        _ => {
            return Err(Error::Invalid(
                "slack kind does not match the controller kind".into(),
            ))
        }
    };

    Ok(AnalysisReport {
        steps: records.len(),
        v_final: last.v_star,
        monotone_max_violation: monotone,
        decrease_max_violation: decrease,
        plan_cost_max_err: plan_err,
        upper_bound,
        upper_bound_max_excess: excess,
        upper_bound_applicable,
        final_transient_norm: final_transient.norm(),
        detail,
    })
}

/// One point of a reference-scaling sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub scale: f64,
    /// Peak recorded cost divided by the squared scale.
    pub peak_gain: f64,
    pub v_final: f64,
}

/// Runs the setpoint loop from the origin once per scale with the target
/// shrunk by that factor, keeping every weight fixed. The normalized peak
/// costs expose how the loop behaves as references get small.
pub fn stability_sweep(
    spec: &SetpointSpec,
    scales: &[f64],
    steps: usize,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(scales.len());
    for &scale in scales {
        if scale.is_nan() || scale <= 0.0 {
            return Err(Error::Invalid(format!(
                "sweep scales must be positive, got {scale}"
            )));
        }
        let scaled = SetpointSpec::new(
            spec.model().clone(),
            spec.horizon(),
            spec.q().clone(),
            spec.r().clone(),
            spec.s().clone(),
            spec.q_bar().clone(),
            spec.target() * scale,
            spec.u_box().clone(),
            spec.du_box().clone(),
        )?;
        let ctrl = ControllerSpec::Setpoint(scaled);
        let trace = run_closed_loop(&ctrl, &spec.model().origin(), steps)
            .map_err(|e| e.source.clone())?;
        let peak = trace
            .records
            .iter()
            .map(|r| r.v_star)
            .fold(0.0f64, f64::max);
        let v_final = trace.records.last().map_or(0.0, |r| r.v_star);
        out.push(SweepPoint {
            scale,
            peak_gain: peak / (scale * scale),
            v_final,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::terminal_weight;
    use crate::model::Mode;
    use crate::rect::Rectangle;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn tracking_controller() -> ControllerSpec {
        let model = OpomModel::from_modes(
            1,
            1,
            dmatrix![1.0],
            &[Mode {
                pole_re: 0.5,
                pole_im: 0.0,
                residue_re: 0.5,
                residue_im: 0.0,
                output_index: 0,
                input_index: 0,
            }],
        )
        .unwrap();
        let q_bar = terminal_weight(model.f(), model.psi(), &dmatrix![1.0]).unwrap();
        ControllerSpec::Setpoint(
            SetpointSpec::new(
                model,
                3,
                dmatrix![1.0],
                dmatrix![1.0],
                dmatrix![10.0],
                q_bar,
                dvector![1.0],
                Rectangle::symmetric(1, 2.0).unwrap(),
                Rectangle::symmetric(1, 1.0).unwrap(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn closed_loop_converges_and_passes_its_own_audit() {
        let ctrl = tracking_controller();
        let trace = run_closed_loop(&ctrl, &ctrl.model().origin(), 60).unwrap();
        assert_eq!(trace.records.len(), 60);
        let report = analyze(&trace).unwrap();
        assert!(report.v_final <= 1e-8, "final cost {}", report.v_final);
        assert!(report.monotone_max_violation <= 1e-9);
        assert!(report.decrease_max_violation <= 1e-9);
        assert!(report.plan_cost_max_err <= 1e-9);
        assert!(report.upper_bound_applicable);
        assert!(report.upper_bound_max_excess <= 1e-9);
        assert!(report.final_transient_norm <= 1e-6);
    }

    #[test]
    fn audit_flags_a_tampered_cost() {
        let ctrl = tracking_controller();
        let mut trace = run_closed_loop(&ctrl, &ctrl.model().origin(), 20).unwrap();
        trace.records[5].v_star += 1e-3;
        let report = analyze(&trace).unwrap();
        assert!(
            report.plan_cost_max_err > 1e-4,
            "tamper went unnoticed: {}",
            report.plan_cost_max_err
        );
    }

    #[test]
    fn sweep_gains_stay_comparable_across_scales() {
        let ctrl = tracking_controller();
        let ControllerSpec::Setpoint(spec) = &ctrl else { unreachable!() };
        let points = stability_sweep(spec, &[1.0, 0.1, 0.01], 40).unwrap();
        let base = points[0].peak_gain;
        for p in &points {
            assert!(p.peak_gain <= 1.5 * base + 1e-9, "scale {}: {}", p.scale, p.peak_gain);
            assert!(p.v_final <= 1e-6 * p.scale * p.scale + 1e-15);
        }
    }

    #[test]
    fn infeasible_step_reports_the_partial_trace() {
        // A zone whose desired input sits at the box edge while the level
        // box around the current input is violated from the start: force a
        // state outside the admissible input set.
        let model = OpomModel::new(
            DMatrix::zeros(0, 0),
            dmatrix![1.0],
            DMatrix::zeros(0, 1),
            DMatrix::zeros(1, 0),
        )
        .unwrap();
        let spec = SetpointSpec::new(
            model.clone(),
            1,
            dmatrix![1.0],
            dmatrix![1.0],
            dmatrix![1.0],
            DMatrix::zeros(0, 0),
            dvector![0.0],
            Rectangle::symmetric(1, 0.5).unwrap(),
            Rectangle::symmetric(1, 0.1).unwrap(),
        )
        .unwrap();
        let ctrl = ControllerSpec::Setpoint(spec);
        // Input level far outside the box: no feasible move exists.
        let bad = crate::model::PlantState {
            xs: dvector![5.0],
            xd: DVector::zeros(0),
            u: dvector![5.0],
        };
        let err = run_closed_loop(&ctrl, &bad, 4).unwrap_err();
        assert_eq!(err.step, 0);
        assert!(err.partial.records.is_empty());
        assert!(matches!(err.source, Error::Infeasible(_)));
    }
}
