//! CSV trace files for closed-loop runs.
//!
//! One row per step. Values are written with seventeen significant digits,
//! so every `f64` round-trips exactly. The input-level columns are redundant
//! with the move columns on purpose: a reader can replay the run from the
//! scenario's initial state and cross-check the stored outputs and levels.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use ihmpc::model::PlantState;
use ihmpc::sim::{ClosedLoopTrace, ControllerSpec, StepRecord, StepSlacks};

/// Structured read/parse failure, kept separate from verification failures.
#[derive(Debug, thiserror::Error)]
pub enum TraceFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("replaying the moves failed at step {step}: {source}")]
    Replay {
        step: usize,
        source: ihmpc::Error,
    },
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_group(header: &mut Vec<String>, prefix: &str, count: usize) {
    for i in 0..count {
        header.push(format!("{prefix}_{i}"));
    }
}

/// Column names for traces of the given controller.
pub fn expected_header(ctrl: &ControllerSpec) -> Vec<String> {
    let model = ctrl.model();
    let (ny, nu, m) = (model.ny(), model.nu(), ctrl.horizon());
    let mut h = vec!["k".to_string(), "V_star".to_string(), "kkt_residual".to_string()];
    push_group(&mut h, "y", ny);
    push_group(&mut h, "u", nu);
    push_group(&mut h, "du", m * nu);
    match ctrl {
        ControllerSpec::Setpoint(_) => push_group(&mut h, "delta", ny),
        ControllerSpec::Zone(_) => {
            push_group(&mut h, "y_sp", ny);
            push_group(&mut h, "delta_y", ny);
            push_group(&mut h, "delta_u", nu);
        }
    }
    h
}

/// Serializes a trace to CSV.
pub fn render_trace(trace: &ClosedLoopTrace) -> String {
    let header = expected_header(&trace.controller);
    let mut out = header.join(",");
    out.push('\n');
    for (k, rec) in trace.records.iter().enumerate() {
        let mut fields: Vec<String> = vec![
            k.to_string(),
            float(rec.v_star),
            float(rec.kkt_residual),
        ];
        fields.extend(rec.y.iter().map(|&v| float(v)));
        fields.extend(rec.state_before.u.iter().map(|&v| float(v)));
        for mv in &rec.du {
            fields.extend(mv.iter().map(|&v| float(v)));
        }
        match &rec.slacks {
            StepSlacks::Setpoint { delta } => {
                fields.extend(delta.iter().map(|&v| float(v)));
            }
            StepSlacks::Zone { y_sp, delta_y, delta_u } => {
                fields.extend(y_sp.iter().map(|&v| float(v)));
                fields.extend(delta_y.iter().map(|&v| float(v)));
                fields.extend(delta_u.iter().map(|&v| float(v)));
            }
        }
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

pub fn write_trace(path: &Path, trace: &ClosedLoopTrace) -> std::io::Result<()> {
    std::fs::write(path, render_trace(trace))
}

/// A parsed trace: records with replayed states, plus the input levels as
/// stored in the file (for cross-checking against the replay).
pub struct ReadTrace {
    pub trace: ClosedLoopTrace,
    pub file_u: Vec<DVector<f64>>,
}

/// Parses a CSV trace and replays the plant states from `initial` using the
/// stored moves. Structural problems (wrong header, ragged rows, unparsable
/// numbers, bad step indices) are reported as errors; numeric disagreement
/// between stored and replayed values is left to the caller to judge.
pub fn read_trace(
    path: &Path,
    controller: &ControllerSpec,
    initial: &PlantState,
) -> Result<ReadTrace, TraceFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(&text, controller, initial)
}

/// [`read_trace`] on an in-memory string.
pub fn parse_trace(
    text: &str,
    controller: &ControllerSpec,
    initial: &PlantState,
) -> Result<ReadTrace, TraceFileError> {
    let header = expected_header(controller);
    let model = controller.model();
    let (ny, nu, m) = (model.ny(), model.nu(), controller.horizon());

    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(TraceFileError::Format {
        line: 1,
        msg: "empty file".into(),
    })?;
    let got: Vec<&str> = first.split(',').collect();
    if got != header.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(TraceFileError::Format {
            line: 1,
            msg: format!(
                "header mismatch: expected `{}`, got `{}`",
                header.join(","),
                first
            ),
        });
    }

    let mut records = Vec::new();
    let mut file_u = Vec::new();
    let mut state = initial.clone();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(TraceFileError::Format {
                line: lineno,
                msg: format!("expected {} fields, got {}", header.len(), fields.len()),
            });
        }
        let k: usize = fields[0].parse().map_err(|_| TraceFileError::Format {
            line: lineno,
            msg: format!("bad step index `{}`", fields[0]),
        })?;
        if k != records.len() {
            return Err(TraceFileError::Format {
                line: lineno,
                msg: format!("step index {k} out of order (expected {})", records.len()),
            });
        }
        let mut nums = Vec::with_capacity(fields.len() - 1);
        for (col, raw) in fields.iter().enumerate().skip(1) {
            let v: f64 = raw.parse().map_err(|_| TraceFileError::Format {
                line: lineno,
                msg: format!("column `{}`: bad number `{raw}`", header[col]),
            })?;
            nums.push(v);
        }
        let mut at = 0usize;
        let mut take = |n: usize| {
            let slice = DVector::from_column_slice(&nums[at..at + n]);
            at += n;
            slice
        };
        let v_star = take(1)[0];
        let kkt_residual = take(1)[0];
        let y = take(ny);
        let u = take(nu);
        let du: Vec<DVector<f64>> = (0..m).map(|_| take(nu)).collect();
        let slacks = match controller {
            ControllerSpec::Setpoint(_) => StepSlacks::Setpoint { delta: take(ny) },
            ControllerSpec::Zone(_) => StepSlacks::Zone {
                y_sp: take(ny),
                delta_y: take(ny),
                delta_u: take(nu),
            },
        };
        debug_assert_eq!(at, nums.len());

        let next = model
            .step(&state, &du[0])
            .map_err(|source| TraceFileError::Replay { step: k, source })?;
        records.push(StepRecord {
            state_before: state,
            y,
            du,
            slacks,
            v_star,
            kkt_residual,
            wall_time: 0.0,
        });
        file_u.push(u);
        state = next;
    }

    Ok(ReadTrace {
        trace: ClosedLoopTrace {
            controller: controller.clone(),
            initial: initial.clone(),
            records,
            final_state: state,
        },
        file_u,
    })
}
