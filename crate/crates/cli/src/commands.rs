//! Command implementations behind the `ihmpc` binary.
//!
//! Exit discipline: `0` when the requested work succeeded and every judged
//! condition held, `1` when a verification judgment failed (insufficient
//! certificates, a trace that does not withstand replay, a solver/oracle
//! mismatch, a run that died mid-loop), `2` for unusable input (parse
//! errors, dimension mismatches, missing files).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ihmpc::qp::{self, brute_force, QpStatus};
use ihmpc::sampling::random_qp;
use ihmpc::sim::{analyze, run_closed_loop, ControllerReport};

use crate::scenario::{CertificateReport, ScenarioFile};
use crate::tracefile::{self, TraceFileError};

pub const SUCCESS: i32 = 0;
pub const FAILURE: i32 = 1;
pub const USAGE: i32 = 2;

fn load_built(path: &Path) -> Result<crate::scenario::BuiltScenario, i32> {
    let file = ScenarioFile::load(path).map_err(|e| {
        eprintln!("error: {e:#}");
        USAGE
    })?;
    file.build().map_err(|e| {
        eprintln!("error: {e:#}");
        USAGE
    })
}

/// Runs a scenario closed loop and optionally writes the trace CSV.
pub fn simulate(scenario: &Path, steps_override: Option<usize>, trace_out: Option<&Path>) -> i32 {
    let built = match load_built(scenario) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let Some(steps) = steps_override.or(built.steps) else {
        eprintln!("error: the scenario fixes no step count; pass --steps");
        return USAGE;
    };
    if steps == 0 {
        eprintln!("error: --steps must be at least 1");
        return USAGE;
    }

    let trace = match run_closed_loop(&built.controller, &built.initial, steps) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return FAILURE;
        }
    };
    if let Some(out) = trace_out {
        if let Err(e) = tracefile::write_trace(out, &trace) {
            eprintln!("error: writing {}: {e}", out.display());
            return USAGE;
        }
    }

    match analyze(&trace) {
        Ok(report) => {
            if let Some(name) = &built.name {
                println!("scenario: {name}");
            }
            println!("steps: {}", report.steps);
            println!("first cost: {:.6e}", trace.records[0].v_star);
            println!("final cost: {:.6e}", report.v_final);
            println!("worst cost increase: {:.3e}", report.monotone_max_violation);
            println!(
                "worst decrease-identity violation: {:.3e}",
                report.decrease_max_violation
            );
            if report.upper_bound_applicable {
                println!(
                    "resting bound {:.6e}, worst excess {:.3e}",
                    report.upper_bound, report.upper_bound_max_excess
                );
            }
            println!("final transient norm: {:.3e}", report.final_transient_norm);
            match report.detail {
                ControllerReport::Setpoint {
                    final_plan_visible_norm,
                    final_slack_norm,
                } => {
                    println!("final visible plan norm: {final_plan_visible_norm:.3e}");
                    println!("final slack norm: {final_slack_norm:.3e}");
                }
                ControllerReport::Zone {
                    final_plan_norm,
                    final_output_slack_norm,
                    final_input_slack_norm,
                    final_input_error,
                } => {
                    println!("final plan norm: {final_plan_norm:.3e}");
                    println!(
                        "final slack norms: output {final_output_slack_norm:.3e}, input {final_input_slack_norm:.3e}"
                    );
                    println!("final input error: {final_input_error:.3e}");
                }
            }
            if let Some(out) = trace_out {
                println!("trace written to {}", out.display());
            }
            SUCCESS
        }
        Err(e) => {
            eprintln!("error: analyzing the run: {e}");
            FAILURE
        }
    }
}

/// Derives the certificates for a scenario and judges their sufficiency.
pub fn certify(scenario: &Path, json_out: Option<&Path>) -> i32 {
    let file = match ScenarioFile::load(scenario) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return USAGE;
        }
    };
    let resolved = match file.certificates() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return USAGE;
        }
    };
    let report = CertificateReport::from_resolved(&resolved);

    println!("controller: {}", report.kind);
    println!("gain rank: {}", report.gain_rank);
    println!("phi: {:.6}", report.phi);
    println!("contraction constant: {:.6e}", report.c3);
    println!(
        "slack scale beta: {:.6e} ({})",
        report.beta,
        if report.beta_sufficient { "sufficient" } else { "INSUFFICIENT" }
    );
    if let Some(ok) = report.input_slack_sufficient {
        println!(
            "input slack weight: {}",
            if ok { "sufficient" } else { "INSUFFICIENT" }
        );
    }
    if let (Some(u), Some(res)) = (&report.steady_input, report.steady_residual) {
        let rendered: Vec<String> = u.iter().map(|v| format!("{v:.6}")).collect();
        println!("steady input: [{}] (residual {res:.3e})", rendered.join(", "));
    }

    if let Some(out) = json_out {
        let text = match serde_json::to_string_pretty(&report) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: serializing the report: {e}");
                return USAGE;
            }
        };
        if let Err(e) = std::fs::write(out, text) {
            eprintln!("error: writing {}: {e}", out.display());
            return USAGE;
        }
        println!("report written to {}", out.display());
    }

    if report.sufficient() {
        println!("certificates sufficient");
        SUCCESS
    } else {
        println!("certificates insufficient");
        FAILURE
    }
}

struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
}

/// Re-verifies a stored trace: replays the moves from the scenario's initial
/// state, compares the stored outputs and input levels, and re-judges the
/// cost sequence.
pub fn check(scenario: &Path, trace_path: &Path) -> i32 {
    let built = match load_built(scenario) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let read = match tracefile::read_trace(trace_path, &built.controller, &built.initial) {
        Ok(r) => r,
        Err(e @ (TraceFileError::Io { .. } | TraceFileError::Format { .. })) => {
            eprintln!("error: {e}");
            return USAGE;
        }
        Err(e @ TraceFileError::Replay { .. }) => {
            eprintln!("check failed: {e}");
            return FAILURE;
        }
    };
    if read.trace.records.is_empty() {
        eprintln!("error: the trace has no rows");
        return USAGE;
    }

    let model = built.controller.model();
    let mut y_err = 0.0f64;
    let mut u_err = 0.0f64;
    for (rec, fu) in read.trace.records.iter().zip(&read.file_u) {
        match model.output(&rec.state_before) {
            Ok(y) => {
                y_err = y_err.max((&rec.y - &y).amax() / (1.0 + y.amax()));
            }
            Err(e) => {
                eprintln!("check failed: replayed state rejected: {e}");
                return FAILURE;
            }
        }
        u_err = u_err.max((fu - &rec.state_before.u).amax() / (1.0 + rec.state_before.u.amax()));
    }

    let report = match analyze(&read.trace) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("check failed: {e}");
            return FAILURE;
        }
    };

    let checks = [
        Check { name: "stored outputs match the replay", value: y_err, limit: 1e-9 },
        Check { name: "stored input levels match the replay", value: u_err, limit: 1e-9 },
        Check {
            name: "stored costs equal their plans' costs",
            value: report.plan_cost_max_err,
            limit: 1e-9,
        },
        Check {
            name: "costs never increase",
            value: report.monotone_max_violation,
            limit: 1e-9,
        },
        Check {
            name: "costs fall by at least the stage amount",
            value: report.decrease_max_violation,
            limit: 1e-9,
        },
    ];
    let mut ok = true;
    for c in &checks {
        let passed = c.value <= c.limit;
        ok &= passed;
        println!(
            "{} {} ({:.3e} <= {:.0e})",
            if passed { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
    }
    if ok {
        println!("trace verified: {} steps", report.steps);
        SUCCESS
    } else {
        println!("trace rejected");
        FAILURE
    }
}

/// Cross-checks the QP solver against the brute-force oracle on seeded
/// random instances.
pub fn qp_verify(count: usize, seed: u64, tol: f64) -> i32 {
    if count == 0 || tol.is_nan() || tol <= 0.0 {
        eprintln!("error: --count must be positive and --tol must exceed zero");
        return USAGE;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gap = 0.0f64;
    for i in 0..count {
        let instance = random_qp(&mut rng, 4, 2);
        let sol = match qp::solve(&instance) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("instance {i}: solver failed: {e}");
                return FAILURE;
            }
        };
        if sol.status != QpStatus::Optimal {
            eprintln!("instance {i}: unexpected status {:?}", sol.status);
            return FAILURE;
        }
        let oracle = match brute_force(&instance, 9) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("instance {i}: oracle failed: {e}");
                return FAILURE;
            }
        };
        let gap = (sol.objective - oracle.objective).abs() / (1.0 + sol.objective.abs());
        max_gap = max_gap.max(gap);
        if gap > tol {
            eprintln!(
                "instance {i}: objective gap {gap:.3e} exceeds {tol:.0e} (solver {:.12e}, oracle {:.12e})",
                sol.objective, oracle.objective
            );
            return FAILURE;
        }
    }
    println!("verified {count} instances, max relative objective gap {max_gap:.3e}");
    SUCCESS
}
