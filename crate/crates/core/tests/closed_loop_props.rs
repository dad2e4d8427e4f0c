//! Closed-loop properties over random scenarios: the recorded optimal cost
//! must fall by at least the realized stage amount each step, and the stored
//! cost must equal the simulated cost of its own plan.

use ihmpc::sampling::{random_setpoint_scenario, random_zone_scenario};
use ihmpc::sim::{analyze, run_closed_loop, ControllerSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn audit(ctrl: ControllerSpec, initial: &ihmpc::PlantState, label: &str) {
    let trace = run_closed_loop(&ctrl, initial, 20)
        .unwrap_or_else(|e| panic!("{label}: {e}"));
    let report = analyze(&trace).unwrap();
    assert!(
        report.decrease_max_violation <= 1e-9,
        "{label}: stage decrease violated by {}",
        report.decrease_max_violation
    );
    assert!(
        report.monotone_max_violation <= 1e-9,
        "{label}: cost increased by {}",
        report.monotone_max_violation
    );
    assert!(
        report.plan_cost_max_err <= 1e-9,
        "{label}: recorded cost disagrees with its plan by {}",
        report.plan_cost_max_err
    );
}

#[test]
fn setpoint_costs_shrink_by_the_stage_amount_on_random_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for i in 0..20 {
        let (spec, initial) = random_setpoint_scenario(&mut rng);
        audit(
            ControllerSpec::Setpoint(spec),
            &initial,
            &format!("setpoint scenario {i}"),
        );
    }
}

#[test]
fn zone_costs_shrink_by_the_stage_amount_on_random_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for i in 0..20 {
        let (spec, initial) = random_zone_scenario(&mut rng);
        audit(
            ControllerSpec::Zone(spec),
            &initial,
            &format!("zone scenario {i}"),
        );
    }
}
