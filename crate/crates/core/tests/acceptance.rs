//! Release checklist, one test per criterion.  Every test prints its
//! verdict line so a `--nocapture` run shows the full scoreboard; heavy
//! solves are shared between criteria through the library's fixtures.

use signorini::acceptance::{run_criterion, NUM_CRITERIA};

fn check(id: usize) {
    let report = run_criterion(id).unwrap();
    println!("{}", report.line());
    assert!(report.pass, "criterion {id} failed: {}", report.details);
}

#[test]
fn criterion_01_prototype_accuracy() {
    check(1);
}

#[test]
fn criterion_02_frequency_of_the_prototype() {
    check(2);
}

#[test]
fn criterion_03_weiss_balance() {
    check(3);
}

#[test]
fn criterion_04_calibrated_monotonicity_and_identities() {
    check(4);
}

#[test]
fn criterion_05_frequency_gap_on_the_free_boundary() {
    check(5);
}

#[test]
fn criterion_06_epiperimetric_decay() {
    check(6);
}

#[test]
fn criterion_07_moving_boundary_signatures() {
    check(7);
}

#[test]
fn criterion_08_penalization_limit() {
    check(8);
}

#[test]
fn criterion_09_graph_and_direction_recovery() {
    check(9);
}

#[test]
fn criterion_10_dtn_symbol() {
    check(10);
}

#[test]
fn criterion_11_invariant_battery() {
    check(11);
}

#[test]
fn checklist_is_complete() {
    assert_eq!(NUM_CRITERIA, 11);
}
