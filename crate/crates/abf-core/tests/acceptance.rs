//! Acceptance suite: every criterion on its full grid, one PASS/FAIL line each.
//!
//! Run with `cargo test -p abf-core --test acceptance -- --nocapture` to see
//! the per-criterion lines and their worst residuals.

use abf::verify::{run_criterion, VerifyConfig, CRITERIA};

fn criterion(id: u32) {
    let report = run_criterion(id, &VerifyConfig::default()).expect("known criterion");
    println!("{}", report.summary_line());
    for c in &report.checks {
        let mark = if c.passed() { "ok  " } else { "FAIL" };
        let err = c.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default();
        println!("      {mark} {:<36} {:.3e} / {:.0e}{err}", c.name, c.residual, c.threshold);
    }
    assert!(report.passed(), "criterion {id} ({}) failed", CRITERIA[id as usize - 1]);
}

#[test]
fn c01_weight_identities() {
    criterion(1);
}

#[test]
fn c02_local_height_probabilities() {
    criterion(2);
}

#[test]
fn c03_partition_function() {
    criterion(3);
}

#[test]
fn c04_zero_mode_sums() {
    criterion(4);
}

#[test]
fn c05_f_and_g_properties() {
    criterion(5);
}

#[test]
fn c06_trace_reductions() {
    criterion(6);
}

#[test]
fn c07_modular_relation() {
    criterion(7);
}

#[test]
fn c08_continuum_algebra() {
    criterion(8);
}

#[test]
fn c09_r_polynomials() {
    criterion(9);
}

#[test]
fn c10_form_factor_dual_path() {
    criterion(10);
}

#[test]
fn c11_scaling_limit() {
    criterion(11);
}
