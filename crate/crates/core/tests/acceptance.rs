use lbjump::acceptance::{run_criterion, DEFAULT_SEED};

fn criterion(id: u8) {
    let result = run_criterion(id, DEFAULT_SEED).unwrap();
    println!("{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn c01_balancing_identity() {
    criterion(1);
}

#[test]
fn c02_sandwich_bounds() {
    criterion(2);
}

#[test]
fn c03_reversibility() {
    criterion(3);
}

#[test]
fn c04_z_lambda_bound() {
    criterion(4);
}

#[test]
fn c05_gap_sandwich() {
    criterion(5);
}

#[test]
fn c06_comparison() {
    criterion(6);
}

#[test]
fn c07_tv_exponential_bound() {
    criterion(7);
}

#[test]
fn c08_ergodic_averages() {
    criterion(8);
}

#[test]
fn c09_hitting_recursion() {
    criterion(9);
}

#[test]
fn c10_uniform_ergodicity() {
    criterion(10);
}

#[test]
fn c11_diffusion_limit() {
    criterion(11);
}

#[test]
fn c12_estimators() {
    criterion(12);
}

#[test]
fn c13_nonrev_certification() {
    criterion(13);
}
