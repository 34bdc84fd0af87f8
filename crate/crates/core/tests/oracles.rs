//! Optimised kernels against direct scalar transcriptions.

mod common;

#[test]
fn conv3d_matches_naive_loops() {
    let worst = common::conv3d_oracle_error(150, 100);
    assert!(worst <= 1e-12, "max relative error {worst:e}");
}

#[test]
fn convlstm_step_matches_scalar_equations() {
    let worst = common::step_oracle_error(120, 200);
    assert!(worst <= 1e-12, "max relative error {worst:e}");
}
