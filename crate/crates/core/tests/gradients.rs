//! Finite-difference agreement of every backward pass, in 64-bit.

mod common;

use volstm::gradcheck::{check_all, check_component, check_conv3d_with, COMPONENTS, TOLERANCE};
use volstm::Error;

#[test]
fn every_component_within_tolerance() {
    let reports = check_all(7).unwrap();
    assert_eq!(reports.len(), COMPONENTS.len());
    for r in &reports {
        assert!(r.passed && r.max_rel_error <= TOLERANCE, "{r:?}");
        assert!(r.scalars_checked >= 20, "{r:?}");
    }
}

#[test]
fn other_seeds_pass_too() {
    for name in ["conv3d", "convlstm", "model-clstm", "model-conv1d"] {
        let r = check_component(name, 1234).unwrap();
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn sign_flipped_conv3d_backward_is_detected() {
    let r = check_conv3d_with(common::sign_flipped_conv3d_backward, 7).unwrap();
    assert!(!r.passed, "{r:?}");
    assert!(r.max_rel_error > 0.5);
    assert!(r.worst.contains("input"), "{r:?}");
}

#[test]
fn unknown_component_is_a_config_error() {
    assert!(matches!(check_component("lstm", 0), Err(Error::Config(_))));
}
