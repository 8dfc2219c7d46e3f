mod common;

use common::*;
use mmnl::vb::Treatment;

#[test]
fn simulated_loglik_gradient() {
    let err = msle_gradient_error(5, 3);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn ncvmp_expected_log_joint_gradients() {
    for t in [Treatment::Delta, Treatment::Mji] {
        let err = ncvmp_gradient_error(t, 5, 8);
        assert!(err < 1e-5, "{t:?}: {err}");
    }
}

#[test]
fn qn_objective_gradients() {
    for t in [Treatment::Delta, Treatment::Qmc, Treatment::Mji] {
        let err = qn_gradient_error(t, 5, 9);
        assert!(err < 1e-5, "{t:?}: {err}");
    }
}
