mod common;

use common::crystal_checks::{compare_with_oracle, tangent_fd_error};

#[test]
fn coarse_steps_stay_close_to_refined_oracle() {
    let c = compare_with_oracle(400);
    assert!(c.worst < 1e-3, "worst {:.3e}", c.worst);
}

#[test]
fn consistent_tangent_on_random_states() {
    let err = tangent_fd_error(10, 7);
    assert!(err < 1e-5, "tangent error {err:.3e}");
}
