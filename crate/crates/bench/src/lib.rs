//! Fixtures shared by the criterion benches.

use nalgebra::Vector3;
use quadnmpc::ocp::{build_qp, OcpConfig, ReferenceTrajectory, TrajectoryGuess};
use quadnmpc::qp::OcpQp;
use quadnmpc::{QuadrotorParams, State};

pub const TARGET: [f64; 3] = [0.3, -0.3, 0.6];

/// First QP of a step from hover at the origin to [`TARGET`].
pub fn step_qp(n: usize) -> OcpQp {
    let params = QuadrotorParams::default();
    let cfg = OcpConfig {
        horizon: n,
        ..OcpConfig::default()
    };
    let target = Vector3::from(TARGET);
    let guess = TrajectoryGuess::hover(&params, Vector3::zeros(), n);
    let refs = ReferenceTrajectory::hover(&params, target, n);
    build_qp(&guess, &refs, &State::hover_at(Vector3::zeros()), &cfg, &params)
        .expect("step QP")
        .qp
}
