//! Deterministic flight stack: simplified hex-rotor dynamics, the four
//! outer-loop PIDs, foam/electromagnet gripper physics, a delayed-
//! measurement EKF, and a simulated pose sensor.
//!
//! Everything advances on a single logical timeline driven by the caller;
//! all randomness comes through explicit `ChaCha8Rng` arguments, so a
//! seeded scenario replays bit-identically.

pub mod dynamics;
pub mod ekf;
pub mod gripper;
pub mod log;
pub mod pid;
pub mod sensor;

pub use dynamics::{
    dynamics_step, BrickKind, Command, Disturbance, GripperPose, MagnetState, UavState, BASE_MASS,
    G, TAU_ATT, TAU_VZ,
};
pub use ekf::{ekf_step, EkfParams, EkfState, Mat9, PoseMeas, Vec9};
pub use gripper::{
    gripper_step, BrickTarget, ContactEvent, ATTACH_LATERAL_TOL, MAX_FOAM_COMPRESSION,
};
pub use log::{TrajectoryLog, TRAJECTORY_HEADER};
pub use pid::{pid_step, PidLoop};
pub use sensor::PoseSensor;
