//! Mission autonomy for the brick pick-and-place task: a phase machine
//! driving search, selection, visual servoing, touch-down grasping, and
//! placement, with RRT-Connect planning over an AABB world model and a
//! deterministic closed-loop simulator around the whole stack.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MissionError {
    #[error("no target: detection list is empty")]
    NoTarget,
    #[error("target lost: support mask is empty")]
    TargetLost,
    #[error("stale perception inputs")]
    StaleInput,
    #[error("goal is unreachable")]
    Infeasible,
    #[error("planner iteration budget exhausted")]
    PlanTimeout,
}

pub mod machine;
pub mod plan;
pub mod report;
pub mod select;
pub mod sim;
pub mod world;

pub use machine::{
    is_edge, step_state_machine, Inputs, MissionPhase, MissionState, Setpoints, StepOutput,
    Transition, ASCEND_VZ, DESCEND_VZ, EDGES, MAX_RETRIES, SEARCH_ALT, STALE_LIMIT, VERIFY_WINDOW,
};
pub use plan::{path_length, plan_rrt_connect};
pub use report::{phase_spans, MissionReport, PhaseSpan};
pub use select::{select_instance, servo_offset, ServoGains};
pub use sim::{generate_scenario, run_mission, MissionOutcome, Scenario, SimConfig};
pub use world::{collision_check, Aabb, BrickSite, WorldModel, VEHICLE_RADIUS};
