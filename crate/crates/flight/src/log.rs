//! CSV trajectory log: per-tick truth, EKF estimate, commands, events.

use crate::dynamics::{Command, UavState};
use crate::ekf::EkfState;
use crate::gripper::ContactEvent;

pub const TRAJECTORY_HEADER: &str = "t,x,y,z,roll,pitch,yaw,ekf_x,ekf_y,ekf_z,\
ekf_roll,ekf_pitch,ekf_yaw,cmd_vz,cmd_roll,cmd_pitch,cmd_yaw_rate,events";

#[derive(Debug, Default, Clone)]
pub struct TrajectoryLog {
    lines: Vec<String>,
}

fn event_name(e: &ContactEvent) -> &'static str {
    match e {
        ContactEvent::Contact { .. } => "contact",
        ContactEvent::Attached { .. } => "attached",
        ContactEvent::Released { .. } => "released",
    }
}

impl TrajectoryLog {
    pub fn new() -> TrajectoryLog {
        TrajectoryLog::default()
    }

    pub fn push(
        &mut self,
        t: f64,
        truth: &UavState,
        ekf: &EkfState,
        cmd: &Command,
        events: &[ContactEvent],
    ) {
        let p = truth.position;
        let a = truth.attitude;
        let ep = ekf.position();
        let ea = ekf.attitude();
        let tags: Vec<&str> = events.iter().map(event_name).collect();
        self.lines.push(format!(
            "{t:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            p.x, p.y, p.z, a.x, a.y, a.z,
            ep.x, ep.y, ep.z, ea.x, ea.y, ea.z,
            cmd.vz, cmd.roll, cmd.pitch, cmd.yaw_rate,
            tags.join(";"),
        ));
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_HEADER);
        out.push('\n');
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }
}
