//! The mission state machine: one brick from search to placement and home.

use nalgebra::Vector3;
use skyhook_flight::MagnetState;
use skyhook_perception::{FoamState, AttachState, GraspStateReading, InstanceDetection, SupportMask};

use crate::plan::plan_rrt_connect;
use crate::select::{select_instance, servo_offset, ServoGains};
use crate::world::{WorldModel, VEHICLE_RADIUS};
use crate::MissionError;

pub const SEARCH_ALT: f64 = 3.0;
pub const TAKEOFF_VZ: f64 = 0.8;
/// Descent speed limit while servoing onto a brick (m/s).
pub const DESCEND_VZ: f64 = 0.2;
/// Ascent speed limit during grasp verification (m/s).
pub const ASCEND_VZ: f64 = 0.3;
/// How long the classifier may report NotAttached before a retry.
pub const VERIFY_WINDOW: f64 = 2.0;
pub const MAX_RETRIES: u32 = 3;
/// Perception older than this freezes the vehicle in place.
pub const STALE_LIMIT: f64 = 0.5;
/// Centroid offset (px) below which servoing hands over to descent.
pub const CENTER_TOL_PX: f64 = 6.0;

const SETTLE_TIME: f64 = 0.2;
const ENGAGE_TIME: f64 = 0.3;
const RELEASE_TIME: f64 = 0.3;
const DETECT_WINDOW: f64 = 2.0;
const WP_TOL: f64 = 0.15;
const CRUISE_SPEED: f64 = 0.8;
const LATERAL_KP: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MissionPhase {
    Takeoff,
    Search,
    Detect,
    Select,
    TrackServo,
    Descend,
    Touchdown,
    GraspEngage,
    AscendVerify,
    Transport,
    PlaceDescend,
    Release,
    Return,
    Failsafe,
}

impl MissionPhase {
    pub const ALL: [MissionPhase; 14] = [
        MissionPhase::Takeoff,
        MissionPhase::Search,
        MissionPhase::Detect,
        MissionPhase::Select,
        MissionPhase::TrackServo,
        MissionPhase::Descend,
        MissionPhase::Touchdown,
        MissionPhase::GraspEngage,
        MissionPhase::AscendVerify,
        MissionPhase::Transport,
        MissionPhase::PlaceDescend,
        MissionPhase::Release,
        MissionPhase::Return,
        MissionPhase::Failsafe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MissionPhase::Takeoff => "takeoff",
            MissionPhase::Search => "search",
            MissionPhase::Detect => "detect",
            MissionPhase::Select => "select",
            MissionPhase::TrackServo => "track_servo",
            MissionPhase::Descend => "descend",
            MissionPhase::Touchdown => "touchdown",
            MissionPhase::GraspEngage => "grasp_engage",
            MissionPhase::AscendVerify => "ascend_verify",
            MissionPhase::Transport => "transport",
            MissionPhase::PlaceDescend => "place_descend",
            MissionPhase::Release => "release",
            MissionPhase::Return => "return",
            MissionPhase::Failsafe => "failsafe",
        }
    }
}

/// The complete legal transition set. `step_state_machine` asserts every
/// phase change against this list. Every live phase may drop into Failsafe:
/// planner failures, exhausted retries, and the mission watchdog all land
/// there.
pub const EDGES: &[(MissionPhase, MissionPhase)] = &[
    (MissionPhase::Takeoff, MissionPhase::Search),
    (MissionPhase::Search, MissionPhase::Detect),
    (MissionPhase::Detect, MissionPhase::Select),
    (MissionPhase::Detect, MissionPhase::Search),
    (MissionPhase::Select, MissionPhase::TrackServo),
    (MissionPhase::Select, MissionPhase::Detect),
    (MissionPhase::TrackServo, MissionPhase::Descend),
    (MissionPhase::TrackServo, MissionPhase::Detect),
    (MissionPhase::Descend, MissionPhase::Touchdown),
    (MissionPhase::Descend, MissionPhase::Detect),
    (MissionPhase::Touchdown, MissionPhase::GraspEngage),
    (MissionPhase::GraspEngage, MissionPhase::AscendVerify),
    (MissionPhase::AscendVerify, MissionPhase::Transport),
    (MissionPhase::AscendVerify, MissionPhase::Descend),
    (MissionPhase::Transport, MissionPhase::PlaceDescend),
    (MissionPhase::PlaceDescend, MissionPhase::Release),
    (MissionPhase::Release, MissionPhase::Return),
    (MissionPhase::Takeoff, MissionPhase::Failsafe),
    (MissionPhase::Search, MissionPhase::Failsafe),
    (MissionPhase::Detect, MissionPhase::Failsafe),
    (MissionPhase::Select, MissionPhase::Failsafe),
    (MissionPhase::TrackServo, MissionPhase::Failsafe),
    (MissionPhase::Descend, MissionPhase::Failsafe),
    (MissionPhase::Touchdown, MissionPhase::Failsafe),
    (MissionPhase::GraspEngage, MissionPhase::Failsafe),
    (MissionPhase::AscendVerify, MissionPhase::Failsafe),
    (MissionPhase::Transport, MissionPhase::Failsafe),
    (MissionPhase::PlaceDescend, MissionPhase::Failsafe),
    (MissionPhase::Release, MissionPhase::Failsafe),
    (MissionPhase::Return, MissionPhase::Failsafe),
];

pub fn is_edge(from: MissionPhase, to: MissionPhase) -> bool {
    EDGES.contains(&(from, to))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: MissionPhase,
    pub to: MissionPhase,
    pub t: f64,
}

/// World-frame velocity setpoints handed to the flight controller. Yaw is
/// held at zero for the whole mission, keeping camera and body axes
/// aligned with the world.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Setpoints {
    pub v: Vector3<f64>,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub setpoints: Setpoints,
    pub magnets: MagnetState,
    pub error: Option<MissionError>,
}

/// Timestamped perception and navigation inputs for one tick.
/// `detection_ids` gives the persistent world identity of each detection,
/// the job a tracker does on real imagery.
#[derive(Debug)]
pub struct Inputs<'a> {
    pub t: f64,
    /// Capture time of the perception bundle.
    pub stamp: f64,
    pub detections: &'a [InstanceDetection],
    pub detection_ids: &'a [usize],
    /// Tracker mask for the selected target, when one is locked.
    pub target_mask: Option<&'a SupportMask>,
    pub grasp: GraspStateReading,
    /// Fused position estimate.
    pub position: Vector3<f64>,
    pub image_center: (f64, f64),
}

/// Mission progress: the phase plus the counters and plan fragments the
/// phase logic needs. Retries are bounded by [`MAX_RETRIES`].
#[derive(Debug, Clone)]
pub struct MissionState {
    pub phase: MissionPhase,
    pub retries: u32,
    pub target: Option<usize>,
    pub transitions: Vec<Transition>,
    /// Set once the vehicle is back home after a placement.
    pub complete: bool,
    magnets: MagnetState,
    gains: ServoGains,
    phase_entered: f64,
    survey_idx: usize,
    plan: Vec<Vector3<f64>>,
    wp: usize,
    plan_seq: u64,
    seed: u64,
}

impl MissionState {
    pub fn new(seed: u64) -> MissionState {
        MissionState {
            phase: MissionPhase::Takeoff,
            retries: 0,
            target: None,
            transitions: Vec::new(),
            complete: false,
            magnets: MagnetState::Off,
            gains: ServoGains::default(),
            phase_entered: 0.0,
            survey_idx: 0,
            plan: Vec::new(),
            wp: 0,
            plan_seq: 0,
            seed,
        }
    }

    pub fn terminal(&self) -> bool {
        self.phase == MissionPhase::Failsafe || self.complete
    }

    /// Watchdog abort: legal from every live phase.
    pub fn abort(&mut self, t: f64) {
        if self.phase != MissionPhase::Failsafe {
            self.goto(MissionPhase::Failsafe, t);
        }
    }

    fn goto(&mut self, to: MissionPhase, t: f64) {
        assert!(is_edge(self.phase, to), "illegal transition {:?} -> {to:?}", self.phase);
        self.transitions.push(Transition { from: self.phase, to, t });
        self.phase = to;
        self.phase_entered = t;
        self.plan.clear();
        self.wp = 0;
    }
}

fn fly_to(pos: &Vector3<f64>, wp: &Vector3<f64>) -> Vector3<f64> {
    let v = (wp - pos) * LATERAL_KP;
    let n = v.norm();
    if n > CRUISE_SPEED {
        v * (CRUISE_SPEED / n)
    } else {
        v
    }
}

fn alt_hold(pos: &Vector3<f64>, alt: f64) -> f64 {
    ((alt - pos.z) * LATERAL_KP).clamp(-0.5, 0.5)
}

/// Lazily plan toward `goal`, then chase waypoints. Returns the velocity
/// setpoint, or None once the final waypoint is reached, or an error when
/// planning fails.
fn follow_plan(
    ms: &mut MissionState,
    pos: &Vector3<f64>,
    goal: Vector3<f64>,
    world: &WorldModel,
) -> Result<Option<Vector3<f64>>, MissionError> {
    if ms.plan.is_empty() {
        let seed = ms.seed.wrapping_add(ms.plan_seq.wrapping_mul(0x9e3779b97f4a7c15));
        ms.plan_seq += 1;
        ms.plan = plan_rrt_connect(*pos, goal, world, VEHICLE_RADIUS, seed)?;
        ms.wp = 0;
    }
    while ms.wp < ms.plan.len() && (ms.plan[ms.wp] - pos).norm() < WP_TOL {
        ms.wp += 1;
    }
    match ms.plan.get(ms.wp) {
        Some(next) => Ok(Some(fly_to(pos, next))),
        None => Ok(None),
    }
}

/// Advance the mission by one perception tick.
pub fn step_state_machine(ms: &mut MissionState, inp: &Inputs, world: &WorldModel) -> StepOutput {
    let mut out = StepOutput {
        setpoints: Setpoints::default(),
        magnets: ms.magnets,
        error: None,
    };

    if ms.phase != MissionPhase::Failsafe && inp.t - inp.stamp > STALE_LIMIT {
        out.error = Some(MissionError::StaleInput);
        return out;
    }

    let pos = inp.position;
    match ms.phase {
        MissionPhase::Takeoff => {
            out.setpoints.v.z = TAKEOFF_VZ;
            if pos.z >= SEARCH_ALT {
                ms.goto(MissionPhase::Search, inp.t);
            }
        }
        MissionPhase::Search => match world.bricks.get(ms.survey_idx) {
            None => ms.goto(MissionPhase::Failsafe, inp.t),
            Some(site) => {
                let wp = Vector3::new(site.top_center.x, site.top_center.y, SEARCH_ALT);
                match follow_plan(ms, &pos, wp, world) {
                    Ok(Some(v)) => out.setpoints.v = v,
                    Ok(None) => ms.goto(MissionPhase::Detect, inp.t),
                    Err(e) => {
                        out.error = Some(e);
                        ms.goto(MissionPhase::Failsafe, inp.t);
                    }
                }
            }
        },
        MissionPhase::Detect => {
            if let Some(site) = world.bricks.get(ms.survey_idx) {
                let wp = Vector3::new(site.top_center.x, site.top_center.y, SEARCH_ALT);
                out.setpoints.v = fly_to(&pos, &wp);
            }
            if !inp.detections.is_empty() {
                ms.goto(MissionPhase::Select, inp.t);
            } else if inp.t - ms.phase_entered > DETECT_WINDOW {
                ms.survey_idx += 1;
                ms.goto(MissionPhase::Search, inp.t);
            }
        }
        MissionPhase::Select => {
            out.setpoints.v.z = alt_hold(&pos, SEARCH_ALT);
            match select_instance(inp.detections, inp.image_center) {
                Ok(i) => {
                    ms.target = Some(inp.detection_ids[i]);
                    ms.goto(MissionPhase::TrackServo, inp.t);
                }
                Err(e) => {
                    out.error = Some(e);
                    ms.goto(MissionPhase::Detect, inp.t);
                }
            }
        }
        MissionPhase::TrackServo | MissionPhase::Descend => {
            let descending = ms.phase == MissionPhase::Descend;
            let centroid = inp.target_mask.and_then(|m| m.mask.centroid());
            match (inp.target_mask, centroid) {
                (Some(sm), Some((cx, cy))) => {
                    let (vx, vy) = servo_offset(sm, inp.image_center, &ms.gains)
                        .expect("nonempty mask");
                    out.setpoints.v.x = vx;
                    out.setpoints.v.y = vy;
                    let off = (cx - inp.image_center.0).hypot(cy - inp.image_center.1);
                    if descending {
                        out.setpoints.v.z = -DESCEND_VZ;
                        if inp.grasp.foam() == FoamState::Compressed {
                            ms.goto(MissionPhase::Touchdown, inp.t);
                        }
                    } else {
                        out.setpoints.v.z = alt_hold(&pos, SEARCH_ALT);
                        if off <= CENTER_TOL_PX {
                            ms.goto(MissionPhase::Descend, inp.t);
                        }
                    }
                }
                _ => {
                    out.error = Some(MissionError::TargetLost);
                    ms.target = None;
                    ms.goto(MissionPhase::Detect, inp.t);
                }
            }
        }
        MissionPhase::Touchdown => {
            if inp.t - ms.phase_entered >= SETTLE_TIME {
                ms.magnets = MagnetState::On;
                ms.goto(MissionPhase::GraspEngage, inp.t);
            }
        }
        MissionPhase::GraspEngage => {
            ms.magnets = MagnetState::On;
            if inp.t - ms.phase_entered >= ENGAGE_TIME {
                ms.goto(MissionPhase::AscendVerify, inp.t);
            }
        }
        MissionPhase::AscendVerify => {
            out.setpoints.v.z = ASCEND_VZ;
            if inp.grasp.attach() == AttachState::Attached {
                ms.goto(MissionPhase::Transport, inp.t);
            } else if inp.t - ms.phase_entered > VERIFY_WINDOW {
                if ms.retries < MAX_RETRIES {
                    ms.retries += 1;
                    ms.magnets = MagnetState::Off;
                    ms.goto(MissionPhase::Descend, inp.t);
                } else {
                    ms.goto(MissionPhase::Failsafe, inp.t);
                }
            }
        }
        MissionPhase::Transport => {
            ms.magnets = MagnetState::On;
            let goal = Vector3::new(world.place_target.x, world.place_target.y, SEARCH_ALT);
            match follow_plan(ms, &pos, goal, world) {
                Ok(Some(v)) => out.setpoints.v = v,
                Ok(None) => ms.goto(MissionPhase::PlaceDescend, inp.t),
                Err(e) => {
                    out.error = Some(e);
                    ms.goto(MissionPhase::Failsafe, inp.t);
                }
            }
        }
        MissionPhase::PlaceDescend => {
            ms.magnets = MagnetState::On;
            let over = Vector3::new(world.place_target.x, world.place_target.y, pos.z);
            out.setpoints.v = fly_to(&pos, &over);
            out.setpoints.v.z = -DESCEND_VZ;
            if pos.z <= world.place_target.z {
                ms.goto(MissionPhase::Release, inp.t);
            }
        }
        MissionPhase::Release => {
            ms.magnets = MagnetState::Off;
            if inp.t - ms.phase_entered >= RELEASE_TIME {
                ms.goto(MissionPhase::Return, inp.t);
            }
        }
        MissionPhase::Return => {
            if ms.complete {
                out.setpoints.v = fly_to(&pos, &world.home);
            } else {
                match follow_plan(ms, &pos, world.home, world) {
                    Ok(Some(v)) => out.setpoints.v = v,
                    Ok(None) => ms.complete = true,
                    Err(e) => {
                        out.error = Some(e);
                        ms.goto(MissionPhase::Failsafe, inp.t);
                    }
                }
            }
        }
        MissionPhase::Failsafe => {}
    }

    out.magnets = ms.magnets;
    assert!(
        !(matches!(ms.phase, MissionPhase::Transport | MissionPhase::PlaceDescend)
            && out.magnets == MagnetState::Off),
        "magnets must stay on while carrying"
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use skyhook_perception::BinMask;

    fn reading(foam: bool, attach: bool) -> GraspStateReading {
        let pick = |b: bool| if b { [0.1, 0.9] } else { [0.9, 0.1] };
        GraspStateReading { foam_probs: pick(foam), attach_probs: pick(attach) }
    }

    fn centered_mask() -> SupportMask {
        let mut m = BinMask::zeros(160, 160);
        for y in 76..84 {
            for x in 76..84 {
                m.set(x, y, true);
            }
        }
        SupportMask::new(m, 0)
    }

    fn base_inputs<'a>(t: f64, mask: Option<&'a SupportMask>, grasp: GraspStateReading) -> Inputs<'a> {
        Inputs {
            t,
            stamp: t,
            detections: &[],
            detection_ids: &[],
            target_mask: mask,
            grasp,
            position: Vector3::new(0.0, 0.0, 1.0),
            image_center: (80.0, 80.0),
        }
    }

    #[test]
    fn compressed_foam_during_descent_touches_down() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::Descend;
        let mask = centered_mask();
        let inp = base_inputs(10.0, Some(&mask), reading(true, false));
        let out = step_state_machine(&mut ms, &inp, &WorldModel::empty());
        assert_eq!(ms.phase, MissionPhase::Touchdown);
        assert!(out.error.is_none());
    }

    #[test]
    fn descent_speed_is_capped() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::Descend;
        let mask = centered_mask();
        let inp = base_inputs(10.0, Some(&mask), reading(false, false));
        let out = step_state_machine(&mut ms, &inp, &WorldModel::empty());
        assert_eq!(ms.phase, MissionPhase::Descend);
        assert!(out.setpoints.v.z >= -DESCEND_VZ - 1e-12 && out.setpoints.v.z < 0.0);
    }

    #[test]
    fn attached_during_verify_moves_to_transport() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::AscendVerify;
        ms.magnets = MagnetState::On;
        let mask = centered_mask();
        let inp = base_inputs(12.0, Some(&mask), reading(false, true));
        let out = step_state_machine(&mut ms, &inp, &WorldModel::empty());
        assert_eq!(ms.phase, MissionPhase::Transport);
        assert!(out.setpoints.v.z <= ASCEND_VZ + 1e-12);
    }

    #[test]
    fn verify_timeout_with_retries_left_descends_with_magnets_off() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::AscendVerify;
        ms.phase_entered = 10.0;
        ms.magnets = MagnetState::On;
        let mask = centered_mask();
        let inp = base_inputs(12.1, Some(&mask), reading(false, false));
        let out = step_state_machine(&mut ms, &inp, &WorldModel::empty());
        assert_eq!(ms.phase, MissionPhase::Descend);
        assert_eq!(out.magnets, MagnetState::Off);
        assert_eq!(ms.retries, 1);
    }

    #[test]
    fn verify_timeout_with_retries_exhausted_fails_safe() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::AscendVerify;
        ms.phase_entered = 10.0;
        ms.retries = MAX_RETRIES;
        let mask = centered_mask();
        let inp = base_inputs(12.1, Some(&mask), reading(false, false));
        step_state_machine(&mut ms, &inp, &WorldModel::empty());
        assert_eq!(ms.phase, MissionPhase::Failsafe);
    }

    #[test]
    fn stale_inputs_hold_position_and_report() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::TrackServo;
        let mask = centered_mask();
        let mut inp = base_inputs(20.0, Some(&mask), reading(false, false));
        inp.stamp = 19.4;
        let out = step_state_machine(&mut ms, &inp, &WorldModel::empty());
        assert_eq!(ms.phase, MissionPhase::TrackServo);
        assert_eq!(out.setpoints.v, Vector3::zeros());
        assert!(matches!(out.error, Some(MissionError::StaleInput)));
    }

    #[test]
    fn ascent_speed_is_capped_during_verify() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::AscendVerify;
        ms.phase_entered = 10.0;
        let mask = centered_mask();
        let inp = base_inputs(10.5, Some(&mask), reading(false, false));
        let out = step_state_machine(&mut ms, &inp, &WorldModel::empty());
        assert!(out.setpoints.v.z > 0.0 && out.setpoints.v.z <= ASCEND_VZ + 1e-12);
    }

    #[test]
    fn lost_target_during_servo_reverts_to_detect() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::TrackServo;
        ms.target = Some(2);
        let inp = base_inputs(10.0, None, reading(false, false));
        let out = step_state_machine(&mut ms, &inp, &WorldModel::empty());
        assert_eq!(ms.phase, MissionPhase::Detect);
        assert!(matches!(out.error, Some(MissionError::TargetLost)));
        assert_eq!(ms.target, None);
    }

    #[test]
    fn magnets_stay_on_through_transport() {
        let mut ms = MissionState::new(1);
        ms.phase = MissionPhase::Transport;
        ms.magnets = MagnetState::On;
        let mut world = WorldModel::empty();
        world.place_target = Vector3::new(-5.0, 0.0, 0.45);
        let mask = centered_mask();
        let mut inp = base_inputs(15.0, Some(&mask), reading(false, true));
        inp.position = Vector3::new(3.0, 1.0, 3.0);
        for k in 0..400 {
            inp.t = 15.0 + k as f64 * 0.01;
            inp.stamp = inp.t;
            let out = step_state_machine(&mut ms, &inp, &world);
            assert_eq!(out.magnets, MagnetState::On);
            if ms.phase != MissionPhase::Transport {
                break;
            }
            inp.position += out.setpoints.v * 0.01;
        }
    }

    #[test]
    fn every_recorded_transition_is_a_known_edge() {
        for (from, to) in EDGES {
            assert!(is_edge(*from, *to));
        }
        assert!(!is_edge(MissionPhase::Takeoff, MissionPhase::Transport));
        assert!(!is_edge(MissionPhase::Failsafe, MissionPhase::Takeoff));
        assert!(!is_edge(MissionPhase::Release, MissionPhase::Transport));
    }

    #[test]
    #[should_panic(expected = "illegal transition")]
    fn illegal_goto_panics() {
        let mut ms = MissionState::new(1);
        ms.goto(MissionPhase::Transport, 0.0);
    }

    #[test]
    fn phase_names_are_unique() {
        let mut names: Vec<_> = MissionPhase::ALL.iter().map(|p| p.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 14);
    }
}
