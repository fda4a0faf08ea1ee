//! Closed-loop mission simulator: dynamics, EKF, geometry-derived
//! perception, and the state machine advanced on one clock.
//!
//! Perception here is synthesized by projecting the known brick geometry
//! through a downward camera, so missions exercise the control and decision
//! stack deterministically without a trained network in the loop.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyhook_flight::{
    dynamics_step, ekf_step, gripper_step, pid_step, BrickKind, BrickTarget, Command,
    ContactEvent, Disturbance, EkfParams, EkfState, MagnetState, PidLoop, PoseSensor,
    TrajectoryLog, UavState, G,
};
use skyhook_perception::{BinMask, BoxF, BrickClass, GraspStateReading, InstanceDetection, SupportMask};

use crate::machine::{
    step_state_machine, Inputs, MissionPhase, MissionState, Setpoints, ASCEND_VZ, DESCEND_VZ,
};
use crate::report::{phase_spans, MissionReport};
use crate::world::{Aabb, BrickSite, WorldModel, VEHICLE_RADIUS};

pub const IMG_SIDE: usize = 160;
/// Pinhole scale: pixels per metre at one metre of height.
pub const FOCAL_PX_M: f64 = 160.0;
const IMG_CENTER: (f64, f64) = (80.0, 80.0);
const MIN_DET_PX: usize = 10;
const BRICK_TOP: f64 = 0.2;
/// Drop offset from the placement target beyond which the run is a miss.
const PLACE_TOL: f64 = 0.35;

pub fn kind_class(kind: BrickKind) -> BrickClass {
    match kind {
        BrickKind::Red => BrickClass::Red,
        BrickKind::Green => BrickClass::Green,
        BrickKind::Blue => BrickClass::Blue,
        BrickKind::Orange => BrickClass::Orange,
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub max_t: f64,
    pub disturbance: Disturbance,
    pub sensor_rate: f64,
    pub sensor_latency: f64,
    pub sensor_sigma: f64,
    /// Shift applied to the brick priors' x coordinate; large values make
    /// the survey come up empty so the failsafe path can be exercised.
    pub prior_offset: f64,
    pub log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            max_t: 150.0,
            disturbance: Disturbance { draft_sigma: 3.0, ripple_gain: 0.05 },
            sensor_rate: 10.0,
            sensor_latency: 0.1,
            sensor_sigma: 0.01,
            prior_offset: 0.0,
            log: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    /// The machine's world: noisy brick priors, exact obstacle map.
    pub world: WorldModel,
    /// Ground-truth brick sites, index-aligned with the priors.
    pub truth_bricks: Vec<BrickSite>,
    pub start: Vector3<f64>,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Seeded arena: bricks in a pick zone, pillar obstacles between the zones,
/// a placement slot, and the home point. Priors carry GPS-grade noise.
pub fn generate_scenario(seed: u64, prior_offset: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    let kinds = [BrickKind::Red, BrickKind::Green, BrickKind::Blue];

    let n_bricks = rng.gen_range(3..=5usize);
    let mut truth: Vec<BrickSite> = Vec::new();
    let mut guard = 0;
    while truth.len() < n_bricks && guard < 500 {
        guard += 1;
        let x = rng.gen_range(2.0..6.0);
        let y = rng.gen_range(-3.0..3.0);
        let clear = truth
            .iter()
            .all(|s| (s.top_center.x - x).hypot(s.top_center.y - y) >= 1.8);
        if clear {
            truth.push(BrickSite {
                kind: kinds[rng.gen_range(0..kinds.len())],
                top_center: Vector3::new(x, y, BRICK_TOP),
            });
        }
    }

    let priors: Vec<BrickSite> = truth
        .iter()
        .map(|s| BrickSite {
            kind: s.kind,
            top_center: s.top_center
                + Vector3::new(gauss(&mut rng) * 0.15 + prior_offset, gauss(&mut rng) * 0.15, 0.0),
        })
        .collect();

    let place_target = Vector3::new(-5.5, rng.gen_range(-1.0..1.0), 0.25);
    let home = Vector3::new(-8.0, -5.0, 3.0);

    let n_obs = rng.gen_range(1..=2usize);
    let mut obstacles = Vec::new();
    let mut guard = 0;
    while obstacles.len() < n_obs && guard < 200 {
        guard += 1;
        let cx = rng.gen_range(-3.0..-0.5);
        let cy = rng.gen_range(-3.5..3.5);
        let half = rng.gen_range(0.3..0.5);
        let height = rng.gen_range(1.5..4.5);
        let clear_of = |px: f64, py: f64| (cx - px).hypot(cy - py) >= 1.8;
        let ok = clear_of(place_target.x, place_target.y)
            && clear_of(home.x, home.y)
            && truth.iter().all(|s| clear_of(s.top_center.x, s.top_center.y));
        if ok {
            obstacles.push(Aabb::new(
                Vector3::new(cx - half, cy - half, 0.0),
                Vector3::new(cx + half, cy + half, height),
            ));
        }
    }

    let world = WorldModel {
        bounds: Aabb::new(Vector3::new(-10.0, -6.5, 0.05), Vector3::new(8.0, 6.5, 5.0)),
        obstacles,
        inflation: 0.3,
        bricks: priors,
        place_target,
        home,
    };
    Scenario {
        world,
        truth_bricks: truth,
        start: Vector3::new(home.x, home.y, 0.0),
    }
}

/// Project a brick's top face through the downward camera into pixel
/// bounds; None when it falls outside the frame or is too small to detect.
fn project_site(uav: &Vector3<f64>, site: &BrickSite) -> Option<(usize, usize, usize, usize)> {
    let h = (uav.z - site.top_center.z).max(0.03);
    let s = FOCAL_PX_M / h;
    let (lx, ly, _) = site.kind.dims();
    let cx = IMG_CENTER.0 + (site.top_center.x - uav.x) * s;
    let cy = IMG_CENTER.1 + (site.top_center.y - uav.y) * s;
    let side = IMG_SIDE as f64;
    let x0 = (cx - 0.5 * lx * s).floor().clamp(0.0, side) as usize;
    let x1 = (cx + 0.5 * lx * s).ceil().clamp(0.0, side) as usize;
    let y0 = (cy - 0.5 * ly * s).floor().clamp(0.0, side) as usize;
    let y1 = (cy + 0.5 * ly * s).ceil().clamp(0.0, side) as usize;
    if x1 <= x0 || y1 <= y0 || (x1 - x0) * (y1 - y0) < MIN_DET_PX {
        return None;
    }
    Some((x0, y0, x1, y1))
}

fn rect_mask(rect: (usize, usize, usize, usize)) -> BinMask {
    let mut m = BinMask::zeros(IMG_SIDE, IMG_SIDE);
    for y in rect.1..rect.3 {
        for x in rect.0..rect.2 {
            m.set(x, y, true);
        }
    }
    m
}

fn truth_reading(truth: &UavState) -> GraspStateReading {
    let pick = |b: bool| if b { [0.05, 0.95] } else { [0.95, 0.05] };
    GraspStateReading {
        foam_probs: pick(truth.foam_compression >= 0.004),
        attach_probs: pick(truth.attached_brick.is_some()),
    }
}

/// Velocity-setpoint tracking: attitude from horizontal velocity error,
/// feedforward plus integral trim on the vertical channel.
struct Controller {
    px: PidLoop,
    py: PidLoop,
    pz: PidLoop,
}

impl Controller {
    fn new() -> Controller {
        Controller {
            px: PidLoop::new(0.22, 0.06, 0.0, 0.25, 0.6),
            py: PidLoop::new(0.22, 0.06, 0.0, 0.25, 0.6),
            pz: PidLoop::new(0.8, 1.2, 0.0, 1.2, 0.8),
        }
    }

    fn command(&mut self, sp: &Setpoints, est_vel: &Vector3<f64>, dt: f64) -> Command {
        Command {
            pitch: pid_step(&mut self.px, sp.v.x - est_vel.x, dt),
            roll: -pid_step(&mut self.py, sp.v.y - est_vel.y, dt),
            vz: sp.v.z + pid_step(&mut self.pz, sp.v.z - est_vel.z, dt),
            yaw_rate: sp.yaw_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BrickState {
    Ground,
    Carried,
    Placed,
}

/// The ground brick whose footprint currently contains the gripper axis.
/// The magnetic plate is a strip along the brick's long axis, so the
/// attach-gating offset is the distance to the strip, not to the centre.
fn gripper_target(
    uav: &UavState,
    sites: &[BrickSite],
    states: &[BrickState],
) -> Option<(usize, BrickTarget)> {
    let mut best: Option<(usize, BrickTarget)> = None;
    for (i, site) in sites.iter().enumerate() {
        if states[i] != BrickState::Ground {
            continue;
        }
        let dx = uav.position.x - site.top_center.x;
        let dy = uav.position.y - site.top_center.y;
        let (lx, ly, _) = site.kind.dims();
        if dx.abs() <= 0.5 * lx && dy.abs() <= 0.5 * ly {
            let strip_half = 0.25 * lx;
            let lateral = (dx.abs() - strip_half).max(0.0).hypot(dy);
            let cand = BrickTarget {
                kind: site.kind,
                top_height: site.top_center.z,
                lateral_offset: lateral,
            };
            if best.as_ref().is_none_or(|(_, b)| lateral < b.lateral_offset) {
                best = Some((i, cand));
            }
        }
    }
    best
}

#[derive(Debug)]
pub struct MissionOutcome {
    pub report: MissionReport,
    /// Trajectory CSV, when logging was enabled.
    pub trajectory: Option<String>,
    pub world: WorldModel,
}

/// Run one complete mission. Same seed and config, same outcome, bit for
/// bit: every random draw comes from seeded generators on a fixed schedule.
pub fn run_mission(seed: u64, cfg: &SimConfig) -> MissionOutcome {
    let scenario = generate_scenario(seed, cfg.prior_offset);
    let world = &scenario.world;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(7));

    let mut truth = UavState::grounded();
    truth.position = scenario.start;
    let mut ekf = EkfState::at_pose(truth.position, truth.attitude, EkfParams::default());
    let mut sensor = PoseSensor::new(cfg.sensor_rate, cfg.sensor_latency, cfg.sensor_sigma);
    let mut controller = Controller::new();
    let mut ms = MissionState::new(seed);
    let mut states = vec![BrickState::Ground; scenario.truth_bricks.len()];
    let mut log = TrajectoryLog::new();

    let mut collisions = 0u32;
    let mut violations = 0u32;
    let mut stale_events = 0u32;
    let mut in_collision = false;
    let mut placed_within: Option<f64> = None;
    let mut t_end = 0.0;

    let steps = (cfg.max_t / cfg.dt).round() as usize;
    for step in 0..steps {
        if ms.terminal() {
            break;
        }
        let t = step as f64 * cfg.dt;

        let mut detections: Vec<InstanceDetection> = Vec::new();
        let mut ids: Vec<usize> = Vec::new();
        if matches!(ms.phase, MissionPhase::Detect | MissionPhase::Select) {
            for (i, site) in scenario.truth_bricks.iter().enumerate() {
                if states[i] != BrickState::Ground {
                    continue;
                }
                if let Some(rect) = project_site(&truth.position, site) {
                    let mask = rect_mask(rect);
                    detections.push(InstanceDetection {
                        class: kind_class(site.kind),
                        score: 0.9,
                        bbox: BoxF::new(rect.0 as f64, rect.1 as f64, rect.2 as f64, rect.3 as f64),
                        mask,
                        part_mask: BinMask::zeros(IMG_SIDE, IMG_SIDE),
                    });
                    ids.push(i);
                }
            }
        }
        let target_mask: Option<SupportMask> =
            if matches!(ms.phase, MissionPhase::TrackServo | MissionPhase::Descend) {
                ms.target.and_then(|ti| {
                    (states[ti] == BrickState::Ground)
                        .then(|| project_site(&truth.position, &scenario.truth_bricks[ti]))
                        .flatten()
                        .map(|rect| SupportMask::new(rect_mask(rect), step as u64))
                })
            } else {
                None
            };

        let inputs = Inputs {
            t,
            stamp: t,
            detections: &detections,
            detection_ids: &ids,
            target_mask: target_mask.as_ref(),
            grasp: truth_reading(&truth),
            position: ekf.position(),
            image_center: IMG_CENTER,
        };
        let phase_before = ms.phase;
        let out = step_state_machine(&mut ms, &inputs, world);

        if matches!(phase_before, MissionPhase::Transport | MissionPhase::PlaceDescend)
            && out.magnets == MagnetState::Off
        {
            violations += 1;
        }
        if phase_before == MissionPhase::Descend && out.setpoints.v.z < -(DESCEND_VZ + 1e-9) {
            violations += 1;
        }
        if phase_before == MissionPhase::AscendVerify && out.setpoints.v.z > ASCEND_VZ + 1e-9 {
            violations += 1;
        }
        if matches!(out.error, Some(crate::MissionError::StaleInput)) {
            stale_events += 1;
        }

        let cmd = controller.command(&out.setpoints, &ekf.velocity(), cfg.dt);
        let vel_before = truth.velocity;
        let att_before = truth.attitude;
        let stepped = dynamics_step(&truth, &cmd, cfg.dt, &cfg.disturbance, &mut rng);
        let target = gripper_target(&stepped, &scenario.truth_bricks, &states);
        let (next, events) = gripper_step(&stepped, target.as_ref().map(|(_, b)| b), out.magnets, cfg.dt);
        truth = next;

        for ev in &events {
            match ev {
                ContactEvent::Attached { .. } => {
                    if let Some((i, _)) = target {
                        states[i] = BrickState::Carried;
                    }
                }
                ContactEvent::Released { .. } => {
                    if let Some(i) = states.iter().position(|s| *s == BrickState::Carried) {
                        states[i] = BrickState::Placed;
                        placed_within = Some(
                            (truth.position.x - world.place_target.x)
                                .hypot(truth.position.y - world.place_target.y),
                        );
                    }
                }
                ContactEvent::Contact { .. } => {}
            }
        }

        let t1 = t + cfg.dt;
        let accel_world = (truth.velocity - vel_before) / cfg.dt + Vector3::new(0.0, 0.0, G);
        let rot = Rotation3::from_euler_angles(att_before.x, att_before.y, att_before.z);
        let imu = (rot.inverse() * accel_world, (truth.attitude - att_before) / cfg.dt);
        let pose = sensor.poll(t1, truth.position, truth.attitude, &mut rng);
        ekf_step(&mut ekf, imu, pose, cfg.dt);

        let hit = world
            .obstacles
            .iter()
            .any(|o| o.distance(&truth.position) < VEHICLE_RADIUS);
        if hit && !in_collision {
            collisions += 1;
        }
        in_collision = hit;

        if cfg.log {
            log.push(t1, &truth, &ekf, &cmd, &events);
        }
        t_end = t1;
    }

    if !ms.terminal() {
        ms.abort(t_end);
    }
    for w in ms.transitions.windows(1) {
        if !crate::machine::is_edge(w[0].from, w[0].to) {
            violations += 1;
        }
    }

    let success = ms.complete
        && collisions == 0
        && violations == 0
        && placed_within.is_some_and(|d| d <= PLACE_TOL);
    let report = MissionReport {
        seed,
        success,
        final_phase: ms.phase.name().to_string(),
        retries: ms.retries,
        collision_events: collisions,
        invariant_violations: violations,
        stale_events,
        placed_within_m: placed_within,
        duration_s: t_end,
        phases: phase_spans(&ms.transitions, MissionPhase::Takeoff, t_end),
        transitions: ms
            .transitions
            .iter()
            .map(|tr| [tr.from.name().to_string(), tr.to.name().to_string()])
            .collect(),
    };
    MissionOutcome {
        report,
        trajectory: cfg.log.then(|| log.to_csv()),
        world: world.clone(),
    }
}
