//! Vehicle state and the simplified hex-rotor dynamics step.
//!
//! The flight controller's inner loops are opaque on the real vehicle, so
//! they are modeled as exact first-order lags toward the commanded roll,
//! pitch, and vertical velocity. Horizontal acceleration follows the tilt
//! (g·tan), yaw integrates the commanded rate, and all stochastic effects
//! (rotor draft near the ground, thrust ripple) draw from the caller's RNG
//! so a seeded run replays bit-identically.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const G: f64 = 9.81;
pub const BASE_MASS: f64 = 10.0;
/// Inner-loop attitude time constant (s).
pub const TAU_ATT: f64 = 0.15;
/// Inner-loop vertical-velocity time constant (s).
pub const TAU_VZ: f64 = 0.3;
/// Altitude below which rotor draft and thrust ripple act (m).
pub const DRAFT_CEILING: f64 = 1.0;

/// The four brick kinds with their catalog mass and size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BrickKind {
    Red,
    Green,
    Blue,
    Orange,
}

impl BrickKind {
    pub const ALL: [BrickKind; 4] = [
        BrickKind::Red,
        BrickKind::Green,
        BrickKind::Blue,
        BrickKind::Orange,
    ];

    pub fn mass(self) -> f64 {
        match self {
            BrickKind::Red => 1.0,
            BrickKind::Green => 1.0,
            BrickKind::Blue => 1.5,
            BrickKind::Orange => 2.0,
        }
    }

    /// (length, width, height) in meters; bricks lie flat on the long axis.
    pub fn dims(self) -> (f64, f64, f64) {
        let length = match self {
            BrickKind::Red => 0.3,
            BrickKind::Green => 0.6,
            BrickKind::Blue => 1.2,
            BrickKind::Orange => 2.0,
        };
        (length, 0.2, 0.2)
    }

    pub fn id(self) -> usize {
        match self {
            BrickKind::Red => 1,
            BrickKind::Green => 2,
            BrickKind::Blue => 3,
            BrickKind::Orange => 4,
        }
    }

    pub fn from_id(id: usize) -> Option<BrickKind> {
        BrickKind::ALL.get(id.wrapping_sub(1)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GripperPose {
    Retracted,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnetState {
    On,
    Off,
}

/// Full vehicle state. `mass` always equals [`BASE_MASS`] plus the attached
/// brick's catalog mass; `foam_compression` is nonzero only in contact.
#[derive(Debug, Clone, PartialEq)]
pub struct UavState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Roll, pitch, yaw (rad).
    pub attitude: Vector3<f64>,
    pub mass: f64,
    pub gripper: GripperPose,
    pub magnets: MagnetState,
    pub foam_compression: f64,
    pub attached_brick: Option<BrickKind>,
}

impl UavState {
    /// At rest on the ground plane, gripper retracted, magnets off.
    pub fn grounded() -> UavState {
        UavState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: Vector3::zeros(),
            mass: BASE_MASS,
            gripper: GripperPose::Retracted,
            magnets: MagnetState::Off,
            foam_compression: 0.0,
            attached_brick: None,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Outer-loop command set: vertical velocity, attitude targets, yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Command {
    pub vz: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw_rate: f64,
}

/// Near-ground disturbance magnitudes. Zero fields draw nothing from the
/// RNG, so a disturbance-free run consumes no randomness.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Disturbance {
    /// Std-dev of the zero-mean draft force per axis (N).
    pub draft_sigma: f64,
    /// Relative thrust-gain ripple amplitude.
    pub ripple_gain: f64,
}

impl Disturbance {
    pub fn none() -> Disturbance {
        Disturbance::default()
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Advance the vehicle by one step of `dt` seconds (dt ∈ (0, 0.02]).
pub fn dynamics_step(
    state: &UavState,
    cmd: &Command,
    dt: f64,
    disturbance: &Disturbance,
    rng: &mut ChaCha8Rng,
) -> UavState {
    assert!(dt > 0.0 && dt <= 0.02, "dt out of range: {dt}");
    let mut next = state.clone();

    // Exact first-order responses: 1 - exp(-dt/tau) per step telescopes to
    // the continuous-time solution at any dt.
    let k_att = 1.0 - (-dt / TAU_ATT).exp();
    let k_vz = 1.0 - (-dt / TAU_VZ).exp();

    next.attitude.x += (cmd.roll - next.attitude.x) * k_att;
    next.attitude.y += (cmd.pitch - next.attitude.y) * k_att;
    next.attitude.z += cmd.yaw_rate * dt;

    let in_draft_band = state.position.z < DRAFT_CEILING;
    let mut vz_target = cmd.vz * BASE_MASS / state.mass;
    if in_draft_band && disturbance.ripple_gain != 0.0 {
        vz_target *= 1.0 + disturbance.ripple_gain * (2.0 * rng.gen::<f64>() - 1.0);
    }
    next.velocity.z += (vz_target - next.velocity.z) * k_vz;

    let ax = G * next.attitude.y.tan();
    let ay = -G * next.attitude.x.tan();
    let (sy, cy) = next.attitude.z.sin_cos();
    next.velocity.x += (cy * ax - sy * ay) * dt;
    next.velocity.y += (sy * ax + cy * ay) * dt;

    if in_draft_band && disturbance.draft_sigma != 0.0 {
        let scale = disturbance.draft_sigma / state.mass * dt;
        next.velocity.x += gauss(rng) * scale;
        next.velocity.y += gauss(rng) * scale;
        next.velocity.z += gauss(rng) * scale;
    }

    next.position += next.velocity * dt;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn hover_at(z: f64) -> UavState {
        UavState {
            position: Vector3::new(0.0, 0.0, z),
            ..UavState::grounded()
        }
    }

    #[test]
    fn hover_equilibrium_holds_over_any_horizon() {
        let mut s = hover_at(2.0);
        let start = s.clone();
        let mut r = rng();
        for _ in 0..5000 {
            s = dynamics_step(&s, &Command::default(), 0.01, &Disturbance::none(), &mut r);
        }
        assert_eq!(s.position, start.position);
        assert_eq!(s.velocity, start.velocity);
    }

    #[test]
    fn vz_step_response_is_the_first_order_exponential() {
        let mut s = hover_at(2.0);
        let cmd = Command {
            vz: 1.0,
            ..Command::default()
        };
        let mut r = rng();
        let dt = 0.002;
        let mut t = 0.0;
        while t < 1.2 {
            s = dynamics_step(&s, &cmd, dt, &Disturbance::none(), &mut r);
            t += dt;
            let expect = 1.0 - (-t / TAU_VZ).exp();
            assert!(
                (s.velocity.z - expect).abs() < 1e-6,
                "t={t}: {} vs {expect}",
                s.velocity.z
            );
        }
    }

    #[test]
    fn orange_payload_scales_vz_authority_by_ten_twelfths() {
        let mut s = hover_at(2.0);
        s.attached_brick = Some(BrickKind::Orange);
        s.mass = BASE_MASS + BrickKind::Orange.mass();
        let cmd = Command {
            vz: 1.0,
            ..Command::default()
        };
        let mut r = rng();
        for _ in 0..3000 {
            s = dynamics_step(&s, &cmd, 0.01, &Disturbance::none(), &mut r);
        }
        assert!((s.velocity.z - 10.0 / 12.0).abs() < 1e-6, "{}", s.velocity.z);
    }

    #[test]
    fn draft_band_injects_noise_only_below_one_meter() {
        let dist = Disturbance {
            draft_sigma: 5.0,
            ripple_gain: 0.05,
        };
        let cmd = Command::default();
        let mut r = rng();
        let high = dynamics_step(&hover_at(1.5), &cmd, 0.01, &dist, &mut r);
        assert_eq!(high.velocity, Vector3::zeros());
        let low = dynamics_step(&hover_at(0.5), &cmd, 0.01, &dist, &mut r);
        assert!(low.velocity.norm() > 0.0);
    }

    #[test]
    fn brick_catalog_round_trips_ids() {
        for k in BrickKind::ALL {
            assert_eq!(BrickKind::from_id(k.id()), Some(k));
        }
        assert_eq!(BrickKind::from_id(0), None);
        assert_eq!(BrickKind::from_id(5), None);
    }

    proptest! {
        #[test]
        fn zero_commands_from_level_attitude_never_gain_speed(
            vx in -3.0f64..3.0,
            vy in -3.0f64..3.0,
            vz in -2.0f64..2.0,
            z in 1.0f64..10.0,
            seed in 0u64..1000,
        ) {
            let mut s = hover_at(z);
            s.velocity = Vector3::new(vx, vy, vz);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut prev = s.speed();
            for _ in 0..200 {
                s = dynamics_step(&s, &Command::default(), 0.01, &Disturbance::none(), &mut r);
                let now = s.speed();
                prop_assert!(now <= prev + 1e-12);
                prev = now;
            }
        }
    }
}
