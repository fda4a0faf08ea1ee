//! World model shared by the planner and the mission simulator.

use nalgebra::Vector3;
use skyhook_flight::BrickKind;

/// Bounding-sphere radius of the vehicle used for collision checks (m).
pub const VEHICLE_RADIUS: f64 = 0.4;

/// Axis-aligned box, `min[i] <= max[i]` on every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        assert!(
            min.x <= max.x && min.y <= max.y && min.z <= max.z,
            "degenerate AABB: min {min:?} max {max:?}"
        );
        Aabb { min, max }
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Euclidean distance from a point to the box surface (zero inside).
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let gap = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
            d2 += gap * gap;
        }
        d2.sqrt()
    }
}

/// A brick waiting on the arena floor. Position is the centre of the top
/// face, where the gripper must arrive.
#[derive(Debug, Clone, Copy)]
pub struct BrickSite {
    pub kind: BrickKind,
    pub top_center: Vector3<f64>,
}

/// Everything the mission layer knows about the arena: brick pick sites,
/// the wall placement target, static obstacles, and the sampling bounds
/// used by the planner.
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub bounds: Aabb,
    pub obstacles: Vec<Aabb>,
    /// Safety margin added to every obstacle before collision checks.
    pub inflation: f64,
    pub bricks: Vec<BrickSite>,
    /// Centre of the wall slot the carried brick must be lowered onto.
    pub place_target: Vector3<f64>,
    pub home: Vector3<f64>,
}

impl WorldModel {
    pub fn empty() -> Self {
        WorldModel {
            bounds: Aabb::new(Vector3::new(-20.0, -20.0, 0.0), Vector3::new(20.0, 20.0, 6.0)),
            obstacles: Vec::new(),
            inflation: 0.1,
            bricks: Vec::new(),
            place_target: Vector3::zeros(),
            home: Vector3::zeros(),
        }
    }
}

/// Shortest distance from segment `a..b` to `boxx`, exact to solver
/// tolerance. The point-to-box distance is convex along the segment, so a
/// ternary search converges to the global minimum.
fn segment_box_distance(a: &Vector3<f64>, b: &Vector3<f64>, boxx: &Aabb) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let eval = |t: f64| boxx.distance(&(a + (b - a) * t));
    for _ in 0..120 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eval(m1) <= eval(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    eval(0.5 * (lo + hi)).min(eval(0.0)).min(eval(1.0))
}

/// True iff the sphere of `vehicle_radius` swept along `a..b` stays clear
/// of every inflated obstacle. Touching at exactly the inflated radius
/// counts as clear; only strict penetration is a collision.
pub fn collision_check(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    world: &WorldModel,
    vehicle_radius: f64,
) -> bool {
    world
        .obstacles
        .iter()
        .all(|o| segment_box_distance(a, b, &o.inflate(world.inflation)) >= vehicle_radius)
}
