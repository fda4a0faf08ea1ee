//! Bidirectional RRT-Connect over 3-D positions with shortcut smoothing.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::world::{collision_check, WorldModel};
use crate::MissionError;

/// Tree growth step in metres.
const STEP: f64 = 0.5;
/// Sampling budget before the planner gives up.
const MAX_ITERS: usize = 10_000;

struct Tree {
    nodes: Vec<Vector3<f64>>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: Vector3<f64>) -> Self {
        Tree { nodes: vec![root], parent: vec![0] }
    }

    fn nearest(&self, p: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn path_to_root(&self, mut i: usize) -> Vec<Vector3<f64>> {
        let mut out = vec![self.nodes[i]];
        while self.parent[i] != i {
            i = self.parent[i];
            out.push(self.nodes[i]);
        }
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Blocked,
}

/// One bounded step from the nearest node toward `target`.
fn extend(tree: &mut Tree, target: &Vector3<f64>, world: &WorldModel, radius: f64) -> Extend {
    let near = tree.nearest(target);
    let from = tree.nodes[near];
    let delta = target - from;
    let dist = delta.norm();
    if dist < 1e-12 {
        return Extend::Reached(near);
    }
    let (next, reached) = if dist <= STEP {
        (*target, true)
    } else {
        (from + delta * (STEP / dist), false)
    };
    if !collision_check(&from, &next, world, radius) {
        return Extend::Blocked;
    }
    tree.nodes.push(next);
    tree.parent.push(near);
    let idx = tree.nodes.len() - 1;
    if reached {
        Extend::Reached(idx)
    } else {
        Extend::Advanced(idx)
    }
}

/// Greedy connect: keep stepping toward `target` until it is reached or a
/// step collides.
fn connect(tree: &mut Tree, target: &Vector3<f64>, world: &WorldModel, radius: f64) -> Option<usize> {
    loop {
        match extend(tree, target, world, radius) {
            Extend::Reached(i) => return Some(i),
            Extend::Advanced(_) => {}
            Extend::Blocked => return None,
        }
    }
}

/// Deterministic shortcut pass: from each kept waypoint, jump to the
/// farthest later waypoint reachable in a straight free segment.
fn shortcut(path: &[Vector3<f64>], world: &WorldModel, radius: f64) -> Vec<Vector3<f64>> {
    if path.len() <= 2 {
        return path.to_vec();
    }
    let mut out = vec![path[0]];
    let mut i = 0;
    while i < path.len() - 1 {
        let mut j = path.len() - 1;
        while j > i + 1 && !collision_check(&path[i], &path[j], world, radius) {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    out
}

pub fn path_length(path: &[Vector3<f64>]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Plan a collision-free waypoint path from `start` to `goal`.
///
/// Two trees grow toward uniform samples from the world bounds, alternating
/// roles each iteration; after every extension the other tree tries a greedy
/// connect to the new node. The joined path is shortcut-smoothed. The same
/// seed always yields the same path.
pub fn plan_rrt_connect(
    start: Vector3<f64>,
    goal: Vector3<f64>,
    world: &WorldModel,
    vehicle_radius: f64,
    rng_seed: u64,
) -> Result<Vec<Vector3<f64>>, MissionError> {
    for o in &world.obstacles {
        if o.inflate(world.inflation).distance(&goal) < vehicle_radius {
            return Err(MissionError::Infeasible);
        }
        if o.inflate(world.inflation).distance(&start) < vehicle_radius {
            return Err(MissionError::Infeasible);
        }
    }
    if (start - goal).norm() < 1e-12 {
        return Ok(vec![start]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut ta = Tree::new(start);
    let mut tb = Tree::new(goal);
    // a_is_start tracks which tree currently grows from the start side.
    let mut a_is_start = true;

    for _ in 0..MAX_ITERS {
        let sample = Vector3::new(
            rng.gen_range(world.bounds.min.x..=world.bounds.max.x),
            rng.gen_range(world.bounds.min.y..=world.bounds.max.y),
            rng.gen_range(world.bounds.min.z..=world.bounds.max.z),
        );
        let grown = match extend(&mut ta, &sample, world, vehicle_radius) {
            Extend::Reached(i) | Extend::Advanced(i) => Some(i),
            Extend::Blocked => None,
        };
        if let Some(i) = grown {
            let tip = ta.nodes[i];
            if let Some(j) = connect(&mut tb, &tip, world, vehicle_radius) {
                let mut half_a = ta.path_to_root(i);
                half_a.reverse();
                let half_b = tb.path_to_root(j);
                // half_b starts at the meeting point already present at the
                // end of half_a.
                half_a.extend(half_b.into_iter().skip(1));
                if !a_is_start {
                    half_a.reverse();
                }
                let smoothed = shortcut(&half_a, world, vehicle_radius);
                debug_assert!(smoothed
                    .windows(2)
                    .all(|w| collision_check(&w[0], &w[1], world, vehicle_radius)));
                return Ok(smoothed);
            }
        }
        std::mem::swap(&mut ta, &mut tb);
        a_is_start = !a_is_start;
    }
    Err(MissionError::PlanTimeout)
}
