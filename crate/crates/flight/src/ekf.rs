//! Nine-state EKF (position, velocity, attitude) with IMU input and
//! delayed pose measurements handled by rewind-replay.
//!
//! Every IMU step is buffered together with a post-update state snapshot.
//! A measurement stamped in the past restores the snapshot preceding its
//! tick, applies the update there, and replays the buffered inputs (and any
//! other buffered measurements) back to the present — which is exactly what
//! processing the same data in timestamp order would have produced. A stamp
//! older than the buffer horizon is discarded with a logged warning.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::dynamics::G;

pub type Vec9 = SVector<f64, 9>;
pub type Mat9 = SMatrix<f64, 9, 9>;

/// A full-pose measurement stamped with the time it was taken (not the
/// time it arrived).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeas {
    pub t: f64,
    pub position: Vector3<f64>,
    pub attitude: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfParams {
    /// Process noise (variance per second) on position, velocity, attitude.
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_att: f64,
    /// Measurement variance on position and attitude.
    pub r_pos: f64,
    pub r_att: f64,
    /// Rewind buffer length in seconds.
    pub horizon: f64,
}

impl Default for EkfParams {
    fn default() -> Self {
        EkfParams {
            q_pos: 1e-8,
            q_vel: 1e-4,
            q_att: 1e-6,
            r_pos: 4e-4,
            r_att: 1e-4,
            horizon: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
struct Input {
    accel: Vector3<f64>,
    gyro: Vector3<f64>,
    dt: f64,
}

#[derive(Debug, Clone)]
struct Snap {
    t: f64,
    mean: Vec9,
    cov: Mat9,
}

#[derive(Debug, Clone)]
pub struct EkfState {
    pub mean: Vec9,
    pub cov: Mat9,
    pub t: f64,
    params: EkfParams,
    /// Post-update state before `inputs[0]` was applied.
    base: Snap,
    inputs: VecDeque<Input>,
    /// Post-update snapshot after each buffered input.
    snaps: VecDeque<Snap>,
    meas: Vec<PoseMeas>,
}

impl EkfState {
    pub fn new(mean: Vec9, cov: Mat9, t: f64, params: EkfParams) -> EkfState {
        EkfState {
            mean,
            cov,
            t,
            params,
            base: Snap { t, mean, cov },
            inputs: VecDeque::new(),
            snaps: VecDeque::new(),
            meas: Vec::new(),
        }
    }

    /// Start at a known pose with small initial uncertainty.
    pub fn at_pose(position: Vector3<f64>, attitude: Vector3<f64>, params: EkfParams) -> EkfState {
        let mut mean = Vec9::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&position);
        mean.fixed_rows_mut::<3>(6).copy_from(&attitude);
        EkfState::new(mean, Mat9::identity() * 1e-4, 0.0, params)
    }

    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(3).into()
    }

    pub fn attitude(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(6).into()
    }

    /// Symmetric within 1e-9 and positive-definite.
    pub fn covariance_ok(&self) -> bool {
        let sym_err = (self.cov - self.cov.transpose()).abs().max();
        sym_err < 1e-9 && nalgebra::Cholesky::new(self.cov).is_some()
    }
}

fn euler_rotation(att: &Vector3<f64>) -> Matrix3<f64> {
    nalgebra::Rotation3::from_euler_angles(att.x, att.y, att.z).into_inner()
}

/// Columns are d(R·a)/d(roll, pitch, yaw).
fn rotation_jacobian(att: &Vector3<f64>, a: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = att.x.sin_cos();
    let (sp, cp) = att.y.sin_cos();
    let (sy, cy) = att.z.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sr, -cr, 0.0, cr, -sr);
    let dry = Matrix3::new(-sp, 0.0, cp, 0.0, 0.0, 0.0, -cp, 0.0, -sp);
    let drz = Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0);
    let dr = rz * ry * drx * a;
    let dp = rz * dry * rx * a;
    let dy = drz * ry * rx * a;
    Matrix3::from_columns(&[dr, dp, dy])
}

fn predict(mean: &mut Vec9, cov: &mut Mat9, input: &Input, params: &EkfParams) {
    let dt = input.dt;
    let att: Vector3<f64> = mean.fixed_rows::<3>(6).into();
    let rot = euler_rotation(&att);
    let world_acc = rot * input.accel - Vector3::new(0.0, 0.0, G);

    let pos: Vector3<f64> = mean.fixed_rows::<3>(0).into();
    let vel: Vector3<f64> = mean.fixed_rows::<3>(3).into();
    mean.fixed_rows_mut::<3>(0).copy_from(&(pos + vel * dt));
    mean.fixed_rows_mut::<3>(3).copy_from(&(vel + world_acc * dt));
    mean.fixed_rows_mut::<3>(6)
        .copy_from(&(att + input.gyro * dt));

    let mut f = Mat9::identity();
    f.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(Matrix3::identity() * dt));
    f.fixed_view_mut::<3, 3>(3, 6)
        .copy_from(&(rotation_jacobian(&att, &input.accel) * dt));

    let mut q = Mat9::zeros();
    for i in 0..3 {
        q[(i, i)] = params.q_pos * dt;
        q[(i + 3, i + 3)] = params.q_vel * dt;
        q[(i + 6, i + 6)] = params.q_att * dt;
    }
    *cov = f * *cov * f.transpose() + q;
    *cov = (*cov + cov.transpose()) * 0.5;
}

fn update(mean: &mut Vec9, cov: &mut Mat9, m: &PoseMeas, params: &EkfParams) {
    type Mat69 = SMatrix<f64, 6, 9>;
    type Mat6 = SMatrix<f64, 6, 6>;
    let mut h = Mat69::zeros();
    for i in 0..3 {
        h[(i, i)] = 1.0;
        h[(i + 3, i + 6)] = 1.0;
    }
    let mut r = Mat6::zeros();
    for i in 0..3 {
        r[(i, i)] = params.r_pos;
        r[(i + 3, i + 3)] = params.r_att;
    }
    let z = {
        let mut z = SVector::<f64, 6>::zeros();
        z.fixed_rows_mut::<3>(0).copy_from(&m.position);
        z.fixed_rows_mut::<3>(3).copy_from(&m.attitude);
        z
    };
    let innov = z - h * *mean;
    let s = h * *cov * h.transpose() + r;
    let s_inv = s.try_inverse().expect("innovation covariance is invertible");
    let k = *cov * h.transpose() * s_inv;
    *mean += k * innov;
    let ikh = Mat9::identity() - k * h;
    *cov = ikh * *cov * ikh.transpose() + k * r * k.transpose();
    *cov = (*cov + cov.transpose()) * 0.5;
}

/// Index of the tick a stamp maps to: the first buffered input whose end
/// time is at or after the stamp. `None` means the stamp is current.
fn tick_for(snaps: &VecDeque<Snap>, stamp: f64) -> Option<usize> {
    snaps.iter().position(|s| s.t >= stamp - 1e-9)
}

/// Advance one IMU tick and optionally fold in a pose measurement.
pub fn ekf_step(
    ekf: &mut EkfState,
    imu: (Vector3<f64>, Vector3<f64>),
    pose: Option<PoseMeas>,
    dt: f64,
) {
    assert!(dt > 0.0, "dt must be positive");
    let input = Input {
        accel: imu.0,
        gyro: imu.1,
        dt,
    };
    predict(&mut ekf.mean, &mut ekf.cov, &input, &ekf.params);
    ekf.t += dt;
    ekf.inputs.push_back(input);
    ekf.snaps.push_back(Snap {
        t: ekf.t,
        mean: ekf.mean,
        cov: ekf.cov,
    });

    // Trim everything older than the horizon; the base snapshot slides
    // forward to stay the state just before the oldest buffered input.
    while ekf
        .snaps
        .front()
        .is_some_and(|s| ekf.t - s.t > ekf.params.horizon)
    {
        ekf.base = ekf.snaps.pop_front().unwrap();
        ekf.inputs.pop_front();
    }
    ekf.meas.retain(|m| m.t >= ekf.base.t - 1e-9);

    if let Some(m) = pose {
        apply_measurement(ekf, m);
    }
}

fn apply_measurement(ekf: &mut EkfState, m: PoseMeas) {
    if m.t < ekf.base.t - 1e-9 {
        log::warn!(
            "discarding pose measurement stamped {:.4}s: buffer horizon starts at {:.4}s",
            m.t,
            ekf.base.t
        );
        return;
    }
    let Some(tick) = tick_for(&ekf.snaps, m.t) else {
        // Stamp is current (or ahead): update in place.
        update(&mut ekf.mean, &mut ekf.cov, &m, &ekf.params);
        ekf.meas.push(m);
        if let Some(s) = ekf.snaps.back_mut() {
            s.mean = ekf.mean;
            s.cov = ekf.cov;
        }
        ekf.meas.sort_by(|a, b| a.t.total_cmp(&b.t));
        return;
    };

    ekf.meas.push(m);
    ekf.meas.sort_by(|a, b| a.t.total_cmp(&b.t));

    // Rewind to the state before the affected tick, then replay.
    let (mut mean, mut cov) = if tick == 0 {
        (ekf.base.mean, ekf.base.cov)
    } else {
        (ekf.snaps[tick - 1].mean, ekf.snaps[tick - 1].cov)
    };
    for i in tick..ekf.inputs.len() {
        predict(&mut mean, &mut cov, &ekf.inputs[i], &ekf.params);
        let t_end = ekf.snaps[i].t;
        let t_start = if i == 0 {
            ekf.base.t
        } else {
            ekf.snaps[i - 1].t
        };
        for meas in &ekf.meas {
            if meas.t > t_start + 1e-9 && meas.t <= t_end + 1e-9 {
                update(&mut mean, &mut cov, meas, &ekf.params);
            }
        }
        ekf.snaps[i].mean = mean;
        ekf.snaps[i].cov = cov;
    }
    ekf.mean = mean;
    ekf.cov = cov;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stationary_imu() -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::new(0.0, 0.0, G), Vector3::zeros())
    }

    #[test]
    fn stationary_truth_keeps_the_mean_and_shrinks_the_trace() {
        let params = EkfParams {
            q_pos: 0.0,
            q_vel: 0.0,
            q_att: 0.0,
            ..EkfParams::default()
        };
        let truth = Vector3::new(1.0, -2.0, 1.5);
        let mut ekf = EkfState::at_pose(truth, Vector3::zeros(), params);
        let mut trace = ekf.cov.trace();
        for k in 1..=200 {
            let pose = Some(PoseMeas {
                t: k as f64 * 0.005,
                position: truth,
                attitude: Vector3::zeros(),
            });
            ekf_step(&mut ekf, stationary_imu(), pose, 0.005);
            assert!(ekf.covariance_ok(), "step {k}");
            let now = ekf.cov.trace();
            assert!(now <= trace + 1e-12, "step {k}: trace {trace} -> {now}");
            trace = now;
        }
        assert!((ekf.position() - truth).norm() < 1e-9);
        assert!(ekf.velocity().norm() < 1e-9);
    }

    /// Drive two filters over the same flight: one receives each pose the
    /// moment it is stamped, the other receives them shuffled and late.
    #[test]
    fn rewind_replay_matches_in_order_processing() {
        let dt = 0.005;
        let accel = |t: f64| Vector3::new((t * 2.0).sin() * 0.3, (t * 1.3).cos() * 0.2, G);
        let gyro = |t: f64| Vector3::new(0.0, 0.0, (t * 0.7).sin() * 0.1);
        let pose_at = |t: f64| PoseMeas {
            t,
            position: Vector3::new(t.sin(), t.cos() - 1.0, 1.0),
            attitude: Vector3::new(0.0, 0.0, 0.05 * t),
        };

        let mut in_order = EkfState::at_pose(Vector3::zeros(), Vector3::zeros(), EkfParams::default());
        let mut delayed = in_order.clone();

        // Pose stamps every 100 ms; the delayed filter gets them 120/240 ms
        // late, alternating so consecutive stamps arrive out of order while
        // no two arrivals collide on one tick.
        let mut schedule: Vec<(f64, PoseMeas)> = Vec::new();
        for k in 1..=20 {
            let stamp = k as f64 * 0.1;
            let lag = if k % 2 == 0 { 0.12 } else { 0.24 };
            schedule.push((stamp + lag, pose_at(stamp)));
        }

        for step in 1..=500 {
            let t0 = (step - 1) as f64 * dt;
            let t1 = step as f64 * dt;
            let imu = (accel(t0), gyro(t0));

            let on_time = schedule
                .iter()
                .find(|(_, m)| (m.t - t1).abs() < 1e-9)
                .map(|(_, m)| *m);
            ekf_step(&mut in_order, imu, on_time, dt);

            let late = schedule
                .iter()
                .find(|(d, _)| (*d - t1).abs() < 1e-9)
                .map(|(_, m)| *m);
            ekf_step(&mut delayed, imu, late, dt);

            assert!(in_order.covariance_ok() && delayed.covariance_ok(), "step {step}");
        }

        let mean_err = (in_order.mean - delayed.mean).abs().max();
        let cov_err = (in_order.cov - delayed.cov).abs().max();
        assert!(mean_err < 1e-9, "mean diverged by {mean_err}");
        assert!(cov_err < 1e-9, "cov diverged by {cov_err}");
    }

    #[test]
    fn measurements_older_than_the_horizon_are_discarded() {
        let mut ekf = EkfState::at_pose(Vector3::zeros(), Vector3::zeros(), EkfParams::default());
        for _ in 0..200 {
            ekf_step(&mut ekf, stationary_imu(), None, 0.005);
        }
        let before = ekf.clone();
        let stale = PoseMeas {
            t: 0.1,
            position: Vector3::new(50.0, 0.0, 0.0),
            attitude: Vector3::zeros(),
        };
        ekf_step(&mut ekf, stationary_imu(), Some(stale), 0.005);
        let mut expect = before;
        ekf_step(&mut expect, stationary_imu(), None, 0.005);
        assert_eq!(ekf.mean, expect.mean);
        assert_eq!(ekf.cov, expect.cov);
    }

    #[test]
    fn figure_eight_rmse_stays_under_five_centimeters() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut gauss = move || {
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };

        let w = 2.0 * std::f64::consts::PI / 8.0;
        let pos = |t: f64| Vector3::new((w * t).sin(), 0.5 * (2.0 * w * t).sin(), 1.5);
        let vel = |t: f64| Vector3::new(w * (w * t).cos(), w * (2.0 * w * t).cos(), 0.0);
        let acc = |t: f64| {
            Vector3::new(
                -w * w * (w * t).sin(),
                -2.0 * w * w * (2.0 * w * t).sin(),
                0.0,
            )
        };

        let dt = 0.005;
        let mut ekf = EkfState::new(
            {
                let mut m = Vec9::zeros();
                m.fixed_rows_mut::<3>(0).copy_from(&pos(0.0));
                m.fixed_rows_mut::<3>(3).copy_from(&vel(0.0));
                m
            },
            Mat9::identity() * 1e-4,
            0.0,
            EkfParams::default(),
        );

        let mut sq_sum = 0.0;
        let mut n = 0usize;
        let mut pending: VecDeque<PoseMeas> = VecDeque::new();
        for step in 1..=3000 {
            let t0 = (step - 1) as f64 * dt;
            let t1 = step as f64 * dt;
            // 10 Hz pose stamps, sigma 2 cm, delivered 100 ms late.
            if (t0 / 0.1 - (t0 / 0.1).round()).abs() < 1e-9 && step > 1 {
                pending.push_back(PoseMeas {
                    t: t0,
                    position: pos(t0)
                        + Vector3::new(gauss() * 0.02, gauss() * 0.02, gauss() * 0.02),
                    attitude: Vector3::zeros(),
                });
            }
            let due = pending
                .front()
                .is_some_and(|m| t1 + 1e-9 >= m.t + 0.1)
                .then(|| pending.pop_front().unwrap());
            let imu = (acc(t0) + Vector3::new(0.0, 0.0, G), Vector3::zeros());
            ekf_step(&mut ekf, imu, due, dt);
            assert!(ekf.covariance_ok(), "step {step}");
            if t1 > 5.0 {
                sq_sum += (ekf.position() - pos(t1)).norm_squared();
                n += 1;
            }
        }
        let rmse = (sq_sum / n as f64).sqrt();
        assert!(rmse <= 0.05, "position RMSE {rmse}");
    }
}
