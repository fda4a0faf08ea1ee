//! The outer-loop PID element used four times over (vertical velocity,
//! roll, pitch, yaw rate), with clamped output and frozen-integral
//! anti-windup.

/// One PID loop. The integral accumulates before the output forms, is
/// clamped to `int_clamp`, and does not grow while the output saturates.
#[derive(Debug, Clone, PartialEq)]
pub struct PidLoop {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub out_clamp: f64,
    pub int_clamp: f64,
    integral: f64,
    prev_error: Option<f64>,
}

impl PidLoop {
    pub fn new(kp: f64, ki: f64, kd: f64, out_clamp: f64, int_clamp: f64) -> PidLoop {
        assert!(out_clamp > 0.0 && int_clamp > 0.0);
        PidLoop {
            kp,
            ki,
            kd,
            out_clamp,
            int_clamp,
            integral: 0.0,
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }
}

/// Advance one loop by `dt` and return the clamped command.
pub fn pid_step(l: &mut PidLoop, error: f64, dt: f64) -> f64 {
    assert!(dt > 0.0, "dt must be positive");
    let tentative = (l.integral + error * dt).clamp(-l.int_clamp, l.int_clamp);
    let d = match l.prev_error {
        Some(prev) => (error - prev) / dt,
        None => 0.0,
    };
    l.prev_error = Some(error);
    let raw = l.kp * error + l.ki * tentative + l.kd * d;
    if raw.abs() > l.out_clamp {
        // Saturated: emit the clamp and leave the integral untouched.
        return l.out_clamp.copysign(raw);
    }
    l.integral = tentative;
    raw
}
