use serde::{Deserialize, Serialize};

use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integrator: f64,
    pub prev_error: f64,
    pub out_lo: f64,
    pub out_hi: f64,
}

impl PidState {
    pub fn new(kp: f64, ki: f64, kd: f64, out_lo: f64, out_hi: f64) -> Result<Self, ControlError> {
        let pid = PidState {
            kp,
            ki,
            kd,
            integrator: 0.0,
            prev_error: 0.0,
            out_lo,
            out_hi,
        };
        pid.validate()?;
        Ok(pid)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let gains = [self.kp, self.ki, self.kd, self.out_lo, self.out_hi];
        if !gains.iter().all(|g| g.is_finite()) {
            return Err(ControlError::Config("PID parameters must be finite".into()));
        }
        if !(self.out_lo < self.out_hi) {
            return Err(ControlError::Config(format!(
                "PID limits out_lo {} must be below out_hi {}",
                self.out_lo, self.out_hi
            )));
        }
        Ok(())
    }

    /// Primes the controller so the next output equals `output` for the
    /// current error.
    pub fn preload(&mut self, output: f64, error: f64) {
        self.integrator = output.clamp(self.out_lo, self.out_hi) - self.kp * error;
        self.prev_error = error;
    }
}

/// One PID step with conditional integration: the integrator only moves
/// when the unclamped output is not saturated in the direction of the error.
pub fn pid_update(pid: &PidState, setpoint: f64, measurement: f64, dt: f64) -> Result<(PidState, f64), ControlError> {
    if !(setpoint.is_finite() && measurement.is_finite()) {
        return Err(ControlError::NonFinite);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ControlError::Config(format!("PID dt must be positive, got {dt}")));
    }
    let e = setpoint - measurement;
    let raw = pid.kp * e + pid.integrator + pid.kd * (e - pid.prev_error) / dt;
    let out = raw.clamp(pid.out_lo, pid.out_hi);
    let saturated_with_error = (raw >= pid.out_hi && e > 0.0) || (raw <= pid.out_lo && e < 0.0);
    let mut next = *pid;
    if !saturated_with_error {
        next.integrator += pid.ki * e * dt;
    }
    next.prev_error = e;
    Ok((next, out))
}
