use serde::{Deserialize, Serialize};

use super::DynamicsError;

/// Relative tolerance on the second-order discriminant below which the two
/// poles are treated as coincident.
const REPEATED_POLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    FirstOrder,
    SecondOrder,
}

/// Continuous-time model `gain · e^(−dead_time·s) / (t2·s² + t1·s + 1)`.
///
/// Construct through [`TransferFunction::first_order`],
/// [`TransferFunction::second_order`] or [`TransferFunction::new`]; all of
/// them reject improper or unstable parameter sets, so a value of this type
/// is always valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TfFields", into = "TfFields")]
pub struct TransferFunction {
    gain: f64,
    t1: f64,
    t2: f64,
    dead_time: f64,
    order: Order,
}

/// Pole structure of a valid transfer function, expressed as time constants
/// (seconds) or as a decay rate / damped frequency pair (1/s, rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Poles {
    Single { tau: f64 },
    DistinctReal { tau_slow: f64, tau_fast: f64 },
    Repeated { tau: f64 },
    Complex { decay: f64, omega: f64 },
}

/// On-disk form: keys `gain`, `t1`, `t2`, `dead_time`. A zero (or absent)
/// `t2` means first order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfFields {
    pub gain: f64,
    pub t1: f64,
    #[serde(default)]
    pub t2: f64,
    #[serde(default)]
    pub dead_time: f64,
}

impl TryFrom<TfFields> for TransferFunction {
    type Error = DynamicsError;

    fn try_from(f: TfFields) -> Result<Self, Self::Error> {
        TransferFunction::new(f.gain, f.t1, f.t2, f.dead_time)
    }
}

impl From<TransferFunction> for TfFields {
    fn from(tf: TransferFunction) -> Self {
        TfFields {
            gain: tf.gain,
            t1: tf.t1,
            t2: tf.t2,
            dead_time: tf.dead_time,
        }
    }
}

impl TransferFunction {
    /// Builds a first-order model when `t2 == 0`, second order otherwise.
    pub fn new(gain: f64, t1: f64, t2: f64, dead_time: f64) -> Result<Self, DynamicsError> {
        if t2 == 0.0 {
            Self::first_order(gain, t1, dead_time)
        } else {
            Self::second_order(gain, t1, t2, dead_time)
        }
    }

    pub fn first_order(gain: f64, t1: f64, dead_time: f64) -> Result<Self, DynamicsError> {
        let tf = TransferFunction {
            gain,
            t1,
            t2: 0.0,
            dead_time,
            order: Order::FirstOrder,
        };
        tf.validate()?;
        Ok(tf)
    }

    pub fn second_order(gain: f64, t1: f64, t2: f64, dead_time: f64) -> Result<Self, DynamicsError> {
        let tf = TransferFunction {
            gain,
            t1,
            t2,
            dead_time,
            order: Order::SecondOrder,
        };
        tf.validate()?;
        Ok(tf)
    }

    /// Second-order model equal to two first-order lags in series.
    pub fn cascade(gain: f64, t_a: f64, t_b: f64, dead_time: f64) -> Result<Self, DynamicsError> {
        if !(t_a > 0.0 && t_b > 0.0) {
            return Err(DynamicsError::Invalid(format!(
                "cascade time constants must be positive, got {t_a} and {t_b}"
            )));
        }
        Self::second_order(gain, t_a + t_b, t_a * t_b, dead_time)
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::Invalid(msg));
        if !self.gain.is_finite() || self.gain == 0.0 {
            return bad(format!("gain must be finite and nonzero, got {}", self.gain));
        }
        if !(self.dead_time.is_finite() && self.dead_time >= 0.0) {
            return bad(format!("dead_time must be >= 0, got {}", self.dead_time));
        }
        if !(self.t1.is_finite() && self.t1 > 0.0) {
            return bad(format!("t1 must be > 0, got {}", self.t1));
        }
        match self.order {
            Order::FirstOrder if self.t2 != 0.0 => bad(format!("first-order model has t2 = {}", self.t2)),
            Order::SecondOrder if !(self.t2.is_finite() && self.t2 > 0.0) => {
                bad(format!("t2 must be > 0 for a second-order model, got {}", self.t2))
            }
            _ => Ok(()),
        }
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn dead_time(&self) -> f64 {
        self.dead_time
    }

    pub fn order(&self) -> Order {
        self.order
    }

    /// Same dynamics with a different gain.
    pub fn with_gain(&self, gain: f64) -> Result<Self, DynamicsError> {
        Self::new(gain, self.t1, self.t2, self.dead_time)
    }

    pub fn poles(&self) -> Poles {
        match self.order {
            Order::FirstOrder => Poles::Single { tau: self.t1 },
            Order::SecondOrder => {
                let disc = self.t1 * self.t1 - 4.0 * self.t2;
                if disc.abs() <= REPEATED_POLE_TOL * self.t1 * self.t1 {
                    Poles::Repeated { tau: self.t1 / 2.0 }
                } else if disc > 0.0 {
                    // t2·s² + t1·s + 1 = (τs·s + 1)(τf·s + 1), τs·τf = t2
                    let tau_slow = (self.t1 + disc.sqrt()) / 2.0;
                    Poles::DistinctReal {
                        tau_slow,
                        tau_fast: self.t2 / tau_slow,
                    }
                } else {
                    Poles::Complex {
                        decay: self.t1 / (2.0 * self.t2),
                        omega: (-disc).sqrt() / (2.0 * self.t2),
                    }
                }
            }
        }
    }

    /// Shortest characteristic time of the model: the smallest time
    /// constant, or `1/|p|` for a complex pole pair.
    pub fn fastest_time_constant(&self) -> f64 {
        match self.poles() {
            Poles::Single { tau } | Poles::Repeated { tau } => tau,
            Poles::DistinctReal { tau_fast, .. } => tau_fast,
            Poles::Complex { .. } => self.t2.sqrt(),
        }
    }

    /// Largest time constant (slowest mode); `1/decay` for complex poles.
    pub fn slowest_time_constant(&self) -> f64 {
        match self.poles() {
            Poles::Single { tau } | Poles::Repeated { tau } => tau,
            Poles::DistinctReal { tau_slow, .. } => tau_slow,
            Poles::Complex { decay, .. } => 1.0 / decay,
        }
    }
}

/// Unit-step response `y(t)` of `tf` in closed form.
pub fn step_response(tf: &TransferFunction, t: f64) -> Result<f64, DynamicsError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(DynamicsError::Invalid(format!("time must be >= 0, got {t}")));
    }
    let s = t - tf.dead_time;
    if s < 0.0 {
        return Ok(0.0);
    }
    let k = tf.gain;
    let y = match tf.poles() {
        Poles::Single { tau } => -k * (-s / tau).exp_m1(),
        Poles::Repeated { tau } => k * (1.0 - (1.0 + s / tau) * (-s / tau).exp()),
        Poles::DistinctReal { tau_slow, tau_fast } => {
            let tail = (tau_slow * (-s / tau_slow).exp() - tau_fast * (-s / tau_fast).exp()) / (tau_slow - tau_fast);
            k * (1.0 - tail)
        }
        Poles::Complex { decay, omega } => {
            let env = (-decay * s).exp();
            k * (1.0 - env * ((omega * s).cos() + decay / omega * (omega * s).sin()))
        }
    };
    Ok(y)
}
