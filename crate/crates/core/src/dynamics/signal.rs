use super::DynamicsError;

/// Relative tolerance on sample spacing when building from explicit times.
const SPACING_TOL: f64 = 1e-9;

/// Uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self, DynamicsError> {
        if !(dt.is_finite() && dt > 0.0) || !t0.is_finite() {
            return Err(DynamicsError::Invalid(format!("bad time base t0={t0} dt={dt}")));
        }
        Ok(Signal { t0, dt, values })
    }

    /// Builds a signal from `(t, value)` pairs, checking uniform spacing.
    pub fn from_samples(samples: &[(f64, f64)]) -> Result<Self, DynamicsError> {
        match samples {
            [] => Err(DynamicsError::Invalid("empty signal".into())),
            [(t0, v)] => Signal::new(*t0, 1.0, vec![*v]),
            [(t0, _), (t1, _), ..] => {
                let dt = t1 - t0;
                for (i, (t, _)) in samples.iter().enumerate() {
                    let expected = t0 + i as f64 * dt;
                    if (t - expected).abs() > SPACING_TOL * expected.abs().max(dt) {
                        return Err(DynamicsError::NonUniform { index: i, t: *t, expected });
                    }
                }
                Signal::new(*t0, dt, samples.iter().map(|(_, v)| *v).collect())
            }
        }
    }

    /// Signal of `n` samples of `f(t)`.
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, DynamicsError> {
        let values = (0..n).map(|i| f(t0 + i as f64 * dt)).collect();
        Signal::new(t0, dt, values)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, v)| (self.time(i), *v))
    }

    /// Same time base, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Signal {
        Signal {
            t0: self.t0,
            dt: self.dt,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        self.with_values(self.values.iter().map(|v| f(*v)).collect())
    }

    /// True when both signals share the same time base and length.
    pub fn same_timebase(&self, other: &Signal) -> bool {
        self.len() == other.len() && self.t0 == other.t0 && self.dt == other.dt
    }
}
