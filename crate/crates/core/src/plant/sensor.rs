use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Field, PlantError, PlantState};
use crate::tagbus::Quality;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    /// Reading frozen at the given value.
    StuckAt(f64),
    /// Reading offset growing at the given rate per second since injection.
    Drift(f64),
    /// Reading pinned beyond the top of the range, flagged BAD.
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub tag_name: String,
    pub source_field: Field,
    #[serde(default)]
    pub noise_sigma: f64,
    pub range_lo: f64,
    pub range_hi: f64,
    #[serde(default)]
    pub fault: Fault,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub units: String,
}

impl SensorConfig {
    pub fn new(tag_name: &str, source_field: Field, noise_sigma: f64, range: (f64, f64), seed: u64) -> Self {
        SensorConfig {
            tag_name: tag_name.to_string(),
            source_field,
            noise_sigma,
            range_lo: range.0,
            range_hi: range.1,
            fault: Fault::None,
            seed,
            units: source_field.units().to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.range_lo < self.range_hi) {
            return Err(PlantError::Config(format!(
                "sensor {}: range_lo {} must be below range_hi {}",
                self.tag_name, self.range_lo, self.range_hi
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(PlantError::Config(format!(
                "sensor {}: noise_sigma must be non-negative",
                self.tag_name
            )));
        }
        Ok(())
    }
}

/// Sensor reading with its quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub value: f64,
    pub quality: Quality,
}

/// Reads one sensor. The noise sample is always drawn so the stream
/// position depends only on the call index, whatever the fault.
/// `fault_age` is seconds since the current fault was injected.
pub fn read_sensor(state: &PlantState, sensor: &SensorConfig, rng: &mut impl Rng, fault_age: f64) -> Measurement {
    let truth = state.field(sensor.source_field);
    let noise = if sensor.noise_sigma > 0.0 {
        Normal::new(0.0, sensor.noise_sigma).expect("validated sigma").sample(rng)
    } else {
        // keep the stream in step with noisy sensors
        let _: f64 = rng.random();
        0.0
    };
    let raw = truth + noise;
    let value = match sensor.fault {
        Fault::None => raw,
        Fault::StuckAt(v) => v,
        Fault::Drift(rate) => raw + rate * fault_age,
        Fault::OutOfRange => sensor.range_hi + 0.1 * (sensor.range_hi - sensor.range_lo),
    };
    let in_range = value >= sensor.range_lo && value <= sensor.range_hi;
    let quality = if in_range && sensor.fault != Fault::OutOfRange && value.is_finite() {
        Quality::Good
    } else {
        Quality::Bad
    };
    Measurement { value, quality }
}

/// Seed of a sensor's private stream, from the run seed and the sensor seed.
pub fn sensor_stream_seed(run_seed: u64, sensor_seed: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = run_seed ^ sensor_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A configured sensor with its random stream and fault timing.
#[derive(Debug, Clone)]
pub struct Sensor {
    pub config: SensorConfig,
    rng: ChaCha8Rng,
    fault_since: f64,
}

impl Sensor {
    pub fn new(config: SensorConfig, run_seed: u64) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(sensor_stream_seed(run_seed, config.seed));
        Sensor {
            config,
            rng,
            fault_since: 0.0,
        }
    }

    pub fn read(&mut self, state: &PlantState) -> Measurement {
        let age = (state.sim_time - self.fault_since).max(0.0);
        read_sensor(state, &self.config, &mut self.rng, age)
    }

    pub fn set_fault(&mut self, fault: Fault, now: f64) {
        self.config.fault = fault;
        self.fault_since = now;
    }
}

/// Default instrument list: every dynamic field plus equipment feedback.
pub fn default_sensors() -> Vec<SensorConfig> {
    use Field::*;
    vec![
        SensorConfig::new("plant.fuel_valve_pos", FuelValvePos, 0.0, (-1.0, 101.0), 1),
        SensorConfig::new("plant.n_hpt", NHpt, 5.0, (-50.0, 7000.0), 2),
        SensorConfig::new("plant.n_lpt", NLpt, 5.0, (-50.0, 7000.0), 3),
        SensorConfig::new("plant.t_exh", TExh, 1.0, (-50.0, 800.0), 4),
        SensorConfig::new("plant.p_oil", POil, 1.0, (-20.0, 600.0), 5),
        SensorConfig::new("plant.t_oil", TOil, 0.2, (-50.0, 150.0), 6),
        SensorConfig::new("plant.main_pump_on", MainPumpOn, 0.0, (-0.5, 1.5), 7),
        SensorConfig::new("plant.aux_pump_on", AuxPumpOn, 0.0, (-0.5, 1.5), 8),
        SensorConfig::new("plant.emerg_pump_on", EmergPumpOn, 0.0, (-0.5, 1.5), 9),
        SensorConfig::new("plant.cooler_fans_on", CoolerFansOn, 0.0, (-0.5, 1.5), 10),
        SensorConfig::new("plant.roof_fans_on", RoofFansOn, 0.0, (-0.5, 1.5), 11),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with_poil(p: f64) -> PlantState {
        PlantState {
            p_oil: p,
            ..PlantState::at_rest(15.0)
        }
    }

    #[test]
    fn passthrough_and_stuck() {
        let s = state_with_poil(350.0);
        let mut cfg = SensorConfig::new("plant.p_oil", Field::POil, 0.0, (-20.0, 600.0), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            read_sensor(&s, &cfg, &mut rng, 0.0),
            Measurement {
                value: 350.0,
                quality: Quality::Good
            }
        );
        cfg.fault = Fault::StuckAt(0.0);
        let m = read_sensor(&s, &cfg, &mut rng, 0.0);
        assert_eq!((m.value, m.quality), (0.0, Quality::Good));
        cfg.fault = Fault::OutOfRange;
        assert_eq!(read_sensor(&s, &cfg, &mut rng, 0.0).quality, Quality::Bad);
        cfg.fault = Fault::StuckAt(-100.0);
        assert_eq!(read_sensor(&s, &cfg, &mut rng, 0.0).quality, Quality::Bad);
    }

    #[test]
    fn noise_mean_within_three_standard_errors() {
        let s = state_with_poil(350.0);
        let cfg = SensorConfig::new("plant.p_oil", Field::POil, 1.0, (-20.0, 600.0), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(sensor_stream_seed(42, 5));
        let n = 10_000;
        let mean = (0..n).map(|_| read_sensor(&s, &cfg, &mut rng, 0.0).value).sum::<f64>() / n as f64;
        assert!((mean - 350.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn drift_is_linear_in_age() {
        let s = state_with_poil(350.0);
        let mut cfg = SensorConfig::new("plant.p_oil", Field::POil, 0.0, (-20.0, 600.0), 5);
        cfg.fault = Fault::Drift(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = read_sensor(&s, &cfg, &mut rng, 10.0);
        assert!((m.value - 351.0).abs() < 1e-9);
    }

    #[test]
    fn fault_serde_forms() {
        #[derive(Deserialize)]
        struct W {
            f: Fault,
        }
        let parse = |s: &str| toml::from_str::<W>(s).unwrap().f;
        assert_eq!(parse("f = \"none\""), Fault::None);
        assert_eq!(parse("f = \"out_of_range\""), Fault::OutOfRange);
        assert_eq!(parse("f = { stuck_at = 0.0 }"), Fault::StuckAt(0.0));
        assert_eq!(parse("f = { drift = 0.1 }"), Fault::Drift(0.1));
    }
}
