use serde::{Deserialize, Serialize};

use super::PlantError;
use crate::dynamics::TransferFunction;

/// Plant parameters. Every default is a plausible magnitude for a ~10 MW
/// class unit, meant to be replaced by fitted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Fuel valve % → HPT speed, rpm.
    pub tf_fuel_to_hpt: TransferFunction,
    /// HPT speed excess over the self-sustain threshold (rpm) → LPT speed, rpm.
    pub tf_hpt_to_lpt: TransferFunction,
    /// Fuel % scaled by (1 + load fraction) and by the airflow factor →
    /// exhaust temperature rise, °C.
    pub tf_fuel_to_texh: TransferFunction,
    /// Pump delivery fraction → oil pressure fraction of nominal.
    pub tf_pump_to_poil: TransferFunction,
    /// Net oil heat load (°C of steady rise) → oil temperature rise, °C.
    pub tf_fans_to_toil: TransferFunction,
    pub ambient_temp: f64,
    pub n_hpt_nominal: f64,
    pub n_lpt_nominal: f64,
    pub p_oil_nominal: f64,
    pub load_torque_ring: f64,
    pub load_torque_trunk: f64,
    /// Fraction of `n_hpt_nominal` below which the LPT is decoupled.
    pub self_sustain_fraction: f64,
    pub aux_pump_fraction: f64,
    pub emerg_pump_fraction: f64,
    /// Steady oil temperature rise at nominal HPT speed with no cooling, °C.
    pub oil_heat_at_nominal: f64,
    pub cooler_fans_relief: f64,
    pub roof_fans_relief: f64,
    /// Compressor airflow at standstill as a fraction of the airflow at
    /// nominal HPT speed. The exhaust path input is multiplied by
    /// `(1 + floor) / (floor + n_hpt/n_hpt_nominal)`, which is 1 at nominal
    /// speed and large at light-off. `None` drops the factor.
    pub texh_airflow_floor: Option<f64>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let n_hpt_nominal = 5200.0;
        let n_lpt_nominal = 4800.0;
        let self_sustain_fraction = 0.3;
        let tf = |k, t1, tau| TransferFunction::first_order(k, t1, tau).expect("valid default");
        PlantConfig {
            // 100 % fuel settles at 110 % of nominal speed
            tf_fuel_to_hpt: tf(1.1 * n_hpt_nominal / 100.0, 8.0, 0.5),
            // nominal HPT speed, unloaded, settles at nominal LPT speed
            tf_hpt_to_lpt: tf(n_lpt_nominal / ((1.0 - self_sustain_fraction) * n_hpt_nominal), 12.0, 0.0),
            tf_fuel_to_texh: tf(3.0, 20.0, 2.0),
            tf_pump_to_poil: tf(1.0, 3.0, 0.0),
            tf_fans_to_toil: tf(1.0, 60.0, 0.0),
            ambient_temp: 15.0,
            n_hpt_nominal,
            n_lpt_nominal,
            p_oil_nominal: 350.0,
            load_torque_ring: 0.25,
            load_torque_trunk: 0.5,
            self_sustain_fraction,
            aux_pump_fraction: 1.0,
            emerg_pump_fraction: 0.6,
            oil_heat_at_nominal: 50.0,
            cooler_fans_relief: 25.0,
            roof_fans_relief: 5.0,
            texh_airflow_floor: Some(0.2),
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("n_hpt_nominal", self.n_hpt_nominal),
            ("n_lpt_nominal", self.n_lpt_nominal),
            ("p_oil_nominal", self.p_oil_nominal),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let fractions = [
            ("load_torque_ring", self.load_torque_ring),
            ("load_torque_trunk", self.load_torque_trunk),
            ("self_sustain_fraction", self.self_sustain_fraction),
        ];
        for (name, v) in fractions {
            if !(0.0..1.0).contains(&v) {
                return Err(PlantError::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        let nonneg = [
            ("aux_pump_fraction", self.aux_pump_fraction),
            ("emerg_pump_fraction", self.emerg_pump_fraction),
            ("oil_heat_at_nominal", self.oil_heat_at_nominal),
            ("cooler_fans_relief", self.cooler_fans_relief),
            ("roof_fans_relief", self.roof_fans_relief),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PlantError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let Some(f) = self.texh_airflow_floor {
            if !(f.is_finite() && f > 0.0) {
                return Err(PlantError::Config(format!("texh_airflow_floor must be positive, got {f}")));
            }
        }
        if !self.ambient_temp.is_finite() {
            return Err(PlantError::Config("ambient_temp must be finite".into()));
        }
        Ok(())
    }

    pub fn self_sustain_speed(&self) -> f64 {
        self.self_sustain_fraction * self.n_hpt_nominal
    }

    /// Multiplier on the exhaust path input at HPT speed `n_hpt`.
    pub fn texh_airflow_factor(&self, n_hpt: f64) -> f64 {
        match self.texh_airflow_floor {
            Some(floor) => (1.0 + floor) / (floor + n_hpt.max(0.0) / self.n_hpt_nominal),
            None => 1.0,
        }
    }

    pub fn transfer_functions(&self) -> [(&'static str, &TransferFunction); 5] {
        [
            ("tf_fuel_to_hpt", &self.tf_fuel_to_hpt),
            ("tf_hpt_to_lpt", &self.tf_hpt_to_lpt),
            ("tf_fuel_to_texh", &self.tf_fuel_to_texh),
            ("tf_pump_to_poil", &self.tf_pump_to_poil),
            ("tf_fans_to_toil", &self.tf_fans_to_toil),
        ]
    }

    /// Largest time constant (plus dead time) over all signal paths.
    pub fn slowest_time_constant(&self) -> f64 {
        self.transfer_functions()
            .iter()
            .map(|(_, tf)| tf.slowest_time_constant() + tf.dead_time())
            .fold(0.0, f64::max)
    }
}
