use std::collections::VecDeque;

use super::tf::{Poles, TransferFunction};
use super::DynamicsError;

/// Smallest allowed ratio between the fastest time constant and the step.
pub const MIN_SAMPLES_PER_TIME_CONSTANT: f64 = 5.0;

/// Discrete realization of a [`TransferFunction`] at a fixed step.
///
/// Difference equation, with `u` held constant over each step:
///
/// ```text
/// y[k+1] = Σ b[j]·u[k−delay−j] − Σ a[i]·y[k+1−i]     (a[0] = 1)
/// ```
///
/// `step` consumes `u[k]` and returns `y[k+1]`, i.e. the output one `dt`
/// after the input was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBlock {
    b: Vec<f64>,
    a: Vec<f64>,
    delay_steps: usize,
    /// Newest first; length `b.len() + delay_steps`.
    inputs: VecDeque<f64>,
    /// Newest first; length `a.len() - 1`.
    outputs: VecDeque<f64>,
    dt: f64,
}

/// Realizes `tf` at step `dt`.
///
/// Each continuous pole `p` maps to `e^(p·dt)`; the numerator is a pure
/// delay of `order` samples scaled to preserve the DC gain. A first-order
/// block is therefore step-invariant, and a real-pole second-order block
/// equals two step-invariant first-order sections in series. Dead time
/// becomes `round(dead_time/dt)` samples of input delay.
pub fn discretize(tf: &TransferFunction, dt: f64) -> Result<DiscreteBlock, DynamicsError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::Invalid(format!("dt must be > 0, got {dt}")));
    }
    let fastest = tf.fastest_time_constant();
    if dt * MIN_SAMPLES_PER_TIME_CONSTANT > fastest {
        return Err(DynamicsError::Sampling {
            dt,
            time_constant: fastest,
            ratio: dt / fastest,
        });
    }

    // dc = 1 + a1 (+ a2), computed from expm1 to avoid cancellation near z = 1
    let (a, dc) = match tf.poles() {
        Poles::Single { tau } => {
            let zp = (-dt / tau).exp();
            (vec![1.0, -zp], -(-dt / tau).exp_m1())
        }
        Poles::Repeated { tau } => {
            let zp = (-dt / tau).exp();
            let one_minus = -(-dt / tau).exp_m1();
            (vec![1.0, -2.0 * zp, zp * zp], one_minus * one_minus)
        }
        Poles::DistinctReal { tau_slow, tau_fast } => {
            let (za, zb) = ((-dt / tau_slow).exp(), (-dt / tau_fast).exp());
            let dc = (-dt / tau_slow).exp_m1() * (-dt / tau_fast).exp_m1();
            (vec![1.0, -(za + zb), za * zb], dc)
        }
        Poles::Complex { decay, omega } => {
            let r = (-decay * dt).exp();
            let theta = omega * dt;
            let one_minus_r = -(-decay * dt).exp_m1();
            let half = (theta / 2.0).sin();
            let dc = one_minus_r * one_minus_r + 4.0 * r * half * half;
            (vec![1.0, -2.0 * r * theta.cos(), r * r], dc)
        }
    };
    let g = tf.gain() * dc;
    let b = if a.len() == 2 { vec![g] } else { vec![0.0, g] };
    let delay_steps = (tf.dead_time() / dt).round() as usize;
    DiscreteBlock::from_coefficients(b, a, delay_steps, dt)
}

impl DiscreteBlock {
    /// Builds a block at rest from raw coefficients. `a[0]` must be 1.
    pub fn from_coefficients(b: Vec<f64>, a: Vec<f64>, delay_steps: usize, dt: f64) -> Result<Self, DynamicsError> {
        if b.is_empty() || a.first() != Some(&1.0) {
            return Err(DynamicsError::Invalid("need b nonempty and a[0] = 1".into()));
        }
        if b.iter().chain(&a).any(|c| !c.is_finite()) {
            return Err(DynamicsError::Invalid("non-finite coefficient".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(DynamicsError::Invalid(format!("dt must be > 0, got {dt}")));
        }
        Ok(DiscreteBlock {
            inputs: VecDeque::from(vec![0.0; b.len() + delay_steps]),
            outputs: VecDeque::from(vec![0.0; a.len() - 1]),
            b,
            a,
            delay_steps,
            dt,
        })
    }

    pub fn b_coeffs(&self) -> &[f64] {
        &self.b
    }

    pub fn a_coeffs(&self) -> &[f64] {
        &self.a
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Latest output.
    pub fn output(&self) -> f64 {
        self.outputs.front().copied().unwrap_or(0.0)
    }

    pub fn is_at_rest(&self) -> bool {
        self.inputs.iter().chain(&self.outputs).all(|&v| v == 0.0)
    }

    /// DC gain `Σb / Σa`.
    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Jury test for the output recursion (degree ≤ 2).
    pub fn is_stable(&self) -> bool {
        match self.a.as_slice() {
            [_] => true,
            [_, a1] => a1.abs() < 1.0,
            [_, a1, a2] => a2.abs() < 1.0 && a1.abs() < 1.0 + a2,
            _ => false,
        }
    }

    /// Advances one sample with `u` held over the step and returns the new
    /// output. A non-finite `u` leaves the block untouched.
    pub fn step(&mut self, u: f64) -> Result<f64, DynamicsError> {
        if !u.is_finite() {
            return Err(DynamicsError::NonFinite(u));
        }
        self.inputs.pop_back();
        self.inputs.push_front(u);
        let forced: f64 = self
            .b
            .iter()
            .enumerate()
            .map(|(j, bj)| bj * self.inputs[self.delay_steps + j])
            .sum();
        let recursion: f64 = self.a[1..].iter().zip(&self.outputs).map(|(ai, yi)| ai * yi).sum();
        let y = forced - recursion;
        if !self.outputs.is_empty() {
            self.outputs.pop_back();
            self.outputs.push_front(y);
        }
        Ok(y)
    }

    pub fn reset(&mut self) {
        self.inputs.iter_mut().for_each(|v| *v = 0.0);
        self.outputs.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Free-function form of [`DiscreteBlock::step`].
pub fn block_step(block: &mut DiscreteBlock, u: f64) -> Result<f64, DynamicsError> {
    block.step(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step_response;

    #[test]
    fn unit_step_matches_closed_form_at_t5() {
        let tf = TransferFunction::first_order(1.0, 1.0, 0.0).unwrap();
        let mut block = discretize(&tf, 0.01).unwrap();
        let mut y = 0.0;
        for _ in 0..500 {
            y = block.step(1.0).unwrap();
        }
        assert!((y - step_response(&tf, 5.0).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn delay_steps_from_dead_time() {
        let tf = TransferFunction::first_order(3.0, 2.0, 1.0).unwrap();
        assert_eq!(discretize(&tf, 0.1).unwrap().delay_steps(), 10);
    }

    #[test]
    fn coarse_step_is_a_sampling_error() {
        let tf = TransferFunction::first_order(1.0, 1.0, 0.0).unwrap();
        match discretize(&tf, 10.0) {
            Err(DynamicsError::Sampling { ratio, .. }) => assert_eq!(ratio, 10.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_input_at_rest_stays_at_rest() {
        let tf = TransferFunction::first_order(1.0, 1.0, 0.3).unwrap();
        let mut block = discretize(&tf, 0.01).unwrap();
        let before = block.clone();
        assert_eq!(block.step(0.0).unwrap(), 0.0);
        assert_eq!(block, before);
    }

    #[test]
    fn hundred_steps_reach_one_time_constant() {
        let tf = TransferFunction::first_order(1.0, 1.0, 0.0).unwrap();
        let mut block = discretize(&tf, 0.01).unwrap();
        let mut y = 0.0;
        for _ in 0..100 {
            y = block_step(&mut block, 1.0).unwrap();
        }
        // 1 − e^(−1)
        assert!((y - 0.632).abs() < 2e-3, "{y}");
    }

    #[test]
    fn nan_input_is_rejected_without_state_change() {
        let tf = TransferFunction::first_order(1.0, 1.0, 0.0).unwrap();
        let mut block = discretize(&tf, 0.01).unwrap();
        block.step(1.0).unwrap();
        let before = block.clone();
        assert!(matches!(block.step(f64::NAN), Err(DynamicsError::NonFinite(_))));
        assert!(block.step(f64::INFINITY).is_err());
        assert_eq!(block, before);
    }

    #[test]
    fn realizations_are_stable_and_keep_dc_gain() {
        for tf in [
            TransferFunction::first_order(2.5, 0.7, 0.0).unwrap(),
            TransferFunction::cascade(-1.5, 3.0, 9.0, 0.2).unwrap(),
            TransferFunction::second_order(4.0, 6.0, 9.0, 0.0).unwrap(),
            TransferFunction::second_order(4.0, 0.5, 9.0, 0.0).unwrap(),
        ] {
            let block = discretize(&tf, tf.fastest_time_constant() / 20.0).unwrap();
            assert!(block.is_stable());
            assert!((block.dc_gain() - tf.gain()).abs() < 1e-9 * tf.gain().abs());
            assert_eq!(block.a_coeffs().len(), block.b_coeffs().len() + 1);
        }
    }

    #[test]
    fn complex_pair_tracks_closed_form() {
        let tf = TransferFunction::second_order(1.0, 1.0, 4.0, 0.0).unwrap();
        let dt = 0.02;
        let mut block = discretize(&tf, dt).unwrap();
        let mut max_err: f64 = 0.0;
        for k in 1..=2000 {
            let y = block.step(1.0).unwrap();
            max_err = max_err.max((y - step_response(&tf, k as f64 * dt).unwrap()).abs());
        }
        assert!(max_err < 0.02, "{max_err}");
    }
}
