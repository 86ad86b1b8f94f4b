//! Transfer-function blocks, their fixed-step realization and series
//! simulation. Every plant signal path is built from these.

mod block;
mod signal;
mod tf;

pub use block::{block_step, discretize, DiscreteBlock, MIN_SAMPLES_PER_TIME_CONSTANT};
pub use signal::Signal;
pub use tf::{step_response, Order, Poles, TfFields, TransferFunction};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid transfer function: {0}")]
    Invalid(String),
    #[error("step {dt} s too large for time constant {time_constant} s (dt/T = {ratio:.3}, need <= 0.2)")]
    Sampling { dt: f64, time_constant: f64, ratio: f64 },
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("sample {index} at t={t} breaks uniform spacing (expected {expected})")]
    NonUniform { index: usize, t: f64, expected: f64 },
}

/// Response of `tf` (from rest) to `input`, on the same time base.
///
/// Sample `i` of the output is the block output before input sample `i`
/// is consumed, so it is the response at `input.time(i)` to the input held
/// piecewise-constant from each sample to the next.
pub fn simulate_series(tf: &TransferFunction, input: &Signal) -> Result<Signal, DynamicsError> {
    let block = discretize(tf, input.dt())?;
    run_block(block, input)
}

/// Drives an already realized block over `input` with the same sample
/// convention as [`simulate_series`].
pub fn run_block(mut block: DiscreteBlock, input: &Signal) -> Result<Signal, DynamicsError> {
    let mut out = Vec::with_capacity(input.len());
    for &u in input.values() {
        out.push(block.output());
        block.step(u)?;
    }
    Ok(input.with_values(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_step(dt: f64, n: usize) -> Signal {
        Signal::from_fn(0.0, dt, n, |_| 1.0).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let tf = TransferFunction::first_order(2.0, 5.0, 1.0).unwrap();
        let zero = Signal::from_fn(0.0, 0.05, 321, |_| 0.0).unwrap();
        let out = simulate_series(&tf, &zero).unwrap();
        assert_eq!(out.len(), 321);
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_input_matches_closed_form() {
        let tf = TransferFunction::first_order(2.0, 5.0, 1.0).unwrap();
        let input = unit_step(0.05, 2000);
        let out = simulate_series(&tf, &input).unwrap();
        for (t, y) in out.samples() {
            let exact = step_response(&tf, t).unwrap();
            assert!((y - exact).abs() < 1e-3 * 2.0, "t={t} sim={y} exact={exact}");
        }
    }

    #[test]
    fn cascade_equals_equivalent_second_order() {
        let (ta, tb) = (5.0_f64, 12.0);
        let dt = ta.min(tb) / 100.0;
        let a = TransferFunction::first_order(1.0, ta, 0.0).unwrap();
        let b = TransferFunction::first_order(2.0, tb, 0.0).unwrap();
        let ab = TransferFunction::second_order(2.0, ta + tb, ta * tb, 0.0).unwrap();
        let input = Signal::from_fn(0.0, dt, 6000, |t| if t < 20.0 { 1.0 } else { (0.1 * t).sin() }).unwrap();
        let cascaded = simulate_series(&b, &simulate_series(&a, &input).unwrap()).unwrap();
        let direct = simulate_series(&ab, &input).unwrap();
        for i in 0..input.len() {
            let diff = (cascaded.values()[i] - direct.values()[i]).abs();
            assert!(diff < 1e-6, "i={i} diff={diff}");
        }
    }

    #[test]
    fn simulate_series_rejects_non_finite_input() {
        let tf = TransferFunction::first_order(1.0, 1.0, 0.0).unwrap();
        let input = Signal::from_fn(0.0, 0.01, 10, |t| if t > 0.05 { f64::NAN } else { 1.0 }).unwrap();
        assert!(matches!(simulate_series(&tf, &input), Err(DynamicsError::NonFinite(_))));
    }
}
