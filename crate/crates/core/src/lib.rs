//! Desk-scale digital twin of a gas-turbine compressor unit.
//!
//! The crate is split along the three levels of the simulator:
//!
//! * [`plant`]: the lower level, a transfer-function model of the turbine
//!   train, oil system and fans with simulated field sensors;
//! * [`control`]: the middle level, an emulated PLC scan with start
//!   sequencer, protections, auxiliary logic and a speed governor;
//! * [`tagbus`]: the exchange and archiving level, a tag store with a
//!   REQUEST/POKE/ADVISE line protocol and a historian.
//!
//! [`dynamics`] is the numerical core, [`sysid`] identifies transfer
//! functions from logged data and scores residuals, [`scheduler`] does
//! fuel-optimal load allocation, and [`sim`] couples everything into
//! deterministic scenario runs.

pub mod control;
pub mod dynamics;
pub mod plant;
pub mod scheduler;
pub mod sim;
pub mod sysid;
pub mod tagbus;
