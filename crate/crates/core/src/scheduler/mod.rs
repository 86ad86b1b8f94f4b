//! Dispatch of a production plan over the station's units: unit
//! commitment by exhaustive subset search, load allocation by equal
//! incremental cost.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// Largest unit count the exhaustive commitment accepts.
pub const MAX_UNITS: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("invalid unit {id}: {reason}")]
    InvalidUnit { id: String, reason: String },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{0} units exceed the exhaustive commitment limit of {MAX_UNITS}")]
    TooManyUnits(usize),
    #[error("demand {demand} exceeds available capacity {capacity} (shortfall {shortfall})")]
    Infeasible { demand: f64, capacity: f64, shortfall: f64 },
    #[error("demand {demand} cannot be met by any commitment within unit minimums")]
    NoFeasibleCommitment { demand: f64 },
    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<ScheduleError>,
    },
    #[error("csv output: {0}")]
    Io(String),
}

/// A unit with convex fuel curve `a + b·q + c·q²` (fuel units per hour).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitModel {
    pub id: String,
    pub fuel_curve: [f64; 3],
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default = "yes")]
    pub available: bool,
}

fn yes() -> bool {
    true
}

impl UnitModel {
    pub fn new(id: &str, a: f64, b: f64, c: f64, q_min: f64, q_max: f64) -> Self {
        UnitModel {
            id: id.into(),
            fuel_curve: [a, b, c],
            q_min,
            q_max,
            available: true,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |reason: &str| {
            Err(ScheduleError::InvalidUnit {
                id: self.id.clone(),
                reason: reason.into(),
            })
        };
        let [a, b, c] = self.fuel_curve;
        if ![a, b, c, self.q_min, self.q_max].iter().all(|v| v.is_finite()) {
            return bad("parameters must be finite");
        }
        if c <= 0.0 {
            return bad("fuel curve must be strictly convex (c > 0)");
        }
        if !(0.0 <= self.q_min && self.q_min < self.q_max) {
            return bad("need 0 <= q_min < q_max");
        }
        Ok(())
    }

    pub fn fuel_rate(&self, q: f64) -> f64 {
        let [a, b, c] = self.fuel_curve;
        a + b * q + c * q * q
    }

    pub fn marginal(&self, q: f64) -> f64 {
        self.fuel_curve[1] + 2.0 * self.fuel_curve[2] * q
    }

    /// Output at incremental cost `lambda`, clamped to the unit's range.
    fn output_at(&self, lambda: f64) -> f64 {
        ((lambda - self.fuel_curve[1]) / (2.0 * self.fuel_curve[2])).clamp(self.q_min, self.q_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSlot {
    /// Hours.
    pub duration: f64,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductionPlan {
    pub slots: Vec<PlanSlot>,
}

impl ProductionPlan {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        for (i, s) in self.slots.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(ScheduleError::InvalidPlan(format!("slot {i}: duration must be positive")));
            }
            if !(s.demand >= 0.0 && s.demand.is_finite()) {
                return Err(ScheduleError::InvalidPlan(format!("slot {i}: demand must be non-negative")));
            }
        }
        Ok(())
    }
}

/// `[schedule]` section of the configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub units: Vec<UnitModel>,
    #[serde(default)]
    pub plan: ProductionPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitDispatch {
    pub id: String,
    pub on: bool,
    pub q: f64,
    /// Fuel units per hour (0 when off).
    pub fuel_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// One entry per unit, in input order.
    pub units: Vec<UnitDispatch>,
    pub total_fuel_rate: f64,
    /// Common incremental cost of the committed units, if any run.
    pub lambda: Option<f64>,
}

impl Allocation {
    pub fn total_q(&self) -> f64 {
        self.units.iter().map(|u| u.q).sum()
    }
}

/// Economic dispatch of `demand` over the given committed units: returns
/// outputs and the common incremental cost. `None` if the demand lies
/// outside the units' combined range.
///
/// Total output S(λ) is piecewise linear and non-decreasing in λ with
/// breakpoints where a unit leaves a bound, so the exact λ is found by
/// locating the segment containing the demand and interpolating.
pub fn dispatch(units: &[&UnitModel], demand: f64) -> Option<(Vec<f64>, f64)> {
    let lo: f64 = units.iter().map(|u| u.q_min).sum();
    let hi: f64 = units.iter().map(|u| u.q_max).sum();
    let tol = 1e-12 * hi.max(1.0);
    if units.is_empty() || demand < lo - tol || demand > hi + tol {
        return None;
    }
    let mut breaks: Vec<f64> = units.iter().flat_map(|u| [u.marginal(u.q_min), u.marginal(u.q_max)]).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let supply = |lambda: f64| units.iter().map(|u| u.output_at(lambda)).sum::<f64>();
    let mut lambda = breaks[0];
    if demand > lo {
        lambda = *breaks.last().expect("nonempty");
        let mut s_prev = supply(breaks[0]);
        for w in breaks.windows(2) {
            let s_next = supply(w[1]);
            if demand <= s_next {
                lambda = if s_next > s_prev {
                    w[0] + (demand - s_prev) * (w[1] - w[0]) / (s_next - s_prev)
                } else {
                    w[0]
                };
                break;
            }
            s_prev = s_next;
        }
    }
    let mut q: Vec<f64> = units.iter().map(|u| u.output_at(lambda)).collect();
    // put the rounding residue on a unit strictly inside its range
    let residue = demand - q.iter().sum::<f64>();
    if residue != 0.0 {
        if let Some(i) = (0..q.len()).find(|&i| q[i] + residue >= units[i].q_min && q[i] + residue <= units[i].q_max) {
            q[i] += residue;
        }
    }
    Some((q, lambda))
}

fn validate_units(units: &[UnitModel]) -> Result<(), ScheduleError> {
    if units.len() > MAX_UNITS {
        return Err(ScheduleError::TooManyUnits(units.len()));
    }
    for u in units {
        u.validate()?;
    }
    Ok(())
}

/// Fuel rate, member outputs and λ of a commitment.
type Candidate = (f64, Vec<(usize, f64)>, Option<f64>);

/// Minimum-fuel allocation of `demand`, choosing which available units run
/// by exhaustive search over on/off subsets.
pub fn allocate_load(units: &[UnitModel], demand: f64) -> Result<Allocation, ScheduleError> {
    validate_units(units)?;
    if !(demand >= 0.0 && demand.is_finite()) {
        return Err(ScheduleError::InvalidPlan(format!("demand must be non-negative, got {demand}")));
    }
    let avail: Vec<usize> = (0..units.len()).filter(|&i| units[i].available).collect();
    let capacity: f64 = avail.iter().map(|&i| units[i].q_max).sum();
    if demand > capacity * (1.0 + 1e-12) {
        return Err(ScheduleError::Infeasible {
            demand,
            capacity,
            shortfall: demand - capacity,
        });
    }

    let mut best: Option<Candidate> = None;
    for mask in 0u32..(1 << avail.len()) {
        let members: Vec<usize> = (0..avail.len()).filter(|b| mask & (1 << b) != 0).map(|b| avail[b]).collect();
        let candidate = if members.is_empty() {
            (demand == 0.0).then(|| (0.0, Vec::new(), None))
        } else {
            let refs: Vec<&UnitModel> = members.iter().map(|&i| &units[i]).collect();
            dispatch(&refs, demand).map(|(q, lambda)| {
                let fuel = refs.iter().zip(&q).map(|(u, q)| u.fuel_rate(*q)).sum();
                (fuel, members.iter().copied().zip(q).collect(), Some(lambda))
            })
        };
        if let Some(c) = candidate {
            if best.as_ref().is_none_or(|b| c.0 < b.0) {
                best = Some(c);
            }
        }
    }
    let (total, on, lambda) = best.ok_or(ScheduleError::NoFeasibleCommitment { demand })?;
    let units = units
        .iter()
        .enumerate()
        .map(|(i, u)| match on.iter().find(|(j, _)| *j == i) {
            Some(&(_, q)) => UnitDispatch {
                id: u.id.clone(),
                on: true,
                q,
                fuel_rate: u.fuel_rate(q),
            },
            None => UnitDispatch {
                id: u.id.clone(),
                on: false,
                q: 0.0,
                fuel_rate: 0.0,
            },
        })
        .collect();
    Ok(Allocation {
        units,
        total_fuel_rate: total,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSchedule {
    pub slot: usize,
    pub duration: f64,
    pub demand: f64,
    pub allocation: Allocation,
    /// Fuel over the slot: rate × duration.
    pub fuel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub slots: Vec<SlotSchedule>,
    pub total_fuel: f64,
}

/// Allocates every slot independently (no start/stop coupling).
pub fn schedule(units: &[UnitModel], plan: &ProductionPlan) -> Result<Schedule, ScheduleError> {
    plan.validate()?;
    validate_units(units)?;
    let mut slots = Vec::with_capacity(plan.slots.len());
    for (i, s) in plan.slots.iter().enumerate() {
        let allocation = allocate_load(units, s.demand).map_err(|e| ScheduleError::Slot {
            slot: i,
            source: Box::new(e),
        })?;
        let fuel = allocation.total_fuel_rate * s.duration;
        slots.push(SlotSchedule {
            slot: i,
            duration: s.duration,
            demand: s.demand,
            allocation,
            fuel,
        });
    }
    let total_fuel = slots.iter().map(|s| s.fuel).sum();
    Ok(Schedule { slots, total_fuel })
}

/// Writes `slot,unit,q,fuel` rows; fuel is the unit's fuel over the slot.
pub fn write_csv<W: Write>(sched: &Schedule, out: W) -> Result<(), ScheduleError> {
    let io = |e: csv::Error| ScheduleError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "unit", "q", "fuel"]).map_err(io)?;
    for s in &sched.slots {
        for u in &s.allocation.units {
            w.write_record([
                s.slot.to_string(),
                u.id.clone(),
                format!("{:.6}", u.q),
                format!("{:.6}", u.fuel_rate * s.duration),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| ScheduleError::Io(e.to_string()))
}
