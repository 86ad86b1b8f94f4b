use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqState {
    Stopped,
    Purge,
    Ignition,
    Warmup,
    Acceleration,
    Idle,
    Loaded,
    Cooldown,
    Tripped,
}

impl SeqState {
    pub const ALL: [SeqState; 9] = [
        SeqState::Stopped,
        SeqState::Purge,
        SeqState::Ignition,
        SeqState::Warmup,
        SeqState::Acceleration,
        SeqState::Idle,
        SeqState::Loaded,
        SeqState::Cooldown,
        SeqState::Tripped,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SeqState::Stopped => "stopped",
            SeqState::Purge => "purge",
            SeqState::Ignition => "ignition",
            SeqState::Warmup => "warmup",
            SeqState::Acceleration => "acceleration",
            SeqState::Idle => "idle",
            SeqState::Loaded => "loaded",
            SeqState::Cooldown => "cooldown",
            SeqState::Tripped => "tripped",
        }
    }

    /// States in which a normal stop command leads to Cooldown.
    pub fn is_stoppable(&self) -> bool {
        matches!(
            self,
            SeqState::Purge
                | SeqState::Ignition
                | SeqState::Warmup
                | SeqState::Acceleration
                | SeqState::Idle
                | SeqState::Loaded
        )
    }

    /// States in which the low oil pressure protection is armed.
    pub fn oil_protection_armed(&self) -> bool {
        matches!(
            self,
            SeqState::Ignition
                | SeqState::Warmup
                | SeqState::Acceleration
                | SeqState::Idle
                | SeqState::Loaded
                | SeqState::Cooldown
        )
    }
}

impl fmt::Display for SeqState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeqState {
    type Err = ControlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SeqState::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| ControlError::Config(format!("unknown sequence state {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: SeqState,
    pub to: SeqState,
    pub trigger: &'static str,
}

/// The complete sequencer transition table. `control_scan` never takes an
/// edge that is not listed here.
pub fn sequence_table() -> Vec<Transition> {
    use SeqState::*;
    let t = |from, to, trigger| Transition { from, to, trigger };
    let mut table = vec![
        t(Stopped, Purge, "start command with oil permissive"),
        t(Purge, Ignition, "purge timer elapsed"),
        t(Ignition, Warmup, "exhaust temperature rise confirmed"),
        t(Warmup, Acceleration, "warmup timer elapsed"),
        t(Acceleration, Idle, "HPT speed within idle band"),
        t(Idle, Loaded, "load ring or trunk selected"),
        t(Loaded, Idle, "unload selected"),
        t(Cooldown, Stopped, "speeds below stop threshold"),
        t(Tripped, Stopped, "operator reset"),
    ];
    for s in SeqState::ALL.into_iter().filter(|s| s.is_stoppable()) {
        table.push(t(s, Cooldown, "stop command"));
    }
    for s in SeqState::ALL.into_iter().filter(|s| *s != Tripped) {
        table.push(t(s, Tripped, "protection trip"));
    }
    table
}

pub fn is_edge(from: SeqState, to: SeqState) -> bool {
    from == to || sequence_table().iter().any(|t| t.from == from && t.to == to)
}
