use serde::{Deserialize, Serialize};

/// Bounds of the continuous acceleration parameter, m/s².
pub const ACCEL_MIN: f64 = -4.5;
pub const ACCEL_MAX: f64 = 2.6;

/// Number of discrete actions.
pub const ACTION_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    LaneChangeLeft = 0,
    LaneChangeRight = 1,
    Accelerate = 2,
    Hold = 3,
}

impl ActionKind {
    pub const ALL: [ActionKind; ACTION_COUNT] = [
        ActionKind::LaneChangeLeft,
        ActionKind::LaneChangeRight,
        ActionKind::Accelerate,
        ActionKind::Hold,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Discrete action plus its continuous acceleration parameter. The
/// parameter only matters for [`ActionKind::Accelerate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub kind: ActionKind,
    accel: f64,
}

impl HybridAction {
    pub fn new(kind: ActionKind, accel: f64) -> Self {
        Self { kind, accel: clamp_accel(accel) }
    }

    pub fn accelerate(accel: f64) -> Self {
        Self::new(ActionKind::Accelerate, accel)
    }

    pub fn hold() -> Self {
        Self::new(ActionKind::Hold, 0.0)
    }

    pub fn accel(&self) -> f64 {
        self.accel
    }
}

pub fn clamp_accel(a: f64) -> f64 {
    if a.is_nan() {
        return 0.0;
    }
    a.clamp(ACCEL_MIN, ACCEL_MAX)
}
