use std::fmt;

use crate::vehicle::{Vehicle, VehicleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Spawn,
    LaneChangeStart,
    LaneChangeAbort,
    Merge,
    Collision,
    Arrival,
    MissedExit,
    Deadlock,
    /// Still on the road when the episode ended.
    Unresolved,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::LaneChangeStart => "lane_change_start",
            EventKind::LaneChangeAbort => "lane_change_abort",
            EventKind::Merge => "merge",
            EventKind::Collision => "collision",
            EventKind::Arrival => "arrival",
            EventKind::MissedExit => "missed_exit",
            EventKind::Deadlock => "deadlock",
            EventKind::Unresolved => "unresolved",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "spawn" => EventKind::Spawn,
            "lane_change_start" => EventKind::LaneChangeStart,
            "lane_change_abort" => EventKind::LaneChangeAbort,
            "merge" => EventKind::Merge,
            "collision" => EventKind::Collision,
            "arrival" => EventKind::Arrival,
            "missed_exit" => EventKind::MissedExit,
            "deadlock" => EventKind::Deadlock,
            "unresolved" => EventKind::Unresolved,
            _ => return None,
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the event log.
///
/// `detail` carries event-specific data: the route label for spawns
/// (`main>off2`), `exit` or `end` for arrivals, `with=<id>` for collisions,
/// `to=<lane>` for lane-change starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub vehicle_id: u64,
    pub vehicle_kind: VehicleKind,
    pub lane: u8,
    pub long_pos: f64,
    pub detail: String,
}

impl Event {
    pub fn of(time: f64, kind: EventKind, v: &Vehicle, detail: impl Into<String>) -> Self {
        Self {
            time,
            kind,
            vehicle_id: v.id,
            vehicle_kind: v.kind,
            lane: v.lane,
            long_pos: v.x,
            detail: detail.into(),
        }
    }
}
