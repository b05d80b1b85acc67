use serde::{Deserialize, Serialize};

use crate::road::{RoadNetwork, Route, ACCEL_LANE};

pub const DEFAULT_VEHICLE_LENGTH: f64 = 5.0;
pub const DEFAULT_VEHICLE_WIDTH: f64 = 1.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    /// Connected automated vehicle, driven by an RSU agent inside clusters.
    Cav,
    /// Connected human-driven vehicle, driven by the rule-based model.
    Chv,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Cav => "CAV",
            VehicleKind::Chv => "CHV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CAV" => Some(VehicleKind::Cav),
            "CHV" => Some(VehicleKind::Chv),
            _ => None,
        }
    }
}

/// An in-flight move to an adjacent lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeManeuver {
    pub origin_lane: u8,
    pub target_lane: u8,
    pub start_time: f64,
    pub duration: f64,
    /// Lateral progress in `[0, 1]`.
    pub progress: f64,
}

impl LaneChangeManeuver {
    pub fn new(origin_lane: u8, target_lane: u8, start_time: f64, duration: f64) -> Self {
        debug_assert_eq!(origin_lane.abs_diff(target_lane), 1);
        Self { origin_lane, target_lane, start_time, duration, progress: 0.0 }
    }

    /// +1 when moving left (higher lane index), -1 when moving right.
    pub fn direction(&self) -> f64 {
        if self.target_lane > self.origin_lane {
            1.0
        } else {
            -1.0
        }
    }

    pub fn committed(&self) -> bool {
        self.progress >= 0.5 - 1e-9
    }

    pub fn lateral_position(&self, net: &RoadNetwork) -> f64 {
        let a = net.lane_center(self.origin_lane);
        let b = net.lane_center(self.target_lane);
        a + (b - a) * self.progress
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    pub kind: VehicleKind,
    /// Front bumper position along the mainline.
    pub x: f64,
    /// Lateral centre position, measured from the right edge of lane 1.
    pub lat: f64,
    /// Committed lane index (0 = acceleration lane).
    pub lane: u8,
    pub v: f64,
    /// Acceleration applied over the last step.
    pub a: f64,
    /// Acceleration commanded for the next step.
    pub commanded_accel: f64,
    pub length: f64,
    pub width: f64,
    pub max_speed: f64,
    pub route: Route,
    pub maneuver: Option<LaneChangeManeuver>,
    pub on_accel_lane: bool,
    pub spawn_time: f64,
    pub missed_exit: bool,
    /// Time the vehicle last started a lane change; used as a cooldown by
    /// the rule-based driver.
    pub last_lane_change: f64,
    /// Start of the current standstill at the end of an acceleration lane.
    pub stalled_since: Option<f64>,
    pub deadlocked: bool,
}

impl Vehicle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u64,
        kind: VehicleKind,
        x: f64,
        lane: u8,
        v: f64,
        max_speed: f64,
        route: Route,
        net: &RoadNetwork,
    ) -> Self {
        Self {
            id,
            kind,
            x,
            lat: net.lane_center(lane),
            lane,
            v,
            a: 0.0,
            commanded_accel: 0.0,
            length: DEFAULT_VEHICLE_LENGTH,
            width: DEFAULT_VEHICLE_WIDTH,
            max_speed,
            route,
            maneuver: None,
            on_accel_lane: lane == ACCEL_LANE,
            spawn_time: 0.0,
            missed_exit: false,
            last_lane_change: f64::NEG_INFINITY,
            stalled_since: None,
            deadlocked: false,
        }
    }

    pub fn rear(&self) -> f64 {
        self.x - self.length
    }

    /// Signed lateral speed: positive when moving left.
    pub fn lateral_speed(&self, net: &RoadNetwork) -> f64 {
        match &self.maneuver {
            Some(m) => m.direction() * net.lane_width() / m.duration,
            None => 0.0,
        }
    }

    /// Lanes this vehicle currently occupies: its committed lane plus, while
    /// maneuvering, the other lane of the maneuver.
    pub fn occupied_lanes(&self) -> impl Iterator<Item = u8> + '_ {
        let other = self.maneuver.map(|m| {
            if m.target_lane == self.lane {
                m.origin_lane
            } else {
                m.target_lane
            }
        });
        std::iter::once(self.lane).chain(other)
    }

    pub fn is_cav(&self) -> bool {
        self.kind == VehicleKind::Cav
    }
}
