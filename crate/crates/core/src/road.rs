//! Highway geometry: lanes, RSU clusters, ramps and routes.
//!
//! Positions are meters along the mainline measured from the upstream end of
//! the warm-up zone. Lanes are 1-based with lane 1 the rightmost (exit) lane;
//! lane 0 is reserved for the acceleration lane of an on-ramp, which runs to
//! the right of lane 1.

use serde::{Deserialize, Serialize};

use crate::error::{contract, PalcasError, Result};
use crate::vehicle::Vehicle;

/// The exit lane every off-ramp route has to reach.
pub const EXIT_LANE: u8 = 1;
/// Pseudo lane index of an acceleration lane.
pub const ACCEL_LANE: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampKind {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    pub kind: RampKind,
    /// For on-ramps: where the acceleration lane begins. For off-ramps: the
    /// diverge point a vehicle must pass in the exit lane.
    pub junction_position: f64,
    /// Acceleration lane length; zero for off-ramps.
    pub accel_lane_length: f64,
}

impl RampSpec {
    /// Downstream end of the acceleration lane.
    pub fn accel_lane_end(&self) -> f64 {
        self.junction_position + self.accel_lane_length
    }
}

/// One RSU's contiguous stretch of mainline, `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterZone {
    /// 1-based cluster id.
    pub id: usize,
    pub start: f64,
    pub end: f64,
    pub on_ramp: RampSpec,
    pub off_ramp: RampSpec,
}

impl ClusterZone {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, pos: f64) -> bool {
        pos >= self.start && pos < self.end
    }
}

/// Parametric description of the highway, as found in experiment configs.
///
/// Cluster `i` (0-based) spans `[i * cluster_length, (i + 1) * cluster_length)`
/// clipped to the region downstream of the warm-up zone. Each cluster gets an
/// on-ramp `on_ramp_offset` meters after its start and an off-ramp
/// `off_ramp_offset` meters before its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadLayout {
    pub mainline_length: f64,
    pub lane_count: u8,
    pub lane_width: f64,
    pub warmup_length: f64,
    pub speed_limit: f64,
    pub cluster_count: usize,
    pub cluster_length: f64,
    pub on_ramp_offset: f64,
    pub accel_lane_length: f64,
    pub off_ramp_offset: f64,
}

impl Default for RoadLayout {
    fn default() -> Self {
        Self {
            mainline_length: 2400.0,
            lane_count: 5,
            lane_width: 3.2,
            warmup_length: 100.0,
            speed_limit: 33.528,
            cluster_count: 3,
            cluster_length: 800.0,
            on_ramp_offset: 50.0,
            accel_lane_length: 200.0,
            off_ramp_offset: 100.0,
        }
    }
}

impl RoadLayout {
    /// The reduced highway used for quick experiments: 1.2 km, two clusters.
    pub fn desk() -> Self {
        Self {
            mainline_length: 1200.0,
            cluster_count: 2,
            cluster_length: 600.0,
            ..Self::default()
        }
    }
}

/// Immutable road geometry shared by every module.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    mainline_length: f64,
    lane_count: u8,
    lane_width: f64,
    warmup_length: f64,
    speed_limit: f64,
    clusters: Vec<ClusterZone>,
}

impl RoadNetwork {
    pub fn from_layout(layout: &RoadLayout) -> Result<Self> {
        let mut clusters = Vec::with_capacity(layout.cluster_count);
        for i in 0..layout.cluster_count {
            let start = (i as f64 * layout.cluster_length).max(layout.warmup_length);
            let end = ((i + 1) as f64 * layout.cluster_length).min(layout.mainline_length);
            let on_junction = start + layout.on_ramp_offset;
            clusters.push(ClusterZone {
                id: i + 1,
                start,
                end,
                on_ramp: RampSpec {
                    kind: RampKind::On,
                    junction_position: on_junction,
                    accel_lane_length: layout.accel_lane_length,
                },
                off_ramp: RampSpec {
                    kind: RampKind::Off,
                    junction_position: end - layout.off_ramp_offset,
                    accel_lane_length: 0.0,
                },
            });
        }
        Self::new(
            layout.mainline_length,
            layout.lane_count,
            layout.lane_width,
            layout.warmup_length,
            layout.speed_limit,
            clusters,
        )
    }

    pub fn new(
        mainline_length: f64,
        lane_count: u8,
        lane_width: f64,
        warmup_length: f64,
        speed_limit: f64,
        clusters: Vec<ClusterZone>,
    ) -> Result<Self> {
        let bad = |m: String| Err(PalcasError::Config(m));
        if !(mainline_length > 0.0) {
            return bad("mainline_length must be positive".into());
        }
        if lane_count == 0 {
            return bad("lane_count must be at least 1".into());
        }
        if !(lane_width > 0.0) || !(speed_limit > 0.0) {
            return bad("lane_width and speed_limit must be positive".into());
        }
        if !(0.0..mainline_length).contains(&warmup_length) {
            return bad("warmup_length must lie in [0, mainline_length)".into());
        }
        if clusters.is_empty() {
            return bad("at least one cluster is required".into());
        }
        let mut total = 0.0;
        let mut prev_end = warmup_length;
        for (i, c) in clusters.iter().enumerate() {
            if c.id != i + 1 {
                return bad(format!("cluster ids must be 1..=K in order, got {}", c.id));
            }
            if !(c.start < c.end) {
                return bad(format!("cluster {} has empty span", c.id));
            }
            if c.start < prev_end - 1e-9 || c.end > mainline_length + 1e-9 {
                return bad(format!("cluster {} overlaps its neighbour or the road ends", c.id));
            }
            if !c.contains(c.on_ramp.junction_position) || !c.contains(c.off_ramp.junction_position)
            {
                return bad(format!("cluster {} ramp junction outside its span", c.id));
            }
            if !(c.on_ramp.accel_lane_length > 0.0) {
                return bad(format!("cluster {} acceleration lane must be positive", c.id));
            }
            if c.on_ramp.accel_lane_end() > c.end {
                return bad(format!("cluster {} acceleration lane runs past the cluster", c.id));
            }
            if c.off_ramp.junction_position <= c.on_ramp.junction_position {
                return bad(format!("cluster {} off-ramp must be downstream of its on-ramp", c.id));
            }
            total += c.length();
            prev_end = c.end;
        }
        if total > mainline_length + 1e-9 {
            return bad("cluster lengths exceed the mainline".into());
        }
        Ok(Self {
            mainline_length,
            lane_count,
            lane_width,
            warmup_length,
            speed_limit,
            clusters,
        })
    }

    pub fn mainline_length(&self) -> f64 {
        self.mainline_length
    }
    pub fn lane_count(&self) -> u8 {
        self.lane_count
    }
    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }
    pub fn warmup_length(&self) -> f64 {
        self.warmup_length
    }
    pub fn speed_limit(&self) -> f64 {
        self.speed_limit
    }
    pub fn clusters(&self) -> &[ClusterZone] {
        &self.clusters
    }

    /// Cluster by 1-based id.
    pub fn cluster(&self, id: usize) -> Option<&ClusterZone> {
        id.checked_sub(1).and_then(|i| self.clusters.get(i))
    }

    /// Which RSU cluster covers `long_pos`, if any.
    pub fn cluster_of(&self, long_pos: f64) -> Result<Option<usize>> {
        if !(0.0..=self.mainline_length).contains(&long_pos) {
            return contract(format!(
                "position {long_pos} outside [0, {}]",
                self.mainline_length
            ));
        }
        Ok(self.clusters.iter().find(|c| c.contains(long_pos)).map(|c| c.id))
    }

    /// Lateral coordinate of a lane's centerline, measured from the right
    /// edge of lane 1. Lane 0 is the acceleration lane.
    pub fn lane_center(&self, lane: u8) -> f64 {
        (lane as f64 - 0.5) * self.lane_width
    }

    /// Whether `lane` is a mainline lane.
    pub fn is_mainline_lane(&self, lane: u8) -> bool {
        (1..=self.lane_count).contains(&lane)
    }

    pub fn entry_position(&self, entry: Entry) -> f64 {
        match entry {
            Entry::Mainline => 0.0,
            Entry::Ramp(c) => self.cluster(c).map_or(0.0, |z| z.on_ramp.junction_position),
        }
    }

    pub fn exit_position(&self, exit: Exit) -> f64 {
        match exit {
            Exit::OffRamp(c) => self
                .cluster(c)
                .map_or(self.mainline_length, |z| z.off_ramp.junction_position),
            Exit::HighwayEnd => self.mainline_length,
        }
    }

    /// Every exit reachable from `entry`: off-ramps strictly downstream of
    /// the entry (past the acceleration lane for ramp entries) plus the
    /// highway end.
    pub fn feasible_routes(&self, entry: Entry) -> Vec<Route> {
        let from = match entry {
            Entry::Mainline => 0.0,
            Entry::Ramp(c) => self.cluster(c).map_or(0.0, |z| z.on_ramp.accel_lane_end()),
        };
        let mut routes: Vec<Route> = self
            .clusters
            .iter()
            .filter(|z| z.off_ramp.junction_position > from)
            .map(|z| Route { entry, exit: Exit::OffRamp(z.id) })
            .collect();
        routes.push(Route { entry, exit: Exit::HighwayEnd });
        routes
    }

    /// Remaining longitudinal distance to the route's exit point, clamped at 0.
    pub fn distance_to_exit(&self, vehicle: &Vehicle) -> f64 {
        (self.exit_position(vehicle.route.exit) - vehicle.x).max(0.0)
    }

    /// Lane changes still needed to reach the exit lane. Zero for through
    /// routes, which have no exit lane to reach.
    pub fn remaining_lane_count(&self, vehicle: &Vehicle) -> u8 {
        match vehicle.route.exit {
            Exit::HighwayEnd => 0,
            Exit::OffRamp(_) => vehicle.lane.abs_diff(EXIT_LANE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Entry {
    Mainline,
    /// On-ramp of the given 1-based cluster.
    Ramp(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Exit {
    /// Off-ramp of the given 1-based cluster.
    OffRamp(usize),
    HighwayEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Route {
    pub entry: Entry,
    pub exit: Exit,
}

impl Route {
    pub const fn new(entry: Entry, exit: Exit) -> Self {
        Self { entry, exit }
    }

    /// Route One through Four used for the comfort traces: mainline to
    /// cluster 2's exit, mainline to cluster 3's exit, mainline straight
    /// through, and cluster 1's ramp to cluster 2's exit.
    pub fn canonical(n: u8) -> Option<Route> {
        Some(match n {
            1 => Route::new(Entry::Mainline, Exit::OffRamp(2)),
            2 => Route::new(Entry::Mainline, Exit::OffRamp(3)),
            3 => Route::new(Entry::Mainline, Exit::HighwayEnd),
            4 => Route::new(Entry::Ramp(1), Exit::OffRamp(2)),
            _ => return None,
        })
    }

    pub fn is_exiting(&self) -> bool {
        matches!(self.exit, Exit::OffRamp(_))
    }

    pub fn is_ramp(&self) -> bool {
        matches!(self.entry, Entry::Ramp(_))
    }

    /// Compact text form used in event logs, e.g. `main>off2` or `ramp1>end`.
    pub fn label(&self) -> String {
        let entry = match self.entry {
            Entry::Mainline => "main".to_string(),
            Entry::Ramp(c) => format!("ramp{c}"),
        };
        let exit = match self.exit {
            Exit::OffRamp(c) => format!("off{c}"),
            Exit::HighwayEnd => "end".to_string(),
        };
        format!("{entry}>{exit}")
    }

    pub fn parse_label(s: &str) -> Option<Route> {
        let (a, b) = s.split_once('>')?;
        let entry = if a == "main" {
            Entry::Mainline
        } else {
            Entry::Ramp(a.strip_prefix("ramp")?.parse().ok()?)
        };
        let exit = if b == "end" {
            Exit::HighwayEnd
        } else {
            Exit::OffRamp(b.strip_prefix("off")?.parse().ok()?)
        };
        Some(Route { entry, exit })
    }
}
