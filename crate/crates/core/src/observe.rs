//! The 45-component observation an RSU agent builds for each CAV.
//!
//! | range   | block    | contents                                                      |
//! |---------|----------|---------------------------------------------------------------|
//! | 0..6    | ego      | lateral pos, cluster-relative pos, speed, accel, lane, exit distance |
//! | 6..36   | neighbor | 6 slots × (rel. distance, rel. speed, accel, lane, exit distance) |
//! | 36..42  | cluster  | mean speed, density of lanes 1..=5                            |
//! | 42..45  | global   | mean density of clusters 1..=3                                |
//!
//! Neighbor slots are ordered current-lead, current-follow, left-lead,
//! left-follow, right-lead, right-follow. An empty slot encodes as
//! `(+1, 0, 0, ego lane, +1)`. Roads with fewer lanes or clusters pad the
//! missing density entries with zero. Every component is clamped to
//! `[-1, 1]`.

use crate::error::{PalcasError, Result};
use crate::road::RoadNetwork;
use crate::scene::Scene;
use crate::vehicle::Vehicle;

pub const OBS_DIM: usize = 45;
pub const NEIGHBOR_SLOTS: usize = 6;
pub const NEIGHBOR_FEATURES: usize = 5;
pub const MAX_LANES: usize = 5;
pub const MAX_CLUSTERS: usize = 3;

/// Neighbor search radius, m.
pub const SENSING_RANGE: f64 = 200.0;
/// Bumper-to-bumper density of 5 m vehicles, veh/m/lane.
pub const JAM_DENSITY: f64 = 0.2;
/// Acceleration normalizer, m/s².
pub const ACCEL_SCALE: f64 = 4.5;

const EGO: usize = 0;
const NEIGHBORS: usize = 6;
const CLUSTER: usize = 36;
const GLOBAL: usize = 42;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Checks that a road fits the fixed observation layout.
pub fn check_layout(net: &RoadNetwork) -> Result<()> {
    if net.lane_count() as usize > MAX_LANES || net.clusters().len() > MAX_CLUSTERS {
        return Err(PalcasError::Config(format!(
            "observation layout supports at most {MAX_LANES} lanes and {MAX_CLUSTERS} clusters"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborRole {
    CurrentLead,
    CurrentFollow,
    LeftLead,
    LeftFollow,
    RightLead,
    RightFollow,
}

impl NeighborRole {
    pub const ALL: [NeighborRole; NEIGHBOR_SLOTS] = [
        NeighborRole::CurrentLead,
        NeighborRole::CurrentFollow,
        NeighborRole::LeftLead,
        NeighborRole::LeftFollow,
        NeighborRole::RightLead,
        NeighborRole::RightFollow,
    ];

    fn lane_offset(self) -> i16 {
        match self {
            NeighborRole::CurrentLead | NeighborRole::CurrentFollow => 0,
            NeighborRole::LeftLead | NeighborRole::LeftFollow => 1,
            NeighborRole::RightLead | NeighborRole::RightFollow => -1,
        }
    }

    fn ahead(self) -> bool {
        matches!(self, NeighborRole::CurrentLead | NeighborRole::LeftLead | NeighborRole::RightLead)
    }

    fn name(self) -> &'static str {
        match self {
            NeighborRole::CurrentLead => "cur_lead",
            NeighborRole::CurrentFollow => "cur_follow",
            NeighborRole::LeftLead => "left_lead",
            NeighborRole::LeftFollow => "left_follow",
            NeighborRole::RightLead => "right_lead",
            NeighborRole::RightFollow => "right_follow",
        }
    }
}

/// Nearest vehicle (by |Δx|, ties to the lower id) in each role within the
/// sensing range. A vehicle level with the ego counts as a leader. Slots
/// for lanes that do not exist stay empty.
pub fn select_neighbors(scene: &Scene, ego: usize) -> [Option<usize>; NEIGHBOR_SLOTS] {
    let e = &scene.vehicles[ego];
    let mut out = [None; NEIGHBOR_SLOTS];
    for (slot, role) in NeighborRole::ALL.iter().enumerate() {
        let lane = e.lane as i16 + role.lane_offset();
        if lane < 0 || lane > scene.net.lane_count() as i16 {
            continue;
        }
        let lane = lane as u8;
        let mut best: Option<(f64, u64, usize)> = None;
        for (i, o) in scene.vehicles.iter().enumerate() {
            if i == ego || o.lane != lane {
                continue;
            }
            let dx = o.x - e.x;
            if (dx >= 0.0) != role.ahead() || dx.abs() > SENSING_RANGE {
                continue;
            }
            let key = (dx.abs(), o.id, i);
            if best.map_or(true, |b| key.0 < b.0 || (key.0 == b.0 && key.1 < b.1)) {
                best = Some(key);
            }
        }
        out[slot] = best.map(|b| b.2);
    }
    out
}

/// Per-cluster aggregates shared by every observation of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub mean_speed: f64,
    /// Vehicles per meter per lane, for lanes 1..=L.
    pub lane_density: Vec<f64>,
    /// Mean density across the cluster's lanes.
    pub density: f64,
}

pub fn cluster_stats(net: &RoadNetwork, vehicles: &[Vehicle]) -> Vec<ClusterStats> {
    let lanes = net.lane_count() as usize;
    net.clusters()
        .iter()
        .map(|z| {
            let mut counts = vec![0usize; lanes];
            let (mut sum, mut n) = (0.0, 0usize);
            for v in vehicles.iter().filter(|v| z.contains(v.x)) {
                sum += v.v;
                n += 1;
                if (1..=lanes).contains(&(v.lane as usize)) {
                    counts[v.lane as usize - 1] += 1;
                }
            }
            let lane_density: Vec<f64> = counts.iter().map(|&c| c as f64 / z.length()).collect();
            let density = lane_density.iter().sum::<f64>() / lanes as f64;
            ClusterStats {
                mean_speed: if n == 0 { net.speed_limit() } else { sum / n as f64 },
                lane_density,
                density,
            }
        })
        .collect()
}

fn clamp1(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

pub fn encode(scene: &Scene, ego: usize, stats: &[ClusterStats]) -> Observation {
    let net = scene.net;
    let e = &scene.vehicles[ego];
    let v_lim = net.speed_limit();
    let lanes = net.lane_count() as f64;
    let road_width = lanes * net.lane_width();
    let length = net.mainline_length();
    let cluster = net.cluster_of(e.x.clamp(0.0, length)).ok().flatten();

    let mut o = [0.0; OBS_DIM];
    o[EGO] = e.lat / road_width;
    o[EGO + 1] = match cluster.and_then(|c| net.cluster(c)) {
        Some(z) => (e.x - z.start) / z.length(),
        None => e.x / length,
    };
    o[EGO + 2] = e.v / v_lim;
    o[EGO + 3] = e.a / ACCEL_SCALE;
    o[EGO + 4] = e.lane as f64 / lanes;
    o[EGO + 5] = net.distance_to_exit(e) / length;

    for (slot, n) in select_neighbors(scene, ego).iter().enumerate() {
        let base = NEIGHBORS + slot * NEIGHBOR_FEATURES;
        let f = match n {
            Some(i) => {
                let m = &scene.vehicles[*i];
                [
                    (m.x - e.x) / SENSING_RANGE,
                    (m.v - e.v) / v_lim,
                    m.a / ACCEL_SCALE,
                    m.lane as f64 / lanes,
                    net.distance_to_exit(m) / length,
                ]
            }
            None => [1.0, 0.0, 0.0, e.lane as f64 / lanes, 1.0],
        };
        o[base..base + NEIGHBOR_FEATURES].copy_from_slice(&f);
    }

    if let Some(s) = cluster.and_then(|c| stats.get(c - 1)) {
        o[CLUSTER] = s.mean_speed / v_lim;
        for (l, d) in s.lane_density.iter().take(MAX_LANES).enumerate() {
            o[CLUSTER + 1 + l] = d / JAM_DENSITY;
        }
    }
    for (k, s) in stats.iter().take(MAX_CLUSTERS).enumerate() {
        o[GLOBAL + k] = s.density / JAM_DENSITY;
    }
    for x in &mut o {
        *x = clamp1(*x);
    }
    Observation(o)
}

/// Column names of the observation, in order.
pub fn labels() -> Vec<String> {
    let mut out: Vec<String> =
        ["ego_lat", "ego_pos", "ego_speed", "ego_accel", "ego_lane", "ego_exit_dist"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    for role in NeighborRole::ALL {
        for f in ["dx", "dv", "accel", "lane", "exit_dist"] {
            out.push(format!("{}_{f}", role.name()));
        }
    }
    out.push("cluster_speed".into());
    for l in 1..=MAX_LANES {
        out.push(format!("cluster_lane{l}_density"));
    }
    for k in 1..=MAX_CLUSTERS {
        out.push(format!("global_cluster{k}_density"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::{Entry, Exit, RoadLayout, Route};
    use crate::vehicle::VehicleKind;

    fn net() -> RoadNetwork {
        RoadNetwork::from_layout(&RoadLayout::default()).unwrap()
    }

    #[test]
    fn labels_match_dimension() {
        assert_eq!(labels().len(), OBS_DIM);
    }

    #[test]
    fn lone_vehicle_has_empty_slots() {
        let net = net();
        let r = Route::new(Entry::Mainline, Exit::HighwayEnd);
        let vs = vec![Vehicle::new(1, VehicleKind::Cav, 300.0, 1, 33.528, 33.528, r, &net)];
        let s = Scene::new(&net, &vs);
        assert_eq!(select_neighbors(&s, 0), [None; 6]);
        let stats = cluster_stats(&net, &vs);
        let o = encode(&s, 0, &stats);
        assert_eq!(o.0[2], 1.0);
        let lane = 1.0 / 5.0;
        for slot in 0..6 {
            let b = 6 + slot * 5;
            assert_eq!(&o.0[b..b + 5], &[1.0, 0.0, 0.0, lane, 1.0]);
        }
    }

    #[test]
    fn ids_level_with_ego_lead() {
        let net = net();
        let r = Route::new(Entry::Mainline, Exit::HighwayEnd);
        let mk = |id, x, lane| Vehicle::new(id, VehicleKind::Chv, x, lane, 30.0, 33.528, r, &net);
        let vs = vec![mk(1, 300.0, 2), mk(2, 300.0, 3), mk(3, 290.0, 3), mk(4, 310.0, 3)];
        let s = Scene::new(&net, &vs);
        let n = select_neighbors(&s, 0);
        assert_eq!(n[2], Some(1)); // left lead: level vehicle
        assert_eq!(n[3], Some(2)); // left follow
        assert_eq!(n[4], None);
    }
}
