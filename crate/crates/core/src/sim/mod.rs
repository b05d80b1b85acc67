//! Discrete-time highway world: spawning, background drivers, lane-change
//! maneuvers, collisions, arrivals and removals.

pub mod driver;
pub mod events;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{clamp_accel, ActionKind, HybridAction, ACCEL_MAX};
use crate::error::{PalcasError, Result};
use crate::road::{Entry, RoadNetwork, ACCEL_LANE, EXIT_LANE};
use crate::rss::{self, RssParams};
use crate::scene::Scene;
use crate::vehicle::{LaneChangeManeuver, Vehicle, VehicleKind};

pub use driver::{idm_accel, DriverDecision, IdmParams, MobilParams};
pub use events::{Event, EventKind};

use driver::Driver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Integration step, s.
    pub step_size: f64,
    /// Time allowed to complete a lane change, s.
    pub lane_change_duration: f64,
    /// Entry speed on acceleration lanes, as a fraction of the speed limit.
    pub ramp_entry_speed_factor: f64,
    /// Standstill detection for merging vehicles at the acceleration lane end.
    pub deadlock_speed: f64,
    pub deadlock_window: f64,
    pub deadlock_time: f64,
    pub idm: IdmParams,
    pub mobil: MobilParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            lane_change_duration: 2.0,
            ramp_entry_speed_factor: 0.6,
            deadlock_speed: 0.5,
            deadlock_window: 5.0,
            deadlock_time: 10.0,
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpawnConfig {
    /// veh/h/lane entering at the upstream end.
    pub mainline_flow: f64,
    /// veh/h entering through each on-ramp.
    pub ramp_flow: f64,
    /// Fraction of spawned vehicles that are CAVs.
    pub cav_penetration: f64,
    /// Probability that a vehicle's top speed is the speed limit; otherwise
    /// it is `slow_speed_factor` times the limit.
    pub p_fast: f64,
    pub slow_speed_factor: f64,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self {
            mainline_flow: 3200.0,
            ramp_flow: 600.0,
            cav_penetration: 0.6,
            p_fast: 0.5,
            slow_speed_factor: 0.85,
        }
    }
}

impl SpawnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mainline_flow >= 0.0) || !(self.ramp_flow >= 0.0) {
            return Err(PalcasError::Config("flows must be non-negative".into()));
        }
        for (name, p) in [("cav_penetration", self.cav_penetration), ("p_fast", self.p_fast)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(PalcasError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.slow_speed_factor > 0.0 && self.slow_speed_factor <= 1.0) {
            return Err(PalcasError::Config("slow_speed_factor must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-step insertion probability for a flow in veh/h.
pub fn insertion_probability(flow_per_hour: f64, step_size: f64) -> f64 {
    (flow_per_hour * step_size / 3600.0).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionOutcome {
    Accepted,
    RejectedUnsafe,
    RejectedBusy,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub collisions: Vec<u64>,
    pub arrivals: Vec<u64>,
    pub missed_exits: Vec<u64>,
    pub aborted_maneuvers: Vec<u64>,
    /// Final state of every vehicle removed this step.
    pub removed: Vec<Vehicle>,
}

/// Insertion points: one per mainline lane, then one per on-ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EntryPoint {
    Lane(u8),
    Ramp(usize),
}

const MAX_PENDING: u32 = 2;

pub struct World {
    net: Arc<RoadNetwork>,
    params: SimParams,
    rss: RssParams,
    /// Active vehicles, ascending by id.
    vehicles: Vec<Vehicle>,
    steps: u64,
    rng: ChaCha8Rng,
    events: Vec<Event>,
    next_id: u64,
    entries: Vec<(EntryPoint, u32)>,
}

impl World {
    pub fn new(net: Arc<RoadNetwork>, params: SimParams, rss: RssParams, seed: u64) -> Self {
        let mut entries: Vec<(EntryPoint, u32)> =
            (1..=net.lane_count()).map(|l| (EntryPoint::Lane(l), 0)).collect();
        entries.extend(net.clusters().iter().map(|c| (EntryPoint::Ramp(c.id), 0)));
        Self {
            net,
            params,
            rss,
            vehicles: Vec::new(),
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            events: Vec::new(),
            next_id: 1,
            entries,
        }
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }
    pub fn network_arc(&self) -> Arc<RoadNetwork> {
        Arc::clone(&self.net)
    }
    pub fn params(&self) -> &SimParams {
        &self.params
    }
    pub fn rss(&self) -> &RssParams {
        &self.rss
    }
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.params.step_size
    }
    pub fn steps(&self) -> u64 {
        self.steps
    }
    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }
    pub fn events(&self) -> &[Event] {
        &self.events
    }
    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }
    pub fn scene(&self) -> Scene<'_> {
        Scene::new(&self.net, &self.vehicles)
    }

    pub fn vehicle(&self, id: u64) -> Option<&Vehicle> {
        self.index(id).map(|i| &self.vehicles[i])
    }

    fn index(&self, id: u64) -> Option<usize> {
        self.vehicles.binary_search_by_key(&id, |v| v.id).ok()
    }

    /// Places a vehicle directly, bypassing the spawn process. Returns its id.
    pub fn insert_vehicle(&mut self, mut v: Vehicle) -> u64 {
        v.id = self.next_id;
        self.next_id += 1;
        v.spawn_time = self.time();
        v.lat = self.net.lane_center(v.lane);
        v.on_accel_lane = v.lane == ACCEL_LANE;
        self.events.push(Event::of(self.time(), EventKind::Spawn, &v, v.route.label()));
        let id = v.id;
        self.vehicles.push(v);
        id
    }

    /// CAV ids inside cluster `cluster` (1-based), ascending.
    pub fn cavs_in_cluster(&self, cluster: usize) -> Vec<u64> {
        let Some(z) = self.net.cluster(cluster) else { return Vec::new() };
        self.vehicles.iter().filter(|v| v.is_cav() && z.contains(v.x)).map(|v| v.id).collect()
    }

    /// Mean speed of all vehicles inside each cluster; 0-based by cluster
    /// index. Empty clusters report the speed limit.
    pub fn cluster_mean_speeds(&self) -> Vec<f64> {
        self.net
            .clusters()
            .iter()
            .map(|z| {
                let (sum, n) = self
                    .vehicles
                    .iter()
                    .filter(|v| z.contains(v.x))
                    .fold((0.0, 0usize), |(s, n), v| (s + v.v, n + 1));
                if n == 0 {
                    self.net.speed_limit()
                } else {
                    sum / n as f64
                }
            })
            .collect()
    }

    /// Runs one insertion round: each entry point fires with its flow
    /// probability, and pending insertions are placed when the entry has an
    /// RSS-safe gap.
    pub fn spawn_step(&mut self, cfg: &SpawnConfig) -> Vec<u64> {
        let dt = self.params.step_size;
        let p_main = insertion_probability(cfg.mainline_flow, dt);
        let p_ramp = insertion_probability(cfg.ramp_flow, dt);
        for k in 0..self.entries.len() {
            let p = match self.entries[k].0 {
                EntryPoint::Lane(_) => p_main,
                EntryPoint::Ramp(_) => p_ramp,
            };
            if p > 0.0 && self.rng.gen::<f64>() < p {
                self.entries[k].1 = (self.entries[k].1 + 1).min(MAX_PENDING);
            }
        }
        let mut spawned = Vec::new();
        for k in 0..self.entries.len() {
            if self.entries[k].1 == 0 {
                continue;
            }
            if let Some(id) = self.try_insert(self.entries[k].0, cfg) {
                self.entries[k].1 -= 1;
                spawned.push(id);
            }
        }
        spawned
    }

    fn try_insert(&mut self, entry: EntryPoint, cfg: &SpawnConfig) -> Option<u64> {
        let v_lim = self.net.speed_limit();
        let max_speed = if self.rng.gen::<f64>() < cfg.p_fast {
            v_lim
        } else {
            cfg.slow_speed_factor * v_lim
        };
        let length = crate::vehicle::DEFAULT_VEHICLE_LENGTH;
        let (lane, x, desired, route_entry) = match entry {
            EntryPoint::Lane(l) => (l, length, max_speed, Entry::Mainline),
            EntryPoint::Ramp(c) => {
                let z = self.net.cluster(c)?;
                let speed = (self.params.ramp_entry_speed_factor * v_lim).min(max_speed);
                (ACCEL_LANE, z.on_ramp.junction_position + length, speed, Entry::Ramp(c))
            }
        };
        let scene = self.scene();
        let mut speed = desired;
        if let Some(i) = scene.leader_at(lane, x, u64::MAX) {
            let o = &scene.vehicles[i];
            speed = speed.min(o.v);
            let need = rss::longitudinal_safe_distance(speed, o.v, &self.rss).ok()?;
            if o.rear() - x < need {
                return None;
            }
        }
        if let Some(i) = scene.follower_at(lane, x, u64::MAX) {
            let o = &scene.vehicles[i];
            let need = rss::longitudinal_safe_distance(o.v, speed, &self.rss).ok()?;
            if x - length - o.x < need {
                return None;
            }
        }
        let kind = if self.rng.gen::<f64>() < cfg.cav_penetration {
            VehicleKind::Cav
        } else {
            VehicleKind::Chv
        };
        let routes = self.net.feasible_routes(route_entry);
        let route = routes[self.rng.gen_range(0..routes.len())];
        let v = Vehicle::new(0, kind, x, lane, speed, max_speed, route, &self.net);
        Some(self.insert_vehicle(v))
    }

    /// Rule-based action for `id`, as a hybrid action.
    pub fn chv_policy(&self, id: u64) -> Result<HybridAction> {
        let idx = self.index(id).ok_or(PalcasError::UnknownVehicle(id))?;
        let d = self.decide(idx);
        let v = &self.vehicles[idx];
        Ok(match d.lane_change {
            Some(t) if t > v.lane => HybridAction::new(ActionKind::LaneChangeLeft, 0.0),
            Some(_) => HybridAction::new(ActionKind::LaneChangeRight, 0.0),
            None => HybridAction::accelerate(d.accel),
        })
    }

    fn decide(&self, idx: usize) -> DriverDecision {
        let scene = self.scene();
        let driver = Driver {
            scene: &scene,
            idm: &self.params.idm,
            mobil: &self.params.mobil,
            rss: &self.rss,
            time: self.time(),
        };
        driver.decide(idx)
    }

    /// Drives every vehicle whose id is not in `controlled` (ascending ids)
    /// with the rule-based model.
    pub fn drive_background(&mut self, controlled: &[u64]) {
        let decisions: Vec<(usize, DriverDecision)> = {
            let scene = self.scene();
            let driver = Driver {
                scene: &scene,
                idm: &self.params.idm,
                mobil: &self.params.mobil,
                rss: &self.rss,
                time: self.time(),
            };
            (0..self.vehicles.len())
                .filter(|&i| controlled.binary_search(&self.vehicles[i].id).is_err())
                .map(|i| (i, driver.decide(i)))
                .collect()
        };
        for (i, d) in decisions {
            if let Some(target) = d.lane_change {
                self.start_maneuver(i, target);
            }
            self.vehicles[i].commanded_accel = clamp_accel(d.accel);
        }
    }

    fn start_maneuver(&mut self, idx: usize, target: u8) {
        let now = self.time();
        let v = &mut self.vehicles[idx];
        v.maneuver = Some(LaneChangeManeuver::new(v.lane, target, now, self.params.lane_change_duration));
        v.last_lane_change = now;
        let ev = Event::of(now, EventKind::LaneChangeStart, v, format!("to={target}"));
        self.events.push(ev);
    }

    pub fn apply_action(&mut self, id: u64, action: HybridAction) -> Result<ActionOutcome> {
        let idx = self.index(id).ok_or(PalcasError::UnknownVehicle(id))?;
        let v = &mut self.vehicles[idx];
        match action.kind {
            ActionKind::LaneChangeLeft | ActionKind::LaneChangeRight => {
                v.commanded_accel = 0.0;
                if v.maneuver.is_some() {
                    return Ok(ActionOutcome::RejectedBusy);
                }
                let target = if action.kind == ActionKind::LaneChangeLeft {
                    v.lane.checked_add(1)
                } else if v.lane > EXIT_LANE {
                    Some(v.lane - 1)
                } else {
                    None
                };
                match target.filter(|&t| self.net.is_mainline_lane(t)) {
                    Some(t) => {
                        self.start_maneuver(idx, t);
                        Ok(ActionOutcome::Accepted)
                    }
                    None => Ok(ActionOutcome::RejectedUnsafe),
                }
            }
            ActionKind::Accelerate => {
                v.commanded_accel = clamp_accel(action.accel());
                Ok(ActionOutcome::Accepted)
            }
            ActionKind::Hold => {
                v.commanded_accel = 0.0;
                Ok(ActionOutcome::Accepted)
            }
        }
    }

    /// Advances the world by one step.
    pub fn step(&mut self) -> StepReport {
        let dt = self.params.step_size;
        let now = (self.steps + 1) as f64 * dt;
        let mut report = StepReport::default();

        // longitudinal kinematics
        for v in &mut self.vehicles {
            let a = v.commanded_accel;
            let v0 = v.v;
            let (dx, v1) = if v0 + a * dt < 0.0 {
                let t_stop = if a < 0.0 { -v0 / a } else { 0.0 };
                (v0 * t_stop + 0.5 * a * t_stop * t_stop, 0.0)
            } else {
                (v0 * dt + 0.5 * a * dt * dt, v0 + a * dt)
            };
            let v1 = v1.min(v.max_speed);
            let x0 = v.x;
            v.x += dx.max(0.0);
            v.v = v1;
            v.a = (v1 - v0) / dt;
            if v.lane == ACCEL_LANE {
                if let Entry::Ramp(c) = v.route.entry {
                    if let Some(z) = self.net.cluster(c) {
                        let end = z.on_ramp.accel_lane_end();
                        // a merge aborted past the end leaves the vehicle
                        // beyond it; it stops there rather than moving back
                        if v.x > end {
                            v.x = end.max(x0);
                            v.v = 0.0;
                            v.a = -v0 / dt;
                        }
                    }
                }
            }
        }

        self.advance_maneuvers(now, &mut report);
        self.detect_collisions(now, &mut report);
        self.resolve_exits(now, &mut report);
        self.track_deadlocks(now);
        self.steps += 1;
        report
    }

    fn advance_maneuvers(&mut self, now: f64, report: &mut StepReport) {
        let dt = self.params.step_size;
        let safe: Vec<bool> = {
            let scene = self.scene();
            self.vehicles
                .iter()
                .enumerate()
                .map(|(i, v)| match v.maneuver {
                    Some(m) => driver::gap_safe(&scene, i, m.target_lane, &self.rss),
                    None => false,
                })
                .collect()
        };
        let net = Arc::clone(&self.net);
        for (i, v) in self.vehicles.iter_mut().enumerate() {
            let Some(mut m) = v.maneuver else { continue };
            if safe[i] {
                m.progress = (m.progress + dt / m.duration).min(1.0);
            }
            if m.committed() && v.lane == m.origin_lane {
                v.lane = m.target_lane;
            }
            if m.progress >= 1.0 - 1e-9 {
                v.maneuver = None;
                v.lane = m.target_lane;
                v.lat = net.lane_center(v.lane);
                if m.origin_lane == ACCEL_LANE {
                    v.on_accel_lane = false;
                    v.stalled_since = None;
                    self.events.push(Event::of(now, EventKind::Merge, v, ""));
                }
            } else if now - m.start_time >= m.duration - 1e-9 {
                v.maneuver = None;
                v.lane = m.origin_lane;
                v.lat = net.lane_center(v.lane);
                report.aborted_maneuvers.push(v.id);
                let ev = Event::of(now, EventKind::LaneChangeAbort, v, format!("to={}", m.target_lane));
                self.events.push(ev);
            } else {
                v.lat = m.lateral_position(&net);
                v.maneuver = Some(m);
            }
        }
    }

    fn detect_collisions(&mut self, now: f64, report: &mut StepReport) {
        let n = self.vehicles.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (va, vb) = (&self.vehicles[a], &self.vehicles[b]);
            va.rear().total_cmp(&vb.rear()).then(va.id.cmp(&vb.id))
        });
        let mut hit = vec![None::<u64>; n];
        for (k, &i) in order.iter().enumerate() {
            let a = &self.vehicles[i];
            for &j in &order[k + 1..] {
                let b = &self.vehicles[j];
                if b.rear() >= a.x {
                    break;
                }
                if (a.lat - b.lat).abs() < 0.5 * (a.width + b.width) {
                    hit[i].get_or_insert(b.id);
                    hit[j].get_or_insert(a.id);
                }
            }
        }
        if hit.iter().all(Option::is_none) {
            return;
        }
        let mut keep = Vec::with_capacity(n);
        for (v, other) in std::mem::take(&mut self.vehicles).into_iter().zip(hit) {
            match other {
                Some(o) => {
                    self.events.push(Event::of(now, EventKind::Collision, &v, format!("with={o}")));
                    report.collisions.push(v.id);
                    report.removed.push(v);
                }
                None => keep.push(v),
            }
        }
        self.vehicles = keep;
    }

    fn resolve_exits(&mut self, now: f64, report: &mut StepReport) {
        let net = Arc::clone(&self.net);
        let mut keep = Vec::with_capacity(self.vehicles.len());
        for mut v in std::mem::take(&mut self.vehicles) {
            if v.route.is_exiting() && !v.missed_exit && v.x >= net.exit_position(v.route.exit) {
                if v.lane == EXIT_LANE {
                    self.events.push(Event::of(now, EventKind::Arrival, &v, "exit"));
                    report.arrivals.push(v.id);
                    report.removed.push(v);
                    continue;
                }
                v.missed_exit = true;
                self.events.push(Event::of(now, EventKind::MissedExit, &v, ""));
                report.missed_exits.push(v.id);
            }
            if v.x >= net.mainline_length() {
                self.events.push(Event::of(now, EventKind::Arrival, &v, "end"));
                report.arrivals.push(v.id);
                report.removed.push(v);
                continue;
            }
            keep.push(v);
        }
        self.vehicles = keep;
    }

    fn track_deadlocks(&mut self, now: f64) {
        let p = self.params;
        for v in &mut self.vehicles {
            if !v.on_accel_lane {
                continue;
            }
            let Entry::Ramp(c) = v.route.entry else { continue };
            let Some(z) = self.net.cluster(c) else { continue };
            let near_end = v.x >= z.on_ramp.accel_lane_end() - p.deadlock_window;
            if near_end && v.v < p.deadlock_speed {
                let since = *v.stalled_since.get_or_insert(now);
                if !v.deadlocked && now - since > p.deadlock_time + 1e-9 {
                    v.deadlocked = true;
                    self.events.push(Event::of(now, EventKind::Deadlock, v, ""));
                }
            } else {
                v.stalled_since = None;
            }
        }
    }

    /// Logs every remaining vehicle as unresolved; call once when an
    /// episode ends.
    pub fn finish_episode(&mut self) {
        let now = self.time();
        for v in &self.vehicles {
            self.events.push(Event::of(now, EventKind::Unresolved, v, ""));
        }
    }

    /// Upper bound on one step's longitudinal displacement for `v`.
    pub fn max_displacement(&self, v: &Vehicle) -> f64 {
        let dt = self.params.step_size;
        v.max_speed * dt + 0.5 * ACCEL_MAX * dt * dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::{Exit, RoadLayout, Route};

    fn world() -> World {
        let net = Arc::new(RoadNetwork::from_layout(&RoadLayout::default()).unwrap());
        World::new(net, SimParams::default(), RssParams::default(), 1)
    }

    fn through() -> Route {
        Route::new(Entry::Mainline, Exit::HighwayEnd)
    }

    fn add(w: &mut World, kind: VehicleKind, x: f64, lane: u8, v: f64, route: Route) -> u64 {
        let car = Vehicle::new(0, kind, x, lane, v, 33.528, route, w.network());
        w.insert_vehicle(car)
    }

    #[test]
    fn insertion_probabilities() {
        assert!((insertion_probability(3600.0, 0.1) - 0.1).abs() < 1e-15);
        assert!((insertion_probability(3200.0, 0.1) - 3200.0 * 0.1 / 3600.0).abs() < 1e-15);
    }

    #[test]
    fn full_penetration_spawns_only_cavs() {
        let mut w = world();
        let cfg = SpawnConfig { cav_penetration: 1.0, ..SpawnConfig::default() };
        let mut n = 0;
        for _ in 0..300 {
            n += w.spawn_step(&cfg).len();
            w.drive_background(&[]);
            w.step();
        }
        assert!(n > 0);
        assert!(w.events().iter().filter(|e| e.kind == EventKind::Spawn).all(|e| e.vehicle_kind == VehicleKind::Cav));
    }

    #[test]
    fn kinematics_and_clamp() {
        let mut w = world();
        let id = add(&mut w, VehicleKind::Cav, 500.0, 3, 30.0, through());
        w.apply_action(id, HybridAction::hold()).unwrap();
        w.step();
        assert!((w.vehicle(id).unwrap().x - 503.0).abs() < 1e-12);
        assert_eq!(HybridAction::accelerate(5.0).accel(), 2.6);
        w.apply_action(id, HybridAction::accelerate(5.0)).unwrap();
        assert_eq!(w.vehicle(id).unwrap().commanded_accel, 2.6);
    }

    #[test]
    fn lane_change_rules() {
        let mut w = world();
        let id = add(&mut w, VehicleKind::Cav, 500.0, 1, 30.0, through());
        let right = HybridAction::new(ActionKind::LaneChangeRight, 0.0);
        let left = HybridAction::new(ActionKind::LaneChangeLeft, 0.0);
        assert_eq!(w.apply_action(id, right).unwrap(), ActionOutcome::RejectedUnsafe);
        assert_eq!(w.apply_action(id, left).unwrap(), ActionOutcome::Accepted);
        assert_eq!(w.apply_action(id, left).unwrap(), ActionOutcome::RejectedBusy);
        let top = add(&mut w, VehicleKind::Cav, 800.0, 5, 30.0, through());
        assert_eq!(w.apply_action(top, left).unwrap(), ActionOutcome::RejectedUnsafe);
        assert!(matches!(w.apply_action(999, left), Err(PalcasError::UnknownVehicle(999))));
    }

    #[test]
    fn maneuver_commits_halfway_and_completes() {
        let mut w = world();
        let id = add(&mut w, VehicleKind::Cav, 500.0, 2, 30.0, through());
        w.apply_action(id, HybridAction::new(ActionKind::LaneChangeLeft, 0.0)).unwrap();
        for k in 1..=20 {
            w.apply_action(id, HybridAction::hold()).unwrap();
            w.step();
            let v = w.vehicle(id).unwrap();
            if k < 10 {
                assert_eq!(v.lane, 2, "step {k}");
            } else {
                assert_eq!(v.lane, 3, "step {k}");
            }
        }
        let v = w.vehicle(id).unwrap();
        assert!(v.maneuver.is_none());
        assert!((v.lat - w.network().lane_center(3)).abs() < 1e-12);
    }

    #[test]
    fn blocked_maneuver_aborts_at_deadline() {
        let mut w = world();
        let id = add(&mut w, VehicleKind::Cav, 500.0, 2, 30.0, through());
        // leader in the target lane, too close for RSS but laterally clear
        let blocker = add(&mut w, VehicleKind::Cav, 510.0, 3, 30.0, through());
        w.apply_action(id, HybridAction::new(ActionKind::LaneChangeLeft, 0.0)).unwrap();
        let mut aborted = false;
        for _ in 0..20 {
            w.apply_action(id, HybridAction::hold()).unwrap();
            w.apply_action(blocker, HybridAction::hold()).unwrap();
            let r = w.step();
            aborted |= r.aborted_maneuvers.contains(&id);
        }
        assert!(aborted);
        let v = w.vehicle(id).unwrap();
        assert_eq!(v.lane, 2);
        assert!(v.maneuver.is_none());
    }

    #[test]
    fn rear_end_collision_removes_both() {
        let mut w = world();
        let a = add(&mut w, VehicleKind::Chv, 500.0, 2, 30.0, through());
        let b = add(&mut w, VehicleKind::Chv, 504.0, 2, 0.0, through());
        w.apply_action(a, HybridAction::hold()).unwrap();
        w.apply_action(b, HybridAction::hold()).unwrap();
        let r = w.step();
        assert_eq!(r.collisions.len(), 2);
        assert!(w.vehicle(a).is_none() && w.vehicle(b).is_none());
        assert_eq!(w.events().iter().filter(|e| e.kind == EventKind::Collision).count(), 2);
    }

    #[test]
    fn missed_exit_continues_downstream() {
        let mut w = world();
        let route = Route::new(Entry::Mainline, Exit::OffRamp(2));
        let id = add(&mut w, VehicleKind::Cav, 1499.0, 3, 30.0, route);
        w.apply_action(id, HybridAction::hold()).unwrap();
        let r = w.step();
        assert_eq!(r.missed_exits, vec![id]);
        assert!(w.vehicle(id).unwrap().missed_exit);
        let in_lane_one = add(&mut w, VehicleKind::Cav, 1499.0, 1, 30.0, route);
        w.apply_action(id, HybridAction::hold()).unwrap();
        w.apply_action(in_lane_one, HybridAction::hold()).unwrap();
        let r = w.step();
        assert_eq!(r.arrivals, vec![in_lane_one]);
    }

    #[test]
    fn chv_free_road_keeps_lane() {
        let mut w = world();
        let id = add(&mut w, VehicleKind::Chv, 300.0, 3, 33.528, through());
        let a = w.chv_policy(id).unwrap();
        assert_eq!(a.kind, ActionKind::Accelerate);
        assert!(a.accel().abs() < 1e-9);
    }

    #[test]
    fn ramp_vehicle_waits_at_lane_end() {
        let mut w = world();
        let z = w.network().cluster(1).unwrap().clone();
        let route = Route::new(Entry::Ramp(1), Exit::HighwayEnd);
        let end = z.on_ramp.accel_lane_end();
        let id = add(&mut w, VehicleKind::Cav, end - 1.0, ACCEL_LANE, 10.0, route);
        for _ in 0..200 {
            w.apply_action(id, HybridAction::hold()).unwrap();
            w.step();
        }
        let v = w.vehicle(id).unwrap();
        assert_eq!(v.x, end);
        assert!(v.deadlocked);
    }
}
