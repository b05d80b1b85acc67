//! Rule-based driver for human-driven vehicles: Intelligent Driver Model
//! car following plus MOBIL lane changes with a mandatory exit bias.

use serde::{Deserialize, Serialize};

use crate::road::{Entry, EXIT_LANE};
use crate::rss::{self, RssParams};
use crate::scene::Scene;
use crate::vehicle::Vehicle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    pub max_accel: f64,
    pub comfortable_decel: f64,
    /// Desired time gap, s.
    pub time_gap: f64,
    /// Jam distance, m.
    pub min_gap: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { max_accel: 2.6, comfortable_decel: 4.5, time_gap: 1.0, min_gap: 2.0, exponent: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilParams {
    pub politeness: f64,
    /// Minimum advantage for a discretionary change, m/s².
    pub threshold: f64,
    /// Largest deceleration the change may impose on the new follower.
    pub safe_decel: f64,
    /// Exiting vehicles closer than this to their exit only move right.
    pub mandatory_distance: f64,
    /// Minimum time between two lane changes of one vehicle, s.
    pub cooldown: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self { politeness: 0.3, threshold: 0.2, safe_decel: 4.0, mandatory_distance: 500.0, cooldown: 4.0 }
    }
}

/// IDM acceleration for a vehicle at speed `v` with desired speed `v0`,
/// following a leader `gap` meters ahead (bumper to bumper) at `v_lead`.
pub fn idm_accel(p: &IdmParams, v: f64, v0: f64, leader: Option<(f64, f64)>) -> f64 {
    let free = 1.0 - (v / v0.max(1e-6)).powf(p.exponent);
    let interaction = match leader {
        Some((gap, v_lead)) => {
            let desired = p.min_gap
                + (v * p.time_gap + v * (v - v_lead) / (2.0 * (p.max_accel * p.comfortable_decel).sqrt()))
                    .max(0.0);
            let g = gap.max(0.01);
            (desired / g).powi(2)
        }
        None => 0.0,
    };
    p.max_accel * (free - interaction)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverDecision {
    /// Target lane of a lane change to start this tick.
    pub lane_change: Option<u8>,
    pub accel: f64,
}

pub(crate) struct Driver<'a> {
    pub scene: &'a Scene<'a>,
    pub idm: &'a IdmParams,
    pub mobil: &'a MobilParams,
    pub rss: &'a RssParams,
    pub time: f64,
}

impl Driver<'_> {
    fn leader_of(&self, v: &Vehicle, lane: u8, x: f64) -> Option<(f64, f64)> {
        let mut best = self
            .scene
            .leader_at(lane, x, v.id)
            .map(|i| {
                let o = &self.scene.vehicles[i];
                (o.rear() - x, o.v)
            });
        // acceleration lanes end in a wall
        if lane == 0 {
            if let Entry::Ramp(c) = v.route.entry {
                if let Some(z) = self.scene.net.cluster(c) {
                    let wall = (z.on_ramp.accel_lane_end() - x, 0.0);
                    if best.map_or(true, |b| wall.0 < b.0) {
                        best = Some(wall);
                    }
                }
            }
        }
        best
    }

    /// Longitudinal acceleration for `v` driving in `lane`.
    fn accel_in(&self, v: &Vehicle, lane: u8) -> f64 {
        idm_accel(self.idm, v.v, v.max_speed, self.leader_of(v, lane, v.x))
    }

    /// Acceleration of vehicle `follower` if its leader were `leader`.
    fn accel_behind(&self, follower: &Vehicle, leader: Option<&Vehicle>) -> f64 {
        idm_accel(
            self.idm,
            follower.v,
            follower.max_speed,
            leader.map(|l| (l.rear() - follower.x, l.v)),
        )
    }

    pub fn current_accel(&self, idx: usize) -> f64 {
        let v = &self.scene.vehicles[idx];
        let mut a = self.accel_in(v, v.lane);
        if let Some(m) = v.maneuver {
            let other = if m.target_lane == v.lane { m.origin_lane } else { m.target_lane };
            a = a.min(self.accel_in(v, other));
        }
        a
    }

    /// RSS gap check toward `target` lane for vehicle `idx`.
    pub fn target_gap_safe(&self, idx: usize, target: u8) -> bool {
        gap_safe(self.scene, idx, target, self.rss)
    }

    pub fn decide(&self, idx: usize) -> DriverDecision {
        let accel = self.current_accel(idx);
        let v = &self.scene.vehicles[idx];
        if v.maneuver.is_some() || self.time - v.last_lane_change < self.mobil.cooldown {
            return DriverDecision { lane_change: None, accel };
        }
        let net = self.scene.net;

        if v.lane == 0 {
            let merge = self.target_gap_safe(idx, 1) && self.incentive(idx, 1).is_some();
            return DriverDecision { lane_change: merge.then_some(1), accel };
        }

        let mandatory_exit = v.route.is_exiting()
            && !v.missed_exit
            && net.distance_to_exit(v) < self.mobil.mandatory_distance;
        let mut best: Option<(u8, f64)> = None;
        let mut consider = |target: u8, bias: f64| {
            if !net.is_mainline_lane(target) || !self.target_gap_safe(idx, target) {
                return;
            }
            if let Some(gain) = self.incentive(idx, target) {
                let score = gain + bias;
                if score > self.mobil.threshold && best.map_or(true, |b| score > b.1) {
                    best = Some((target, score));
                }
            }
        };
        if mandatory_exit {
            if v.lane > EXIT_LANE {
                consider(v.lane - 1, f64::INFINITY);
            }
        } else {
            consider(v.lane + 1, 0.0);
            if v.lane > EXIT_LANE {
                consider(v.lane - 1, 0.0);
            }
        }
        DriverDecision { lane_change: best.map(|b| b.0), accel }
    }

    /// MOBIL advantage of moving to `target`, or `None` when the change
    /// would force the new follower to brake harder than allowed.
    fn incentive(&self, idx: usize, target: u8) -> Option<f64> {
        let s = self.scene;
        let v = &s.vehicles[idx];
        let new_leader = s.leader_at(target, v.x, v.id).map(|i| &s.vehicles[i]);
        let new_follower = s.follower_at(target, v.x, v.id).map(|i| &s.vehicles[i]);
        let old_leader = s.leader(idx, v.lane).map(|i| &s.vehicles[i]);
        let old_follower = s.follower(idx, v.lane).map(|i| &s.vehicles[i]);

        let mut nf_gain = 0.0;
        if let Some(nf) = new_follower {
            let after = self.accel_behind(nf, Some(v));
            if after < -self.mobil.safe_decel {
                return None;
            }
            nf_gain = after - self.accel_behind(nf, new_leader);
        }
        let of_gain = old_follower.map_or(0.0, |of| {
            self.accel_behind(of, old_leader) - self.accel_behind(of, Some(v))
        });
        let own = idm_accel(
            self.idm,
            v.v,
            v.max_speed,
            self.leader_of(v, target, v.x),
        ) - self.accel_in(v, v.lane);
        Some(own + self.mobil.politeness * (nf_gain + of_gain))
    }
}

/// Whether vehicle `idx` keeps RSS-safe gaps to the leader and follower in
/// `target` if it were there now.
pub(crate) fn gap_safe(scene: &Scene, idx: usize, target: u8, p: &RssParams) -> bool {
    let v = &scene.vehicles[idx];
    if let Some(i) = scene.leader_at(target, v.x, v.id) {
        let o = &scene.vehicles[i];
        let need = rss::longitudinal_safe_distance(v.v, o.v, p).unwrap_or(f64::INFINITY);
        if o.rear() - v.x < need {
            return false;
        }
    }
    if let Some(i) = scene.follower_at(target, v.x, v.id) {
        let o = &scene.vehicles[i];
        let need = rss::longitudinal_safe_distance(o.v, v.v, p).unwrap_or(f64::INFINITY);
        if v.rear() - o.x < need {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idm_free_road_equilibrium() {
        let p = IdmParams::default();
        assert!(idm_accel(&p, 30.0, 30.0, None).abs() < 1e-12);
        assert!((idm_accel(&p, 0.0, 30.0, None) - 2.6).abs() < 1e-12);
    }

    #[test]
    fn idm_brakes_hard_behind_stopped_leader() {
        let p = IdmParams::default();
        // s* = 2 + 20*1 + 20*20/(2*sqrt(2.6*4.5)) ; a = 2.6*(1 - (20/30)^4 - (s*/2)^2)
        let s_star = 2.0 + 20.0 + 400.0 / (2.0 * (2.6f64 * 4.5).sqrt());
        let expected = 2.6 * (1.0 - (20.0f64 / 30.0).powi(4) - (s_star / 2.0).powi(2));
        let a = idm_accel(&p, 20.0, 30.0, Some((2.0, 0.0)));
        assert!((a - expected).abs() < 1e-9);
        assert!(a <= -4.0);
    }
}
