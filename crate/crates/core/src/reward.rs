//! Multi-objective per-vehicle reward: efficiency, RSS safety, comfort,
//! priority-guided lane change and deadlock penalty.
//!
//! The scalar functions take plain value inputs. [`vehicle_reward`] gathers
//! those inputs from a [`Scene`] and assembles a [`RewardBreakdown`].

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::road::{EXIT_LANE};
use crate::rss::{self, sigmoid, RssParams};
use crate::scene::Scene;

/// Neighbors further than this are ignored by the safety term.
pub const SENSING_RANGE: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    /// Weight of the efficiency component.
    pub efficiency: f64,
    /// Weight of the safety component.
    pub safety: f64,
    /// Weight of the comfort component.
    pub comfort: f64,
    /// Weight of the priority-guided lane-change component.
    pub lane_change: f64,
    /// Weight of the deadlock penalty.
    pub deadlock: f64,
    /// Share of the cluster-level speed term inside the efficiency reward.
    pub efficiency_cluster_share: f64,
    /// Share of the ego speed term inside the efficiency reward.
    pub efficiency_ego_share: f64,
    /// Comfortable acceleration magnitude, m/s².
    pub comfort_threshold: f64,
    /// Acceleration bounds entering the comfort normalizer, m/s².
    pub accel_min: f64,
    pub accel_max: f64,
    /// Nominal duration of one free-flow lane change, s.
    pub lane_change_time: f64,
    /// Near-exit distance and speed thresholds of the urgency term.
    pub near_exit_distance: f64,
    pub near_exit_speed: f64,
    /// Deadlock penalty width scale.
    pub deadlock_scale: f64,
    /// Guard against division by zero in the timing terms.
    pub epsilon: f64,
    /// Distance normalizer of the exit-proximity sigmoids, m.
    pub proximity_scale: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            efficiency: 0.05,
            safety: 0.5,
            comfort: 0.05,
            lane_change: 0.4,
            deadlock: 0.1,
            efficiency_cluster_share: 0.5,
            efficiency_ego_share: 0.5,
            comfort_threshold: 1.47,
            accel_min: -4.5,
            accel_max: 2.6,
            lane_change_time: 2.0,
            near_exit_distance: 50.0,
            near_exit_speed: 5.0,
            deadlock_scale: 10.0,
            epsilon: 1e-6,
            proximity_scale: 1000.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            self.efficiency,
            self.safety,
            self.comfort,
            self.lane_change,
            self.deadlock,
            self.efficiency_cluster_share,
            self.efficiency_ego_share,
        ];
        if non_negative.iter().any(|w| !(*w >= 0.0)) {
            return contract("reward weights must be non-negative");
        }
        if !(self.epsilon > 0.0) || !(self.deadlock_scale > 0.0) || !(self.proximity_scale > 0.0) {
            return contract("epsilon, deadlock_scale and proximity_scale must be positive");
        }
        if (self.accel_min.abs() - self.accel_max) == 0.0 {
            return contract("comfort normalizer |accel_min| - accel_max must be non-zero");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyInputs {
    pub v_ego: f64,
    pub v_max_ego: f64,
    pub v_min_ego: f64,
    pub cluster_mean: f64,
    pub cluster_max: f64,
    pub cluster_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EfficiencyTerms {
    pub ego: f64,
    pub cluster: f64,
    pub total: f64,
}

pub fn efficiency_reward(i: &EfficiencyInputs, w: &RewardWeights) -> Result<EfficiencyTerms> {
    if !(i.v_max_ego > i.v_min_ego) || !(i.cluster_max > i.cluster_min) {
        return contract("efficiency speed ranges must be non-degenerate");
    }
    let ego = -(i.v_ego - i.v_max_ego).abs() / (i.v_max_ego - i.v_min_ego);
    let cluster = -(i.cluster_mean - i.cluster_max).abs() / (i.cluster_max - i.cluster_min);
    Ok(EfficiencyTerms {
        ego,
        cluster,
        total: w.efficiency_cluster_share * cluster + w.efficiency_ego_share * ego,
    })
}

/// A rear/front pair in the ego's lane. `gap` is bumper to bumper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongitudinalPair {
    pub gap: f64,
    pub v_rear: f64,
    pub v_front: f64,
}

/// An adjacent vehicle. Lateral speeds are signed toward the other vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralPair {
    pub gap: f64,
    pub v_ego_lat: f64,
    pub v_other_lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SafetyInputs {
    pub lead: Option<LongitudinalPair>,
    pub follow: Option<LongitudinalPair>,
    pub lateral: [Option<LateralPair>; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SafetyTerms {
    pub longitudinal: f64,
    pub lateral: f64,
    pub total: f64,
}

/// Relative shortfall of `gap` below `safe`, capped at zero. A zero safe
/// distance is satisfied by any non-negative gap; overlap then scores -1.
fn shortfall(gap: f64, safe: f64) -> f64 {
    if safe == 0.0 {
        return if gap >= 0.0 { 0.0 } else { -1.0 };
    }
    ((gap - safe) / safe).min(0.0)
}

pub fn safety_reward(i: &SafetyInputs, p: &RssParams) -> Result<SafetyTerms> {
    let mut longitudinal = 0.0;
    for pair in [i.lead, i.follow].into_iter().flatten() {
        let safe = rss::longitudinal_safe_distance(pair.v_rear, pair.v_front, p)?;
        longitudinal += shortfall(pair.gap, safe);
    }
    let mut lateral = 0.0;
    for pair in i.lateral.iter().flatten() {
        let safe = rss::lateral_safe_distance(pair.v_ego_lat, pair.v_other_lat, p);
        lateral += shortfall(pair.gap, safe);
    }
    Ok(SafetyTerms { longitudinal, lateral, total: longitudinal + lateral })
}

pub fn comfort_reward(accel: f64, w: &RewardWeights) -> f64 {
    (w.comfort_threshold - accel.abs()) / (w.accel_min.abs() - w.accel_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityInputs {
    /// Remaining distance to the exit point, m.
    pub distance_to_exit: f64,
    pub v_ego: f64,
    /// Lane changes still needed to reach the exit lane.
    pub remaining_lanes: u8,
    pub lane_count: u8,
    /// Smaller projected ttc toward the next lane in the exit direction.
    pub min_projected_ttc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PriorityTerms {
    pub feasibility: f64,
    pub urgency: f64,
    pub scaling: f64,
    pub staging: f64,
    pub total: f64,
}

pub fn priority_lane_change_reward(
    i: &PriorityInputs,
    p: &RssParams,
    w: &RewardWeights,
) -> PriorityTerms {
    let feasibility = rss::feasibility(i.min_projected_ttc, p);
    let n = i.remaining_lanes as f64;
    let urgency = if i.distance_to_exit < w.near_exit_distance && i.v_ego < w.near_exit_speed {
        -feasibility
    } else {
        let time_needed = n * w.lane_change_time / (feasibility + w.epsilon);
        let time_to_exit = i.distance_to_exit / (i.v_ego + w.epsilon);
        -1.0 / (1.0 + (time_to_exit - time_needed).exp())
    };
    // A single-lane road has no lane changes to make.
    let lane_factor = if i.lane_count > 1 { n / (i.lane_count - 1) as f64 } else { 0.0 };
    let proximity = sigmoid(i.distance_to_exit / w.proximity_scale);
    let scaling = 2.0 * (1.0 - proximity) * lane_factor;
    let staging = -2.0 * (proximity - 0.5) * (1.0 - lane_factor);
    PriorityTerms { feasibility, urgency, scaling, staging, total: urgency * scaling + staging }
}

/// Penalty for lingering on an acceleration lane; `x` is the distance
/// travelled along it.
pub fn deadlock_penalty(x: f64, accel_lane_length: f64, on_accel_lane: bool, w: &RewardWeights) -> f64 {
    if !on_accel_lane {
        return 0.0;
    }
    let d = x - accel_lane_length;
    -(-(d * d) / (w.deadlock_scale * accel_lane_length)).exp()
}

/// Every component of one vehicle's reward at one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub efficiency: EfficiencyTerms,
    pub safety: SafetyTerms,
    pub comfort: f64,
    pub priority: PriorityTerms,
    pub deadlock: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn assemble(
        efficiency: EfficiencyTerms,
        safety: SafetyTerms,
        comfort: f64,
        priority: PriorityTerms,
        deadlock: f64,
        w: &RewardWeights,
    ) -> Self {
        let total = w.efficiency * efficiency.total
            + w.safety * safety.total
            + w.comfort * comfort
            + w.lane_change * priority.total
            + w.deadlock * deadlock;
        Self { efficiency, safety, comfort, priority, deadlock, total }
    }

    /// Weighted contributions in component order
    /// (efficiency, safety, comfort, lane change, deadlock).
    pub fn contributions(&self, w: &RewardWeights) -> [f64; 5] {
        [
            w.efficiency * self.efficiency.total,
            w.safety * self.safety.total,
            w.comfort * self.comfort,
            w.lane_change * self.priority.total,
            w.deadlock * self.deadlock,
        ]
    }
}

/// An RSU's reward: the sum over the CAVs it controls.
pub fn agent_reward(breakdowns: &[RewardBreakdown]) -> f64 {
    breakdowns.iter().map(|b| b.total).sum()
}

/// Gathers the safety inputs for vehicle `ego` from the scene.
///
/// Same-lane leader and follower feed the longitudinal term. The nearest
/// leader and follower in each adjacent lane feed the lateral term, but only
/// while they are longitudinally unsafe with respect to the ego, since a
/// lateral conflict cannot materialize without longitudinal overlap risk.
pub fn safety_inputs(scene: &Scene, ego: usize, p: &RssParams) -> Result<SafetyInputs> {
    let e = &scene.vehicles[ego];
    let in_range = |i: usize| (scene.vehicles[i].x - e.x).abs() <= SENSING_RANGE;
    let lead = scene.leader(ego, e.lane).filter(|&i| in_range(i)).map(|i| {
        let o = &scene.vehicles[i];
        LongitudinalPair { gap: o.rear() - e.x, v_rear: e.v, v_front: o.v }
    });
    let follow = scene.follower(ego, e.lane).filter(|&i| in_range(i)).map(|i| {
        let o = &scene.vehicles[i];
        LongitudinalPair { gap: e.rear() - o.x, v_rear: o.v, v_front: e.v }
    });

    let mut lateral = [None; 4];
    let mut slot = 0;
    let ego_vlat = e.lateral_speed(scene.net);
    let adjacent = [e.lane.checked_add(1), e.lane.checked_sub(1)];
    for lane in adjacent.into_iter().flatten() {
        if lane > scene.net.lane_count() {
            continue;
        }
        for (idx, ahead) in [(scene.leader(ego, lane), true), (scene.follower(ego, lane), false)] {
            let Some(i) = idx else { continue };
            let o = &scene.vehicles[i];
            let (gap_long, safe_long) = if ahead {
                (o.rear() - e.x, rss::longitudinal_safe_distance(e.v, o.v, p)?)
            } else {
                (e.rear() - o.x, rss::longitudinal_safe_distance(o.v, e.v, p)?)
            };
            if gap_long >= safe_long {
                slot += 1;
                continue;
            }
            let toward = (o.lat - e.lat).signum();
            lateral[slot] = Some(LateralPair {
                gap: (o.lat - e.lat).abs() - 0.5 * (o.width + e.width),
                v_ego_lat: ego_vlat * toward,
                v_other_lat: -o.lateral_speed(scene.net) * toward,
            });
            slot += 1;
        }
    }
    Ok(SafetyInputs { lead, follow, lateral })
}

/// Gathers the priority-reward inputs for a mainline vehicle. Returns `None`
/// on an acceleration lane, where the deadlock penalty applies instead.
pub fn priority_inputs(scene: &Scene, ego: usize) -> Option<PriorityInputs> {
    let e = &scene.vehicles[ego];
    if !scene.net.is_mainline_lane(e.lane) {
        return None;
    }
    let remaining = scene.net.remaining_lane_count(e);
    let mut min_ttc = f64::INFINITY;
    if remaining > 0 {
        let target = if e.lane > EXIT_LANE { e.lane - 1 } else { e.lane + 1 };
        if let Some(i) = scene.leader(ego, target) {
            let o = &scene.vehicles[i];
            min_ttc = min_ttc.min(rss::projected_ttc_lead(e.v, o.v, o.x - e.x, o.length));
        }
        if let Some(i) = scene.follower(ego, target) {
            let o = &scene.vehicles[i];
            min_ttc = min_ttc.min(rss::projected_ttc_follow(o.v, e.v, e.x - o.x, e.length));
        }
    }
    Some(PriorityInputs {
        distance_to_exit: scene.net.distance_to_exit(e),
        v_ego: e.v,
        remaining_lanes: remaining,
        lane_count: scene.net.lane_count(),
        min_projected_ttc: min_ttc,
    })
}

/// Full reward breakdown for vehicle `ego`, given the mean speed of the
/// cluster it belongs to.
pub fn vehicle_reward(
    scene: &Scene,
    ego: usize,
    cluster_mean_speed: f64,
    w: &RewardWeights,
    p: &RssParams,
) -> Result<RewardBreakdown> {
    let e = &scene.vehicles[ego];
    let v_lim = scene.net.speed_limit();
    let efficiency = efficiency_reward(
        &EfficiencyInputs {
            v_ego: e.v,
            v_max_ego: v_lim,
            v_min_ego: 0.0,
            cluster_mean: cluster_mean_speed,
            cluster_max: v_lim,
            cluster_min: 0.0,
        },
        w,
    )?;
    let safety = safety_reward(&safety_inputs(scene, ego, p)?, p)?;
    let comfort = comfort_reward(e.a, w);
    let priority = priority_inputs(scene, ego)
        .map(|i| priority_lane_change_reward(&i, p, w))
        .unwrap_or_default();
    let deadlock = match e.route.entry {
        crate::road::Entry::Ramp(c) if e.on_accel_lane => {
            let ramp = scene.net.cluster(c).map(|z| z.on_ramp);
            ramp.map_or(0.0, |r| {
                deadlock_penalty(e.x - r.junction_position, r.accel_lane_length, true, w)
            })
        }
        _ => 0.0,
    };
    Ok(RewardBreakdown::assemble(efficiency, safety, comfort, priority, deadlock, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> RewardWeights {
        RewardWeights::default()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn eff(v_ego: f64, cluster: f64) -> EfficiencyTerms {
        efficiency_reward(
            &EfficiencyInputs {
                v_ego,
                v_max_ego: 33.528,
                v_min_ego: 0.0,
                cluster_mean: cluster,
                cluster_max: 33.528,
                cluster_min: 0.0,
            },
            &w(),
        )
        .unwrap()
    }

    #[test]
    fn efficiency_cases() {
        assert_eq!(eff(33.528, 33.528).total, 0.0);
        assert_eq!(eff(0.0, 33.528).total, -0.5);
        assert!(close(eff(20.0, 33.528).total, -0.2017418277260797, 1e-12));
        let degenerate = EfficiencyInputs {
            v_ego: 1.0,
            v_max_ego: 5.0,
            v_min_ego: 5.0,
            cluster_mean: 1.0,
            cluster_max: 2.0,
            cluster_min: 0.0,
        };
        assert!(efficiency_reward(&degenerate, &w()).is_err());
    }

    #[test]
    fn safety_cases() {
        let p = RssParams::default();
        let safe_lead = rss::longitudinal_safe_distance(30.0, 30.0, &p).unwrap();
        let all_safe = SafetyInputs {
            lead: Some(LongitudinalPair { gap: safe_lead + 1.0, v_rear: 30.0, v_front: 30.0 }),
            follow: Some(LongitudinalPair { gap: 500.0, v_rear: 30.0, v_front: 30.0 }),
            lateral: [Some(LateralPair { gap: 1.4, v_ego_lat: 0.0, v_other_lat: 0.0 }), None, None, None],
        };
        assert_eq!(safety_reward(&all_safe, &p).unwrap().total, 0.0);

        let half = SafetyInputs {
            lead: Some(LongitudinalPair { gap: 0.5 * safe_lead, v_rear: 30.0, v_front: 30.0 }),
            ..all_safe
        };
        assert!(close(safety_reward(&half, &p).unwrap().total, -0.5, 1e-12));

        // zero required distance with a non-negative gap is satisfied
        let trivially = SafetyInputs {
            lead: Some(LongitudinalPair { gap: 0.0, v_rear: 0.0, v_front: 30.0 }),
            ..Default::default()
        };
        assert_eq!(safety_reward(&trivially, &p).unwrap().total, 0.0);
        assert_eq!(safety_reward(&SafetyInputs::default(), &p).unwrap().total, 0.0);
    }

    #[test]
    fn comfort_cases() {
        assert_eq!(comfort_reward(1.47, &w()), 0.0);
        assert_eq!(comfort_reward(-1.47, &w()), 0.0);
        assert!(close(comfort_reward(2.6, &w()), -0.5947368421052632, 1e-12));
        assert!(close(comfort_reward(0.0, &w()), 0.7736842105263159, 1e-12));
    }

    fn prio(d: f64, v: f64, n: u8, ttc: f64) -> PriorityTerms {
        priority_lane_change_reward(
            &PriorityInputs {
                distance_to_exit: d,
                v_ego: v,
                remaining_lanes: n,
                lane_count: 5,
                min_projected_ttc: ttc,
            },
            &RssParams::default(),
            &w(),
        )
    }

    #[test]
    fn priority_cases() {
        let t = prio(0.0, 30.0, 4, f64::INFINITY);
        assert_eq!(t.scaling, 1.0);
        assert_eq!(t.staging, 0.0);

        let t = prio(2000.0, 30.0, 0, f64::INFINITY);
        assert!(close(t.staging, -0.7615941559557646, 1e-12));
        assert_eq!(t.urgency * t.scaling, 0.0);

        // near-exit slow branch: urgency is the negated feasibility
        let p = RssParams::default();
        // feasibility 0.8 <=> ttc = ttc* + sigma * logit(0.8)
        let ttc = p.ttc_threshold + p.sigma_ttc * (0.8f64 / 0.2).ln();
        let t = prio(40.0, 3.0, 2, ttc);
        assert!(close(t.feasibility, 0.8, 1e-12));
        assert!(close(t.urgency, -0.8, 1e-12));
    }

    #[test]
    fn urgency_half_when_times_match() {
        // one lane left, fully feasible: time needed = 2 / (1 + eps)
        let eps = w().epsilon;
        let need = 2.0 / (1.0 + eps);
        let v = 20.0;
        let d = need * (v + eps);
        let t = prio(d + 0.0, v, 1, f64::INFINITY);
        assert!(close(t.urgency, -0.5, 1e-9));
    }

    #[test]
    fn deadlock_cases() {
        assert_eq!(deadlock_penalty(200.0, 200.0, true, &w()), -1.0);
        assert_eq!(deadlock_penalty(10.0, 200.0, false, &w()), 0.0);
        assert!(close(deadlock_penalty(0.0, 200.0, true, &w()), -2.061153622438558e-9, 1e-20));
    }

    #[test]
    fn agent_reward_sums() {
        assert_eq!(agent_reward(&[]), 0.0);
        let mut a = RewardBreakdown::default();
        let mut b = RewardBreakdown::default();
        assert_eq!(agent_reward(&[a]), 0.0);
        a.total = -0.3;
        b.total = 0.1;
        assert!(close(agent_reward(&[a, b]), -0.2, 1e-15));
    }
}
