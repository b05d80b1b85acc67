//! Responsibility-sensitive safety distances and projected time-to-collision.
//!
//! All functions are pure. Lateral speeds use a signed convention: positive
//! means moving toward the other vehicle.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RssParams {
    /// Response time, s.
    pub reaction_time: f64,
    /// Worst-case acceleration during the response time, m/s².
    pub a_max: f64,
    /// Minimum braking the rear vehicle is guaranteed to apply, m/s².
    pub a_b_min: f64,
    /// Maximum braking the front vehicle may apply, m/s².
    pub a_b_max: f64,
    /// Lateral clearance buffer, m.
    pub lateral_clearance: f64,
    /// Minimum lateral braking, m/s².
    pub a_b_lat: f64,
    /// Maximum lateral acceleration during the response time, m/s².
    pub a_lat_max: f64,
    /// Time-to-collision threshold for lane-change feasibility, s.
    pub ttc_threshold: f64,
    /// Sigmoid temperature of the feasibility factor, in (0, 1).
    pub sigma_ttc: f64,
}

impl Default for RssParams {
    fn default() -> Self {
        Self {
            reaction_time: 0.2,
            a_max: 2.6,
            a_b_min: 4.5,
            a_b_max: 4.5,
            lateral_clearance: 0.1,
            a_b_lat: 1.0,
            a_lat_max: 1.0,
            ttc_threshold: 1.5,
            sigma_ttc: 0.5,
        }
    }
}

impl RssParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.reaction_time,
            self.a_max,
            self.a_b_min,
            self.a_b_max,
            self.lateral_clearance,
            self.a_b_lat,
            self.a_lat_max,
            self.ttc_threshold,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return contract("RSS magnitudes must be positive");
        }
        if !(self.sigma_ttc > 0.0 && self.sigma_ttc < 1.0) {
            return contract("sigma_ttc must lie in (0, 1)");
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Minimum safe gap between a rear vehicle at `v_ego` and its leader at
/// `v_lead`.
pub fn longitudinal_safe_distance(v_ego: f64, v_lead: f64, p: &RssParams) -> Result<f64> {
    if !(v_ego >= 0.0) || !(v_lead >= 0.0) {
        return contract(format!("speeds must be non-negative, got {v_ego} and {v_lead}"));
    }
    let rho = p.reaction_time;
    let v_resp = v_ego + rho * p.a_max;
    let d = v_ego * rho + 0.5 * p.a_max * rho * rho + v_resp * v_resp / (2.0 * p.a_b_min)
        - v_lead * v_lead / (2.0 * p.a_b_max);
    Ok(d.max(0.0))
}

/// Minimum safe lateral gap between the ego (lateral speed `v_ego_lat`) and
/// another vehicle (`v_other_lat`). Never below the clearance buffer.
pub fn lateral_safe_distance(v_ego_lat: f64, v_other_lat: f64, p: &RssParams) -> f64 {
    let rho = p.reaction_time;
    let vi_rho = v_ego_lat + rho * p.a_lat_max;
    let vm_rho = v_other_lat + rho * p.a_lat_max;
    let ego_term = (v_ego_lat + vi_rho) / 2.0 * rho + vi_rho * vi_rho / (2.0 * p.a_b_lat);
    let other_term = (v_other_lat + vm_rho) / 2.0 * rho - vm_rho * vm_rho / (2.0 * p.a_b_lat);
    p.lateral_clearance + (ego_term - other_term).max(0.0)
}

/// Time until the ego closes the gap to a target-lane leader. `gap` is the
/// front-to-front distance; the leader's length is subtracted. Already
/// overlapping geometry yields 0.
pub fn projected_ttc_lead(v_ego: f64, v_lead: f64, gap: f64, lead_length: f64) -> f64 {
    closing_time(v_ego - v_lead, gap - lead_length)
}

/// Time until a target-lane follower closes the gap to the ego. `gap` is
/// front-to-front; the ego's length is subtracted.
pub fn projected_ttc_follow(v_follow: f64, v_ego: f64, gap: f64, ego_length: f64) -> f64 {
    closing_time(v_follow - v_ego, gap - ego_length)
}

fn closing_time(closing_speed: f64, clearance: f64) -> f64 {
    if closing_speed > 0.0 {
        (clearance / closing_speed).max(0.0)
    } else {
        f64::INFINITY
    }
}

/// Lane-change feasibility in `[0, 1]` from the smaller projected ttc.
pub fn feasibility(min_projected_ttc: f64, p: &RssParams) -> f64 {
    if min_projected_ttc == f64::INFINITY {
        return 1.0;
    }
    sigmoid((min_projected_ttc - p.ttc_threshold) / p.sigma_ttc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: RssParams = RssParams {
        reaction_time: 0.2,
        a_max: 2.6,
        a_b_min: 4.5,
        a_b_max: 4.5,
        lateral_clearance: 0.1,
        a_b_lat: 1.0,
        a_lat_max: 1.0,
        ttc_threshold: 1.5,
        sigma_ttc: 0.5,
    };

    #[test]
    fn longitudinal_anchor_values() {
        assert_eq!(longitudinal_safe_distance(0.0, 30.0, &P).unwrap(), 0.0);
        // 30*0.2 + 0.5*2.6*0.04 + 30.52^2/9 - 400/9
        let d = longitudinal_safe_distance(30.0, 20.0, &P).unwrap();
        assert!((d - 65.104_266_666_666_65).abs() < 1e-9, "{d}");
        let d = longitudinal_safe_distance(30.0, 30.0, &P).unwrap();
        assert!((d - 9.548_711_111_111_09).abs() < 1e-9, "{d}");
        assert!(longitudinal_safe_distance(-1.0, 0.0, &P).is_err());
    }

    #[test]
    fn lateral_anchor_values() {
        assert!((lateral_safe_distance(0.0, 0.0, &P) - 0.14).abs() < 1e-12);
        assert!((lateral_safe_distance(-5.0, 5.0, &P) - 23.14).abs() < 1e-12);
        // v_i = 1, v_m = -1: vi_rho = 1.2, vm_rho = -0.8
        // ego = 2.2/2*0.2 + 1.44/2 = 0.94 ; other = -1.8/2*0.2 - 0.64/2 = -0.5
        assert!((lateral_safe_distance(1.0, -1.0, &P) - (0.1 + 1.44)).abs() < 1e-12);
    }

    #[test]
    fn ttc_cases() {
        assert_eq!(projected_ttc_lead(30.0, 25.0, 55.0, 5.0), 10.0);
        assert_eq!(projected_ttc_lead(25.0, 30.0, 55.0, 5.0), f64::INFINITY);
        assert_eq!(projected_ttc_lead(30.0, 20.0, 5.0, 5.0), 0.0);
        assert_eq!(projected_ttc_lead(30.0, 20.0, 2.0, 5.0), 0.0);
        assert_eq!(projected_ttc_follow(35.0, 30.0, 15.0, 5.0), 2.0);
        assert_eq!(projected_ttc_follow(30.0, 30.0, 15.0, 5.0), f64::INFINITY);
    }

    #[test]
    fn feasibility_cases() {
        assert_eq!(feasibility(1.5, &P), 0.5);
        assert_eq!(feasibility(f64::INFINITY, &P), 1.0);
        let sharp = RssParams { sigma_ttc: 0.1, ..P };
        let f = feasibility(0.5, &sharp);
        assert!((f - 4.5397868702e-5).abs() < 1e-12, "{f}");
    }

    #[test]
    fn param_validation() {
        assert!(P.validate().is_ok());
        assert!(RssParams { sigma_ttc: 1.0, ..P }.validate().is_err());
        assert!(RssParams { a_b_lat: 0.0, ..P }.validate().is_err());
    }

    proptest! {
        #[test]
        fn longitudinal_monotone(v in 0.0..50.0f64, w in 0.0..50.0f64, dv in 0.0..10.0f64) {
            let base = longitudinal_safe_distance(v, w, &P).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!(longitudinal_safe_distance(v + dv, w, &P).unwrap() >= base);
            prop_assert!(longitudinal_safe_distance(v, w + dv, &P).unwrap() <= base);
        }

        #[test]
        fn lateral_floor(vi in -10.0..10.0f64, vm in -10.0..10.0f64) {
            prop_assert!(lateral_safe_distance(vi, vm, &P) >= P.lateral_clearance);
        }

        #[test]
        fn feasibility_increasing(t in 0.0..10.0f64, dt in 1e-3..5.0f64) {
            prop_assert!(feasibility(t + dt, &P) > feasibility(t, &P));
        }

        #[test]
        fn equal_speeds_never_close(v in 0.0..40.0f64, d in 0.0..200.0f64) {
            prop_assert_eq!(projected_ttc_lead(v, v, d, 5.0), f64::INFINITY);
        }
    }
}
