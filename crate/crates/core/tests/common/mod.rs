//! Random roads and traffic shared by the integration tests.
#![allow(dead_code)]

use palcas::road::{Entry, Exit, RoadLayout, RoadNetwork, Route};
use palcas::vehicle::LaneChangeManeuver;
use palcas::{Vehicle, VehicleKind};
use rand::Rng;

/// A valid layout with 1-5 lanes and 1-3 clusters.
pub fn random_layout(rng: &mut impl Rng) -> RoadLayout {
    let cluster_count = rng.gen_range(1..=3);
    let cluster_length = rng.gen_range(400.0..900.0);
    RoadLayout {
        mainline_length: cluster_count as f64 * cluster_length,
        lane_count: rng.gen_range(1..=5),
        warmup_length: rng.gen_range(0.0..100.0),
        cluster_count,
        cluster_length,
        ..RoadLayout::default()
    }
}

/// `n` vehicles with arbitrary positions, speeds, accelerations, routes and
/// lane changes in progress. Some ramp vehicles sit on acceleration lanes.
pub fn random_vehicles(rng: &mut impl Rng, net: &RoadNetwork, n: usize) -> Vec<Vehicle> {
    let lanes = net.lane_count();
    let clusters = net.clusters().len();
    (0..n)
        .map(|i| {
            let exit = if rng.gen_bool(0.3) { Exit::HighwayEnd } else { Exit::OffRamp(rng.gen_range(1..=clusters)) };
            let kind = if rng.gen_bool(0.5) { VehicleKind::Cav } else { VehicleKind::Chv };
            let v = rng.gen_range(0.0..40.0);
            let mut car = if rng.gen_bool(0.15) {
                let k = rng.gen_range(1..=clusters);
                let ramp = &net.cluster(k).unwrap().on_ramp;
                let x = rng.gen_range(ramp.junction_position..ramp.accel_lane_end());
                let mut c = Vehicle::new(i as u64 + 1, kind, x, 0, v, 33.528, Route::new(Entry::Ramp(k), exit), net);
                c.on_accel_lane = true;
                c
            } else {
                let x = rng.gen_range(0.0..net.mainline_length());
                let lane = rng.gen_range(1..=lanes);
                Vehicle::new(i as u64 + 1, kind, x, lane, v, 33.528, Route::new(Entry::Mainline, exit), net)
            };
            car.a = rng.gen_range(-6.0..4.0);
            if car.lane >= 1 && lanes > 1 && rng.gen_bool(0.2) {
                let target = if car.lane == lanes || (car.lane > 1 && rng.gen_bool(0.5)) { car.lane - 1 } else { car.lane + 1 };
                let mut m = LaneChangeManeuver::new(car.lane, target, 0.0, 2.0);
                m.progress = rng.gen_range(0.0..1.0);
                car.lat = net.lane_center(car.lane) + m.direction() * m.progress * net.lane_width();
                car.maneuver = Some(m);
            }
            car
        })
        .collect()
}
