//! Episode metrics computed from the event log and trajectory samples.
//!
//! Rates are percentages over CAVs. A vehicle still on the road when the
//! episode ends, with its outcome undecided, is left out of the DSR and MSR
//! denominators and counted separately. A metric with an empty denominator
//! is absent rather than 0 or 100.

use std::collections::{BTreeMap, BTreeSet};

use crate::road::{Entry, RoadNetwork, Route};
use crate::sim::{Event, EventKind};
use crate::vehicle::VehicleKind;

/// One vehicle's state at one sampled tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub vehicle_id: u64,
    pub lane: u8,
    pub long_pos: f64,
    pub lat_pos: f64,
    pub speed: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeMetrics {
    /// Mean speed over samples inside cluster spans, m/s.
    pub efficiency: Option<f64>,
    pub collision_rate: Option<f64>,
    pub spawned_cavs: usize,
    pub dsr: Option<f64>,
    pub dsr_denominator: usize,
    pub dsr_unresolved: usize,
    pub msr: Option<f64>,
    pub msr_denominator: usize,
    pub msr_unresolved: usize,
    /// Mean absolute CAV acceleration, m/s².
    pub comfort_abs_accel: Option<f64>,
}

#[derive(Default)]
struct Outcome {
    route: Option<Route>,
    collided: bool,
    exited: bool,
    missed: bool,
    merged: bool,
    /// Deadlocked or collided before merging.
    merge_failed: bool,
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn compute_metrics(events: &[Event], trajectory: &[TrajectorySample], net: &RoadNetwork) -> EpisodeMetrics {
    let mut cavs: BTreeMap<u64, Outcome> = BTreeMap::new();
    for e in events.iter().filter(|e| e.vehicle_kind == VehicleKind::Cav) {
        let o = cavs.entry(e.vehicle_id).or_default();
        match e.kind {
            EventKind::Spawn => o.route = Route::parse_label(&e.detail),
            EventKind::Collision => {
                o.collided = true;
                if !o.merged {
                    o.merge_failed = true;
                }
            }
            EventKind::Arrival if e.detail == "exit" => o.exited = true,
            EventKind::MissedExit => o.missed = true,
            EventKind::Merge => o.merged = true,
            EventKind::Deadlock if !o.merged => o.merge_failed = true,
            _ => {}
        }
    }
    let spawned: Vec<&Outcome> = cavs.values().filter(|o| o.route.is_some()).collect();

    let collided = spawned.iter().filter(|o| o.collided).count();

    let exiting: Vec<&&Outcome> = spawned.iter().filter(|o| o.route.is_some_and(|r| r.is_exiting())).collect();
    let dsr_ok = exiting.iter().filter(|o| o.exited).count();
    let dsr_failed = exiting.iter().filter(|o| !o.exited && (o.missed || o.collided)).count();

    let merging: Vec<&&Outcome> =
        spawned.iter().filter(|o| o.route.is_some_and(|r| matches!(r.entry, Entry::Ramp(_)))).collect();
    let msr_ok = merging.iter().filter(|o| o.merged && !o.merge_failed).count();
    let msr_failed = merging.iter().filter(|o| o.merge_failed).count();

    let cav_ids: BTreeSet<u64> = cavs.keys().copied().collect();
    let (mut speed_sum, mut speed_n) = (0.0, 0usize);
    let (mut acc_sum, mut acc_n) = (0.0, 0usize);
    for s in trajectory {
        if net.clusters().iter().any(|z| z.contains(s.long_pos)) {
            speed_sum += s.speed;
            speed_n += 1;
        }
        if cav_ids.contains(&s.vehicle_id) {
            acc_sum += s.accel.abs();
            acc_n += 1;
        }
    }

    EpisodeMetrics {
        efficiency: (speed_n > 0).then(|| speed_sum / speed_n as f64),
        collision_rate: percent(collided, spawned.len()),
        spawned_cavs: spawned.len(),
        dsr: percent(dsr_ok, dsr_ok + dsr_failed),
        dsr_denominator: dsr_ok + dsr_failed,
        dsr_unresolved: exiting.len() - dsr_ok - dsr_failed,
        msr: percent(msr_ok, msr_ok + msr_failed),
        msr_denominator: msr_ok + msr_failed,
        msr_unresolved: merging.len() - msr_ok - msr_failed,
        comfort_abs_accel: (acc_n > 0).then(|| acc_sum / acc_n as f64),
    }
}

/// Mean and sample standard deviation of one metric across episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Episodes in which the metric was defined.
    pub n: usize,
}

impl MetricSummary {
    pub fn of(metric: &str, values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let xs: Vec<f64> = values.into_iter().flatten().collect();
        let n = xs.len();
        let mean = (n > 0).then(|| xs.iter().sum::<f64>() / n as f64);
        let std = mean.filter(|_| n > 1).map(|m| {
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self { metric: metric.to_string(), mean, std, n }
    }

    /// Whether the `mean ± std` intervals of `self` and `other` are disjoint.
    pub fn separated_from(&self, other: &MetricSummary) -> bool {
        match (self.mean, other.mean) {
            (Some(a), Some(b)) => {
                let (sa, sb) = (self.std.unwrap_or(0.0), other.std.unwrap_or(0.0));
                a + sa < b - sb || b + sb < a - sa
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricSummary>,
}

impl MetricsReport {
    pub fn from_episodes(episodes: &[EpisodeMetrics]) -> Self {
        let count = |f: fn(&EpisodeMetrics) -> usize| episodes.iter().map(move |e| Some(f(e) as f64));
        let rows = vec![
            MetricSummary::of("efficiency", episodes.iter().map(|e| e.efficiency)),
            MetricSummary::of("collision_rate", episodes.iter().map(|e| e.collision_rate)),
            MetricSummary::of("dsr", episodes.iter().map(|e| e.dsr)),
            MetricSummary::of("msr", episodes.iter().map(|e| e.msr)),
            MetricSummary::of("comfort_abs_accel", episodes.iter().map(|e| e.comfort_abs_accel)),
            MetricSummary::of("spawned_cavs", count(|e| e.spawned_cavs)),
            MetricSummary::of("dsr_denominator", count(|e| e.dsr_denominator)),
            MetricSummary::of("dsr_unresolved", count(|e| e.dsr_unresolved)),
            MetricSummary::of("msr_denominator", count(|e| e.msr_denominator)),
            MetricSummary::of("msr_unresolved", count(|e| e.msr_unresolved)),
        ];
        Self { rows }
    }

    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub t_bin: usize,
    pub x_bin: usize,
    pub mean_speed: Option<f64>,
}

/// Mean speed per `(time, position)` bin over `[0, duration) × [0, length)`,
/// time-major. Samples outside the rectangle are ignored.
pub fn space_time_grid(
    samples: &[TrajectorySample],
    bin_x: f64,
    bin_t: f64,
    length: f64,
    duration: f64,
) -> Vec<GridCell> {
    let nx = (length / bin_x).ceil().max(0.0) as usize;
    let nt = (duration / bin_t).ceil().max(0.0) as usize;
    let mut acc = vec![(0.0, 0usize); nx * nt];
    for s in samples {
        if !(0.0..length).contains(&s.long_pos) || !(0.0..duration).contains(&s.time) {
            continue;
        }
        let xb = ((s.long_pos / bin_x) as usize).min(nx - 1);
        let tb = ((s.time / bin_t) as usize).min(nt - 1);
        let cell = &mut acc[tb * nx + xb];
        cell.0 += s.speed;
        cell.1 += 1;
    }
    acc.iter()
        .enumerate()
        .map(|(k, &(sum, n))| GridCell {
            t_bin: k / nx,
            x_bin: k % nx,
            mean_speed: (n > 0).then(|| sum / n as f64),
        })
        .collect()
}

/// Empirical CDF with nearest-rank quantiles: the `p` quantile is the
/// `ceil(p · n)`-th smallest sample.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceCdf {
    /// `(value, cumulative fraction)`, ascending.
    pub points: Vec<(f64, f64)>,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// `None` for an empty sample set.
pub fn inference_cdf(samples_ms: &[f64]) -> Option<InferenceCdf> {
    if samples_ms.is_empty() {
        return None;
    }
    let mut sorted = samples_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let points = sorted.iter().enumerate().map(|(i, &v)| (v, (i + 1) as f64 / n)).collect();
    Some(InferenceCdf {
        p50: nearest_rank(&sorted, 0.5),
        p90: nearest_rank(&sorted, 0.9),
        p99: nearest_rank(&sorted, 0.99),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::RoadLayout;

    fn ev(kind: EventKind, id: u64, detail: &str) -> Event {
        Event {
            time: 0.0,
            kind,
            vehicle_id: id,
            vehicle_kind: VehicleKind::Cav,
            lane: 1,
            long_pos: 0.0,
            detail: detail.into(),
        }
    }

    fn net() -> RoadNetwork {
        RoadNetwork::from_layout(&RoadLayout::default()).unwrap()
    }

    #[test]
    fn four_of_five_exits() {
        let mut log = Vec::new();
        for id in 1..=5 {
            log.push(ev(EventKind::Spawn, id, "main>off1"));
        }
        for id in 1..=4 {
            log.push(ev(EventKind::Arrival, id, "exit"));
        }
        log.push(ev(EventKind::MissedExit, 5, ""));
        let m = compute_metrics(&log, &[], &net());
        assert_eq!(m.dsr, Some(80.0));
        assert_eq!(m.collision_rate, Some(0.0));
        assert_eq!(m.msr, None);
        assert_eq!(m.efficiency, None);
    }

    #[test]
    fn nearest_rank_quantiles() {
        let c = inference_cdf(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(c.p50, 2.0);
        assert_eq!(c.p90, 4.0);
        assert_eq!(c.points[0], (1.0, 0.25));
        let flat = inference_cdf(&[7.0; 10]).unwrap();
        assert_eq!((flat.p50, flat.p99), (7.0, 7.0));
        assert!(inference_cdf(&[]).is_none());
    }

    #[test]
    fn summary_statistics() {
        let s = MetricSummary::of("x", [Some(1.0), None, Some(3.0)]);
        assert_eq!((s.mean, s.n), (Some(2.0), 2));
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(MetricSummary::of("x", [None]).mean, None);
    }
}
