//! CSV files written by the harness. Every file has a header row; absent
//! values are empty cells. Floats use the shortest representation that
//! parses back to the same value, so re-reading a file is lossless.

use std::io::{Read, Write};

use crate::error::{PalcasError, Result};
use crate::federation::{RoundReport, RoundRow};
use crate::metrics::{EpisodeMetrics, GridCell, InferenceCdf, MetricsReport, TrajectorySample};
use crate::observe::{self, Observation};
use crate::reward::RewardBreakdown;
use crate::sim::{Event, EventKind};
use crate::vehicle::VehicleKind;

pub const EVENTS_HEADER: [&str; 7] = ["time", "event", "vehicle_id", "kind", "lane", "long_pos", "detail"];
pub const TRAJECTORY_HEADER: [&str; 7] = ["time", "vehicle_id", "lane", "long_pos", "lat_pos", "speed", "accel"];
pub const ROUNDS_HEADER: [&str; 6] = ["round", "agent_id", "n_k", "mean_loss", "epsilon", "wall_ms"];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn bad(what: &str, line: u64) -> PalcasError {
    PalcasError::Schema(format!("malformed {what} at record {line}"))
}

pub fn write_metrics(w: impl Write, report: &MetricsReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "mean", "std", "n"])?;
    for r in &report.rows {
        out.write_record([r.metric.clone(), opt(r.mean), opt(r.std), r.n.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-episode metrics, one row per evaluation episode.
pub fn write_episode_metrics(w: impl Write, episodes: &[EpisodeMetrics]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "episode",
        "efficiency",
        "collision_rate",
        "dsr",
        "msr",
        "comfort_abs_accel",
        "spawned_cavs",
        "dsr_denominator",
        "dsr_unresolved",
        "msr_denominator",
        "msr_unresolved",
    ])?;
    for (k, e) in episodes.iter().enumerate() {
        out.write_record([
            k.to_string(),
            opt(e.efficiency),
            opt(e.collision_rate),
            opt(e.dsr),
            opt(e.msr),
            opt(e.comfort_abs_accel),
            e.spawned_cavs.to_string(),
            e.dsr_denominator.to_string(),
            e.dsr_unresolved.to_string(),
            e.msr_denominator.to_string(),
            e.msr_unresolved.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Two reports side by side; rows follow `a`.
pub fn write_comparison(w: impl Write, a: &MetricsReport, b: &MetricsReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "full_mean", "full_std", "ablated_mean", "ablated_std"])?;
    for r in &a.rows {
        let other = b.get(&r.metric);
        out.write_record([
            r.metric.clone(),
            opt(r.mean),
            opt(r.std),
            opt(other.and_then(|m| m.mean)),
            opt(other.and_then(|m| m.std)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_events(w: impl Write, events: &[Event]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EVENTS_HEADER)?;
    for e in events {
        out.write_record([
            e.time.to_string(),
            e.kind.as_str().to_string(),
            e.vehicle_id.to_string(),
            e.vehicle_kind.as_str().to_string(),
            e.lane.to_string(),
            e.long_pos.to_string(),
            e.detail.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events(r: impl Read) -> Result<Vec<Event>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 1;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad("event", line));
        out.push(Event {
            time: field(0)?.parse().map_err(|_| bad("event", line))?,
            kind: EventKind::parse(field(1)?).ok_or_else(|| bad("event", line))?,
            vehicle_id: field(2)?.parse().map_err(|_| bad("event", line))?,
            vehicle_kind: VehicleKind::parse(field(3)?).ok_or_else(|| bad("event", line))?,
            lane: field(4)?.parse().map_err(|_| bad("event", line))?,
            long_pos: field(5)?.parse().map_err(|_| bad("event", line))?,
            detail: field(6)?.to_string(),
        });
    }
    Ok(out)
}

pub fn write_trajectory(w: impl Write, samples: &[TrajectorySample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_HEADER)?;
    for s in samples {
        out.write_record([
            s.time.to_string(),
            s.vehicle_id.to_string(),
            s.lane.to_string(),
            s.long_pos.to_string(),
            s.lat_pos.to_string(),
            s.speed.to_string(),
            s.accel.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory(r: impl Read) -> Result<Vec<TrajectorySample>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 1;
        let f = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad("trajectory sample", line))
        };
        let int = |i: usize| -> Result<u64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad("trajectory sample", line))
        };
        out.push(TrajectorySample {
            time: f(0)?,
            vehicle_id: int(1)?,
            lane: u8::try_from(int(2)?).map_err(|_| bad("trajectory sample", line))?,
            long_pos: f(3)?,
            lat_pos: f(4)?,
            speed: f(5)?,
            accel: f(6)?,
        });
    }
    Ok(out)
}

/// Grid rows with bin lower edges; empty cells have no mean speed.
pub fn write_spacetime(w: impl Write, grid: &[GridCell], bin_x: f64, bin_t: f64) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_bin", "x_bin", "mean_speed"])?;
    for c in grid {
        out.write_record([
            (c.t_bin as f64 * bin_t).to_string(),
            (c.x_bin as f64 * bin_x).to_string(),
            opt(c.mean_speed),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rounds(w: impl Write, rows: &[RoundRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ROUNDS_HEADER)?;
    for r in rows {
        out.write_record([
            r.round.to_string(),
            r.agent_id.to_string(),
            r.n_k.to_string(),
            r.mean_loss.to_string(),
            r.epsilon.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per validated round.
pub fn write_validation(w: impl Write, reports: &[RoundReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["round", "dsr", "collision_rate", "ticks", "selected"])?;
    for r in reports {
        if let Some(v) = r.validation {
            out.write_record([
                r.round.to_string(),
                opt(v.dsr),
                opt(v.collision_rate),
                v.ticks.to_string(),
                v.selected.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_rounds(r: impl Read) -> Result<Vec<RoundRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(PalcasError::from)).collect()
}

pub fn write_inference_cdf(w: impl Write, cdf: &InferenceCdf) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["ms", "cum_frac"])?;
    for (v, f) in &cdf.points {
        out.write_record([v.to_string(), f.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// One vehicle's reward decomposition at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRow {
    pub time: f64,
    pub vehicle_id: u64,
    pub breakdown: RewardBreakdown,
}

pub fn write_rewards(w: impl Write, rows: &[RewardRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "time",
        "vehicle_id",
        "efficiency",
        "safety",
        "comfort",
        "feasibility",
        "urgency",
        "scaling",
        "staging",
        "lane_change",
        "deadlock",
        "total",
    ])?;
    for r in rows {
        let b = &r.breakdown;
        out.write_record([
            r.time.to_string(),
            r.vehicle_id.to_string(),
            b.efficiency.total.to_string(),
            b.safety.total.to_string(),
            b.comfort.to_string(),
            b.priority.feasibility.to_string(),
            b.priority.urgency.to_string(),
            b.priority.scaling.to_string(),
            b.priority.staging.to_string(),
            b.priority.total.to_string(),
            b.deadlock.to_string(),
            b.total.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Labeled observation vectors, one row per `(time, vehicle)`.
pub fn write_observations(w: impl Write, rows: &[(f64, u64, Observation)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["time".to_string(), "vehicle_id".to_string()];
    header.extend(observe::labels());
    out.write_record(&header)?;
    for (t, id, o) in rows {
        let mut rec = vec![t.to_string(), id.to_string()];
        rec.extend(o.0.iter().map(|x| x.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip() {
        let events = vec![
            Event {
                time: 0.1,
                kind: EventKind::Spawn,
                vehicle_id: 3,
                vehicle_kind: VehicleKind::Cav,
                lane: 0,
                long_pos: 155.0,
                detail: "ramp1>off2".into(),
            },
            Event {
                time: 12.300000000000002,
                kind: EventKind::Collision,
                vehicle_id: 3,
                vehicle_kind: VehicleKind::Cav,
                lane: 1,
                long_pos: 1.0 / 3.0,
                detail: "with=9".into(),
            },
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        assert!(buf.starts_with(b"time,event,vehicle_id,kind,lane,long_pos,detail\n"));
        assert_eq!(read_events(&buf[..]).unwrap(), events);
    }

    #[test]
    fn rounds_round_trip() {
        let rows = vec![RoundRow { round: 0, agent_id: 1, n_k: 12, mean_loss: 0.25, epsilon: 0.9, wall_ms: 0 }];
        let mut buf = Vec::new();
        write_rounds(&mut buf, &rows).unwrap();
        assert_eq!(read_rounds(&buf[..]).unwrap(), rows);
    }
}
