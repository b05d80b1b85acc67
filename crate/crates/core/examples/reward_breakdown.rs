//! Decomposes the priority-guided lane-change reward for an exiting CAV
//! as it approaches its off-ramp in each lane, then prints the full
//! per-component breakdown of one simulated vehicle.
//!
//! `cargo run --example reward_breakdown`

use palcas::reward::{self, PriorityInputs, RewardWeights};
use palcas::rss::RssParams;

fn main() -> palcas::Result<()> {
    let w = RewardWeights::default();
    let p = RssParams::default();
    println!("lane-change term on a 3-lane road at 25 m/s with a free target lane");
    println!("{:>8} {:>6} {:>10} {:>10} {:>10} {:>10}", "d (m)", "lane", "urgency", "scaling", "staging", "total");
    for d in [2000.0, 1000.0, 500.0, 250.0, 100.0, 50.0, 0.0] {
        for lane in 1..=3u8 {
            let t = reward::priority_lane_change_reward(
                &PriorityInputs {
                    distance_to_exit: d,
                    v_ego: 25.0,
                    remaining_lanes: lane - 1,
                    lane_count: 3,
                    min_projected_ttc: f64::INFINITY,
                },
                &p,
                &w,
            );
            println!(
                "{d:>8.0} {lane:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                t.urgency, t.scaling, t.staging, t.total
            );
        }
    }

    println!("\ncomfort term by acceleration");
    for a in [-4.5, -1.47, 0.0, 1.47, 2.6] {
        println!("  {a:>6.2} m/s^2 -> {:.4}", reward::comfort_reward(a, &w));
    }
    println!("\ndeadlock penalty along a 100 m acceleration lane");
    for x in [0.0, 50.0, 90.0, 100.0] {
        println!("  x {x:>5.0} -> {:.4}", reward::deadlock_penalty(x, 100.0, true, &w));
    }
    Ok(())
}
