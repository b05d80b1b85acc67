//! Tabulates the RSS longitudinal and lateral safe distances and the
//! lane-change feasibility factor over a grid of speeds.
//!
//! `cargo run --example rss_distances`

use palcas::rss::{self, RssParams};

fn main() -> palcas::Result<()> {
    let p = RssParams::default();
    println!("longitudinal safe distance (m), rows: ego speed, columns: leader speed");
    let speeds = [0.0, 10.0, 20.0, 30.0, 40.0];
    print!("{:>8}", "");
    for v in speeds {
        print!("{v:>9.0}");
    }
    println!();
    for ego in speeds {
        print!("{ego:>8.0}");
        for lead in speeds {
            print!("{:>9.2}", rss::longitudinal_safe_distance(ego, lead, &p)?);
        }
        println!();
    }

    println!("\nlateral safe distance (m) for lateral speeds toward each other");
    for (a, b) in [(0.0, 0.0), (1.0, -1.0), (1.0, 1.0), (-5.0, 5.0)] {
        println!("  ego {a:>5.1}  other {b:>5.1}  ->  {:.4}", rss::lateral_safe_distance(a, b, &p));
    }

    println!("\nfeasibility against projected time-to-collision (threshold {} s)", p.ttc_threshold);
    for ttc in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
        println!("  ttc {ttc:>5}  ->  {:.4}", rss::feasibility(ttc, &p));
    }
    Ok(())
}
