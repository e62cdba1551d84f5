//! The 24-node, 76-link Sioux Falls network with 34 690 vehicles.
//!
//! Runs the two-hour scenario at several platoon sizes to show how the
//! platoon size trades accuracy for speed: the step is τ·Δn, so doubling Δn
//! halves the number of steps and the number of simulated units.

use std::time::Instant;

use mesoflow::analyzer::basic_stats;
use mesoflow::{Scenario, SimConfig};

fn main() -> mesoflow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sioux_falls");
    let scenario = Scenario::from_dir(dir)?;
    println!(
        "{} nodes, {} links, {} m of road, {} vehicles",
        scenario.nodes.len(),
        scenario.links.len(),
        scenario.links.iter().map(|l| l.length).sum::<f64>(),
        scenario
            .demands
            .iter()
            .map(|d| d.total_vehicles())
            .sum::<f64>()
    );

    println!(
        "{:>3} {:>5} {:>8} {:>9} {:>9} {:>9}",
        "Δn", "steps", "trips", "avg tt", "delay/veh", "wall"
    );
    for dn in [1, 5, 10] {
        let dt = f64::from(dn);
        let config = SimConfig {
            platoon_size: dn,
            duration: 7200.0,
            // keep the refresh period at 600 s
            route_update_interval: (600.0 / dt) as u32,
            ..SimConfig::default()
        };
        let t0 = Instant::now();
        let mut world = scenario.build(config)?;
        world.run()?;
        let wall = t0.elapsed().as_secs_f64();
        let s = basic_stats(&world);
        println!(
            "{dn:>3} {:>5} {:>8} {:>8.1}s {:>8.1}s {:>8.3}s",
            world.clock(),
            s.completed_trips,
            s.average_travel_time,
            s.total_delay / s.completed_trips.max(1) as f64,
            wall
        );
    }
    Ok(())
}
