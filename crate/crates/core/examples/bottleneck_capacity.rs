//! Queue discharge behind a signal.
//!
//! The signal at M holds `up` on red for 1000 s while demand keeps arriving.
//! After green the departure curve D(t) rises at the link capacity
//! u / (u·τ + δ) = 0.8 veh/s.

use mesoflow::analyzer::cumulative_counts;
use mesoflow::kinematics::link_capacity;
use mesoflow::{Scenario, SimConfig};

fn main() -> mesoflow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/signal_queue");
    let scenario = Scenario::from_dir(dir)?;
    let mut world = scenario.build(SimConfig {
        duration: 4000.0,
        ..SimConfig::default()
    })?;
    world.run()?;

    let up = world.link_by_name("up").unwrap();
    let cap = link_capacity(
        up.spec.free_flow_speed,
        world.config().reaction_time,
        up.jam_spacing(),
    );
    println!("theoretical capacity {cap} veh/s");

    let curve = cumulative_counts(&world, "up")?;
    println!("{:>6} {:>6} {:>6} {:>6}", "t", "A", "D", "queue");
    for p in curve.iter().filter(|p| p.t % 250.0 == 0.0) {
        println!(
            "{:>6} {:>6} {:>6} {:>6}",
            p.t,
            p.arrivals,
            p.departures,
            p.arrivals - p.departures
        );
    }

    let at = |t: f64| curve.iter().find(|p| p.t == t).unwrap().departures;
    let measured = (at(1700.0) - at(1100.0)) / 600.0;
    println!("measured discharge 1100-1700 s: {measured:.4} veh/s");
    Ok(())
}
