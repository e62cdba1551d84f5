//! One platoon on an empty 1 km link.
//!
//! The trip takes L/u = 1000/20 = 50 s; each trajectory point is one 5 s step.

use mesoflow::{Scenario, SimConfig};

fn main() -> mesoflow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/single_link");
    let scenario = Scenario::from_dir(dir)?;
    let config = SimConfig {
        duration: 300.0,
        ..SimConfig::default()
    };
    let mut world = scenario.build(config)?;
    world.run()?;

    let p = &world.platoons()[0];
    println!("platoon {} departs at {} s", p.id, p.depart_t);
    for pt in &p.trajectory {
        println!("  t={:>5} x={:>6} v={}", pt.t, pt.x, pt.v);
    }
    println!("trip time {} s", p.trip_time().unwrap());
    Ok(())
}
