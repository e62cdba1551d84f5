//! Two saturated links merging into one, with different merge priorities.
//!
//! Each step the node draws its incoming links in random order weighted by
//! priority, so the share of transfers follows α₁ / (α₁ + α₂).

use mesoflow::{Scenario, SimConfig};

fn main() -> mesoflow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/merge");
    println!(
        "{:>6} {:>6} {:>9} {:>9}",
        "major", "minor", "expected", "measured"
    );
    for (a, b) in [(0.5, 0.5), (1.0, 0.5), (2.0, 0.5), (4.0, 1.0)] {
        let mut scenario = Scenario::from_dir(dir)?;
        scenario.link_mut("major").unwrap().merge_priority = a;
        scenario.link_mut("minor").unwrap().merge_priority = b;
        for d in &mut scenario.demands {
            d.t_end = 10000.0;
        }
        let mut world = scenario.build(SimConfig {
            duration: 10000.0,
            seed: 3,
            ..SimConfig::default()
        })?;
        world.run()?;

        let net = world.network();
        let major = net.link_id("major");
        let out = net.link_id("out");
        let into_out: Vec<_> = world
            .log()
            .transfers
            .iter()
            .filter(|e| e.to_link == out)
            .collect();
        let from_major = into_out.iter().filter(|e| e.from_link == major).count();
        println!(
            "{a:>6} {b:>6} {:>9.3} {:>9.3}",
            a / (a + b),
            from_major as f64 / into_out.len() as f64
        );
    }
    Ok(())
}
