//! Reactive route choice between two identical routes.
//!
//! Each route ends in a slow link (5 m/s, capacity 0.5 veh/s), so 1.2 veh/s
//! of demand saturates both. Every Δi_B steps the shortest-path tree is
//! rebuilt from current travel times and blended into the attractiveness
//! table with weight λ.

use mesoflow::{NodeId, Scenario, SimConfig};

fn main() -> mesoflow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/parallel_routes");
    let scenario = Scenario::from_dir(dir)?;

    for lambda in [0.1, 0.5, 1.0] {
        let mut world = scenario.build(SimConfig {
            duration: 20000.0,
            route_weight: lambda,
            ..SimConfig::default()
        })?;
        let d: NodeId = world.network().node_id("D").unwrap();
        let a1 = world.network().link_id("a1").unwrap();
        let b1 = world.network().link_id("b1").unwrap();

        print!("λ={lambda}: B(a1) after refreshes:");
        let mut shown = 0;
        while !world.is_finished() {
            world.step()?;
            let t = world.attractiveness();
            if t.last_update_step() == world.clock() - 1 && shown < 6 {
                print!(
                    " {:.3}",
                    t.weight(d, a1) / (t.weight(d, a1) + t.weight(d, b1))
                );
                shown += 1;
            }
        }
        world.finish();

        let on_a = world
            .platoons()
            .iter()
            .filter(|p| p.trajectory.first().map(|pt| pt.link) == Some(a1))
            .count();
        println!(
            "\n  share on route a: {:.3}",
            on_a as f64 / world.platoons().len() as f64
        );
    }
    Ok(())
}
