//! A one-way ring with two interfering demands, with and without management.
//!
//! From 1200 s the two flows share the ring and queue at the merges W and E.
//! Without intervention the queues wrap around the ring and traffic stops for
//! good. Raising the merge priority of ring links NE and SW from 0.5 to 2
//! keeps the ring moving; the queues stay on the entry links instead.
//!
//! Pass an output directory to also write time-space diagrams and MFDs.

use std::path::PathBuf;

use mesoflow::analyzer::{basic_stats, mfd_points, time_space_points};
use mesoflow::plot::{render_mfd_svg, render_tsd_svg};
use mesoflow::{Scenario, SimConfig};

fn main() -> mesoflow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/gridlock");

    for managed in [false, true] {
        let mut scenario = Scenario::from_dir(dir)?;
        if managed {
            scenario.link_mut("NE").unwrap().merge_priority = 2.0;
            scenario.link_mut("SW").unwrap().merge_priority = 2.0;
        }
        let mut world = scenario.build(SimConfig {
            duration: 8000.0,
            ..SimConfig::default()
        })?;
        world.run()?;

        let label = if managed { "managed" } else { "default" };
        let stats = basic_stats(&world);
        println!(
            "{label}: {} of {} trips done, {} stranded",
            stats.completed_trips, stats.generated_vehicles, stats.stranded_vehicles
        );
        let mfd = mfd_points(&world, 600.0)?;
        for p in &mfd {
            println!(
                "  t={:>5}  k={:.4} veh/m  q={:.4} veh/s",
                p.t_bin, p.density, p.flow
            );
        }

        if let Some(out) = &out {
            std::fs::create_dir_all(out).map_err(|e| mesoflow::SimError::Io {
                path: out.clone(),
                source: e,
            })?;
            let lines = time_space_points(&world, &["WN", "NE", "ES", "SW"])?;
            render_tsd_svg(
                &lines,
                &format!("ring, {label}"),
                out.join(format!("tsd_{label}.svg")),
            )?;
            render_mfd_svg(
                &mfd,
                &format!("MFD, {label}"),
                out.join(format!("mfd_{label}.svg")),
            )?;
        }
    }
    Ok(())
}
