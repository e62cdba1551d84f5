//! Running the full pipeline from Rust: simulate, export CSVs, draw SVGs.
//!
//! Usage: `cargo run --example export_and_plots -- [OUT_DIR]`

use std::path::PathBuf;

use mesoflow::analyzer::{cumulative_counts, export_csv, mfd_points, time_space_points};
use mesoflow::plot::{render_cumulative_svg, render_mfd_svg, render_tsd_svg};
use mesoflow::{Scenario, SimConfig};

fn main() -> mesoflow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mesoflow-export"));
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/gridlock_prevention");
    let mut world = Scenario::from_dir(dir)?.build(SimConfig {
        duration: 8000.0,
        seed: 1,
        ..SimConfig::default()
    })?;
    world.run()?;

    for path in export_csv(&world, &out)? {
        println!("wrote {}", path.display());
    }
    let lines = time_space_points(&world, &["WN", "NE", "ES"])?;
    render_tsd_svg(&lines, "WN > NE > ES", out.join("tsd.svg"))?;
    render_mfd_svg(
        &mfd_points(&world, 300.0)?,
        "network MFD",
        out.join("mfd.svg"),
    )?;
    render_cumulative_svg(
        &cumulative_counts(&world, "in_W")?,
        "in_W",
        out.join("in_W.svg"),
    )?;
    println!("plots in {}", out.display());
    Ok(())
}
