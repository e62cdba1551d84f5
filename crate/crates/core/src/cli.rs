//! Command-line front end: load, run, export, plot.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;

use crate::analyzer::{
    basic_stats, cumulative_counts, default_mfd_bin, export_csv, fmt_num, mfd_points,
    time_space_points, TripStats,
};
use crate::error::{Result, SimError};
use crate::plot::{render_cumulative_svg, render_mfd_svg, render_tsd_svg};
use crate::scenario::{Scenario, SimConfig};

/// Run a mesoscopic traffic simulation from three CSV files.
///
/// Parameters not given on the command line take their defaults: seed 0,
/// platoon size 5, reaction time 1 s, route interval 120 steps, route weight
/// 0.5. The duration defaults to twice the latest demand end time (at least
/// 3600 s). Any flag given here overrides the value implied by the files.
#[derive(Debug, Clone, Parser)]
#[command(name = "mesoflow", version)]
pub struct CliOptions {
    #[arg(long, value_name = "PATH")]
    pub nodes: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub links: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub demand: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Vehicles per platoon.
    #[arg(long)]
    pub deltan: Option<u32>,
    /// Reaction time in seconds per vehicle.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Steps between route-choice refreshes.
    #[arg(long = "route-interval")]
    pub route_interval: Option<u32>,
    /// Weight of the newest shortest-path indicator, in [0, 1].
    #[arg(long = "route-weight")]
    pub route_weight: Option<f64>,
    /// Write a time-space diagram along these consecutive links.
    #[arg(long = "plot-tsd", value_name = "LINK,...", value_delimiter = ',')]
    pub plot_tsd: Option<Vec<String>>,
    /// Write the network MFD plot.
    #[arg(long = "plot-mfd")]
    pub plot_mfd: bool,
    /// Write cumulative count curves of one link.
    #[arg(long = "plot-cumulative", value_name = "LINK")]
    pub plot_cumulative: Option<String>,
}

impl CliOptions {
    /// Config with file-implied defaults, then command-line overrides.
    pub fn config(&self, scenario: &Scenario) -> SimConfig {
        let mut cfg = SimConfig {
            duration: default_duration(scenario),
            seed: self.seed,
            ..SimConfig::default()
        };
        if let Some(v) = self.deltan {
            cfg.platoon_size = v;
        }
        if let Some(v) = self.tau {
            cfg.reaction_time = v;
        }
        if let Some(v) = self.duration {
            cfg.duration = v;
        }
        if let Some(v) = self.route_interval {
            cfg.route_update_interval = v;
        }
        if let Some(v) = self.route_weight {
            cfg.route_weight = v;
        }
        cfg
    }
}

pub fn default_duration(scenario: &Scenario) -> f64 {
    (2.0 * scenario.demand_horizon()).max(3600.0)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub stats: TripStats,
    pub wall_seconds: f64,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn line(&self) -> String {
        format!(
            "trips={} ttt={}s delay={}s wall={:.3}s",
            self.stats.completed_trips,
            fmt_num(self.stats.total_travel_time),
            fmt_num(self.stats.total_delay),
            self.wall_seconds
        )
    }
}

fn scenario_name(opts: &CliOptions) -> String {
    opts.nodes
        .parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "scenario".into())
}

pub fn execute(opts: &CliOptions) -> Result<RunSummary> {
    let started = Instant::now();
    let scenario = Scenario::from_files(&opts.nodes, &opts.links, &opts.demand)?;
    let mut world = scenario.build(opts.config(&scenario))?;
    world.run()?;

    fs::create_dir_all(&opts.out).map_err(|e| SimError::io(opts.out.clone(), e))?;
    let mut files = export_csv(&world, &opts.out)?;
    let name = scenario_name(opts);

    if let Some(corridor) = &opts.plot_tsd {
        let names: Vec<&str> = corridor.iter().map(String::as_str).collect();
        let lines = time_space_points(&world, &names)?;
        let path = opts.out.join("tsd.svg");
        render_tsd_svg(&lines, &format!("{name}: {}", names.join(" > ")), &path)?;
        files.push(path);
    }
    if opts.plot_mfd {
        let points = mfd_points(&world, default_mfd_bin(world.config().time_step()))?;
        let path = opts.out.join("mfd.svg");
        render_mfd_svg(&points, &format!("{name}: MFD"), &path)?;
        files.push(path);
    }
    if let Some(link) = &opts.plot_cumulative {
        let curve = cumulative_counts(&world, link)?;
        let path = opts.out.join("cumulative.svg");
        render_cumulative_svg(&curve, &format!("{name}: {link}"), &path)?;
        files.push(path);
    }

    Ok(RunSummary {
        stats: basic_stats(&world),
        wall_seconds: started.elapsed().as_secs_f64(),
        files,
    })
}

/// Full entry point. Returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let opts = match CliOptions::try_parse_from(args) {
        Ok(o) => o,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(&opts) {
        Ok(summary) => {
            let _ = writeln!(out, "{}", summary.line());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_beat_defaults() {
        let opts = CliOptions::try_parse_from([
            "mesoflow",
            "--nodes",
            "n",
            "--links",
            "l",
            "--demand",
            "d",
            "--out",
            "o",
            "--deltan",
            "10",
            "--duration",
            "900",
        ])
        .unwrap();
        let scenario = Scenario {
            nodes: vec![],
            links: vec![],
            demands: vec![],
        };
        let cfg = opts.config(&scenario);
        assert_eq!(cfg.platoon_size, 10);
        assert_eq!(cfg.duration, 900.0);
        assert_eq!(cfg.reaction_time, 1.0);
    }

    #[test]
    fn corridor_is_comma_separated() {
        let opts = CliOptions::try_parse_from([
            "mesoflow",
            "--nodes",
            "n",
            "--links",
            "l",
            "--demand",
            "d",
            "--out",
            "o",
            "--plot-tsd",
            "a,b,c",
        ])
        .unwrap();
        assert_eq!(opts.plot_tsd.unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn missing_flag_is_exit_one() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(
            main_with_args(["mesoflow", "--nodes", "n"], &mut out, &mut err),
            1
        );
    }
}
