//! Post-run statistics and CSV export.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::engine::World;
use crate::error::{Result, SimError};
use crate::ids::{LinkId, NodeId, PlatoonId};
use crate::kinematics::PlatoonState;
use crate::routing::shortest_path_tree;

/// Default MFD aggregation window (s).
pub const DEFAULT_MFD_BIN: f64 = 300.0;

/// Trip-level totals in vehicle units.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TripStats {
    pub completed_trips: u64,
    /// Vehicle-seconds, stranded trips included up to the horizon.
    pub total_travel_time: f64,
    /// Mean over completed trips (s).
    pub average_travel_time: f64,
    /// Completed trips' travel time in excess of the empty-network shortest time.
    pub total_delay: f64,
    pub generated_vehicles: u64,
    pub stranded_vehicles: u64,
    /// Part of `total_travel_time` spent by stranded trips.
    pub stranded_travel_time: f64,
}

impl TripStats {
    pub fn completion_rate(&self) -> f64 {
        if self.generated_vehicles == 0 {
            1.0
        } else {
            self.completed_trips as f64 / self.generated_vehicles as f64
        }
    }
}

/// Empty-network shortest travel time between two nodes.
pub fn free_flow_time(world: &World, origin: NodeId, destination: NodeId) -> f64 {
    let costs: Vec<f64> = world
        .links()
        .iter()
        .map(|l| l.spec.free_flow_time())
        .collect();
    shortest_path_tree(world.network(), &costs, destination).dist[origin.index()]
}

pub fn basic_stats(world: &World) -> TripStats {
    let dn = world.config().platoon_vehicles();
    let duration = world.time();
    let costs: Vec<f64> = world
        .links()
        .iter()
        .map(|l| l.spec.free_flow_time())
        .collect();
    let mut baseline = vec![None; world.network().node_count()];
    let mut stats = TripStats::default();
    let mut completed_time = 0.0;
    for p in world.platoons() {
        stats.generated_vehicles += u64::from(world.config().platoon_size);
        match p.state {
            PlatoonState::Arrived => {
                let trip = p
                    .trip_time()
                    .expect("arrived platoons have an arrival time");
                let dist = baseline[p.destination.index()].get_or_insert_with(|| {
                    shortest_path_tree(world.network(), &costs, p.destination).dist
                });
                stats.completed_trips += u64::from(world.config().platoon_size);
                completed_time += trip * dn;
                stats.total_delay += (trip - dist[p.origin.index()]) * dn;
            }
            _ => {
                let trip = (duration - p.depart_t).max(0.0);
                stats.stranded_vehicles += u64::from(world.config().platoon_size);
                stats.stranded_travel_time += trip * dn;
            }
        }
    }
    stats.total_travel_time = completed_time + stats.stranded_travel_time;
    if stats.completed_trips > 0 {
        stats.average_travel_time = completed_time / stats.completed_trips as f64;
    }
    stats
}

/// Cumulative arrival and departure counts of a link, in vehicles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulativePoint {
    pub t: f64,
    pub arrivals: f64,
    pub departures: f64,
}

pub fn cumulative_counts(world: &World, link: &str) -> Result<Vec<CumulativePoint>> {
    let id = world
        .network()
        .link_id(link)
        .ok_or_else(|| SimError::UnknownLink(link.to_string()))?;
    let dn = world.config().platoon_vehicles();
    let n = world.links().len();
    let mut out = vec![CumulativePoint {
        t: 0.0,
        arrivals: 0.0,
        departures: 0.0,
    }];
    out.extend(
        world
            .log()
            .link_records
            .iter()
            .skip(id.index())
            .step_by(n)
            .map(|r| CumulativePoint {
                t: r.t,
                arrivals: r.entered_cum as f64 * dn,
                departures: r.exited_cum as f64 * dn,
            }),
    );
    Ok(out)
}

/// Network-wide density and flow over one time bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfdPoint {
    pub t_bin: f64,
    /// veh/m
    pub density: f64,
    /// veh/s
    pub flow: f64,
}

pub fn mfd_points(world: &World, bin: f64) -> Result<Vec<MfdPoint>> {
    let all: Vec<LinkId> = world.links().iter().map(|l| l.id).collect();
    mfd_points_over(world, &all, bin)
}

/// Edie-style density and flow restricted to `links`.
///
/// Density is total time spent divided by (length × time); flow is total
/// distance travelled divided by (length × time).
pub fn mfd_points_over(world: &World, links: &[LinkId], bin: f64) -> Result<Vec<MfdPoint>> {
    let dt = world.config().time_step();
    let ratio = bin / dt;
    if !(ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-6) {
        return Err(SimError::Validation(format!(
            "MFD bin {bin} s is not a positive multiple of the {dt} s step"
        )));
    }
    let per_bin = ratio.round() as usize;
    let dn = world.config().platoon_vehicles();
    let n = world.links().len();
    let length: f64 = links.iter().map(|&l| world.link(l).length()).sum();
    let steps = world.log().link_records.len() / n.max(1);
    if steps == 0 || length == 0.0 {
        return Ok(Vec::new());
    }
    let mut points = Vec::new();
    for b in 0..steps.div_ceil(per_bin) {
        let first = b * per_bin;
        let last = (first + per_bin).min(steps);
        let mut time_spent = 0.0;
        let mut distance = 0.0;
        for s in first..last {
            let records = world.log().step_records(s, n);
            for &l in links {
                let r = &records[l.index()];
                let vehicles = f64::from(r.platoons) * dn;
                time_spent += vehicles * dt;
                distance += vehicles * r.mean_speed * dt;
            }
        }
        let span = (last - first) as f64 * dt;
        points.push(MfdPoint {
            t_bin: first as f64 * dt,
            density: time_spent / (length * span),
            flow: distance / (length * span),
        });
    }
    Ok(points)
}

/// Trajectory of one platoon through a corridor, as (t, distance from corridor start).
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub platoon: PlatoonId,
    pub points: Vec<(f64, f64)>,
}

/// Trajectories along a connected sequence of links.
///
/// A platoon's run is split into separate polylines whenever it leaves the
/// corridor or jumps backwards in it (e.g. when a ring closes on itself).
pub fn time_space_points(world: &World, corridor: &[&str]) -> Result<Vec<Polyline>> {
    let net = world.network();
    let mut ids = Vec::with_capacity(corridor.len());
    for name in corridor {
        ids.push(
            net.link_id(name)
                .ok_or_else(|| SimError::UnknownLink(name.to_string()))?,
        );
    }
    for pair in ids.windows(2) {
        if net.link_to[pair[0].index()] != net.link_from[pair[1].index()] {
            return Err(SimError::DisconnectedPath {
                from: net.link_name(pair[0]).to_string(),
                to: net.link_name(pair[1]).to_string(),
            });
        }
    }
    let mut slot = vec![None; world.links().len()];
    let mut offset = 0.0;
    for (k, &id) in ids.iter().enumerate() {
        if slot[id.index()].is_none() {
            slot[id.index()] = Some((k, offset));
        }
        offset += world.link(id).length();
    }

    let mut lines = Vec::new();
    for p in world.platoons() {
        let mut current: Option<(usize, Polyline)> = None;
        let mut last_t = f64::NEG_INFINITY;
        for pt in &p.trajectory {
            let Some((k, off)) = slot[pt.link.index()] else {
                if let Some((_, line)) = current.take() {
                    lines.push(line);
                }
                continue;
            };
            let continues = matches!(&current, Some((prev_k, _))
                if (*prev_k == k || *prev_k + 1 == k) && pt.t - last_t <= world.config().time_step() * 1.5);
            if !continues {
                if let Some((_, line)) = current.take() {
                    lines.push(line);
                }
                current = Some((
                    k,
                    Polyline {
                        platoon: p.id,
                        points: Vec::new(),
                    },
                ));
            }
            let (cur_k, line) = current.as_mut().expect("set above");
            *cur_k = k;
            line.points.push((pt.t, off + pt.x));
            last_t = pt.t;
        }
        if let Some((_, line)) = current {
            lines.push(line);
        }
    }
    Ok(lines)
}

/// Formats a number with at most six significant digits, shortest form.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}")
        .parse()
        .expect("scientific notation parses");
    rounded.to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| SimError::io(path, e))
}

fn line(out: &mut impl Write, path: &Path, fields: &[&str]) -> Result<()> {
    let mut s = fields.join(",");
    s.push('\n');
    out.write_all(s.as_bytes())
        .map_err(|e| SimError::io(path, e))
}

fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

/// Writes `vehicles.csv`, `links.csv`, `summary.csv` and `mfd.csv` to `out_dir`.
pub fn export_csv(world: &World, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let net = world.network();
    let dn = world.config().platoon_vehicles();
    let mut written = Vec::new();

    let path = dir.join("vehicles.csv");
    let mut out = create(&path)?;
    line(
        &mut out,
        &path,
        &["t", "platoon_id", "orig", "dest", "link", "x", "v"],
    )?;
    for p in world.platoons() {
        let orig = csv_field(net.node_name(p.origin));
        let dest = csv_field(net.node_name(p.destination));
        let id = p.id.to_string();
        for pt in &p.trajectory {
            line(
                &mut out,
                &path,
                &[
                    &fmt_num(pt.t),
                    &id,
                    &orig,
                    &dest,
                    &csv_field(net.link_name(pt.link)),
                    &fmt_num(pt.x),
                    &fmt_num(pt.v),
                ],
            )?;
        }
    }
    out.flush().map_err(|e| SimError::io(&path, e))?;
    written.push(path);

    let path = dir.join("links.csv");
    let mut out = create(&path)?;
    line(
        &mut out,
        &path,
        &["t", "link", "count", "mean_speed", "A", "D"],
    )?;
    for r in &world.log().link_records {
        line(
            &mut out,
            &path,
            &[
                &fmt_num(r.t),
                &csv_field(net.link_name(r.link)),
                &fmt_num(f64::from(r.platoons) * dn),
                &fmt_num(r.mean_speed),
                &fmt_num(r.entered_cum as f64 * dn),
                &fmt_num(r.exited_cum as f64 * dn),
            ],
        )?;
    }
    out.flush().map_err(|e| SimError::io(&path, e))?;
    written.push(path);

    let stats = basic_stats(world);
    let path = dir.join("summary.csv");
    let mut out = create(&path)?;
    line(
        &mut out,
        &path,
        &[
            "completed_trips",
            "total_travel_time",
            "average_travel_time",
            "total_delay",
            "generated_vehicles",
            "stranded_vehicles",
            "stranded_travel_time",
        ],
    )?;
    line(
        &mut out,
        &path,
        &[
            &stats.completed_trips.to_string(),
            &fmt_num(stats.total_travel_time),
            &fmt_num(stats.average_travel_time),
            &fmt_num(stats.total_delay),
            &stats.generated_vehicles.to_string(),
            &stats.stranded_vehicles.to_string(),
            &fmt_num(stats.stranded_travel_time),
        ],
    )?;
    out.flush().map_err(|e| SimError::io(&path, e))?;
    written.push(path);

    let path = dir.join("mfd.csv");
    let mut out = create(&path)?;
    line(&mut out, &path, &["t_bin", "density", "flow"])?;
    for m in mfd_points(world, default_mfd_bin(world.config().time_step()))? {
        line(
            &mut out,
            &path,
            &[&fmt_num(m.t_bin), &fmt_num(m.density), &fmt_num(m.flow)],
        )?;
    }
    out.flush().map_err(|e| SimError::io(&path, e))?;
    written.push(path);

    Ok(written)
}

/// The multiple of `dt` closest to [`DEFAULT_MFD_BIN`].
pub fn default_mfd_bin(dt: f64) -> f64 {
    (DEFAULT_MFD_BIN / dt).round().max(1.0) * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_world, parse_demand, parse_links, parse_nodes, SimConfig};

    fn run_chain(demand: &str, duration: f64) -> World {
        let nodes = parse_nodes("name,x,y\nA,0,0\nB,1000,0\nC,2000,0").unwrap();
        let links = parse_links(
            "name,from,to,length,free_flow_speed,jam_density,merge_priority\n\
             AB,A,B,1000,20,0.2,\nBC,B,C,1000,20,0.2,",
        )
        .unwrap();
        let demand = parse_demand(&format!("orig,dest,start_t,end_t,flow\n{demand}")).unwrap();
        let config = SimConfig {
            duration,
            ..SimConfig::default()
        };
        let mut w = build_world(config, &nodes, &links, &demand).unwrap();
        w.run().unwrap();
        w
    }

    #[test]
    fn free_flow_single_platoon_stats() {
        let w = run_chain("A,B,0,5,1", 300.0);
        let s = basic_stats(&w);
        assert_eq!(s.completed_trips, 5);
        assert!((s.average_travel_time - 50.0).abs() <= 5.0);
        assert!(s.total_delay <= 5.0 * 5.0);
        assert!(s.total_delay >= 0.0);
    }

    #[test]
    fn zero_demand_stats_are_zero() {
        let w = run_chain("A,C,0,5,0", 300.0);
        assert_eq!(basic_stats(&w), TripStats::default());
    }

    #[test]
    fn two_identical_platoons_double_ttt() {
        let w = run_chain("A,B,0,5,1\nA,B,100,105,1", 400.0);
        let s = basic_stats(&w);
        let trip = w.platoons()[0].trip_time().unwrap();
        assert_eq!(w.platoons()[1].trip_time().unwrap(), trip);
        assert_eq!(s.total_travel_time, 2.0 * 5.0 * trip);
    }

    #[test]
    fn unused_link_counts_zero() {
        let w = run_chain("A,B,0,5,1", 300.0);
        let c = cumulative_counts(&w, "BC").unwrap();
        assert!(c.iter().all(|p| p.arrivals == 0.0 && p.departures == 0.0));
        assert!(matches!(
            cumulative_counts(&w, "nope"),
            Err(SimError::UnknownLink(_))
        ));
    }

    #[test]
    fn band_counts_reach_total() {
        let w = run_chain("A,C,0,1200,0.4", 1800.0);
        let c = cumulative_counts(&w, "AB").unwrap();
        let last = c.last().unwrap();
        assert_eq!(last.arrivals, 480.0);
        assert_eq!(last.departures, 480.0);
        for pair in c.windows(2) {
            assert!(pair[1].arrivals >= pair[0].arrivals);
            assert!(pair[1].departures >= pair[0].departures);
            assert!(pair[1].arrivals >= pair[1].departures);
        }
    }

    #[test]
    fn empty_mfd_is_zero() {
        let w = run_chain("A,C,0,5,0", 600.0);
        let m = mfd_points(&w, 300.0).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|p| p.density == 0.0 && p.flow == 0.0));
        assert!(mfd_points(&w, 7.0).is_err());
    }

    #[test]
    fn free_flow_mfd_speed_is_u() {
        let w = run_chain("A,C,0,1200,0.2", 1800.0);
        // AB only: no platoon is ever capped at its end while moving
        let ab = w.network().link_id("AB").unwrap();
        for p in mfd_points_over(&w, &[ab], 300.0).unwrap() {
            if p.density > 0.0 {
                let v = p.flow / p.density;
                assert!((v - 20.0).abs() / 20.0 < 0.05, "{p:?}");
            }
        }
    }

    #[test]
    fn time_space_offsets() {
        let w = run_chain("A,C,0,5,1", 300.0);
        let lines = time_space_points(&w, &["AB", "BC"]).unwrap();
        assert_eq!(lines.len(), 1);
        let max = lines[0].points.iter().map(|p| p.1).fold(0.0, f64::max);
        assert_eq!(max, 2000.0);
        assert!(matches!(
            time_space_points(&w, &["BC", "AB"]),
            Err(SimError::DisconnectedPath { .. })
        ));
    }

    #[test]
    fn time_space_empty() {
        let w = run_chain("A,C,0,5,0", 300.0);
        assert!(time_space_points(&w, &["AB", "BC"]).unwrap().is_empty());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(50.0), "50");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1234567.0), "1234570");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333");
    }
}
