//! Scenario data model, CSV ingestion and world assembly.
//!
//! A scenario is three CSV tables (nodes, links, demand) plus a [`SimConfig`].
//! Parsing only checks what a single table can know; cross-references,
//! link-length feasibility and reachability are checked by [`build_world`].

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::World;
use crate::error::{Result, SimError};
use crate::ids::{LinkId, NodeId};

/// Merge priority used when the links table leaves the cell blank.
pub const DEFAULT_MERGE_PRIORITY: f64 = 0.5;

pub const NODES_HEADER: &[&str] = &["name", "x", "y"];
pub const NODES_HEADER_WITH_SIGNAL: &[&str] = &["name", "x", "y", "signal"];
pub const LINKS_HEADER: &[&str] = &[
    "name",
    "from",
    "to",
    "length",
    "free_flow_speed",
    "jam_density",
    "merge_priority",
];
pub const DEMAND_HEADER: &[&str] = &["orig", "dest", "start_t", "end_t", "flow"];

/// Global simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Per-vehicle reaction time τ (s).
    pub reaction_time: f64,
    /// Vehicles per platoon Δn.
    pub platoon_size: u32,
    /// Simulated horizon (s).
    pub duration: f64,
    pub seed: u64,
    /// Steps between shortest-path refreshes (Δi_B).
    pub route_update_interval: u32,
    /// Smoothing weight λ of the attractiveness update.
    pub route_weight: f64,
    /// Floor speed (m/s) used when turning link speeds into costs.
    pub v_min: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            reaction_time: 1.0,
            platoon_size: 5,
            duration: 3600.0,
            seed: 0,
            route_update_interval: 120,
            route_weight: 0.5,
            v_min: 1.0,
        }
    }
}

impl SimConfig {
    /// Time step Δt = τ·Δn.
    pub fn time_step(&self) -> f64 {
        self.reaction_time * f64::from(self.platoon_size)
    }

    pub fn platoon_vehicles(&self) -> f64 {
        f64::from(self.platoon_size)
    }

    /// Number of steps covering `duration`.
    pub fn total_steps(&self) -> u64 {
        (self.duration / self.time_step()).round() as u64
    }

    /// Checks the parameter ranges and rounds `duration` up to a whole number of steps.
    pub fn normalized(mut self) -> Result<SimConfig> {
        if !(self.reaction_time.is_finite() && self.reaction_time > 0.0) {
            return Err(SimError::Validation(format!(
                "reaction time must be positive, got {}",
                self.reaction_time
            )));
        }
        if self.platoon_size == 0 {
            return Err(SimError::Validation(
                "platoon size must be a positive integer".into(),
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(SimError::Validation(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.route_update_interval == 0 {
            return Err(SimError::Validation(
                "route update interval must be a positive number of steps".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.route_weight) {
            return Err(SimError::Validation(format!(
                "route weight must lie in [0, 1], got {}",
                self.route_weight
            )));
        }
        if !(self.v_min.is_finite() && self.v_min > 0.0) {
            return Err(SimError::Validation(format!(
                "v_min must be positive, got {}",
                self.v_min
            )));
        }
        let dt = self.time_step();
        let steps = (self.duration / dt - 1e-9).ceil().max(1.0);
        let rounded = steps * dt;
        if (rounded - self.duration).abs() > 1e-9 * dt {
            log::info!(
                "duration {} s is not a multiple of the {} s time step; rounded up to {} s",
                self.duration,
                dt,
                rounded
            );
        }
        self.duration = rounded;
        Ok(self)
    }
}

/// One phase of a fixed-time signal plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPhase {
    pub duration: f64,
    pub permitted: BTreeSet<String>,
}

/// Cyclic fixed-time plan gating a node's incoming links.
///
/// Text form: `offset:dur1:linkA|linkB;dur2:linkC`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPlan {
    pub offset: f64,
    pub phases: Vec<SignalPhase>,
}

impl SignalPlan {
    pub fn cycle_length(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    /// Index of the phase active at time `t`.
    pub fn active_phase(&self, t: f64) -> usize {
        let cycle = self.cycle_length();
        let mut local = (t + self.offset).rem_euclid(cycle);
        for (i, phase) in self.phases.iter().enumerate() {
            if local < phase.duration {
                return i;
            }
            local -= phase.duration;
        }
        self.phases.len() - 1
    }

    pub fn permits(&self, t: f64, link: &str) -> bool {
        self.phases[self.active_phase(t)].permitted.contains(link)
    }

    pub fn parse(text: &str) -> std::result::Result<SignalPlan, String> {
        let mut phases = Vec::new();
        let mut offset = None;
        for (k, chunk) in text.split(';').enumerate() {
            let mut parts: Vec<&str> = chunk.split(':').map(str::trim).collect();
            if k == 0 {
                if parts.len() != 3 {
                    return Err(format!("expected `offset:duration:links`, got `{chunk}`"));
                }
                offset = Some(parse_f64(parts.remove(0), "signal offset")?);
            } else if parts.len() != 2 {
                return Err(format!("expected `duration:links`, got `{chunk}`"));
            }
            let duration = parse_f64(parts[0], "phase duration")?;
            if !(duration.is_finite() && duration > 0.0) {
                return Err(format!("phase duration must be positive, got {duration}"));
            }
            let permitted = parts[1]
                .split('|')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            phases.push(SignalPhase {
                duration,
                permitted,
            });
        }
        let offset = offset.ok_or_else(|| "empty signal plan".to_string())?;
        if !offset.is_finite() {
            return Err("signal offset must be finite".into());
        }
        Ok(SignalPlan { offset, phases })
    }
}

impl fmt::Display for SignalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.offset)?;
        for (i, phase) in self.phases.iter().enumerate() {
            let sep = if i == 0 { ":" } else { ";" };
            let links: Vec<&str> = phase.permitted.iter().map(String::as_str).collect();
            write!(f, "{sep}{}:{}", phase.duration, links.join("|"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub signal: Option<SignalPlan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub name: String,
    pub from_node: String,
    pub to_node: String,
    /// Length L (m).
    pub length: f64,
    /// Free-flow speed u (m/s).
    pub free_flow_speed: f64,
    /// Jam density κ (veh/m).
    pub jam_density: f64,
    /// Merge priority α.
    pub merge_priority: f64,
}

impl LinkSpec {
    /// Jam spacing δ = 1/κ (m/veh).
    pub fn jam_spacing(&self) -> f64 {
        1.0 / self.jam_density
    }

    /// Congested wave speed δ/τ.
    pub fn wave_speed(&self, reaction_time: f64) -> f64 {
        self.jam_spacing() / reaction_time
    }

    /// Free-flow traversal time L/u.
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.free_flow_speed
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.from_node == self.to_node {
            return Err(format!(
                "link `{}` is a self-loop on `{}`",
                self.name, self.from_node
            ));
        }
        for (what, v) in [
            ("length", self.length),
            ("free_flow_speed", self.free_flow_speed),
            ("jam_density", self.jam_density),
            ("merge_priority", self.merge_priority),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!(
                    "link `{}`: {what} must be positive, got {v}",
                    self.name
                ));
            }
        }
        Ok(())
    }
}

/// A constant-rate demand band between two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSpec {
    pub origin: String,
    pub destination: String,
    pub t_start: f64,
    pub t_end: f64,
    /// Vehicles per second over `[t_start, t_end)`.
    pub flow: f64,
}

impl DemandSpec {
    pub fn total_vehicles(&self) -> f64 {
        (self.t_end - self.t_start) * self.flow
    }
}

fn parse_f64(cell: &str, what: &str) -> std::result::Result<f64, String> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| format!("{what}: `{cell}` is not a number"))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, allowed: &[&[&str]]) -> Result<usize> {
    let header = rdr.headers().map_err(|e| SimError::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().collect();
    allowed
        .iter()
        .find(|h| **h == got.as_slice())
        .map(|h| h.len())
        .ok_or_else(|| SimError::Parse {
            row: 1,
            message: format!(
                "unexpected header `{}`, expected `{}`",
                got.join(","),
                allowed[0].join(",")
            ),
        })
}

fn records(rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| SimError::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        out.push((row, rec));
    }
    Ok(out)
}

fn cell_f64(rec: &csv::StringRecord, i: usize, row: usize, what: &str) -> Result<f64> {
    parse_f64(&rec[i], what).map_err(|message| SimError::Parse { row, message })
}

/// Parses a nodes table (`name,x,y[,signal]`).
pub fn parse_nodes(text: &str) -> Result<Vec<NodeSpec>> {
    let mut rdr = reader(text);
    let width = check_header(&mut rdr, &[NODES_HEADER, NODES_HEADER_WITH_SIGNAL])?;
    let mut seen = BTreeSet::new();
    let mut nodes = Vec::new();
    for (row, rec) in records(&mut rdr)? {
        let name = rec[0].to_string();
        if name.is_empty() {
            return Err(SimError::Parse {
                row,
                message: "empty node name".into(),
            });
        }
        if !seen.insert(name.clone()) {
            return Err(SimError::DuplicateNode(name));
        }
        let x = cell_f64(&rec, 1, row, "x")?;
        let y = cell_f64(&rec, 2, row, "y")?;
        let signal = if width == 4 && !rec[3].is_empty() {
            Some(SignalPlan::parse(&rec[3]).map_err(|message| SimError::Parse { row, message })?)
        } else {
            None
        };
        nodes.push(NodeSpec { name, x, y, signal });
    }
    Ok(nodes)
}

/// Parses a links table. A blank `merge_priority` cell means [`DEFAULT_MERGE_PRIORITY`].
pub fn parse_links(text: &str) -> Result<Vec<LinkSpec>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &[LINKS_HEADER])?;
    let mut seen = BTreeSet::new();
    let mut links = Vec::new();
    for (row, rec) in records(&mut rdr)? {
        let name = rec[0].to_string();
        if name.is_empty() {
            return Err(SimError::Parse {
                row,
                message: "empty link name".into(),
            });
        }
        if !seen.insert(name.clone()) {
            return Err(SimError::DuplicateLink(name));
        }
        let merge_priority = if rec[6].is_empty() {
            DEFAULT_MERGE_PRIORITY
        } else {
            cell_f64(&rec, 6, row, "merge_priority")?
        };
        let link = LinkSpec {
            name,
            from_node: rec[1].to_string(),
            to_node: rec[2].to_string(),
            length: cell_f64(&rec, 3, row, "length")?,
            free_flow_speed: cell_f64(&rec, 4, row, "free_flow_speed")?,
            jam_density: cell_f64(&rec, 5, row, "jam_density")?,
            merge_priority,
        };
        link.validate()
            .map_err(|m| SimError::Validation(format!("row {row}: {m}")))?;
        links.push(link);
    }
    Ok(links)
}

/// Parses a demand table (`orig,dest,start_t,end_t,flow`).
pub fn parse_demand(text: &str) -> Result<Vec<DemandSpec>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &[DEMAND_HEADER])?;
    let mut demands = Vec::new();
    for (row, rec) in records(&mut rdr)? {
        let d = DemandSpec {
            origin: rec[0].to_string(),
            destination: rec[1].to_string(),
            t_start: cell_f64(&rec, 2, row, "start_t")?,
            t_end: cell_f64(&rec, 3, row, "end_t")?,
            flow: cell_f64(&rec, 4, row, "flow")?,
        };
        if !(d.t_start.is_finite() && d.t_end.is_finite() && d.t_start < d.t_end) {
            return Err(SimError::Validation(format!(
                "row {row}: start_t {} must be before end_t {}",
                d.t_start, d.t_end
            )));
        }
        if d.t_start < 0.0 {
            return Err(SimError::Validation(format!(
                "row {row}: start_t must not be negative"
            )));
        }
        if !(d.flow.is_finite() && d.flow >= 0.0) {
            return Err(SimError::Validation(format!(
                "row {row}: flow must be non-negative, got {}",
                d.flow
            )));
        }
        if d.origin == d.destination {
            return Err(SimError::Validation(format!(
                "row {row}: origin and destination are both `{}`",
                d.origin
            )));
        }
        demands.push(d);
    }
    Ok(demands)
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
}

// Writing into a Vec<u8> cannot fail, so the `expect`s below only guard csv's API.

pub fn nodes_to_csv(nodes: &[NodeSpec]) -> String {
    let mut w = writer();
    w.write_record(NODES_HEADER_WITH_SIGNAL).expect("in-memory");
    for n in nodes {
        let signal = n.signal.as_ref().map(|s| s.to_string()).unwrap_or_default();
        w.write_record([n.name.clone(), n.x.to_string(), n.y.to_string(), signal])
            .expect("in-memory");
    }
    finish(w)
}

pub fn links_to_csv(links: &[LinkSpec]) -> String {
    let mut w = writer();
    w.write_record(LINKS_HEADER).expect("in-memory");
    for l in links {
        w.write_record([
            l.name.clone(),
            l.from_node.clone(),
            l.to_node.clone(),
            l.length.to_string(),
            l.free_flow_speed.to_string(),
            l.jam_density.to_string(),
            l.merge_priority.to_string(),
        ])
        .expect("in-memory");
    }
    finish(w)
}

pub fn demand_to_csv(demands: &[DemandSpec]) -> String {
    let mut w = writer();
    w.write_record(DEMAND_HEADER).expect("in-memory");
    for d in demands {
        w.write_record([
            d.origin.clone(),
            d.destination.clone(),
            d.t_start.to_string(),
            d.t_end.to_string(),
            d.flow.to_string(),
        ])
        .expect("in-memory");
    }
    finish(w)
}

/// The three scenario tables, parsed but not yet cross-checked.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub demands: Vec<DemandSpec>,
}

impl Scenario {
    /// Reads and parses the three CSV files; errors name the file they came from.
    pub fn from_files(
        nodes: impl AsRef<Path>,
        links: impl AsRef<Path>,
        demand: impl AsRef<Path>,
    ) -> Result<Scenario> {
        Ok(Scenario {
            nodes: load(nodes.as_ref(), parse_nodes)?,
            links: load(links.as_ref(), parse_links)?,
            demands: load(demand.as_ref(), parse_demand)?,
        })
    }

    /// Reads `nodes.csv`, `links.csv` and `demand.csv` from one directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Scenario> {
        let dir = dir.as_ref();
        Scenario::from_files(
            dir.join("nodes.csv"),
            dir.join("links.csv"),
            dir.join("demand.csv"),
        )
    }

    pub fn link_mut(&mut self, name: &str) -> Option<&mut LinkSpec> {
        self.links.iter_mut().find(|l| l.name == name)
    }

    /// Latest demand end time, or zero without demand.
    pub fn demand_horizon(&self) -> f64 {
        self.demands.iter().map(|d| d.t_end).fold(0.0, f64::max)
    }

    pub fn build(&self, config: SimConfig) -> Result<World> {
        build_world(config, &self.nodes, &self.links, &self.demands)
    }
}

fn load<T>(path: &Path, parse: fn(&str) -> Result<Vec<T>>) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse(&text).map_err(|e| SimError::InFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// Resolved static topology: names mapped to dense ids plus adjacency lists.
#[derive(Debug, Clone)]
pub struct Network {
    pub nodes: Vec<NodeSpec>,
    pub link_names: Vec<String>,
    pub link_from: Vec<NodeId>,
    pub link_to: Vec<NodeId>,
    pub incoming: Vec<Vec<LinkId>>,
    pub outgoing: Vec<Vec<LinkId>>,
    node_index: HashMap<String, NodeId>,
    link_index: HashMap<String, LinkId>,
}

impl Network {
    pub fn new(nodes: &[NodeSpec], links: &[LinkSpec]) -> Result<Network> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index
                .insert(n.name.clone(), NodeId::from_index(i))
                .is_some()
            {
                return Err(SimError::DuplicateNode(n.name.clone()));
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        let mut incoming = vec![Vec::new(); nodes.len()];
        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut link_from = Vec::with_capacity(links.len());
        let mut link_to = Vec::with_capacity(links.len());
        for (i, l) in links.iter().enumerate() {
            let id = LinkId::from_index(i);
            if link_index.insert(l.name.clone(), id).is_some() {
                return Err(SimError::DuplicateLink(l.name.clone()));
            }
            l.validate().map_err(SimError::Validation)?;
            let from = *node_index
                .get(&l.from_node)
                .ok_or_else(|| SimError::UnknownNode(l.from_node.clone()))?;
            let to = *node_index
                .get(&l.to_node)
                .ok_or_else(|| SimError::UnknownNode(l.to_node.clone()))?;
            outgoing[from.index()].push(id);
            incoming[to.index()].push(id);
            link_from.push(from);
            link_to.push(to);
        }
        Ok(Network {
            nodes: nodes.to_vec(),
            link_names: links.iter().map(|l| l.name.clone()).collect(),
            link_from,
            link_to,
            incoming,
            outgoing,
            node_index,
            link_index,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.link_names.len()
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_index.get(name).copied()
    }

    pub fn link_id(&self, name: &str) -> Option<LinkId> {
        self.link_index.get(name).copied()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn link_name(&self, id: LinkId) -> &str {
        &self.link_names[id.index()]
    }

    /// Nodes that can reach `z` over the static topology (including `z`).
    pub fn reaches(&self, z: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([z]);
        seen[z.index()] = true;
        while let Some(v) = queue.pop_front() {
            for &l in &self.incoming[v.index()] {
                let tail = self.link_from[l.index()];
                if !seen[tail.index()] {
                    seen[tail.index()] = true;
                    queue.push_back(tail);
                }
            }
        }
        seen
    }
}

/// Demand band with node names resolved.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedDemand {
    pub spec: DemandSpec,
    pub origin: NodeId,
    pub destination: NodeId,
}

/// Cross-checks the tables and assembles a runnable [`World`].
pub fn build_world(
    config: SimConfig,
    nodes: &[NodeSpec],
    links: &[LinkSpec],
    demands: &[DemandSpec],
) -> Result<World> {
    let config = config.normalized()?;
    let network = Network::new(nodes, links)?;
    let dn = config.platoon_vehicles();

    for l in links {
        if l.length < l.jam_spacing() * dn {
            return Err(SimError::Validation(format!(
                "link `{}` of length {} m cannot hold one platoon ({} m needed)",
                l.name,
                l.length,
                l.jam_spacing() * dn
            )));
        }
    }

    for node in nodes {
        let Some(plan) = &node.signal else { continue };
        let id = network.node_id(&node.name).expect("indexed above");
        let incoming: BTreeSet<&str> = network.incoming[id.index()]
            .iter()
            .map(|&l| network.link_name(l))
            .collect();
        for phase in &plan.phases {
            for name in &phase.permitted {
                if !incoming.contains(name.as_str()) {
                    return Err(SimError::Validation(format!(
                        "signal at `{}` lists `{name}`, which is not an incoming link",
                        node.name
                    )));
                }
            }
        }
        for name in incoming {
            if !plan.phases.iter().any(|p| p.permitted.contains(name)) {
                return Err(SimError::Validation(format!(
                    "signal at `{}` never permits incoming link `{name}`",
                    node.name
                )));
            }
        }
    }

    let mut reach_cache: HashMap<NodeId, Vec<bool>> = HashMap::new();
    let mut resolved = Vec::with_capacity(demands.len());
    for d in demands {
        let origin = network
            .node_id(&d.origin)
            .ok_or_else(|| SimError::UnknownNode(d.origin.clone()))?;
        let destination = network
            .node_id(&d.destination)
            .ok_or_else(|| SimError::UnknownNode(d.destination.clone()))?;
        if origin == destination {
            return Err(SimError::Validation(format!(
                "demand from `{}` to itself",
                d.origin
            )));
        }
        if d.t_end > config.duration + 1e-9 {
            return Err(SimError::Validation(format!(
                "demand {} -> {} ends at {} s, after the {} s horizon",
                d.origin, d.destination, d.t_end, config.duration
            )));
        }
        let reach = reach_cache
            .entry(destination)
            .or_insert_with(|| network.reaches(destination));
        if !reach[origin.index()] {
            return Err(SimError::UnreachableDemand {
                origin: d.origin.clone(),
                destination: d.destination.clone(),
            });
        }
        resolved.push(ResolvedDemand {
            spec: d.clone(),
            origin,
            destination,
        });
    }

    Ok(World::new(config, network, links, resolved))
}

/// Paths of the three tables that make up a scenario directory.
pub fn scenario_paths(dir: impl AsRef<Path>) -> [PathBuf; 3] {
    let dir = dir.as_ref();
    [
        dir.join("nodes.csv"),
        dir.join("links.csv"),
        dir.join("demand.csv"),
    ]
}
