//! Simulation clock and the fixed per-step phase order.
//!
//! One call to [`World::step`] advances the clock by `Δt = τ·Δn`:
//!
//! 1. route refresh (every `Δi_B` steps),
//! 2. node model at every node, in node-list order, including arrivals and
//!    origin insertions,
//! 3. link updates,
//! 4. demand generation into origin queues,
//! 5. log records for the new state.
//!
//! Phases 2 and 3 read positions from the start of the step, so the state
//! logged at the end of step `i` describes time `(i + 1)·Δt`.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::ids::{LinkId, NodeId, PlatoonId};
use crate::kinematics::{update_link, LinkState, Platoon, PlatoonState, TrajectoryPoint};
use crate::node_transfer::{process_node, SignalTiming, TransferEvent};
use crate::routing::{maybe_refresh, AttractivenessTable};
use crate::scenario::{LinkSpec, Network, ResolvedDemand, SimConfig};

/// State of one link at the end of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRecord {
    pub t: f64,
    pub link: LinkId,
    /// Platoons on the link.
    pub platoons: u32,
    /// Mean speed over the step, 0 when empty.
    pub mean_speed: f64,
    pub entered_cum: u64,
    pub exited_cum: u64,
}

/// A route refresh and how many transfers had been logged before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshRecord {
    pub step: u64,
    pub t: f64,
    pub transfers_before: usize,
}

/// Append-only record of a run.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    /// One record per (step, link), step-major.
    pub link_records: Vec<LinkRecord>,
    pub transfers: Vec<TransferEvent>,
    pub refreshes: Vec<RefreshRecord>,
    sealed: bool,
}

impl RunLog {
    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    /// Records of step `step` (0-based), one per link.
    pub fn step_records(&self, step: usize, link_count: usize) -> &[LinkRecord] {
        &self.link_records[step * link_count..(step + 1) * link_count]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlatoonCounts {
    pub generated: usize,
    pub waiting: usize,
    pub running: usize,
    pub arrived: usize,
    pub stranded: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct DemandStream {
    pub demand: ResolvedDemand,
    pub accumulator: f64,
}

/// The whole simulation state.
#[derive(Debug, Clone)]
pub struct World {
    pub(crate) config: SimConfig,
    pub(crate) network: Network,
    pub(crate) links: Vec<LinkState>,
    pub(crate) signals: Vec<Option<SignalTiming>>,
    pub(crate) platoons: Vec<Platoon>,
    pub(crate) waiting: Vec<VecDeque<PlatoonId>>,
    pub(crate) demands: Vec<DemandStream>,
    pub(crate) attractiveness: AttractivenessTable,
    pub(crate) rng: ChaCha8Rng,
    clock: u64,
    log: RunLog,
    counts: PlatoonCounts,
}

impl World {
    pub(crate) fn new(
        config: SimConfig,
        network: Network,
        links: &[LinkSpec],
        demands: Vec<ResolvedDemand>,
    ) -> World {
        let link_states: Vec<LinkState> = links
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                LinkState::new(
                    LinkId::from_index(i),
                    spec.clone(),
                    network.link_from[i],
                    network.link_to[i],
                )
            })
            .collect();
        let free_flow: Vec<f64> = links.iter().map(LinkSpec::free_flow_time).collect();
        let destinations: Vec<NodeId> = demands.iter().map(|d| d.destination).collect();
        let attractiveness = AttractivenessTable::initialized(&network, &destinations, &free_flow);
        let signals = network
            .nodes
            .iter()
            .map(|n| {
                n.signal
                    .as_ref()
                    .map(|p| SignalTiming::resolve(p, &network))
            })
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        World {
            waiting: vec![VecDeque::new(); network.node_count()],
            demands: demands
                .into_iter()
                .map(|demand| DemandStream {
                    demand,
                    accumulator: 0.0,
                })
                .collect(),
            config,
            network,
            links: link_states,
            signals,
            platoons: Vec::new(),
            attractiveness,
            rng,
            clock: 0,
            log: RunLog::default(),
            counts: PlatoonCounts::default(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn links(&self) -> &[LinkState] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &LinkState {
        &self.links[id.index()]
    }

    pub fn link_by_name(&self, name: &str) -> Option<&LinkState> {
        self.network.link_id(name).map(|id| self.link(id))
    }

    pub fn platoons(&self) -> &[Platoon] {
        &self.platoons
    }

    pub fn waiting_at(&self, node: NodeId) -> impl Iterator<Item = PlatoonId> + '_ {
        self.waiting[node.index()].iter().copied()
    }

    pub fn attractiveness(&self) -> &AttractivenessTable {
        &self.attractiveness
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    /// Completed steps.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Current simulated time `clock·Δt`.
    pub fn time(&self) -> f64 {
        self.clock as f64 * self.config.time_step()
    }

    pub fn is_finished(&self) -> bool {
        self.clock >= self.config.total_steps()
    }

    pub fn counts(&self) -> PlatoonCounts {
        self.counts
    }

    /// Sum of link lengths (m).
    pub fn total_length(&self) -> f64 {
        self.links.iter().map(LinkState::length).sum()
    }

    /// Advances the simulation by one time step.
    pub fn step(&mut self) -> Result<()> {
        if self.log.sealed || self.is_finished() {
            return Err(SimError::Validation(format!(
                "cannot step past the {} s horizon",
                self.config.duration
            )));
        }
        let step = self.clock;

        // 1. routes
        if maybe_refresh(self, step) {
            self.log.refreshes.push(RefreshRecord {
                step,
                t: self.time(),
                transfers_before: self.log.transfers.len(),
            });
        }

        // 2. nodes
        for n in 0..self.network.node_count() {
            let events = process_node(self, NodeId::from_index(n))?;
            for e in &events {
                match (e.from_link, e.to_link) {
                    (None, Some(_)) => {
                        self.counts.waiting -= 1;
                        self.counts.running += 1;
                    }
                    (Some(_), None) => {
                        self.counts.running -= 1;
                        self.counts.arrived += 1;
                    }
                    _ => {}
                }
            }
            self.log.transfers.extend(events);
        }

        // 3. links
        let dt = self.config.time_step();
        let dn = self.config.platoon_vehicles();
        for link in &mut self.links {
            update_link(link, dt, dn)?;
        }

        // 4. demand
        self.generate_demand();

        // 5. log
        self.clock += 1;
        let t = self.time();
        for link in &self.links {
            for o in link.occupants() {
                self.platoons[o.id.index()]
                    .trajectory
                    .push(TrajectoryPoint {
                        t,
                        link: link.id,
                        x: o.x,
                        v: o.v,
                    });
            }
            self.log.link_records.push(LinkRecord {
                t,
                link: link.id,
                platoons: link.len() as u32,
                mean_speed: link.mean_speed().unwrap_or(0.0),
                entered_cum: link.entered_count,
                exited_cum: link.exited_count,
            });
        }
        Ok(())
    }

    /// Feeds the demand of the current step into the origin queues.
    ///
    /// Each band accumulates `flow × overlap(step, band)` vehicles and emits a
    /// platoon whenever Δn vehicles have built up. New platoons depart at the
    /// end of the step.
    pub fn generate_demand(&mut self) -> Vec<PlatoonId> {
        let dt = self.config.time_step();
        let t0 = self.time();
        let t1 = t0 + dt;
        let dn = self.config.platoon_vehicles();
        let eps = 1e-9 * dn;
        let mut created = Vec::new();
        for stream in &mut self.demands {
            let spec = &stream.demand.spec;
            let overlap = t1.min(spec.t_end) - t0.max(spec.t_start);
            if overlap <= 0.0 || spec.flow == 0.0 {
                continue;
            }
            stream.accumulator += spec.flow * overlap;
            while stream.accumulator >= dn - eps {
                stream.accumulator -= dn;
                let id = PlatoonId::from_index(self.platoons.len());
                self.platoons.push(Platoon::new(
                    id,
                    stream.demand.origin,
                    stream.demand.destination,
                    t1,
                ));
                self.waiting[stream.demand.origin.index()].push_back(id);
                created.push(id);
            }
        }
        self.counts.generated += created.len();
        self.counts.waiting += created.len();
        created
    }

    /// Steps to the horizon, then marks unfinished platoons as stranded and seals the log.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        self.finish();
        Ok(())
    }

    /// Marks every waiting or running platoon stranded and seals the log.
    pub fn finish(&mut self) {
        if self.log.sealed {
            return;
        }
        for p in &mut self.platoons {
            if matches!(p.state, PlatoonState::Waiting | PlatoonState::Running) {
                p.state = PlatoonState::Stranded;
            }
        }
        self.counts.stranded = self.counts.waiting + self.counts.running;
        self.counts.waiting = 0;
        self.counts.running = 0;
        self.log.sealed = true;
    }

    /// Checks conservation, per-link counts and spacing against the live state.
    pub fn check_invariants(&self) -> Result<()> {
        let dn = self.config.platoon_vehicles();
        let mut running = 0;
        for link in &self.links {
            link.check_spacing(dn)?;
            running += link.len();
            for o in link.occupants() {
                let p = &self.platoons[o.id.index()];
                if p.current_link != Some(link.id) {
                    return Err(SimError::Consistency(format!(
                        "platoon {} found on `{}` but records {:?}",
                        p.id, link.spec.name, p.current_link
                    )));
                }
            }
        }
        let waiting: usize = self.waiting.iter().map(VecDeque::len).sum();
        let mut tally = PlatoonCounts {
            generated: self.platoons.len(),
            ..PlatoonCounts::default()
        };
        for p in &self.platoons {
            match p.state {
                PlatoonState::Waiting => tally.waiting += 1,
                PlatoonState::Running => tally.running += 1,
                PlatoonState::Arrived => tally.arrived += 1,
                PlatoonState::Stranded => tally.stranded += 1,
            }
        }
        if tally != self.counts {
            return Err(SimError::Consistency(format!(
                "platoon tally {tally:?} differs from running counts {:?}",
                self.counts
            )));
        }
        let c = self.counts;
        if c.generated != c.waiting + c.running + c.arrived + c.stranded {
            return Err(SimError::Consistency(format!(
                "platoons not conserved: {c:?}"
            )));
        }
        if !self.log.sealed && (c.running != running || c.waiting != waiting) {
            return Err(SimError::Consistency(format!(
                "{running} platoons on links and {waiting} queued, counts say {c:?}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_world, parse_demand, parse_links, parse_nodes};

    fn corridor(demand: &str, duration: f64) -> World {
        let nodes = parse_nodes("name,x,y\nW,0,0\nE,1000,0").unwrap();
        let links = parse_links(
            "name,from,to,length,free_flow_speed,jam_density,merge_priority\nWE,W,E,1000,20,0.2,",
        )
        .unwrap();
        let demand = parse_demand(&format!("orig,dest,start_t,end_t,flow\n{demand}")).unwrap();
        let config = SimConfig {
            duration,
            ..SimConfig::default()
        };
        build_world(config, &nodes, &links, &demand).unwrap()
    }

    #[test]
    fn accumulator_gains_two_vehicles_per_step() {
        let mut w = corridor("W,E,0,1200,0.4", 1200.0);
        let mut per_step = Vec::new();
        for _ in 0..5 {
            per_step.push(w.generate_demand().len());
            w.clock += 1;
        }
        // 2 vehicles per step, one platoon of 5 every 2.5 steps
        assert_eq!(per_step, vec![0, 0, 1, 0, 1]);
    }

    #[test]
    fn band_yields_exact_platoon_count() {
        let mut w = corridor("W,E,0,1200,0.4", 1500.0);
        w.run().unwrap();
        assert_eq!(w.counts().generated, 96);
        assert!(w.demands[0].accumulator.abs() < 1e-9);
    }

    #[test]
    fn zero_demand_creates_nothing() {
        let mut w = corridor("W,E,0,1200,0", 1200.0);
        w.run().unwrap();
        assert_eq!(w.counts().generated, 0);
    }

    #[test]
    fn empty_world_step() {
        let mut w = corridor("W,E,0,100,0", 100.0);
        w.step().unwrap();
        assert_eq!(w.clock(), 1);
        assert_eq!(w.log().link_records.len(), 1);
        assert!(w.log().transfers.is_empty());
    }

    #[test]
    fn one_point_per_step_mid_link() {
        let mut w = corridor("W,E,0,5,1", 500.0);
        w.step().unwrap(); // generated
        w.step().unwrap(); // inserted and moved
        let p = &w.platoons()[0];
        assert_eq!(p.trajectory.len(), 1);
        w.step().unwrap();
        assert_eq!(w.platoons()[0].trajectory.len(), 2);
    }

    #[test]
    fn duration_sets_step_count() {
        let mut w = corridor("W,E,0,100,0.1", 7200.0);
        w.run().unwrap();
        assert_eq!(w.clock(), 1440);
        assert!(w.step().is_err());
    }

    #[test]
    fn free_flow_trip_time() {
        let mut w = corridor("W,E,0,5,1", 500.0);
        w.run().unwrap();
        let p = &w.platoons()[0];
        assert_eq!(p.state, PlatoonState::Arrived);
        assert_eq!(p.trip_time(), Some(50.0));
    }

    #[test]
    fn truncated_trip_is_stranded() {
        let mut w = corridor("W,E,0,5,1", 30.0);
        w.run().unwrap();
        assert_eq!(w.platoons()[0].state, PlatoonState::Stranded);
        assert_eq!(w.counts().stranded, 1);
        w.check_invariants().unwrap();
    }

    #[test]
    fn invariants_hold_each_step() {
        let mut w = corridor("W,E,0,600,0.9", 1200.0);
        while !w.is_finished() {
            w.step().unwrap();
            w.check_invariants().unwrap();
        }
    }
}
