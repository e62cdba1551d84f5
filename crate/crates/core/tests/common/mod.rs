#![allow(dead_code)]

use std::path::PathBuf;

use mesoflow::kinematics::PlatoonState;
use mesoflow::routing::{outgoing_probabilities, AttractivenessTable};
use mesoflow::{NodeId, Scenario, SimConfig, World};

/// Every bundled scenario with the horizon the suites run it for.
pub const CORPUS: &[(&str, f64)] = &[
    ("single_link", 600.0),
    ("signal_queue", 4000.0),
    ("merge", 50000.0),
    ("parallel_routes", 20000.0),
    ("gridlock", 8000.0),
    ("gridlock_prevention", 8000.0),
    ("sioux_falls", 7200.0),
];

pub fn data_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::from_dir(data_dir(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn world(name: &str, duration: f64, seed: u64) -> World {
    let config = SimConfig {
        duration,
        seed,
        ..SimConfig::default()
    };
    scenario(name).build(config).unwrap()
}

#[derive(Debug, Default)]
pub struct PropertyReport {
    pub steps: u64,
    pub refreshes_checked: usize,
    pub violations: Vec<String>,
}

impl PropertyReport {
    fn fail(&mut self, msg: String) {
        if self.violations.len() < 20 {
            self.violations.push(msg);
        }
    }
}

fn check_probabilities(world: &World, report: &mut PropertyReport) {
    let net = world.network();
    let table = world.attractiveness();
    for &z in table.destinations() {
        for n in 0..net.node_count() {
            let node = NodeId(n as u32);
            if node == z || !table.can_reach(z, node) {
                continue;
            }
            match outgoing_probabilities(net, table, node, z) {
                Ok(p) => {
                    let total: f64 = p.iter().map(|x| x.1).sum();
                    if (total - 1.0).abs() > 1e-12 || p.iter().any(|x| x.1 < 0.0) {
                        report.fail(format!("probabilities at {n} for {z} sum to {total}"));
                    }
                }
                Err(e) => report.fail(format!("no candidate at {n} for {z}: {e}")),
            }
        }
    }
}

fn check_blend(
    before: &AttractivenessTable,
    after: &AttractivenessTable,
    lambda: f64,
    report: &mut PropertyReport,
) {
    for &z in after.destinations() {
        let (old, new, b) = (
            before.row(z).unwrap(),
            after.row(z).unwrap(),
            after.indicator_row(z).unwrap(),
        );
        for k in 0..new.len() {
            let expect = (1.0 - lambda) * old[k] + lambda * b[k];
            let (lo, hi) = (old[k].min(b[k]), old[k].max(b[k]));
            if (new[k] - expect).abs() > 1e-12 || new[k] < lo - 1e-12 || new[k] > hi + 1e-12 {
                report.fail(format!(
                    "B[{z}][{k}] = {} not between {} and {}",
                    new[k], old[k], b[k]
                ));
            }
        }
    }
}

/// Runs `world` to the horizon, checking every property after every step.
pub fn run_checked(world: &mut World) -> PropertyReport {
    let mut report = PropertyReport::default();
    let lambda = world.config().route_weight;
    check_probabilities(world, &mut report);
    while !world.is_finished() {
        let before = world.attractiveness().clone();
        if let Err(e) = world.step() {
            report.fail(format!("step {}: {e}", world.clock()));
            return report;
        }
        report.steps += 1;
        if let Err(e) = world.check_invariants() {
            report.fail(format!("step {}: {e}", world.clock()));
        }
        if world.attractiveness().last_update_step() != before.last_update_step() {
            check_blend(&before, world.attractiveness(), lambda, &mut report);
            check_probabilities(world, &mut report);
            report.refreshes_checked += 1;
        }
    }
    world.finish();
    if let Err(e) = world.check_invariants() {
        report.fail(format!("after finish: {e}"));
    }
    check_log(world, &mut report);
    report
}

fn check_log(world: &World, report: &mut PropertyReport) {
    let n = world.links().len();
    let mut last = vec![(0u64, 0u64); n];
    for r in &world.log().link_records {
        let (a, d) = (r.entered_cum, r.exited_cum);
        if a < d {
            report.fail(format!("A < D on {} at {}", r.link, r.t));
        }
        let prev = last[r.link.index()];
        if a < prev.0 || d < prev.1 {
            report.fail(format!("cumulative count fell on {} at {}", r.link, r.t));
        }
        last[r.link.index()] = (a, d);
    }

    // FIFO: exits from each link follow its entry order
    let mut entries = vec![Vec::new(); n];
    let mut exits = vec![Vec::new(); n];
    for e in &world.log().transfers {
        if let Some(l) = e.to_link {
            entries[l.index()].push(e.platoon);
        }
        if let Some(l) = e.from_link {
            exits[l.index()].push(e.platoon);
        }
    }
    for l in 0..n {
        if !entries[l].starts_with(&exits[l]) {
            report.fail(format!("FIFO broken on {}", world.network().link_names[l]));
        }
    }

    for p in world.platoons() {
        let ok = match p.state {
            PlatoonState::Arrived => p.arrival_t.is_some(),
            PlatoonState::Stranded => p.arrival_t.is_none(),
            _ => false,
        };
        if !ok {
            report.fail(format!("platoon {} ends in {:?}", p.id, p.state));
        }
    }
}
