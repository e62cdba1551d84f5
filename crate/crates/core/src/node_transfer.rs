//! Incremental node model: moving platoons across nodes.
//!
//! Each step a node visits its incoming links in a random order drawn with
//! probability proportional to merge priority. The head platoon of a visited
//! link, if it has reached the link end, moves to its chosen outgoing link when
//! that link has more than `δ·Δn` of free space at its entrance. Every incoming
//! link gets at most one attempt per step. Platoons generated at the node enter
//! through a virtual source that takes part in the same draw.

use rand::Rng;

use crate::engine::World;
use crate::error::Result;
use crate::ids::{LinkId, NodeId, PlatoonId};
use crate::kinematics::{LinkState, Platoon, PlatoonState};
use crate::routing::choose_outgoing;
use crate::scenario::{Network, NodeSpec, SignalPlan, DEFAULT_MERGE_PRIORITY};

/// A platoon crossing a node.
///
/// `from_link` is `None` when the platoon enters from its origin queue and
/// `to_link` is `None` when it is absorbed at its destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferEvent {
    pub t: f64,
    pub platoon: PlatoonId,
    pub from_link: Option<LinkId>,
    pub to_link: Option<LinkId>,
}

/// Free distance at the link entrance: position of the rearmost platoon, or `L` when empty.
pub fn vacant_space(link: &LinkState) -> f64 {
    link.rear().map_or(link.length(), |o| o.x)
}

/// Weighted sampling without replacement: a full permutation of `0..weights.len()`.
///
/// At each draw, a not-yet-selected index `k` comes next with probability
/// `weights[k] / Σ remaining weights`.
pub fn select_incoming_order<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut order = Vec::with_capacity(weights.len());
    while remaining.len() > 1 {
        let total: f64 = remaining.iter().map(|&k| weights[k]).sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = remaining.len() - 1;
        for (pos, &k) in remaining.iter().enumerate() {
            acc += weights[k];
            if target < acc {
                pick = pos;
                break;
            }
        }
        order.push(remaining.remove(pick));
    }
    order.extend(remaining);
    order
}

/// Whether `node`'s signal lets `link` discharge at time `t`. Unsignalized nodes always do.
pub fn signal_permits(node: &NodeSpec, t: f64, link: &str) -> bool {
    node.signal
        .as_ref()
        .is_none_or(|plan| plan.permits(t, link))
}

/// A signal plan with link names resolved to ids.
#[derive(Debug, Clone)]
pub(crate) struct SignalTiming {
    plan: SignalPlan,
    permitted: Vec<Vec<LinkId>>,
}

impl SignalTiming {
    pub(crate) fn resolve(plan: &SignalPlan, net: &Network) -> SignalTiming {
        let permitted = plan
            .phases
            .iter()
            .map(|p| p.permitted.iter().filter_map(|n| net.link_id(n)).collect())
            .collect();
        SignalTiming {
            plan: plan.clone(),
            permitted,
        }
    }

    pub(crate) fn permits(&self, t: f64, link: LinkId) -> bool {
        self.permitted[self.plan.active_phase(t)].contains(&link)
    }
}

/// Marks a platoon as absorbed at its destination at time `t`.
///
/// Platoons that are not at the end of their current link are left untouched.
pub fn finalize_arrival(platoon: &mut Platoon, link: &LinkState, t: f64) -> bool {
    let at_end = link.head().is_some_and(|o| o.id == platoon.id) && link.head_at_end();
    if !at_end || link.to != platoon.destination {
        return false;
    }
    platoon.state = PlatoonState::Arrived;
    platoon.arrival_t = Some(t);
    platoon.current_link = None;
    platoon.next_link = None;
    true
}

#[derive(Debug, Clone, Copy)]
enum Feeder {
    Link(LinkId),
    Origin,
}

/// Runs the node model at `node` for the current step.
pub fn process_node(world: &mut World, node: NodeId) -> Result<Vec<TransferEvent>> {
    let t = world.time();
    let dn = world.config.platoon_vehicles();
    let mut events = Vec::new();

    let mut feeders: Vec<Feeder> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let signal = world.signals[node.index()].as_ref();
    for &l in &world.network.incoming[node.index()] {
        let link = &world.links[l.index()];
        if !link.head_at_end() {
            continue;
        }
        if signal.is_some_and(|s| !s.permits(t, l)) {
            continue;
        }
        feeders.push(Feeder::Link(l));
        weights.push(link.spec.merge_priority);
    }
    if !world.waiting[node.index()].is_empty() {
        feeders.push(Feeder::Origin);
        weights.push(DEFAULT_MERGE_PRIORITY);
    }
    if feeders.is_empty() {
        return Ok(events);
    }

    let order = if feeders.len() == 1 {
        vec![0]
    } else {
        select_incoming_order(&weights, &mut world.rng)
    };

    for k in order {
        match feeders[k] {
            Feeder::Link(l) => {
                let head = world.links[l.index()].head().expect("feeder has a head").id;
                let platoon = &mut world.platoons[head.index()];
                if platoon.destination == node {
                    finalize_arrival(platoon, &world.links[l.index()], t);
                    world.links[l.index()].pop_head();
                    events.push(TransferEvent {
                        t,
                        platoon: head,
                        from_link: Some(l),
                        to_link: None,
                    });
                    continue;
                }
                let out = match platoon.next_link {
                    Some(o) => o,
                    None => {
                        let o = choose_outgoing(
                            &world.network,
                            &world.attractiveness,
                            node,
                            platoon.destination,
                            &mut world.rng,
                        )?;
                        platoon.next_link = Some(o);
                        o
                    }
                };
                let receiver = &world.links[out.index()];
                if vacant_space(receiver) > receiver.jam_spacing() * dn {
                    world.links[l.index()].pop_head();
                    world.links[out.index()].push_entry(head);
                    platoon.current_link = Some(out);
                    platoon.next_link = None;
                    events.push(TransferEvent {
                        t,
                        platoon: head,
                        from_link: Some(l),
                        to_link: Some(out),
                    });
                }
            }
            Feeder::Origin => {
                let head = *world.waiting[node.index()]
                    .front()
                    .expect("non-empty queue");
                let platoon = &mut world.platoons[head.index()];
                let out = match platoon.next_link {
                    Some(o) => o,
                    None => {
                        let o = choose_outgoing(
                            &world.network,
                            &world.attractiveness,
                            node,
                            platoon.destination,
                            &mut world.rng,
                        )?;
                        platoon.next_link = Some(o);
                        o
                    }
                };
                let receiver = &world.links[out.index()];
                if vacant_space(receiver) > receiver.jam_spacing() * dn {
                    world.waiting[node.index()].pop_front();
                    world.links[out.index()].push_entry(head);
                    platoon.state = PlatoonState::Running;
                    platoon.current_link = Some(out);
                    platoon.next_link = None;
                    events.push(TransferEvent {
                        t,
                        platoon: head,
                        from_link: None,
                        to_link: Some(out),
                    });
                }
            }
        }
    }
    Ok(events)
}
