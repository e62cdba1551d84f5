//! Reactive route choice.
//!
//! Every `Δi_B` steps the simulator builds, for each destination, a
//! shortest-path tree over current link travel times. The tree's 0/1 link
//! indicator is blended into a smoothed attractiveness
//! `B ← (1 − λ)·B + λ·b`, and a platoon standing at a node picks its next
//! link with probability proportional to `B`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::engine::World;
use crate::error::{Result, SimError};
use crate::ids::{LinkId, NodeId};
use crate::kinematics::instantaneous_travel_time;
use crate::scenario::Network;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f64, NodeId);

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then node id for a total order
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path tree into one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    pub destination: NodeId,
    /// Cost from each node to the destination; infinite when unreachable.
    pub dist: Vec<f64>,
    /// The tree link leaving each node; `None` at the destination and unreachable nodes.
    pub next_link: Vec<Option<LinkId>>,
}

/// Single-destination Dijkstra on the reversed graph.
///
/// Among equally short continuations, the link with the lexicographically
/// smallest name wins.
pub fn shortest_path_tree(net: &Network, costs: &[f64], z: NodeId) -> ShortestPathTree {
    let n = net.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[z.index()] = 0.0;
    heap.push(Scored(0.0, z));
    while let Some(Scored(d, v)) = heap.pop() {
        if done[v.index()] {
            continue;
        }
        done[v.index()] = true;
        for &l in &net.incoming[v.index()] {
            let tail = net.link_from[l.index()];
            let cand = costs[l.index()] + d;
            if cand < dist[tail.index()] {
                dist[tail.index()] = cand;
                heap.push(Scored(cand, tail));
            }
        }
    }

    let mut next_link = vec![None; n];
    for v in 0..n {
        if v == z.index() || dist[v].is_infinite() {
            continue;
        }
        let mut best: Option<(f64, LinkId)> = None;
        for &l in &net.outgoing[v] {
            let head = net.link_to[l.index()];
            let c = costs[l.index()] + dist[head.index()];
            if c.is_infinite() {
                continue;
            }
            best = match best {
                None => Some((c, l)),
                Some((bc, bl)) => {
                    if c < bc || (c == bc && net.link_name(l) < net.link_name(bl)) {
                        Some((c, l))
                    } else {
                        Some((bc, bl))
                    }
                }
            };
        }
        next_link[v] = best.map(|(_, l)| l);
    }
    ShortestPathTree {
        destination: z,
        dist,
        next_link,
    }
}

/// The 0/1 indicator `b`: 1 for every link that is its tail node's tree link toward `z`.
pub fn shortest_path_indicator(net: &Network, costs: &[f64], z: NodeId) -> Vec<f64> {
    let tree = shortest_path_tree(net, costs, z);
    indicator_from_tree(net, &tree)
}

fn indicator_from_tree(net: &Network, tree: &ShortestPathTree) -> Vec<f64> {
    let mut b = vec![0.0; net.link_count()];
    for l in tree.next_link.iter().flatten() {
        b[l.index()] = 1.0;
    }
    b
}

/// Elementwise `(1 − λ)·prev + λ·b`.
pub fn update_attractiveness(prev: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    prev.iter()
        .zip(b)
        .map(|(&p, &bi)| (1.0 - lambda) * p + lambda * bi)
        .collect()
}

/// Smoothed link attractiveness per active destination.
#[derive(Debug, Clone)]
pub struct AttractivenessTable {
    destinations: Vec<NodeId>,
    slot_of: Vec<Option<usize>>,
    weights: Vec<Vec<f64>>,
    indicator: Vec<Vec<f64>>,
    reach: Vec<Vec<bool>>,
    last_update_step: u64,
    tree_computations: u64,
}

impl AttractivenessTable {
    /// Sets `B = b` for every destination using `costs` (free-flow at build time).
    pub fn initialized(net: &Network, destinations: &[NodeId], costs: &[f64]) -> Self {
        let mut dests: Vec<NodeId> = destinations.to_vec();
        dests.sort();
        dests.dedup();
        let mut slot_of = vec![None; net.node_count()];
        for (s, z) in dests.iter().enumerate() {
            slot_of[z.index()] = Some(s);
        }
        let reach = dests.iter().map(|&z| net.reaches(z)).collect();
        let indicator: Vec<Vec<f64>> = dests
            .iter()
            .map(|&z| shortest_path_indicator(net, costs, z))
            .collect();
        AttractivenessTable {
            weights: indicator.clone(),
            tree_computations: dests.len() as u64,
            destinations: dests,
            slot_of,
            indicator,
            reach,
            last_update_step: 0,
        }
    }

    /// Recomputes every tree with `costs` and blends it in with weight `lambda`.
    pub fn refresh(&mut self, net: &Network, costs: &[f64], lambda: f64, step: u64) {
        for (s, &z) in self.destinations.iter().enumerate() {
            let b = shortest_path_indicator(net, costs, z);
            for (w, &bi) in self.weights[s].iter_mut().zip(&b) {
                *w = (1.0 - lambda) * *w + lambda * bi;
            }
            self.indicator[s] = b;
        }
        self.tree_computations += self.destinations.len() as u64;
        self.last_update_step = step;
    }

    pub fn destinations(&self) -> &[NodeId] {
        &self.destinations
    }

    fn slot(&self, z: NodeId) -> Option<usize> {
        self.slot_of.get(z.index()).copied().flatten()
    }

    /// `B[z, ·]` indexed by link, if `z` is an active destination.
    pub fn row(&self, z: NodeId) -> Option<&[f64]> {
        self.slot(z).map(|s| self.weights[s].as_slice())
    }

    /// Indicator `b[z, ·]` from the latest tree computation.
    pub fn indicator_row(&self, z: NodeId) -> Option<&[f64]> {
        self.slot(z).map(|s| self.indicator[s].as_slice())
    }

    pub fn weight(&self, z: NodeId, link: LinkId) -> f64 {
        self.row(z).map_or(0.0, |r| r[link.index()])
    }

    /// Whether `node` can reach `z` over the static topology.
    pub fn can_reach(&self, z: NodeId, node: NodeId) -> bool {
        self.slot(z).is_some_and(|s| self.reach[s][node.index()])
    }

    pub fn last_update_step(&self) -> u64 {
        self.last_update_step
    }

    /// Total single-destination tree builds so far, initialization included.
    pub fn tree_computations(&self) -> u64 {
        self.tree_computations
    }

    /// Overrides one attractiveness entry; the next refresh blends from it.
    pub fn set_weight(&mut self, z: NodeId, link: LinkId, w: f64) {
        if let Some(s) = self.slot(z) {
            self.weights[s][link.index()] = w;
        }
    }
}

fn usable(net: &Network, table: &AttractivenessTable, z: NodeId, l: LinkId) -> bool {
    let head = net.link_to[l.index()];
    head == z || table.can_reach(z, head)
}

/// Choice probabilities over the outgoing links of `node` for destination `z`.
///
/// Proportional to `B` when the row has positive mass at this node, otherwise
/// uniform over links from which `z` is still reachable.
pub fn outgoing_probabilities(
    net: &Network,
    table: &AttractivenessTable,
    node: NodeId,
    z: NodeId,
) -> Result<Vec<(LinkId, f64)>> {
    let out = &net.outgoing[node.index()];
    let total: f64 = out.iter().map(|&l| table.weight(z, l)).sum();
    if total > 0.0 {
        return Ok(out
            .iter()
            .map(|&l| (l, table.weight(z, l) / total))
            .collect());
    }
    let valid = out.iter().filter(|&&l| usable(net, table, z, l)).count();
    if valid == 0 {
        return Err(no_candidate(net, node, z));
    }
    Ok(out
        .iter()
        .map(|&l| {
            let p = if usable(net, table, z, l) {
                1.0 / valid as f64
            } else {
                0.0
            };
            (l, p)
        })
        .collect())
}

fn no_candidate(net: &Network, node: NodeId, z: NodeId) -> SimError {
    SimError::NoCandidate {
        node: net.node_name(node).to_string(),
        destination: net.node_name(z).to_string(),
    }
}

/// Samples the next link for a platoon bound for `z` standing at `node`.
pub fn choose_outgoing<R: Rng + ?Sized>(
    net: &Network,
    table: &AttractivenessTable,
    node: NodeId,
    z: NodeId,
    rng: &mut R,
) -> Result<LinkId> {
    let out = &net.outgoing[node.index()];
    match out.len() {
        0 => return Err(no_candidate(net, node, z)),
        1 => {
            let l = out[0];
            return if usable(net, table, z, l) {
                Ok(l)
            } else {
                Err(no_candidate(net, node, z))
            };
        }
        _ => {}
    }
    let total: f64 = out.iter().map(|&l| table.weight(z, l)).sum();
    if total > 0.0 {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = out[0];
        for &l in out {
            let w = table.weight(z, l);
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last_positive = l;
            if target < acc {
                return Ok(l);
            }
        }
        return Ok(last_positive);
    }
    let valid: Vec<LinkId> = out
        .iter()
        .copied()
        .filter(|&l| usable(net, table, z, l))
        .collect();
    if valid.is_empty() {
        return Err(no_candidate(net, node, z));
    }
    Ok(valid[rng.random_range(0..valid.len())])
}

/// Refreshes link costs and attractiveness when `step` is a multiple of `Δi_B`.
///
/// Step 0 is the initialization done when the world is built, so nothing
/// happens here for it. Returns whether a refresh took place.
pub fn maybe_refresh(world: &mut World, step: u64) -> bool {
    let interval = u64::from(world.config.route_update_interval);
    if step == 0 || !step.is_multiple_of(interval) {
        return false;
    }
    let v_min = world.config.v_min;
    let costs: Vec<f64> = world
        .links
        .iter_mut()
        .map(|l| {
            l.cost_cache = instantaneous_travel_time(l, v_min);
            l.cost_cache
        })
        .collect();
    let lambda = world.config.route_weight;
    world
        .attractiveness
        .refresh(&world.network, &costs, lambda, step);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{LinkSpec, NodeSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(name: &str) -> NodeSpec {
        NodeSpec {
            name: name.into(),
            x: 0.0,
            y: 0.0,
            signal: None,
        }
    }

    fn link(name: &str, from: &str, to: &str) -> LinkSpec {
        LinkSpec {
            name: name.into(),
            from_node: from.into(),
            to_node: to.into(),
            length: 1000.0,
            free_flow_speed: 20.0,
            jam_density: 0.2,
            merge_priority: 0.5,
        }
    }

    fn net(nodes: &[&str], links: &[(&str, &str, &str)]) -> Network {
        let nodes: Vec<NodeSpec> = nodes.iter().map(|n| node(n)).collect();
        let links: Vec<LinkSpec> = links.iter().map(|(n, a, b)| link(n, a, b)).collect();
        Network::new(&nodes, &links).unwrap()
    }

    #[test]
    fn parallel_links_strict_order() {
        let g = net(&["O", "Z"], &[("A", "O", "Z"), ("B", "O", "Z")]);
        let b = shortest_path_indicator(&g, &[50.0, 60.0], NodeId(1));
        assert_eq!(b, vec![1.0, 0.0]);
    }

    #[test]
    fn ties_go_to_smallest_name() {
        let g = net(&["O", "Z"], &[("A", "O", "Z"), ("B", "O", "Z")]);
        assert_eq!(
            shortest_path_indicator(&g, &[50.0, 50.0], NodeId(1)),
            vec![1.0, 0.0]
        );
        // same geometry with the names swapped: still the link called "A"
        let g = net(&["O", "Z"], &[("B", "O", "Z"), ("A", "O", "Z")]);
        assert_eq!(
            shortest_path_indicator(&g, &[50.0, 50.0], NodeId(1)),
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn chain_all_on_tree() {
        let g = net(&["A", "B", "Z"], &[("o1", "A", "B"), ("o2", "B", "Z")]);
        assert_eq!(
            shortest_path_indicator(&g, &[10.0, 10.0], NodeId(2)),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn unreachable_tails_are_zero() {
        let g = net(&["A", "B", "Z"], &[("ab", "A", "B"), ("za", "Z", "A")]);
        let tree = shortest_path_tree(&g, &[1.0, 1.0], NodeId(2));
        assert!(tree.dist[0].is_infinite());
        assert_eq!(
            shortest_path_indicator(&g, &[1.0, 1.0], NodeId(2)),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn attractiveness_update_cases() {
        assert_eq!(update_attractiveness(&[1.0], &[0.0], 0.5), vec![0.5]);
        assert_eq!(
            update_attractiveness(&[0.3, 0.7], &[1.0, 0.0], 1.0),
            vec![1.0, 0.0]
        );
        assert_eq!(
            update_attractiveness(&[0.3, 0.7], &[1.0, 0.0], 0.0),
            vec![0.3, 0.7]
        );
    }

    fn two_way_table(wa: f64, wb: f64) -> (Network, AttractivenessTable) {
        let g = net(&["O", "Z"], &[("A", "O", "Z"), ("B", "O", "Z")]);
        let mut t = AttractivenessTable::initialized(&g, &[NodeId(1)], &[1.0, 1.0]);
        t.set_weight(NodeId(1), LinkId(0), wa);
        t.set_weight(NodeId(1), LinkId(1), wb);
        (g, t)
    }

    fn frequency_of_a(wa: f64, wb: f64, seed: u64) -> f64 {
        let (g, t) = two_way_table(wa, wb);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| {
                choose_outgoing(&g, &t, NodeId(0), NodeId(1), &mut rng).unwrap() == LinkId(0)
            })
            .count();
        hits as f64 / n as f64
    }

    #[test]
    fn symmetric_choice() {
        assert!((frequency_of_a(0.5, 0.5, 1) - 0.5).abs() < 0.02);
    }

    #[test]
    fn degenerate_choice() {
        assert_eq!(frequency_of_a(1.0, 0.0, 2), 1.0);
    }

    #[test]
    fn weighted_choice() {
        assert!((frequency_of_a(0.75, 0.25, 3) - 0.75).abs() < 0.02);
    }

    #[test]
    fn zero_row_falls_back_to_reachable_links() {
        // C leads to a dead end and must never be picked
        let g = net(
            &["O", "Z", "D"],
            &[("A", "O", "Z"), ("B", "O", "Z"), ("C", "O", "D")],
        );
        let mut t = AttractivenessTable::initialized(&g, &[NodeId(1)], &[1.0, 1.0, 1.0]);
        t.set_weight(NodeId(1), LinkId(0), 0.0);
        let probs = outgoing_probabilities(&g, &t, NodeId(0), NodeId(1)).unwrap();
        assert_eq!(probs[0].1, 0.5);
        assert_eq!(probs[1].1, 0.5);
        assert_eq!(probs[2].1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let l = choose_outgoing(&g, &t, NodeId(0), NodeId(1), &mut rng).unwrap();
            assert_ne!(l, LinkId(2));
        }
    }

    #[test]
    fn no_outgoing_is_error() {
        let g = net(&["O", "Z", "D"], &[("A", "O", "Z")]);
        let t = AttractivenessTable::initialized(&g, &[NodeId(1)], &[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            choose_outgoing(&g, &t, NodeId(2), NodeId(1), &mut rng),
            Err(SimError::NoCandidate { .. })
        ));
    }

    #[test]
    fn lambda_one_is_all_or_nothing() {
        let g = net(&["O", "Z"], &[("A", "O", "Z"), ("B", "O", "Z")]);
        let mut t = AttractivenessTable::initialized(&g, &[NodeId(1)], &[50.0, 60.0]);
        t.refresh(&g, &[70.0, 60.0], 1.0, 10);
        assert_eq!(t.row(NodeId(1)).unwrap(), &[0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            assert_eq!(
                choose_outgoing(&g, &t, NodeId(0), NodeId(1), &mut rng).unwrap(),
                LinkId(1)
            );
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn update_is_convex(pairs in proptest::collection::vec((0.0f64..=1.0, prop::bool::ANY), 1..50),
                                lambda in 0.0f64..=1.0) {
                let prev: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let b: Vec<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { 0.0 }).collect();
                let next = update_attractiveness(&prev, &b, lambda);
                for ((p, bi), n) in prev.iter().zip(&b).zip(&next) {
                    prop_assert!(*n >= p.min(*bi) - 1e-15);
                    prop_assert!(*n <= p.max(*bi) + 1e-15);
                }
            }

            #[test]
            fn probabilities_normalize(w in proptest::collection::vec(0.0f64..5.0, 2..6)) {
                let names: Vec<String> = (0..w.len()).map(|i| format!("L{i}")).collect();
                let links: Vec<(&str, &str, &str)> =
                    names.iter().map(|n| (n.as_str(), "O", "Z")).collect();
                let g = net(&["O", "Z"], &links);
                let mut t = AttractivenessTable::initialized(&g, &[NodeId(1)], &vec![1.0; w.len()]);
                for (i, wi) in w.iter().enumerate() {
                    t.set_weight(NodeId(1), LinkId(i as u32), *wi);
                }
                let probs = outgoing_probabilities(&g, &t, NodeId(0), NodeId(1)).unwrap();
                let total: f64 = probs.iter().map(|p| p.1).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}
