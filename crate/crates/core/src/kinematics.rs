//! Link dynamics: platoons moving under Newell's simplified car-following rule.
//!
//! Each step a platoon advances by the smaller of its free-flow distance `u·Δt`
//! and the gap left behind its leader's step-start position minus one platoon
//! length at jam spacing (`δ·Δn`). Because `Δt = τ·Δn`, the leader position
//! lagged by `τ·Δn` is exactly the position at the start of the step.

use std::collections::VecDeque;

use crate::error::{Result, SimError};
use crate::ids::{LinkId, NodeId, PlatoonId};
use crate::scenario::LinkSpec;

/// Slack for comparing positions that went through floating-point arithmetic.
pub(crate) const POSITION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatoonState {
    /// Generated, queued at its origin.
    Waiting,
    Running,
    Arrived,
    /// Still in the system when the horizon ended.
    Stranded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub link: LinkId,
    pub x: f64,
    pub v: f64,
}

/// A group of Δn vehicles moving as one unit.
#[derive(Debug, Clone)]
pub struct Platoon {
    pub id: PlatoonId,
    pub origin: NodeId,
    pub destination: NodeId,
    pub depart_t: f64,
    pub arrival_t: Option<f64>,
    pub state: PlatoonState,
    pub current_link: Option<LinkId>,
    /// Outgoing link chosen at the node ahead; cleared once the node is crossed.
    pub next_link: Option<LinkId>,
    /// One point per step spent on a link, recorded after the link update.
    pub trajectory: Vec<TrajectoryPoint>,
}

impl Platoon {
    pub(crate) fn new(id: PlatoonId, origin: NodeId, destination: NodeId, depart_t: f64) -> Self {
        Platoon {
            id,
            origin,
            destination,
            depart_t,
            arrival_t: None,
            state: PlatoonState::Waiting,
            current_link: None,
            next_link: None,
            trajectory: Vec::new(),
        }
    }

    /// Arrival minus departure, for arrived platoons.
    pub fn trip_time(&self) -> Option<f64> {
        self.arrival_t.map(|a| a - self.depart_t)
    }
}

/// A platoon's slot on a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupant {
    pub id: PlatoonId,
    /// Distance from the link start (m).
    pub x: f64,
    /// Speed over the latest step (m/s).
    pub v: f64,
}

/// Dynamic state of one link.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub id: LinkId,
    pub spec: LinkSpec,
    pub from: NodeId,
    pub to: NodeId,
    /// Front (nearest the downstream end) first.
    occupants: VecDeque<Occupant>,
    pub entered_count: u64,
    pub exited_count: u64,
    /// Travel time computed at the latest route refresh (s).
    pub cost_cache: f64,
}

impl LinkState {
    pub fn new(id: LinkId, spec: LinkSpec, from: NodeId, to: NodeId) -> Self {
        let cost_cache = spec.free_flow_time();
        LinkState {
            id,
            spec,
            from,
            to,
            occupants: VecDeque::new(),
            entered_count: 0,
            exited_count: 0,
            cost_cache,
        }
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.spec.length
    }

    #[inline]
    pub fn jam_spacing(&self) -> f64 {
        self.spec.jam_spacing()
    }

    pub fn occupants(&self) -> impl ExactSizeIterator<Item = &Occupant> + DoubleEndedIterator {
        self.occupants.iter()
    }

    pub fn len(&self) -> usize {
        self.occupants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupants.is_empty()
    }

    pub fn head(&self) -> Option<&Occupant> {
        self.occupants.front()
    }

    pub fn rear(&self) -> Option<&Occupant> {
        self.occupants.back()
    }

    /// Whether the front platoon has reached the downstream end.
    pub fn head_at_end(&self) -> bool {
        self.head().is_some_and(|o| o.x >= self.spec.length)
    }

    /// Places a platoon at the link entrance.
    pub fn push_entry(&mut self, id: PlatoonId) {
        self.occupants.push_back(Occupant { id, x: 0.0, v: 0.0 });
        self.entered_count += 1;
    }

    /// Removes the front platoon.
    pub fn pop_head(&mut self) -> Option<Occupant> {
        let o = self.occupants.pop_front()?;
        self.exited_count += 1;
        Some(o)
    }

    /// Mean of the speeds logged in the latest step, or `None` when empty.
    pub fn mean_speed(&self) -> Option<f64> {
        if self.occupants.is_empty() {
            return None;
        }
        let sum: f64 = self.occupants.iter().map(|o| o.v).sum();
        Some(sum / self.occupants.len() as f64)
    }

    /// Checks ordering, bounds and jam spacing of the current occupants.
    pub fn check_spacing(&self, platoon_size: f64) -> Result<()> {
        let min_gap = self.jam_spacing() * platoon_size;
        let len = self.spec.length;
        for o in &self.occupants {
            if o.x < -POSITION_EPS || o.x > len + POSITION_EPS {
                return Err(SimError::Consistency(format!(
                    "platoon {} at x={} outside link `{}` of length {len}",
                    o.id, o.x, self.spec.name
                )));
            }
        }
        for (front, back) in self.occupants.iter().zip(self.occupants.iter().skip(1)) {
            if front.x - back.x < min_gap - POSITION_EPS {
                return Err(SimError::Consistency(format!(
                    "platoons {} (x={}) and {} (x={}) on `{}` closer than {min_gap} m",
                    front.id, front.x, back.id, back.x, self.spec.name
                )));
            }
        }
        if self.entered_count - self.exited_count != self.occupants.len() as u64 {
            return Err(SimError::Consistency(format!(
                "link `{}` counts {} in / {} out but holds {}",
                self.spec.name,
                self.entered_count,
                self.exited_count,
                self.occupants.len()
            )));
        }
        Ok(())
    }
}

/// One step of the platoon car-following rule.
///
/// `leader_prev` is the leader's position at the start of the step, when the
/// leader is on the same link.
#[inline]
pub fn advance_platoon(
    x: f64,
    leader_prev: Option<f64>,
    u: f64,
    dt: f64,
    jam_spacing: f64,
    platoon_size: f64,
) -> f64 {
    let free = x + u * dt;
    let next = match leader_prev {
        Some(lx) => free.min(lx - jam_spacing * platoon_size),
        None => free,
    };
    next.max(x)
}

/// Moves every platoon on `link` by one step, front to back.
///
/// Positions are capped at the link length; a capped platoon waits there for
/// the node phase.
pub fn update_link(link: &mut LinkState, dt: f64, platoon_size: f64) -> Result<()> {
    let u = link.spec.free_flow_speed;
    let delta = link.jam_spacing();
    let len = link.spec.length;
    let mut leader_prev: Option<f64> = None;
    let mut leader_new = f64::INFINITY;
    for o in link.occupants.iter_mut() {
        let old = o.x;
        let new = advance_platoon(old, leader_prev, u, dt, delta, platoon_size).min(len);
        if leader_prev.is_some() && leader_new - new < delta * platoon_size - POSITION_EPS {
            return Err(SimError::Consistency(format!(
                "spacing violated behind x={leader_new} on `{}`",
                link.spec.name
            )));
        }
        o.x = new;
        o.v = (new - old) / dt;
        leader_prev = Some(old);
        leader_new = new;
    }
    Ok(())
}

/// Current traversal-time estimate: `L / max(mean speed, v_min)`, or `L/u` when empty.
pub fn instantaneous_travel_time(link: &LinkState, v_min: f64) -> f64 {
    match link.mean_speed() {
        None => link.spec.free_flow_time(),
        Some(v) => link.spec.length / v.max(v_min),
    }
}

/// Capacity of the triangular fundamental diagram, `u / (u·τ + δ)` veh/s.
pub fn link_capacity(u: f64, reaction_time: f64, jam_spacing: f64) -> f64 {
    u / (u * reaction_time + jam_spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn link(len: f64) -> LinkState {
        LinkState::new(
            LinkId(0),
            LinkSpec {
                name: "L".into(),
                from_node: "A".into(),
                to_node: "B".into(),
                length: len,
                free_flow_speed: 20.0,
                jam_density: 0.2,
                merge_priority: 0.5,
            },
            NodeId(0),
            NodeId(1),
        )
    }

    fn place(link: &mut LinkState, xs: &[f64]) {
        for (i, &x) in xs.iter().enumerate() {
            link.push_entry(PlatoonId(i as u32));
            link.occupants.back_mut().unwrap().x = x;
        }
    }

    #[test]
    fn advance_blocked_by_leader() {
        assert_eq!(
            advance_platoon(100.0, Some(200.0), 20.0, 5.0, 5.0, 5.0),
            175.0
        );
    }

    #[test]
    fn advance_free() {
        assert_eq!(advance_platoon(100.0, None, 20.0, 5.0, 5.0, 5.0), 200.0);
    }

    #[test]
    fn advance_jammed_pair_stays() {
        assert_eq!(
            advance_platoon(100.0, Some(125.0), 20.0, 5.0, 5.0, 5.0),
            100.0
        );
    }

    #[test]
    fn advance_never_moves_backwards() {
        assert_eq!(
            advance_platoon(100.0, Some(110.0), 20.0, 5.0, 5.0, 5.0),
            100.0
        );
    }

    #[test]
    fn single_platoon_free() {
        let mut l = link(1000.0);
        place(&mut l, &[0.0]);
        update_link(&mut l, 5.0, 5.0).unwrap();
        assert_eq!(l.head().unwrap().x, 100.0);
        assert_eq!(l.head().unwrap().v, 20.0);
    }

    #[test]
    fn capped_at_link_end() {
        let mut l = link(1000.0);
        place(&mut l, &[995.0]);
        update_link(&mut l, 5.0, 5.0).unwrap();
        assert_eq!(l.head().unwrap().x, 1000.0);
        assert!((l.head().unwrap().v - 1.0).abs() < 1e-12);
        assert!(l.head_at_end());
    }

    #[test]
    fn empty_link_unchanged() {
        let mut l = link(1000.0);
        update_link(&mut l, 5.0, 5.0).unwrap();
        assert!(l.is_empty());
    }

    #[test]
    fn follower_uses_leader_step_start_position() {
        let mut l = link(1000.0);
        place(&mut l, &[500.0, 450.0]);
        update_link(&mut l, 5.0, 5.0).unwrap();
        let xs: Vec<f64> = l.occupants().map(|o| o.x).collect();
        // leader free to 600, follower limited by 500 - 25
        assert_eq!(xs, vec![600.0, 475.0]);
    }

    #[test]
    fn travel_time_cases() {
        let mut l = link(1000.0);
        assert_eq!(instantaneous_travel_time(&l, 0.1), 50.0);
        place(&mut l, &[500.0]);
        l.occupants.front_mut().unwrap().v = 0.0;
        assert!((instantaneous_travel_time(&l, 0.1) - 10000.0).abs() < 1e-9);
        l.occupants.front_mut().unwrap().v = 20.0;
        assert_eq!(instantaneous_travel_time(&l, 0.1), 50.0);
    }

    #[test]
    fn capacity_values() {
        assert!((link_capacity(20.0, 1.0, 5.0) - 0.8).abs() < 1e-12);
        assert!((link_capacity(5.0, 1.0, 5.0) - 0.5).abs() < 1e-12);
        assert!((link_capacity(1e12, 1.0, 5.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn capacity_is_fd_branch_intersection() {
        // free branch q = u·k meets congested branch q = (1 - k·δ)/τ
        let (u, tau, delta): (f64, f64, f64) = (20.0, 1.0, 5.0);
        let k_crit = 1.0 / (u * tau + delta);
        assert!((u * k_crit - (1.0 - k_crit * delta) / tau).abs() < 1e-12);
        assert!((link_capacity(u, tau, delta) - u * k_crit).abs() < 1e-12);
    }

    #[test]
    fn spacing_check_detects_overlap() {
        let mut l = link(1000.0);
        place(&mut l, &[500.0, 490.0]);
        assert!(matches!(
            l.check_spacing(5.0),
            Err(SimError::Consistency(_))
        ));
    }

    proptest! {
        #[test]
        fn update_preserves_spacing_and_order(
            gaps in proptest::collection::vec(25.0f64..300.0, 1..30),
            start in 0.0f64..100.0,
            steps in 1usize..40,
        ) {
            let mut xs = vec![start];
            for g in &gaps {
                xs.push(xs.last().unwrap() + g);
            }
            let len = xs.last().unwrap() + 50.0;
            xs.reverse();
            let mut l = link(len);
            place(&mut l, &xs);
            for _ in 0..steps {
                let before: Vec<f64> = l.occupants().map(|o| o.x).collect();
                update_link(&mut l, 5.0, 5.0).unwrap();
                l.check_spacing(5.0).unwrap();
                for (o, b) in l.occupants().zip(before) {
                    prop_assert!(o.x >= b);
                    prop_assert!(o.x <= len);
                }
            }
        }
    }
}
