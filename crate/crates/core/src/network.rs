//! Per-step communication graph and bandwidth-limited local message rounds.

use crate::error::ConfigError;
use crate::geometry::Point;
use crate::storage::Datum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// Edges between every pair within the communication radius.
    Radius,
    /// Edges supplied by the topology generator.
    Explicit,
}

/// Undirected communication graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    adjacency: Vec<Vec<usize>>,
    mode: GraphMode,
}

impl CommGraph {
    /// Connects every pair at distance `<= radius` (the boundary counts).
    pub fn from_positions(positions: &[Point], radius: f64) -> Self {
        let n = positions.len();
        let r2 = radius * radius;
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if positions[i].distance_sq(positions[j]) <= r2 {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        Self {
            adjacency,
            mode: GraphMode::Radius,
        }
    }

    /// Builds a graph from an explicit edge list. Self-loops and duplicate
    /// edges are rejected.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, ConfigError> {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(ConfigError::UnknownAgent {
                    id: a.max(b),
                    node_count,
                });
            }
            if a == b {
                return Err(ConfigError::invalid("edges", format!("self-edge on {a}")));
            }
            if adjacency[a].contains(&b) {
                return Err(ConfigError::invalid("edges", format!("duplicate edge {a}-{b}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self {
            adjacency,
            mode: GraphMode::Explicit,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted neighbour ids of `id`.
    pub fn neighbours(&self, id: usize) -> Result<&[usize], ConfigError> {
        self.adjacency
            .get(id)
            .map(Vec::as_slice)
            .ok_or(ConfigError::UnknownAgent {
                id,
                node_count: self.node_count(),
            })
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|adj| adj.binary_search(&b).is_ok())
    }

    /// Canonical `(min, max)` edge list in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, adj) in self.adjacency.iter().enumerate() {
            out.extend(adj.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Breadth-first hop distances from `source`; `None` when unreachable.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() == 0 || self.bfs_distances(0).iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    /// Local broadcast to every current neighbour.
    Neighbours,
    /// Unicast to one neighbour.
    Agent(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    HopCountBeacon(u32),
    FitnessBeacon(f64),
    DataTransfer(Vec<Datum>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub sender: usize,
    pub destination: Destination,
    pub payload: Payload,
}

impl Envelope {
    pub fn broadcast(sender: usize, payload: Payload) -> Self {
        Self {
            sender,
            destination: Destination::Neighbours,
            payload,
        }
    }

    pub fn unicast(sender: usize, to: usize, items: Vec<Datum>) -> Self {
        Self {
            sender,
            destination: Destination::Agent(to),
            payload: Payload::DataTransfer(items),
        }
    }
}

/// Result of one synchronous message round.
#[derive(Debug, Default)]
pub struct RoundOutcome {
    /// Messages received by each agent, in sender order.
    pub inboxes: Vec<Vec<Envelope>>,
    /// Unicast items that did not leave their sender (over the bandwidth cap
    /// or addressed to a non-neighbour). Broadcast copies over the cap are
    /// simply not sent; the originals never left the sender.
    pub returned: Vec<Vec<Datum>>,
    /// Data items each agent put on the air this round.
    pub items_sent: Vec<usize>,
}

/// Delivers every outbox along the current graph. Beacons are free; data
/// items count against `bandwidth_cap` per sender, and a broadcast datum
/// counts once regardless of fan-out.
pub fn exchange_round(outboxes: Vec<Vec<Envelope>>, graph: &CommGraph, bandwidth_cap: usize) -> RoundOutcome {
    let n = graph.node_count();
    let mut out = RoundOutcome {
        inboxes: vec![Vec::new(); n],
        returned: vec![Vec::new(); n],
        items_sent: vec![0; n],
    };
    for (sender, outbox) in outboxes.into_iter().enumerate() {
        let mut budget = bandwidth_cap;
        for env in outbox {
            debug_assert_eq!(env.sender, sender);
            match (env.destination, env.payload) {
                (Destination::Neighbours, Payload::DataTransfer(mut items)) => {
                    items.truncate(budget);
                    if items.is_empty() {
                        continue;
                    }
                    budget -= items.len();
                    out.items_sent[sender] += items.len();
                    for &j in &graph.adjacency[sender] {
                        out.inboxes[j]
                            .push(Envelope::broadcast(sender, Payload::DataTransfer(items.clone())));
                    }
                }
                (Destination::Neighbours, beacon) => {
                    for &j in &graph.adjacency[sender] {
                        out.inboxes[j].push(Envelope::broadcast(sender, beacon.clone()));
                    }
                }
                (Destination::Agent(to), Payload::DataTransfer(mut items)) => {
                    if !graph.are_adjacent(sender, to) {
                        out.returned[sender].extend(items);
                        continue;
                    }
                    let keep = items.len().min(budget);
                    out.returned[sender].extend(items.split_off(keep));
                    if items.is_empty() {
                        continue;
                    }
                    budget -= items.len();
                    out.items_sent[sender] += items.len();
                    out.inboxes[to].push(Envelope::unicast(sender, to, items));
                }
                (Destination::Agent(to), beacon) => {
                    if graph.are_adjacent(sender, to) {
                        out.inboxes[to].push(Envelope {
                            sender,
                            destination: Destination::Agent(to),
                            payload: beacon,
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::DatumId;
    use proptest::prelude::*;

    fn datum(creator: usize, seq: u64) -> Datum {
        Datum::new(DatumId { creator, seq }, 0, 10)
    }

    fn line(n: usize) -> CommGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        CommGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn boundary_distance_connects() {
        let g = CommGraph::from_positions(&[Point::new(0.0, 0.0), Point::new(3.0, 0.0)], 3.0);
        assert!(g.are_adjacent(0, 1));
        assert_eq!(g.mode(), GraphMode::Radius);
    }

    #[test]
    fn single_node_has_no_edges() {
        let g = CommGraph::from_positions(&[Point::ORIGIN], 3.0);
        assert_eq!(g.edge_count(), 0);
        assert!(g.neighbours(0).unwrap().is_empty());
    }

    #[test]
    fn neighbour_queries() {
        let g = line(3);
        assert_eq!(g.neighbours(1).unwrap(), &[0, 2]);
        let complete: Vec<_> = (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j))).collect();
        let k4 = CommGraph::from_edges(4, &complete).unwrap();
        assert!((0..4).all(|i| k4.neighbours(i).unwrap().len() == 3));
        let iso = CommGraph::from_edges(2, &[]).unwrap();
        assert!(iso.neighbours(1).unwrap().is_empty());
        assert!(matches!(
            g.neighbours(7),
            Err(ConfigError::UnknownAgent { id: 7, .. })
        ));
    }

    #[test]
    fn explicit_edges_reject_bad_input() {
        assert!(CommGraph::from_edges(2, &[(0, 0)]).is_err());
        assert!(CommGraph::from_edges(2, &[(0, 2)]).is_err());
        assert!(CommGraph::from_edges(2, &[(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn empty_round() {
        let out = exchange_round(vec![Vec::new(); 3], &line(3), 10);
        assert!(out.inboxes.iter().all(Vec::is_empty));
        assert!(out.returned.iter().all(Vec::is_empty));
    }

    #[test]
    fn cap_retains_excess() {
        let items: Vec<_> = (0..12).map(|s| datum(1, s)).collect();
        let mut outboxes = vec![Vec::new(); 2];
        outboxes[1].push(Envelope::unicast(1, 0, items));
        let out = exchange_round(outboxes, &line(2), 10);
        let Payload::DataTransfer(got) = &out.inboxes[0][0].payload else {
            panic!("expected data");
        };
        assert_eq!(got.len(), 10);
        assert_eq!(out.returned[1].len(), 2);
        assert_eq!(out.items_sent[1], 10);
    }

    #[test]
    fn beacon_fan_out() {
        let g = CommGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let mut outboxes = vec![Vec::new(); 4];
        outboxes[0].push(Envelope::broadcast(0, Payload::HopCountBeacon(1)));
        let out = exchange_round(outboxes, &g, 10);
        let copies: usize = out.inboxes.iter().map(Vec::len).sum();
        assert_eq!(copies, 3);
        assert!(out.inboxes[0].is_empty());
    }

    #[test]
    fn transfer_to_non_neighbour_bounces() {
        let mut outboxes = vec![Vec::new(); 3];
        outboxes[0].push(Envelope::unicast(0, 2, vec![datum(0, 1)]));
        let out = exchange_round(outboxes, &line(3), 10);
        assert!(out.inboxes[2].is_empty());
        assert_eq!(out.returned[0], vec![datum(0, 1)]);
    }

    #[test]
    fn brute_force_radius_graph() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (0..10)
            .map(|_| Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        let g = CommGraph::from_positions(&pts, 3.0);
        for i in 0..10 {
            for j in 0..10 {
                let expect = i != j && pts[i].distance(pts[j]) <= 3.0;
                assert_eq!(g.are_adjacent(i, j), expect, "{i}-{j}");
            }
        }
    }

    proptest! {
        #[test]
        fn conservation_symmetry_and_cap(
            coords in prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 2..12),
            sends in prop::collection::vec((0usize..12, 0usize..12, 0usize..25), 0..20),
            cap in 1usize..12,
        ) {
            let pts: Vec<_> = coords.iter().map(|&(x, y)| Point::new(x, y)).collect();
            let n = pts.len();
            let g = CommGraph::from_positions(&pts, 2.5);
            for i in 0..n {
                for &j in g.neighbours(i).unwrap() {
                    prop_assert!(g.neighbours(j).unwrap().contains(&i));
                }
            }
            let mut outboxes = vec![Vec::new(); n];
            let mut seq = 0;
            let mut total = 0;
            for (from, to, k) in sends {
                let (from, to) = (from % n, to % n);
                let items: Vec<_> = (0..k).map(|_| { seq += 1; datum(from, seq) }).collect();
                total += k;
                outboxes[from].push(Envelope::unicast(from, to, items));
            }
            let out = exchange_round(outboxes, &g, cap);
            let mut seen = std::collections::HashSet::new();
            for inbox in &out.inboxes {
                for env in inbox {
                    if let Payload::DataTransfer(items) = &env.payload {
                        for d in items { prop_assert!(seen.insert(d.id)); }
                    }
                }
            }
            for r in &out.returned {
                for d in r { prop_assert!(seen.insert(d.id)); }
            }
            prop_assert_eq!(seen.len(), total);
            prop_assert!(out.items_sent.iter().all(|&s| s <= cap));
        }
    }
}
