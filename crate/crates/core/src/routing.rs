//! Hop-count routing table toward the base station (agent 0), refreshed by
//! one gossip round per step.

use std::collections::BTreeMap;

/// Id of the base station.
pub const BASE_ID: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteEntry {
    /// Hop count to the base advertised by the neighbour (its own h + 1).
    pub hops: u32,
    pub last_heard: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutingTable {
    entries: BTreeMap<usize, RouteEntry>,
}

impl RoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, neighbour: usize) -> Option<&RouteEntry> {
        self.entries.get(&neighbour)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &RouteEntry)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn insert(&mut self, neighbour: usize, hops: u32, now: u64) {
        self.entries.insert(
            neighbour,
            RouteEntry {
                hops,
                last_heard: now,
            },
        );
    }

    /// Hop count of `neighbour` itself, if it advertised a route.
    pub fn neighbour_hop_count(&self, neighbour: usize) -> Option<u32> {
        self.entries.get(&neighbour).map(|e| e.hops - 1)
    }

    /// Smallest advertised hop count, if any.
    pub fn min_hops(&self) -> Option<u32> {
        self.entries.values().map(|e| e.hops).min()
    }

    /// Drops entries last heard before `now - ttl`.
    pub fn prune_stale(&mut self, now: u64, ttl: u64) {
        let cutoff = now.saturating_sub(ttl);
        self.entries.retain(|_, e| e.last_heard >= cutoff);
    }
}

/// Outcome of one routing round for one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutingUpdate {
    /// Own hop count; `h_max` when no route is known.
    pub hop_count: u32,
    /// Value to broadcast: `hop_count + 1`, or `h_max` when unreachable.
    pub broadcast: u32,
}

/// Absorbs the hop-count beacons heard this step, prunes stale routes and
/// recomputes the agent's own hop count.
///
/// Beacons carrying `h_max` or more mean "no route" and remove the sender's
/// entry.
pub fn routing_round(
    id: usize,
    table: &mut RoutingTable,
    beacons: &[(usize, u32)],
    now: u64,
    ttl: u64,
    h_max: u32,
) -> RoutingUpdate {
    for &(sender, hops) in beacons {
        if sender == id {
            continue;
        }
        if hops == 0 || hops >= h_max {
            table.entries.remove(&sender);
        } else {
            table.insert(sender, hops, now);
        }
    }
    table.prune_stale(now, ttl);
    let hop_count = if id == BASE_ID {
        0
    } else {
        table.min_hops().unwrap_or(h_max).min(h_max)
    };
    RoutingUpdate {
        hop_count,
        broadcast: initial_broadcast(hop_count, h_max),
    }
}

/// What an agent with hop count `hop_count` advertises.
pub fn initial_broadcast(hop_count: u32, h_max: u32) -> u32 {
    if hop_count >= h_max {
        h_max
    } else {
        (hop_count + 1).min(h_max)
    }
}
