//! Deterministic step loop tying mobility, sensing, routing, storage
//! policies, message exchange, data generation and corruption together.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, InvariantError, Result};
use crate::geometry::{Arena, Point};
use crate::network::{exchange_round, CommGraph, Destination, Envelope, Payload};
use crate::risk::{random_sources, RadiationSource, RiskField};
use crate::routing::{initial_broadcast, routing_round, BASE_ID};
use crate::storage::{
    apply_corruption_with, policy_step, AgentState, Datum, DatumId, DatumStatus, FitnessContext, PolicyKind,
    MAX_DATUM_BYTES,
};
use crate::topology::{
    gen_grid, gen_scale_free, initial_headings, step_lennard_jones, step_random_walk, MobilityParams,
    DEFAULT_GRID_SPACING,
};

/// Risk environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    /// Number of random sources; ignored when `sources` is set.
    pub source_count: usize,
    pub decay: f64,
    pub corruption_scale: f64,
    pub sensor_noise_std: f64,
    /// Speed of randomly placed sources, metres per step.
    pub source_speed: f64,
    pub source_jitter_std: f64,
    /// Hand-placed sources.
    pub sources: Option<Vec<RadiationSource>>,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            source_count: 3,
            decay: 1.0,
            corruption_scale: 0.01,
            sensor_noise_std: 0.05,
            source_speed: 0.0,
            source_jitter_std: 0.0,
            sources: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub agent_count: usize,
    pub arena: Arena,
    pub comm_radius: f64,
    pub topology: MobilityParams,
    pub risk: RiskParams,
    pub policy: PolicyKind,
    pub capacity_items: usize,
    pub bandwidth_cap: usize,
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
    pub generation_interval: u64,
    pub steps: u64,
    pub seed: u64,
    /// Steps a routing entry survives without a refresh.
    pub routing_ttl: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            agent_count: 100,
            arena: Arena::default(),
            comm_radius: 3.0,
            topology: MobilityParams::Grid {
                spacing: DEFAULT_GRID_SPACING,
            },
            risk: RiskParams::default(),
            policy: PolicyKind::Rass,
            capacity_items: 50,
            bandwidth_cap: 10,
            alpha: 10.0,
            beta: 1.0,
            threshold: 1.05,
            generation_interval: 10,
            steps: 500,
            seed: 1,
            routing_ttl: 3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.agent_count < 2 {
            return Err(ConfigError::invalid(
                "agent_count",
                "need the base plus at least one agent",
            ));
        }
        if !self.arena.is_valid() {
            return Err(ConfigError::invalid(
                "arena",
                "width and height must be positive and contain the base position",
            ));
        }
        if !(self.comm_radius > 0.0 && self.comm_radius.is_finite()) {
            return Err(ConfigError::invalid("comm_radius", "must be positive"));
        }
        self.topology.validate(self.comm_radius)?;
        match &self.topology {
            MobilityParams::Grid { spacing } => {
                gen_grid(self.agent_count, &self.arena, *spacing)?;
            }
            MobilityParams::LennardJones { .. } | MobilityParams::RandomWalk { .. } => {
                gen_grid(self.agent_count, &self.arena, DEFAULT_GRID_SPACING)?;
            }
            _ => {}
        }
        if let MobilityParams::Fixed { positions } = &self.topology {
            if positions.len() != self.agent_count {
                return Err(ConfigError::invalid(
                    "positions",
                    format!("{} positions for {} agents", positions.len(), self.agent_count),
                ));
            }
            if let Some(p) = positions.iter().find(|p| !self.arena.contains(**p)) {
                return Err(ConfigError::invalid(
                    "positions",
                    format!("({}, {}) outside the arena", p.x, p.y),
                ));
            }
        }
        self.risk_field_template().validate()?;
        if !(self.risk.source_speed >= 0.0 && self.risk.source_speed.is_finite()) {
            return Err(ConfigError::invalid("source_speed", "must be >= 0"));
        }
        if self.capacity_items == 0 {
            return Err(ConfigError::invalid("capacity_items", "must be >= 1"));
        }
        if self.bandwidth_cap == 0 {
            return Err(ConfigError::invalid("bandwidth_cap", "must be >= 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ConfigError::invalid("alpha", "must be >= 0"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ConfigError::invalid("beta", "must be >= 0"));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(ConfigError::invalid("threshold", "must be positive"));
        }
        if self.generation_interval == 0 {
            return Err(ConfigError::invalid("generation_interval", "must be >= 1"));
        }
        if self.steps == 0 {
            return Err(ConfigError::invalid("steps", "must be >= 1"));
        }
        if self.routing_ttl == 0 {
            return Err(ConfigError::invalid("routing_ttl", "must be >= 1"));
        }
        Ok(())
    }

    fn risk_field_template(&self) -> RiskField {
        RiskField {
            sources: self.risk.sources.clone().unwrap_or_default(),
            decay: self.risk.decay,
            sensor_noise_std: self.risk.sensor_noise_std,
            corruption_scale: self.risk.corruption_scale,
            jitter_std: self.risk.source_jitter_std,
        }
    }

    /// Unreachable-agent hop count.
    pub fn h_max(&self) -> u32 {
        self.agent_count as u32
    }
}

/// One row of the per-step series. Counts `n_g` and `n_l` are cumulative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub n_g: u64,
    pub n_l: u64,
    pub reliability_step: f64,
    pub reliability_cum: f64,
    pub items_on_agents: u64,
    pub items_at_base: u64,
    pub total_stored: u64,
    pub mean_memory_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub datum_creator: usize,
    pub datum_seq: u64,
    pub created_step: u64,
    pub delivered_step: u64,
    pub hops: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSeries {
    pub rows: Vec<StepRow>,
    pub deliveries: Vec<DeliveryRecord>,
    delivered_ids: HashSet<DatumId>,
}

impl MetricsSeries {
    /// Logs a datum's arrival at the base. Each datum arrives at most once.
    pub fn record_delivery(&mut self, datum: &Datum, step: u64) -> Result<(), InvariantError> {
        if !self.delivered_ids.insert(datum.id) {
            return Err(InvariantError::DuplicateDelivery {
                creator: datum.id.creator,
                seq: datum.id.seq,
            });
        }
        self.deliveries.push(DeliveryRecord {
            datum_creator: datum.id.creator,
            datum_seq: datum.id.seq,
            created_step: datum.created_step,
            delivered_step: step,
            hops: datum.hops_travelled,
        });
        Ok(())
    }

    pub fn mean_transfer_hops(&self) -> Option<f64> {
        mean(self.deliveries.iter().map(|d| f64::from(d.hops)))
    }

    pub fn mean_transfer_steps(&self) -> Option<f64> {
        mean(
            self.deliveries
                .iter()
                .map(|d| (d.delivered_step - d.created_step) as f64),
        )
    }

    /// Memory use averaged over every step of the run.
    pub fn mean_memory_pct(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.mean_memory_pct)).unwrap_or(0.0)
    }

    pub fn final_row(&self) -> Option<&StepRow> {
        self.rows.last()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// `(n_g - n_l) / n_g`, or 1 when nothing was generated.
pub fn reliability(n_g: u64, n_l: u64) -> Result<f64, InvariantError> {
    if n_l > n_g {
        return Err(InvariantError::LostExceedsGenerated {
            generated: n_g,
            lost: n_l,
        });
    }
    if n_g == 0 {
        return Ok(1.0);
    }
    Ok((n_g - n_l) as f64 / n_g as f64)
}

/// Per-step variant. Losses in a step can exceed that step's generation
/// (older data dies too), so this saturates at 0 instead of failing.
pub fn step_reliability(generated: u64, lost: u64) -> f64 {
    if generated == 0 {
        return 1.0;
    }
    (generated - lost.min(generated)) as f64 / generated as f64
}

// Named random sub-streams of the master seed.
const STREAM_TOPOLOGY: u64 = 1;
const STREAM_RISK: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_MOBILITY: u64 = 4;
const STREAM_DATA: u64 = 5;
/// Corruption streams are keyed per datum under this prefix.
const STREAM_CORRUPTION: u64 = 1 << 63;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Default, Clone, Copy)]
struct Totals {
    generated: u64,
    delivered: u64,
    corrupted: u64,
    dropped: u64,
}

impl Totals {
    fn lost(&self) -> u64 {
        self.corrupted + self.dropped
    }
}

/// A simulation in progress.
pub struct Simulation {
    config: SimConfig,
    step: u64,
    agents: Vec<AgentState>,
    graph: CommGraph,
    explicit_edges: Option<Vec<(usize, usize)>>,
    field: RiskField,
    headings: Vec<f64>,
    pending: Vec<Vec<Envelope>>,
    next_seq: Vec<u64>,
    replicas: HashMap<DatumId, u32>,
    totals: Totals,
    metrics: MetricsSeries,
    risk_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    mobility_rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
    corruption_rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let n = config.agent_count;
        let seed = config.seed;
        let mut topo_rng = substream(seed, STREAM_TOPOLOGY);
        let mut risk_rng = substream(seed, STREAM_RISK);
        let mut mobility_rng = substream(seed, STREAM_MOBILITY);

        let (positions, explicit_edges) = match &config.topology {
            MobilityParams::Grid { spacing } => (gen_grid(n, &config.arena, *spacing)?, None),
            MobilityParams::ScaleFree { attach_count } => {
                let (p, e) = gen_scale_free(n, *attach_count, &config.arena, &mut topo_rng)?;
                (p, Some(e))
            }
            MobilityParams::LennardJones { .. } | MobilityParams::RandomWalk { .. } => {
                let mut p = gen_grid(n, &config.arena, DEFAULT_GRID_SPACING)?;
                p[BASE_ID] = config.arena.base_position;
                (p, None)
            }
            MobilityParams::Fixed { positions } => (positions.clone(), None),
        };
        let graph = match &explicit_edges {
            Some(e) => CommGraph::from_edges(n, e)?,
            None => CommGraph::from_positions(&positions, config.comm_radius),
        };
        let headings = match config.topology {
            MobilityParams::RandomWalk { .. } => initial_headings(n, &mut mobility_rng),
            _ => Vec::new(),
        };

        let mut field = config.risk_field_template();
        if config.risk.sources.is_none() {
            field.sources = random_sources(
                config.risk.source_count,
                &config.arena,
                config.risk.source_speed,
                &mut risk_rng,
            );
        }

        let h_max = config.h_max();
        let agents: Vec<AgentState> = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| AgentState::new(i, p, config.capacity_items, h_max))
            .collect();

        // Before the first step the base advertises itself; nobody else
        // knows a route yet.
        let mut pending = vec![Vec::new(); n];
        for &j in graph.neighbours(BASE_ID)? {
            pending[j].push(Envelope::broadcast(
                BASE_ID,
                Payload::HopCountBeacon(initial_broadcast(0, h_max)),
            ));
        }

        Ok(Self {
            step: 0,
            agents,
            graph,
            explicit_edges,
            field,
            headings,
            pending,
            next_seq: vec![0; n],
            replicas: HashMap::new(),
            totals: Totals::default(),
            metrics: MetricsSeries::default(),
            risk_rng,
            noise_rng: substream(seed, STREAM_NOISE),
            mobility_rng,
            data_rng: substream(seed, STREAM_DATA),
            corruption_rng: ChaCha8Rng::seed_from_u64(seed),
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn field(&self) -> &RiskField {
        &self.field
    }

    pub fn metrics(&self) -> &MetricsSeries {
        &self.metrics
    }

    pub fn into_metrics(self) -> MetricsSeries {
        self.metrics
    }

    /// Advances one step and returns the metrics row it produced.
    pub fn step(&mut self) -> Result<&StepRow> {
        self.step += 1;
        let now = self.step;
        let n = self.agents.len();
        let policy = self.config.policy;
        let h_max = self.config.h_max();

        // (1) mobility
        self.move_agents();

        // (2) communication graph
        if self.explicit_edges.is_none() {
            let positions: Vec<Point> = self.agents.iter().map(|a| a.position).collect();
            self.graph = CommGraph::from_positions(&positions, self.config.comm_radius);
        }

        // (3) risk dynamics and sensing
        self.field = self.field.advance_sources(&mut self.risk_rng, &self.config.arena);
        for a in self.agents.iter_mut().skip(1) {
            a.sensed_risk = self.field.sense_radiation(a.position, &mut self.noise_rng);
        }

        // (4) beacons sent last step
        let inboxes = std::mem::replace(&mut self.pending, vec![Vec::new(); n]);
        let mut hop_beacons: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
        let mut potentials: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (i, inbox) in inboxes.into_iter().enumerate() {
            for env in inbox {
                match env.payload {
                    Payload::HopCountBeacon(h) => hop_beacons[i].push((env.sender, h)),
                    Payload::FitnessBeacon(p) => {
                        if self.graph.are_adjacent(i, env.sender) {
                            potentials[i].insert(env.sender, p);
                        }
                    }
                    Payload::DataTransfer(_) => unreachable!("data lands in the same step"),
                }
            }
        }

        // (5) routing
        let mut outboxes: Vec<Vec<Envelope>> = vec![Vec::new(); n];
        for (i, a) in self.agents.iter_mut().enumerate() {
            let up = routing_round(
                i,
                &mut a.routing,
                &hop_beacons[i],
                now,
                self.config.routing_ttl,
                h_max,
            );
            a.hop_count = up.hop_count;
            outboxes[i].push(Envelope::broadcast(i, Payload::HopCountBeacon(up.broadcast)));
        }

        // (6) storage policy
        for (i, a) in self.agents.iter_mut().enumerate() {
            if i == BASE_ID {
                if policy != PolicyKind::Stigmergy {
                    a.potential = f64::INFINITY;
                    outboxes[i].push(Envelope::broadcast(i, Payload::FitnessBeacon(f64::INFINITY)));
                }
                continue;
            }
            let ctx = FitnessContext {
                neighbour_potentials: std::mem::take(&mut potentials[i]),
                hop_count: a.hop_count,
                sensed_risk: a.sensed_risk,
                alpha: self.config.alpha,
                beta: self.config.beta,
                threshold: self.config.threshold,
            };
            outboxes[i].extend(policy_step(a, policy, &ctx, self.config.bandwidth_cap));
        }

        // (7) exchange
        let round = exchange_round(outboxes, &self.graph, self.config.bandwidth_cap);
        for (i, back) in round.returned.into_iter().enumerate() {
            self.restore(i, back);
        }
        for (i, inbox) in round.inboxes.into_iter().enumerate() {
            for env in inbox {
                match env.payload {
                    Payload::DataTransfer(items) => match env.destination {
                        Destination::Agent(_) => self.land_transfer(i, env.sender, items, now)?,
                        Destination::Neighbours => self.land_replicas(i, items),
                    },
                    beacon => self.pending[i].push(Envelope {
                        payload: beacon,
                        ..env
                    }),
                }
            }
        }

        // (8) data generation
        self.generate_data(now);

        // (9) corruption
        self.corrupt(now);

        // (10) metrics
        self.check_invariants(now)?;
        let row = self.make_row(now)?;
        self.metrics.rows.push(row);
        Ok(self.metrics.rows.last().expect("just pushed"))
    }

    /// Runs the remaining steps.
    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    fn move_agents(&mut self) {
        let positions: Vec<Point> = self.agents.iter().map(|a| a.position).collect();
        let next = match &self.config.topology {
            p @ MobilityParams::LennardJones { .. } => {
                step_lennard_jones(&positions, p, &self.graph, &self.config.arena)
            }
            p @ MobilityParams::RandomWalk { .. } => step_random_walk(
                &positions,
                &mut self.headings,
                p,
                &self.config.arena,
                &mut self.mobility_rng,
            ),
            _ => return,
        };
        for (a, p) in self.agents.iter_mut().zip(next) {
            a.position = p;
        }
    }

    fn restore(&mut self, agent: usize, items: Vec<Datum>) {
        if items.is_empty() {
            return;
        }
        let overflow = self.agents[agent].store.restore_oldest(items);
        self.totals.dropped += overflow.len() as u64;
    }

    fn land_transfer(&mut self, to: usize, from: usize, items: Vec<Datum>, now: u64) -> Result<()> {
        let mut bounced = Vec::new();
        for mut d in items {
            if to == BASE_ID {
                d.hops_travelled += 1;
                d.status = DatumStatus::Delivered;
                self.metrics.record_delivery(&d, now)?;
                self.totals.delivered += 1;
                continue;
            }
            let mut moved = d.clone();
            moved.hops_travelled += 1;
            if self.agents[to].store.insert(moved).is_err() {
                bounced.push(d);
            }
        }
        self.restore(from, bounced);
        Ok(())
    }

    fn land_replicas(&mut self, to: usize, items: Vec<Datum>) {
        // The base station is not a peer of the replicated store.
        if to == BASE_ID {
            return;
        }
        let agent = &mut self.agents[to];
        for mut d in items {
            if agent.store.is_full() || agent.store.contains(d.id) {
                continue;
            }
            d.hops_travelled += 1;
            let id = d.id;
            agent.store.insert(d).expect("checked room");
            agent.fresh.push_back(id);
            *self.replicas.entry(id).or_insert(0) += 1;
        }
    }

    /// Agent `i` (not the base) produces one datum whenever
    /// `step mod G == i mod G`.
    fn generate_data(&mut self, now: u64) {
        let g = self.config.generation_interval;
        let replicated = self.config.policy == PolicyKind::Stigmergy;
        for i in 1..self.agents.len() {
            if now % g != i as u64 % g {
                continue;
            }
            self.next_seq[i] += 1;
            let id = DatumId {
                creator: i,
                seq: self.next_seq[i],
            };
            let size = self.data_rng.gen_range(1..=MAX_DATUM_BYTES);
            self.totals.generated += 1;
            let agent = &mut self.agents[i];
            match agent.store.insert(Datum::new(id, now, size)) {
                Ok(()) => {
                    if replicated {
                        agent.fresh.push_back(id);
                        self.replicas.insert(id, 1);
                    }
                }
                Err(_) => self.totals.dropped += 1,
            }
        }
    }

    fn corrupt(&mut self, now: u64) {
        let replicated = self.config.policy == PolicyKind::Stigmergy;
        for i in 1..self.agents.len() {
            let p = self.field.corruption_probability(self.agents[i].position);
            if p <= 0.0 || self.agents[i].store.is_empty() {
                continue;
            }
            // One uniform per (datum, step); replicas also key on the holder
            // so copies fail independently.
            let salt = if replicated { i as u64 } else { 0 };
            let base = &self.corruption_rng;
            let lost = apply_corruption_with(&mut self.agents[i].store, p, |d| {
                let mut r = base.clone();
                r.set_stream(STREAM_CORRUPTION | ((d.id.creator as u64) << 32) | d.id.seq);
                r.set_word_pos(u128::from(now) << 34 | u128::from(salt) << 1);
                (r.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
            });
            for d in lost {
                if replicated {
                    let left = self.replicas.get_mut(&d.id).expect("tracked replica");
                    *left -= 1;
                    if *left == 0 {
                        self.replicas.remove(&d.id);
                        self.totals.corrupted += 1;
                    }
                } else {
                    self.totals.corrupted += 1;
                }
            }
        }
    }

    fn items_on_agents(&self) -> u64 {
        if self.config.policy == PolicyKind::Stigmergy {
            self.replicas.len() as u64
        } else {
            self.agents.iter().skip(1).map(|a| a.store.len() as u64).sum()
        }
    }

    fn check_invariants(&self, now: u64) -> Result<(), InvariantError> {
        for a in &self.agents {
            if a.store.len() > a.store.capacity() {
                return Err(InvariantError::Overfull {
                    agent: a.id,
                    len: a.store.len(),
                    capacity: a.store.capacity(),
                });
            }
        }
        let t = self.totals;
        let on_agents = self.items_on_agents();
        if t.generated != t.delivered + on_agents + t.corrupted + t.dropped {
            return Err(InvariantError::Conservation {
                step: now,
                generated: t.generated,
                delivered: t.delivered,
                on_agents,
                corrupted: t.corrupted,
                dropped: t.dropped,
            });
        }
        Ok(())
    }

    fn make_row(&self, now: u64) -> Result<StepRow, InvariantError> {
        let t = self.totals;
        let (prev_g, prev_l) = self.metrics.rows.last().map_or((0, 0), |r| (r.n_g, r.n_l));
        let items_on_agents = self.items_on_agents();
        let members = &self.agents[1..];
        let mean_memory_pct = members
            .iter()
            .map(|a| 100.0 * a.store.len() as f64 / a.store.capacity() as f64)
            .sum::<f64>()
            / members.len() as f64;
        Ok(StepRow {
            step: now,
            n_g: t.generated,
            n_l: t.lost(),
            reliability_step: step_reliability(t.generated - prev_g, t.lost() - prev_l),
            reliability_cum: reliability(t.generated, t.lost())?,
            items_on_agents,
            items_at_base: t.delivered,
            total_stored: items_on_agents + t.delivered,
            mean_memory_pct,
        })
    }
}

/// Runs a whole simulation.
pub fn run(config: SimConfig) -> Result<MetricsSeries> {
    let mut sim = Simulation::new(config)?;
    sim.run_to_end()?;
    Ok(sim.into_metrics())
}
