//! Scenario files: a flat TOML table of overrides on top of the default
//! configuration, plus the bundled scenario catalog.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{RiskParams, SimConfig};
use crate::error::{ConfigError, Error, Result};
use crate::geometry::{Arena, Point};
use crate::risk::RadiationSource;
use crate::storage::PolicyKind;
use crate::topology::{MobilityParams, DEFAULT_GRID_SPACING};

/// Seeds per cell when a file gives neither `seeds` nor `seed_count`.
pub const DEFAULT_SEED_COUNT: u64 = 30;

const CATALOG: [(&str, &str, &str); 5] = [
    (
        "grid100",
        "100 static robots on a 10 x 10 lattice",
        include_str!("../scenarios/grid100.toml"),
    ),
    (
        "scalefree100",
        "100 robots on a preferential-attachment graph",
        include_str!("../scenarios/scalefree100.toml"),
    ),
    (
        "lj100",
        "100 robots flocking under a Lennard-Jones potential",
        include_str!("../scenarios/lj100.toml"),
    ),
    (
        "randomwalk100",
        "100 robots on independent random walks",
        include_str!("../scenarios/randomwalk100.toml"),
    ),
    (
        "drone5",
        "4 drones and a base on a ring, one path next to a source",
        include_str!("../scenarios/drone5.toml"),
    ),
];

/// Bundled scenarios as `(name, description)`.
pub fn catalog() -> impl Iterator<Item = (&'static str, &'static str)> {
    CATALOG.iter().map(|(n, d, _)| (*n, *d))
}

/// Source text of a bundled scenario.
pub fn bundled(name: &str) -> Option<&'static str> {
    CATALOG.iter().find(|(n, _, _)| *n == name).map(|(_, _, t)| *t)
}

/// A fully resolved experiment: one configuration swept over policies and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// `seed` and `policy` are overwritten per run.
    pub config: SimConfig,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            config: SimConfig::default(),
            policies: vec![PolicyKind::Rass],
            seeds: (1..=DEFAULT_SEED_COUNT).collect(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Scenario {
    /// Configuration for one cell of the sweep.
    pub fn run_config(&self, policy: PolicyKind, seed: u64) -> SimConfig {
        SimConfig {
            policy,
            seed,
            ..self.config.clone()
        }
    }

    /// Replaces the seed list with `1..=count`.
    pub fn set_seed_count(&mut self, count: u64) -> Result<(), ConfigError> {
        if count == 0 {
            return Err(ConfigError::invalid("seed_count", "must be >= 1"));
        }
        self.seeds = (1..=count).collect();
        Ok(())
    }

    /// Renders the scenario as a file that parses back to the same value.
    pub fn to_toml(&self) -> String {
        let raw = RawScenario::from_resolved(self);
        toml::to_string(&raw).expect("scenario fields are all representable in TOML")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSpec {
    x: f64,
    y: f64,
    intensity: f64,
    #[serde(default)]
    vx: f64,
    #[serde(default)]
    vy: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policies: Option<Vec<PolicyKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed_count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    agent_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    topology: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attach_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lj_target_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lj_well_depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lj_max_speed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rw_step_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rw_turn_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arena_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arena_height: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comm_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity_items: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bandwidth_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generation_interval: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    routing_ttl: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corruption_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sensor_noise_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_speed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_jitter_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sources: Option<Vec<SourceSpec>>,
}

fn forbid<T>(value: &Option<T>, field: &'static str, topology: &str) -> Result<(), ConfigError> {
    match value {
        Some(_) => Err(ConfigError::invalid(
            field,
            format!("not used by topology `{topology}`"),
        )),
        None => Ok(()),
    }
}

impl RawScenario {
    fn resolve(self) -> Result<Scenario, ConfigError> {
        let defaults = SimConfig::default();
        let topology_name = self.topology.clone().unwrap_or_else(|| "grid".into());

        let grid_keys = forbid(&self.grid_spacing, "grid_spacing", &topology_name);
        let sf_keys = forbid(&self.attach_count, "attach_count", &topology_name);
        let lj_keys = forbid(&self.lj_target_distance, "lj_target_distance", &topology_name)
            .and(forbid(&self.lj_well_depth, "lj_well_depth", &topology_name))
            .and(forbid(&self.lj_max_speed, "lj_max_speed", &topology_name));
        let rw_keys = forbid(&self.rw_step_length, "rw_step_length", &topology_name).and(forbid(
            &self.rw_turn_std,
            "rw_turn_std",
            &topology_name,
        ));
        let fixed_keys = forbid(&self.positions, "positions", &topology_name);
        let base_keys = forbid(&self.base_x, "base_x", &topology_name).and(forbid(
            &self.base_y,
            "base_y",
            &topology_name,
        ));

        let topology = match topology_name.as_str() {
            "grid" => {
                sf_keys.and(lj_keys).and(rw_keys).and(fixed_keys).and(base_keys)?;
                MobilityParams::Grid {
                    spacing: self.grid_spacing.unwrap_or(DEFAULT_GRID_SPACING),
                }
            }
            "scalefree" => {
                grid_keys
                    .and(lj_keys)
                    .and(rw_keys)
                    .and(fixed_keys)
                    .and(base_keys)?;
                MobilityParams::ScaleFree {
                    attach_count: self.attach_count.unwrap_or(2),
                }
            }
            "lj" => {
                grid_keys.and(sf_keys).and(rw_keys).and(fixed_keys)?;
                MobilityParams::LennardJones {
                    target_distance: self.lj_target_distance.unwrap_or(2.0),
                    well_depth: self.lj_well_depth.unwrap_or(1.0),
                    max_speed: self.lj_max_speed.unwrap_or(0.1),
                }
            }
            "randomwalk" => {
                grid_keys.and(sf_keys).and(lj_keys).and(fixed_keys)?;
                MobilityParams::RandomWalk {
                    step_length: self.rw_step_length.unwrap_or(0.2),
                    turn_std: self.rw_turn_std.unwrap_or(0.5),
                }
            }
            "fixed" => {
                grid_keys.and(sf_keys).and(lj_keys).and(rw_keys).and(base_keys)?;
                let positions = self
                    .positions
                    .as_ref()
                    .ok_or_else(|| ConfigError::invalid("positions", "required by topology `fixed`"))?;
                MobilityParams::Fixed {
                    positions: positions.iter().map(|&[x, y]| Point::new(x, y)).collect(),
                }
            }
            other => {
                return Err(ConfigError::invalid(
                    "topology",
                    format!("unknown topology `{other}` (expected grid, scalefree, lj, randomwalk or fixed)"),
                ))
            }
        };

        let agent_count = match (&topology, self.agent_count) {
            (_, Some(n)) => n,
            (MobilityParams::Fixed { positions }, None) => positions.len(),
            (_, None) => defaults.agent_count,
        };

        let mut arena = Arena {
            width: self.arena_width.unwrap_or(defaults.arena.width),
            height: self.arena_height.unwrap_or(defaults.arena.height),
            base_position: Point::new(
                self.base_x.unwrap_or(defaults.arena.base_position.x),
                self.base_y.unwrap_or(defaults.arena.base_position.y),
            ),
        };
        if let MobilityParams::Fixed { positions } = &topology {
            if let Some(&p) = positions.first() {
                arena.base_position = p;
            }
        }

        if self.sources.is_some() && self.source_count.is_some() {
            return Err(ConfigError::invalid(
                "source_count",
                "give either `sources` or `source_count`",
            ));
        }
        let sources = self.sources.map(|list| {
            list.into_iter()
                .map(|s| RadiationSource {
                    position: Point::new(s.x, s.y),
                    intensity: s.intensity,
                    velocity: Point::new(s.vx, s.vy),
                })
                .collect::<Vec<_>>()
        });
        let risk_defaults = RiskParams::default();
        let risk = RiskParams {
            source_count: match &sources {
                Some(list) => list.len(),
                None => self.source_count.unwrap_or(risk_defaults.source_count),
            },
            decay: self.decay.unwrap_or(risk_defaults.decay),
            corruption_scale: self.corruption_scale.unwrap_or(risk_defaults.corruption_scale),
            sensor_noise_std: self.sensor_noise_std.unwrap_or(risk_defaults.sensor_noise_std),
            source_speed: self.source_speed.unwrap_or(risk_defaults.source_speed),
            source_jitter_std: self.source_jitter_std.unwrap_or(risk_defaults.source_jitter_std),
            sources,
        };

        let policies = self.policies.unwrap_or_else(|| vec![PolicyKind::Rass]);
        if policies.is_empty() {
            return Err(ConfigError::invalid("policies", "must list at least one policy"));
        }
        if has_duplicates(&policies) {
            return Err(ConfigError::invalid("policies", "duplicate policy"));
        }

        let seeds = match (self.seeds, self.seed_count) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::invalid(
                    "seed_count",
                    "give either `seeds` or `seed_count`",
                ))
            }
            (Some(list), None) => list,
            (None, count) => {
                let count = count.unwrap_or(DEFAULT_SEED_COUNT);
                if count == 0 {
                    return Err(ConfigError::invalid("seed_count", "must be >= 1"));
                }
                (1..=count).collect()
            }
        };
        if seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "must list at least one seed"));
        }
        if has_duplicates(&seeds) {
            return Err(ConfigError::invalid("seeds", "duplicate seed"));
        }

        let config = SimConfig {
            agent_count,
            arena,
            comm_radius: self.comm_radius.unwrap_or(defaults.comm_radius),
            topology,
            risk,
            policy: policies[0],
            capacity_items: self.capacity_items.unwrap_or(defaults.capacity_items),
            bandwidth_cap: self.bandwidth_cap.unwrap_or(defaults.bandwidth_cap),
            alpha: self.alpha.unwrap_or(defaults.alpha),
            beta: self.beta.unwrap_or(defaults.beta),
            threshold: self.threshold.unwrap_or(defaults.threshold),
            generation_interval: self.generation_interval.unwrap_or(defaults.generation_interval),
            steps: self.steps.unwrap_or(defaults.steps),
            seed: seeds[0],
            routing_ttl: self.routing_ttl.unwrap_or(defaults.routing_ttl),
        };
        config.validate()?;

        let name = self.name.unwrap_or_else(|| "scenario".into());
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(ConfigError::invalid(
                "name",
                "use letters, digits, `-` and `_` only",
            ));
        }

        Ok(Scenario {
            name,
            config,
            policies,
            seeds,
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    fn from_resolved(s: &Scenario) -> Self {
        let c = &s.config;
        let mut raw = RawScenario {
            name: Some(s.name.clone()),
            output_dir: Some(s.output_dir.clone()),
            policies: Some(s.policies.clone()),
            seeds: Some(s.seeds.clone()),
            steps: Some(c.steps),
            agent_count: Some(c.agent_count),
            topology: Some(c.topology.name().into()),
            arena_width: Some(c.arena.width),
            arena_height: Some(c.arena.height),
            comm_radius: Some(c.comm_radius),
            capacity_items: Some(c.capacity_items),
            bandwidth_cap: Some(c.bandwidth_cap),
            alpha: Some(c.alpha),
            beta: Some(c.beta),
            threshold: Some(c.threshold),
            generation_interval: Some(c.generation_interval),
            routing_ttl: Some(c.routing_ttl),
            decay: Some(c.risk.decay),
            corruption_scale: Some(c.risk.corruption_scale),
            sensor_noise_std: Some(c.risk.sensor_noise_std),
            source_speed: Some(c.risk.source_speed),
            source_jitter_std: Some(c.risk.source_jitter_std),
            ..RawScenario::default()
        };
        match &c.risk.sources {
            Some(list) => {
                raw.sources = Some(
                    list.iter()
                        .map(|s| SourceSpec {
                            x: s.position.x,
                            y: s.position.y,
                            intensity: s.intensity,
                            vx: s.velocity.x,
                            vy: s.velocity.y,
                        })
                        .collect(),
                )
            }
            None => raw.source_count = Some(c.risk.source_count),
        }
        match &c.topology {
            MobilityParams::Grid { spacing } => raw.grid_spacing = Some(*spacing),
            MobilityParams::ScaleFree { attach_count } => raw.attach_count = Some(*attach_count),
            MobilityParams::LennardJones {
                target_distance,
                well_depth,
                max_speed,
            } => {
                raw.lj_target_distance = Some(*target_distance);
                raw.lj_well_depth = Some(*well_depth);
                raw.lj_max_speed = Some(*max_speed);
            }
            MobilityParams::RandomWalk {
                step_length,
                turn_std,
            } => {
                raw.rw_step_length = Some(*step_length);
                raw.rw_turn_std = Some(*turn_std);
            }
            MobilityParams::Fixed { positions } => {
                raw.positions = Some(positions.iter().map(|p| [p.x, p.y]).collect());
            }
        }
        if c.topology.is_mobile() {
            raw.base_x = Some(c.arena.base_position.x);
            raw.base_y = Some(c.arena.base_position.y);
        }
        raw
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// First line that assigns `key`, if any.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

fn key_for(err: &ConfigError) -> Option<&'static str> {
    match err {
        ConfigError::Invalid { field: "arena", .. } => Some("arena_width"),
        ConfigError::Invalid { field, .. } => Some(field),
        ConfigError::GridDoesNotFit { .. } => Some("agent_count"),
        _ => None,
    }
}

/// Parses scenario text. `origin` names the source in error messages.
pub fn parse_scenario_str(text: &str, origin: &str) -> Result<Scenario, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        path: origin.into(),
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    raw.resolve().map_err(|e| ConfigError::Scenario {
        path: origin.into(),
        line: key_for(&e).and_then(|k| line_of_key(text, k)),
        source: Box::new(e),
    })
}

/// Reads and parses a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ConfigError::MissingFile(path.to_path_buf()).into())
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    Ok(parse_scenario_str(&text, &path.display().to_string())?)
}
