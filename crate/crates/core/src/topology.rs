//! Agent layouts and motion models: static grid, preferential-attachment
//! graph, Lennard-Jones flocking and random walks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::geometry::{Arena, Point};
use crate::network::CommGraph;
use crate::routing::BASE_ID;

/// Scales Lennard-Jones force into a per-step displacement before clamping.
const LJ_STEP_GAIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MobilityParams {
    Grid {
        spacing: f64,
    },
    #[serde(rename = "scalefree")]
    ScaleFree {
        attach_count: usize,
    },
    #[serde(rename = "lj")]
    LennardJones {
        target_distance: f64,
        well_depth: f64,
        max_speed: f64,
    },
    #[serde(rename = "randomwalk")]
    RandomWalk {
        step_length: f64,
        turn_std: f64,
    },
    /// Hand-placed static agents with radius connectivity.
    Fixed {
        positions: Vec<Point>,
    },
}

impl MobilityParams {
    pub fn name(&self) -> &'static str {
        match self {
            MobilityParams::Grid { .. } => "grid",
            MobilityParams::ScaleFree { .. } => "scalefree",
            MobilityParams::LennardJones { .. } => "lj",
            MobilityParams::RandomWalk { .. } => "randomwalk",
            MobilityParams::Fixed { .. } => "fixed",
        }
    }

    pub fn is_mobile(&self) -> bool {
        matches!(
            self,
            MobilityParams::LennardJones { .. } | MobilityParams::RandomWalk { .. }
        )
    }

    pub fn validate(&self, comm_radius: f64) -> Result<(), ConfigError> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, "must be positive"))
            }
        };
        match self {
            MobilityParams::Grid { spacing } => positive("grid_spacing", *spacing),
            MobilityParams::ScaleFree { attach_count } => {
                if *attach_count == 0 {
                    Err(ConfigError::invalid("attach_count", "must be >= 1"))
                } else {
                    Ok(())
                }
            }
            MobilityParams::LennardJones {
                target_distance,
                well_depth,
                max_speed,
            } => {
                positive("lj_target_distance", *target_distance)?;
                positive("lj_well_depth", *well_depth)?;
                positive("lj_max_speed", *max_speed)?;
                if *max_speed >= comm_radius {
                    return Err(ConfigError::invalid(
                        "lj_max_speed",
                        "must be below the communication radius",
                    ));
                }
                Ok(())
            }
            MobilityParams::RandomWalk {
                step_length,
                turn_std,
            } => {
                if !(*step_length >= 0.0 && *step_length < comm_radius) {
                    return Err(ConfigError::invalid(
                        "rw_step_length",
                        "must be in [0, communication radius)",
                    ));
                }
                if !(*turn_std >= 0.0 && turn_std.is_finite()) {
                    return Err(ConfigError::invalid("rw_turn_std", "must be >= 0"));
                }
                Ok(())
            }
            MobilityParams::Fixed { positions } => {
                if positions.iter().all(|p| p.is_finite()) {
                    Ok(())
                } else {
                    Err(ConfigError::invalid("positions", "non-finite coordinates"))
                }
            }
        }
    }
}

/// Lattice spacing that keeps a 10x10 grid 4-connected at a 3 m radius.
pub const DEFAULT_GRID_SPACING: f64 = 2.2;

/// Row-major square lattice centred in the arena. Node 0 (the base) is the
/// lattice corner with the smallest coordinates.
pub fn gen_grid(n: usize, arena: &Arena, spacing: f64) -> Result<Vec<Point>, ConfigError> {
    let side = (n as f64).sqrt().ceil() as usize;
    let extent = side.saturating_sub(1) as f64 * spacing;
    if n == 0 || extent > arena.width || extent > arena.height {
        return Err(ConfigError::GridDoesNotFit { n, spacing });
    }
    let origin = Point::new(-extent / 2.0, -extent / 2.0);
    Ok((0..n)
        .map(|i| {
            let (col, row) = (i % side, i / side);
            origin + Point::new(col as f64 * spacing, row as f64 * spacing)
        })
        .collect())
}

pub type EdgeList = Vec<(usize, usize)>;

/// Preferential-attachment graph. Nodes `0..=attach_count` form the seed
/// clique; each later node links to `attach_count` distinct earlier nodes
/// picked with probability proportional to their degree. Positions are
/// uniform in the arena (the base sits at `arena.base_position`) and only
/// feed the risk field.
pub fn gen_scale_free<R: Rng + ?Sized>(
    n: usize,
    attach_count: usize,
    arena: &Arena,
    rng: &mut R,
) -> Result<(Vec<Point>, EdgeList), ConfigError> {
    if attach_count == 0 {
        return Err(ConfigError::invalid("attach_count", "must be >= 1"));
    }
    if n <= attach_count {
        return Err(ConfigError::invalid(
            "agent_count",
            format!("must exceed attach_count ({attach_count})"),
        ));
    }
    let seed = attach_count + 1;
    let mut edges = Vec::new();
    // Each node appears once per incident edge end.
    let mut ends: Vec<usize> = Vec::new();
    for i in 0..seed {
        for j in (i + 1)..seed {
            edges.push((i, j));
            ends.push(i);
            ends.push(j);
        }
    }
    if ends.is_empty() {
        ends.push(0);
    }
    for v in seed..n {
        let mut targets: Vec<usize> = Vec::with_capacity(attach_count);
        while targets.len() < attach_count {
            let t = *ends.choose(rng).expect("non-empty");
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        targets.sort_unstable();
        for t in targets {
            edges.push((t, v));
            ends.push(t);
            ends.push(v);
        }
    }
    let (lo, hi) = (arena.min(), arena.max());
    let positions = (0..n)
        .map(|i| {
            if i == BASE_ID {
                arena.base_position
            } else {
                Point::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y))
            }
        })
        .collect();
    Ok((positions, edges))
}

/// Pairwise 12-6 force magnitude at separation `r`, minimal energy at
/// `target`. Positive values push apart.
pub fn lj_force(r: f64, target: f64, well_depth: f64) -> f64 {
    let sigma = target / 2f64.powf(1.0 / 6.0);
    let r = r.max(0.1 * sigma);
    let s6 = (sigma / r).powi(6);
    24.0 * well_depth / r * (2.0 * s6 * s6 - s6)
}

/// One flocking step: each agent moves along the summed forces from its
/// current neighbours, clamped to `max_speed` and reflected at the walls.
/// The base station stays put.
pub fn step_lennard_jones(
    positions: &[Point],
    params: &MobilityParams,
    graph: &CommGraph,
    arena: &Arena,
) -> Vec<Point> {
    let MobilityParams::LennardJones {
        target_distance,
        well_depth,
        max_speed,
    } = *params
    else {
        return positions.to_vec();
    };
    let mut next = positions.to_vec();
    for (i, p) in positions.iter().enumerate() {
        if i == BASE_ID {
            continue;
        }
        let mut force = Point::ORIGIN;
        for &j in graph.neighbours(i).unwrap_or(&[]) {
            let delta = *p - positions[j];
            let r = delta.norm();
            let dir = if r > 0.0 {
                delta * (1.0 / r)
            } else {
                // Coincident agents: separate deterministically by id.
                let a = i as f64;
                Point::new(a.cos(), a.sin())
            };
            force += dir * lj_force(r, target_distance, well_depth);
        }
        let mut step = force * LJ_STEP_GAIN;
        let len = step.norm();
        if len > max_speed {
            step = step * (max_speed / len);
        }
        next[i] = arena.reflect(*p + step).0;
    }
    next
}

/// Initial headings for a random walk, uniform on the circle.
pub fn initial_headings<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect()
}

/// One random-walk step: perturb each heading, advance, reflect at walls
/// (mirroring the heading). The base station stays put.
pub fn step_random_walk<R: Rng + ?Sized>(
    positions: &[Point],
    headings: &mut [f64],
    params: &MobilityParams,
    arena: &Arena,
    rng: &mut R,
) -> Vec<Point> {
    let MobilityParams::RandomWalk {
        step_length,
        turn_std,
    } = *params
    else {
        return positions.to_vec();
    };
    let turn = (turn_std > 0.0).then(|| Normal::new(0.0, turn_std).expect("validated std"));
    let mut next = positions.to_vec();
    for (i, p) in positions.iter().enumerate() {
        if i == BASE_ID {
            continue;
        }
        // Draw for every agent so the stream does not depend on step_length.
        if let Some(t) = &turn {
            headings[i] += t.sample(rng);
        }
        if step_length == 0.0 {
            continue;
        }
        let dir = Point::new(headings[i].cos(), headings[i].sin());
        let (q, fx, fy) = arena.reflect(*p + dir * step_length);
        let (mut dx, mut dy) = (dir.x, dir.y);
        if fx {
            dx = -dx;
        }
        if fy {
            dy = -dy;
        }
        headings[i] = dy.atan2(dx);
        next[i] = q;
    }
    next
}
