//! Radiation environment: point sources, noisy sensing and the per-step
//! corruption law for stored data.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::geometry::{Arena, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiationSource {
    pub position: Point,
    /// In `[0, 1]`.
    pub intensity: f64,
    /// Metres per step; zero for a static source.
    pub velocity: Point,
}

impl RadiationSource {
    pub fn fixed(position: Point, intensity: f64) -> Self {
        Self {
            position,
            intensity,
            velocity: Point::ORIGIN,
        }
    }

    /// Contribution `I / (1 + λ ρ²)` at `pos`.
    fn contribution(&self, pos: Point, decay: f64) -> f64 {
        self.intensity / (1.0 + decay * self.position.distance_sq(pos))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskField {
    pub sources: Vec<RadiationSource>,
    /// λ, per square metre.
    pub decay: f64,
    pub sensor_noise_std: f64,
    /// κ: scales per-source exposure into a per-step corruption probability.
    pub corruption_scale: f64,
    /// Std of the Gaussian displacement added to moving sources each step.
    /// Zero disables jitter.
    pub jitter_std: f64,
}

impl Default for RiskField {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            decay: 1.0,
            sensor_noise_std: 0.05,
            corruption_scale: 0.01,
            jitter_std: 0.0,
        }
    }
}

impl RiskField {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(ConfigError::invalid("decay", "must be positive"));
        }
        if !(self.sensor_noise_std >= 0.0 && self.sensor_noise_std.is_finite()) {
            return Err(ConfigError::invalid("sensor_noise_std", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.corruption_scale) {
            return Err(ConfigError::invalid("corruption_scale", "must be in [0, 1]"));
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return Err(ConfigError::invalid("source_jitter_std", "must be >= 0"));
        }
        for s in &self.sources {
            if !(0.0..=1.0).contains(&s.intensity) {
                return Err(ConfigError::invalid(
                    "sources",
                    format!("intensity {} outside [0, 1]", s.intensity),
                ));
            }
            if !s.position.is_finite() || !s.velocity.is_finite() {
                return Err(ConfigError::invalid("sources", "non-finite coordinates"));
            }
        }
        Ok(())
    }

    /// Noiseless radiation level at `pos`.
    pub fn true_radiation(&self, pos: Point) -> f64 {
        self.sources.iter().map(|s| s.contribution(pos, self.decay)).sum()
    }

    /// Sensor reading: the true level plus zero-mean Gaussian noise. May be
    /// negative; callers clamp where a non-negative risk is required.
    pub fn sense_radiation<R: Rng + ?Sized>(&self, pos: Point, rng: &mut R) -> f64 {
        let level = self.true_radiation(pos);
        if self.sensor_noise_std == 0.0 {
            return level;
        }
        let noise = Normal::new(0.0, self.sensor_noise_std).expect("validated std");
        level + noise.sample(rng)
    }

    /// Per-source corruption probabilities `clamp(κ I_j / (1 + λ ρ_j²), 0, 1)`.
    pub fn source_corruption_probabilities(&self, pos: Point) -> impl Iterator<Item = f64> + '_ {
        self.sources
            .iter()
            .map(move |s| (self.corruption_scale * s.contribution(pos, self.decay)).clamp(0.0, 1.0))
    }

    /// Probability that a datum stored at `pos` is corrupted during one step,
    /// with sources acting independently.
    pub fn corruption_probability(&self, pos: Point) -> f64 {
        let survive: f64 = self
            .source_corruption_probabilities(pos)
            .map(|p| 1.0 - p)
            .product();
        (1.0 - survive).clamp(0.0, 1.0)
    }

    /// Moves every source by its velocity (plus jitter, if enabled),
    /// reflecting at the arena walls. Intensities are untouched.
    pub fn advance_sources<R: Rng + ?Sized>(&self, rng: &mut R, arena: &Arena) -> RiskField {
        let mut next = self.clone();
        let jitter =
            (self.jitter_std > 0.0).then(|| Normal::new(0.0, self.jitter_std).expect("validated std"));
        for s in &mut next.sources {
            let mut step = s.velocity;
            if let Some(j) = &jitter {
                step += Point::new(j.sample(rng), j.sample(rng));
            }
            if step == Point::ORIGIN {
                continue;
            }
            let (p, fx, fy) = arena.reflect(s.position + step);
            s.position = p;
            if fx {
                s.velocity.x = -s.velocity.x;
            }
            if fy {
                s.velocity.y = -s.velocity.y;
            }
        }
        next
    }
}

/// Places `count` static sources uniformly in the central quarter of the
/// arena with intensities drawn from `U(0, 1)`.
pub fn random_sources<R: Rng + ?Sized>(
    count: usize,
    arena: &Arena,
    speed: f64,
    rng: &mut R,
) -> Vec<RadiationSource> {
    let (hw, hh) = (arena.width / 4.0, arena.height / 4.0);
    (0..count)
        .map(|_| {
            let position = Point::new(rng.gen_range(-hw..=hw), rng.gen_range(-hh..=hh));
            let intensity = rng.gen_range(0.0..1.0);
            let velocity = if speed > 0.0 {
                let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                Point::new(heading.cos(), heading.sin()) * speed
            } else {
                Point::ORIGIN
            };
            RadiationSource {
                position,
                intensity,
                velocity,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigRational, One, ToPrimitive};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(sources: Vec<RadiationSource>, decay: f64, kappa: f64) -> RiskField {
        RiskField {
            sources,
            decay,
            corruption_scale: kappa,
            ..RiskField::default()
        }
    }

    #[test]
    fn empty_field_is_zero() {
        let f = RiskField::default();
        assert_eq!(f.true_radiation(Point::new(3.0, 1.0)), 0.0);
        assert_eq!(f.corruption_probability(Point::new(3.0, 1.0)), 0.0);
    }

    #[test]
    fn source_at_position_gives_intensity() {
        for decay in [0.1, 1.0, 7.5] {
            let f = field(
                vec![RadiationSource::fixed(Point::new(2.0, 2.0), 0.7)],
                decay,
                0.01,
            );
            assert_eq!(f.true_radiation(Point::new(2.0, 2.0)), 0.7);
        }
    }

    #[test]
    fn two_unit_sources_at_distance_one() {
        let f = field(
            vec![
                RadiationSource::fixed(Point::new(1.0, 0.0), 1.0),
                RadiationSource::fixed(Point::new(0.0, -1.0), 1.0),
            ],
            1.0,
            0.01,
        );
        assert!((f.true_radiation(Point::ORIGIN) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_sensing_is_exact() {
        let mut f = field(vec![RadiationSource::fixed(Point::new(1.0, 1.0), 0.4)], 1.0, 0.01);
        f.sensor_noise_std = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Point::new(-2.0, 0.5);
        assert_eq!(f.sense_radiation(p, &mut rng), f.true_radiation(p));
    }

    #[test]
    fn sensing_noise_mean_and_std() {
        let f = field(vec![RadiationSource::fixed(Point::new(1.0, 1.0), 0.4)], 1.0, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = Point::new(0.0, 0.5);
        let truth = f.true_radiation(p);
        let n = 10_000;
        let samples: Vec<f64> = (0..n).map(|_| f.sense_radiation(p, &mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - truth).abs() < 0.005, "mean {mean} vs {truth}");
        assert!((var.sqrt() - 0.05).abs() < 0.005);
    }

    #[test]
    fn certain_corruption() {
        let f = field(vec![RadiationSource::fixed(Point::ORIGIN, 1.0)], 1.0, 1.0);
        assert_eq!(f.corruption_probability(Point::ORIGIN), 1.0);
    }

    #[test]
    fn two_sources_point_one_each() {
        // κ = 0.2, I = 0.5, ρ = 0  =>  p_j = 0.1 for both sources.
        let f = field(
            vec![
                RadiationSource::fixed(Point::ORIGIN, 0.5),
                RadiationSource::fixed(Point::ORIGIN, 0.5),
            ],
            1.0,
            0.2,
        );
        let p = f.corruption_probability(Point::ORIGIN);
        assert!((p - 0.19).abs() < 1e-12);

        // Monte Carlo over independent Bernoulli draws per source.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let hits = (0..n).filter(|_| rng.gen_bool(0.1) || rng.gen_bool(0.1)).count();
        assert!((hits as f64 / n as f64 - 0.19).abs() < 0.01);
    }

    #[test]
    fn static_sources_do_not_move() {
        let f = field(vec![RadiationSource::fixed(Point::new(1.0, 2.0), 0.3)], 1.0, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(f.advance_sources(&mut rng, &Arena::default()), f);
    }

    #[test]
    fn moving_source_reflects_at_wall() {
        let arena = Arena {
            width: 20.0,
            height: 20.0,
            base_position: Point::new(-9.0, -9.0),
        };
        let mut f = field(vec![], 1.0, 0.01);
        f.sources.push(RadiationSource {
            position: Point::new(9.5, 0.0),
            intensity: 0.5,
            velocity: Point::new(1.0, 0.0),
        });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = f.advance_sources(&mut rng, &arena);
        // 9.5 + 1 = 10.5 folds back to 9.5, heading reversed.
        assert!((g.sources[0].position.x - 9.5).abs() < 1e-12);
        assert_eq!(g.sources[0].velocity.x, -1.0);
        let h = g.advance_sources(&mut rng, &arena);
        assert!((h.sources[0].position.x - 8.5).abs() < 1e-12);
    }

    #[test]
    fn moving_sources_stay_in_arena() {
        let arena = Arena::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut f = field(random_sources(3, &arena, 0.7, &mut rng), 1.0, 0.01);
        f.jitter_std = 0.3;
        for _ in 0..500 {
            f = f.advance_sources(&mut rng, &arena);
            assert!(f.sources.iter().all(|s| arena.contains(s.position)));
        }
    }

    fn exact_combined(ps: &[f64]) -> f64 {
        let one = BigRational::one();
        let survive = ps.iter().fold(one.clone(), |acc, &p| {
            acc * (one.clone() - BigRational::from_float(p).unwrap())
        });
        (one - survive).to_f64().unwrap()
    }

    fn arb_field() -> impl Strategy<Value = (RiskField, Point)> {
        let src = (-10.0..10.0f64, -10.0..10.0f64, 0.0..=1.0f64)
            .prop_map(|(x, y, i)| RadiationSource::fixed(Point::new(x, y), i));
        (
            prop::collection::vec(src, 0..6),
            0.05..5.0f64,
            0.0..=1.0f64,
            -10.0..10.0f64,
            -10.0..10.0f64,
        )
            .prop_map(|(s, decay, kappa, x, y)| (field(s, decay, kappa), Point::new(x, y)))
    }

    proptest! {
        #[test]
        fn combined_matches_exact_product((f, pos) in arb_field()) {
            let ps: Vec<f64> = f.source_corruption_probabilities(pos).collect();
            prop_assert!((f.corruption_probability(pos) - exact_combined(&ps)).abs() <= 1e-12);
        }

        #[test]
        fn union_bounds((f, pos) in arb_field()) {
            let ps: Vec<f64> = f.source_corruption_probabilities(pos).collect();
            let p = f.corruption_probability(pos);
            let max = ps.iter().cloned().fold(0.0, f64::max);
            let sum: f64 = ps.iter().sum();
            prop_assert!(p + 1e-12 >= max);
            prop_assert!(p <= sum + 1e-12);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn monotone_in_intensity_and_scale((f, pos) in arb_field(), which in 0usize..6, bump in 0.0..1.0f64) {
            let base = f.corruption_probability(pos);
            let mut g = f.clone();
            g.corruption_scale = (g.corruption_scale + bump).min(1.0);
            prop_assert!(g.corruption_probability(pos) + 1e-15 >= base);
            if !f.sources.is_empty() {
                let mut h = f.clone();
                let k = which % h.sources.len();
                h.sources[k].intensity = (h.sources[k].intensity + bump).min(1.0);
                prop_assert!(h.corruption_probability(pos) + 1e-15 >= base);
            }
        }

        #[test]
        fn monotone_in_distance((f, pos) in arb_field(), which in 0usize..6, push in 0.0..5.0f64) {
            prop_assume!(!f.sources.is_empty());
            let k = which % f.sources.len();
            let base = f.corruption_probability(pos);
            let mut g = f.clone();
            let dir = g.sources[k].position - pos;
            let n = dir.norm();
            let unit = if n > 0.0 { dir * (1.0 / n) } else { Point::new(1.0, 0.0) };
            g.sources[k].position += unit * push;
            prop_assert!(g.corruption_probability(pos) <= base + 1e-15);
        }

        #[test]
        fn radiation_permutation_invariant((f, pos) in arb_field()) {
            let mut g = f.clone();
            g.sources.reverse();
            prop_assert!((f.true_radiation(pos) - g.true_radiation(pos)).abs() < 1e-12);
        }
    }
}
