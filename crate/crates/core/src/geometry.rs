//! Planar points and the rectangular arena agents live in.

use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A 2D point or displacement, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, rhs: Point) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Axis-aligned arena centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
    /// Where the base station sits for generators that do not fix it themselves.
    pub base_position: Point,
}

impl Default for Arena {
    fn default() -> Self {
        // 20 m x 20 m, base station at the lower-left corner of the default grid.
        Self {
            width: 20.0,
            height: 20.0,
            base_position: Point::new(-9.9, -9.9),
        }
    }
}

impl Arena {
    pub fn min(&self) -> Point {
        Point::new(-self.width / 2.0, -self.height / 2.0)
    }

    pub fn max(&self) -> Point {
        Point::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn contains(&self, p: Point) -> bool {
        let (lo, hi) = (self.min(), self.max());
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0.0
            && self.height > 0.0
            && self.width.is_finite()
            && self.height.is_finite()
            && self.contains(self.base_position)
    }

    /// Folds `p` back inside the arena by mirroring across the walls it
    /// crossed. Returns the folded point and, per axis, whether the motion
    /// along that axis ended up reversed.
    pub fn reflect(&self, p: Point) -> (Point, bool, bool) {
        let (x, fx) = reflect_axis(p.x, -self.width / 2.0, self.width / 2.0);
        let (y, fy) = reflect_axis(p.y, -self.height / 2.0, self.height / 2.0);
        (Point::new(x, y), fx, fy)
    }
}

fn reflect_axis(mut v: f64, lo: f64, hi: f64) -> (f64, bool) {
    let mut flipped = false;
    // Loop handles displacements longer than the arena itself.
    for _ in 0..64 {
        if v < lo {
            v = 2.0 * lo - v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            return (v, flipped);
        }
        flipped = !flipped;
    }
    (v.clamp(lo, hi), flipped)
}
