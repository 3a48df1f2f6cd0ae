//! Minimal 2D geometry shared by the scenario model, the channel geometry
//! derivation and the image-method tracer.

use serde::{Deserialize, Serialize};

/// A point (or position vector) in the floor plane, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Directed line segment between two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

/// Ray parameter slack: a crossing must be strictly interior to the ray so
/// that a leg ending exactly on a wall (a bounce point) is not also counted
/// as a crossing of that wall.
const T_EPS: f64 = 1e-9;
/// Slack on the wall parameter, so corner hits resolve deterministically.
const S_EPS: f64 = 1e-9;

impl Segment {
    pub const fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn midpoint(&self) -> Point2 {
        Point2::new((self.a.x + self.b.x) / 2.0, (self.a.y + self.b.y) / 2.0)
    }

    /// Unit direction from `a` to `b`.
    pub fn direction(&self) -> (f64, f64) {
        let len = self.length();
        ((self.b.x - self.a.x) / len, (self.b.y - self.a.y) / len)
    }

    /// Mirror a point across the infinite line through this segment.
    pub fn mirror(&self, p: Point2) -> Point2 {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = dx * dx + dy * dy;
        let t = ((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2;
        let foot = Point2::new(self.a.x + t * dx, self.a.y + t * dy);
        Point2::new(2.0 * foot.x - p.x, 2.0 * foot.y - p.y)
    }

    /// Proper crossing of the ray `p -> q` with this segment. Returns the
    /// crossing point and the ray parameter `t`; `None` for parallel lines,
    /// misses, and endpoint grazes.
    pub fn crossing(&self, p: Point2, q: Point2) -> Option<(Point2, f64)> {
        let (rx, ry) = (q.x - p.x, q.y - p.y);
        let (sx, sy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let denom = rx * sy - ry * sx;
        if denom.abs() < 1e-15 {
            return None;
        }
        let (wx, wy) = (self.a.x - p.x, self.a.y - p.y);
        let t = (wx * sy - wy * sx) / denom;
        let s = (wx * ry - wy * rx) / denom;
        if t > T_EPS && t < 1.0 - T_EPS && (-S_EPS..=1.0 + S_EPS).contains(&s) {
            Some((Point2::new(p.x + t * rx, p.y + t * ry), t))
        } else {
            None
        }
    }

    /// Distance from a point to the closed segment.
    pub fn distance_to(&self, p: Point2) -> f64 {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return self.a.dist(p);
        }
        let t = (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0);
        p.dist(Point2::new(self.a.x + t * dx, self.a.y + t * dy))
    }

    /// True when `p` lies on the segment within `tol` metres.
    pub fn contains_point(&self, p: Point2, tol: f64) -> bool {
        self.distance_to(p) <= tol
    }
}
