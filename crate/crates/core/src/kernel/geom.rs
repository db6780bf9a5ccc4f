use std::fmt;

use serde::{Deserialize, Serialize};

/// Planar position in meters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }

    pub fn distance(&self, other: &Location) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Location) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Axis-aligned deployment rectangle anchored at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn new(width: f64, height: f64) -> Self {
        Area { width, height }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite())
    }

    pub fn contains(&self, p: &Location) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    pub fn clamp(&self, p: Location) -> Location {
        Location::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub fn surface(&self) -> f64 {
        self.width * self.height
    }
}

/// Unit-disk connectivity test: true iff the Euclidean distance is at most `range`.
pub fn in_range(a: &Location, b: &Location, range: f64) -> bool {
    debug_assert!(range >= 0.0);
    a.distance_sq(b) <= range * range
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let a = Location::new(0.0, 0.0);
        let b = Location::new(3.0, 4.0);
        assert!(in_range(&a, &b, 5.0));
        assert!(!in_range(&a, &b, 4.9));
        assert!(in_range(&a, &a, 0.0));
    }

    #[test]
    fn clamp_keeps_points_inside() {
        let area = Area::new(10.0, 5.0);
        assert_eq!(area.clamp(Location::new(-1.0, 7.0)), Location::new(0.0, 5.0));
        assert!(area.contains(&area.clamp(Location::new(50.0, -3.0))));
    }
}
