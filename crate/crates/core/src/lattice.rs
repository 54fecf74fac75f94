//! Points and nearest-neighbour edges of Z².

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    /// The four nearest neighbours in the order left, down, right, up.
    pub fn neighbours(self) -> [Point; 4] {
        [
            Point::new(self.x - 1, self.y),
            Point::new(self.x, self.y - 1),
            Point::new(self.x + 1, self.y),
            Point::new(self.x, self.y + 1),
        ]
    }

    /// Componentwise representative in `[0, period-1]²`.
    pub fn modulo(self, period: i64) -> Point {
        Point::new(self.x.rem_euclid(period), self.y.rem_euclid(period))
    }

    pub fn linf_distance(self, other: Point) -> i64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<i64> for Point {
    type Output = Point;
    fn mul(self, k: i64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Horizontal,
    Vertical,
}

/// Unordered nearest-neighbour pair `{base, base + unit}`, stored canonically with the
/// lower-left endpoint as `base`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub base: Point,
    pub direction: Direction,
}

impl Edge {
    pub const fn horizontal(x: i64, y: i64) -> Self {
        Self {
            base: Point::new(x, y),
            direction: Direction::Horizontal,
        }
    }

    pub const fn vertical(x: i64, y: i64) -> Self {
        Self {
            base: Point::new(x, y),
            direction: Direction::Vertical,
        }
    }

    /// Canonical edge joining `p` and `q`, or `None` if they are not neighbours.
    pub fn between(p: Point, q: Point) -> Option<Edge> {
        let d = q - p;
        match (d.x, d.y) {
            (1, 0) => Some(Edge::horizontal(p.x, p.y)),
            (-1, 0) => Some(Edge::horizontal(q.x, q.y)),
            (0, 1) => Some(Edge::vertical(p.x, p.y)),
            (0, -1) => Some(Edge::vertical(q.x, q.y)),
            _ => None,
        }
    }

    pub fn head(self) -> Point {
        match self.direction {
            Direction::Horizontal => Point::new(self.base.x + 1, self.base.y),
            Direction::Vertical => Point::new(self.base.x, self.base.y + 1),
        }
    }

    pub fn endpoints(self) -> (Point, Point) {
        (self.base, self.head())
    }

    pub fn translate(self, by: Point) -> Edge {
        Edge {
            base: self.base + by,
            direction: self.direction,
        }
    }

    /// Image under a point map that sends neighbours to neighbours.
    pub fn map(self, f: impl Fn(Point) -> Point) -> Edge {
        let (p, q) = self.endpoints();
        Edge::between(f(p), f(q)).expect("lattice isometry preserves adjacency")
    }

    /// Reduce the base point modulo `period`, keeping the direction.
    pub fn modulo(self, period: i64) -> Edge {
        Edge {
            base: self.base.modulo(period),
            direction: self.direction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn between_rejects_non_neighbours() {
        assert_eq!(Edge::between(Point::new(0, 0), Point::new(1, 1)), None);
        assert_eq!(Edge::between(Point::new(0, 0), Point::new(0, 0)), None);
    }

    #[test]
    fn negative_coordinates_reduce_into_period() {
        assert_eq!(Point::new(-1, -9).modulo(4), Point::new(3, 3));
    }

    proptest! {
        #[test]
        fn edge_representation_is_orientation_free(x in -50i64..50, y in -50i64..50, k in 0usize..4) {
            let p = Point::new(x, y);
            let q = p.neighbours()[k];
            let e1 = Edge::between(p, q).unwrap();
            let e2 = Edge::between(q, p).unwrap();
            prop_assert_eq!(e1, e2);
            let (a, b) = e1.endpoints();
            prop_assert!((a == p && b == q) || (a == q && b == p));
        }
    }
}
