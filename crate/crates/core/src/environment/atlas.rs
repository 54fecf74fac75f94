//! Obstacle geometry of one level on the fundamental square `B_n = [0, a_n]²`.
//!
//! One I-shaped obstacle is a vertical bar of high-conductance edges at
//! `x = a' − β` spanning `y ∈ [a' − 10b, a' + 10b]`, capped by two crossbars: the
//! vertical edges between rows `a' ± 10b` and `a' ± (10b + 1)` for
//! `x ∈ [a' − β − b, a' − β + b]`, which carry the low conductance. The full atlas is the
//! orbit of this I under the reflections `R₁(x, y) = (y, x)` and
//! `R₂(x, y) = (a − y, a − x)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EnvironmentError, ScaleParams};
use crate::lattice::{Direction, Edge, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    Low,
    High,
}

/// Element of the reflection group `{id, R₁, R₂, R₁R₂}` of the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    Identity,
    R1,
    R2,
    R1R2,
}

impl Symmetry {
    pub const ALL: [Symmetry; 4] = [Symmetry::Identity, Symmetry::R1, Symmetry::R2, Symmetry::R1R2];

    pub fn apply(self, p: Point, side: i64) -> Point {
        match self {
            Symmetry::Identity => p,
            Symmetry::R1 => Point::new(p.y, p.x),
            Symmetry::R2 => Point::new(side - p.y, side - p.x),
            Symmetry::R1R2 => Point::new(side - p.x, side - p.y),
        }
    }
}

/// Closed-form description of the level geometry; answers class queries without storage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObstacleGeometry {
    pub side: i64,
    pub half: i64,
    pub unit: i64,
    pub offset: i64,
}

impl ObstacleGeometry {
    pub fn new(scale: &ScaleParams) -> Result<Self, EnvironmentError> {
        let side = scale.a as i64;
        let unit = scale.b as i64;
        let offset = scale.beta as i64;
        let half = side / 2;
        let geometry = Self {
            side,
            half,
            unit,
            offset,
        };
        let (lo, hi) = geometry.footprint();
        if side % 2 != 0 || unit <= 0 || lo.x < 1 || lo.y < 1 || hi.x > side - 1 || hi.y > side - 1 {
            return Err(EnvironmentError::InfeasibleGeometry {
                level: scale.level,
                a: scale.a,
            });
        }
        Ok(geometry)
    }

    /// Bounding box of the unreflected I (crossbars included).
    pub fn footprint(&self) -> (Point, Point) {
        let bar_x = self.bar_x();
        (
            Point::new(bar_x - self.unit, self.half - 10 * self.unit - 1),
            Point::new(bar_x + self.unit, self.half + 10 * self.unit + 1),
        )
    }

    pub fn bar_x(&self) -> i64 {
        self.half - self.offset
    }

    fn base_class(&self, e: Edge) -> Option<EdgeClass> {
        if e.direction != Direction::Vertical {
            return None;
        }
        let (x, y) = (e.base.x, e.base.y);
        let bar_x = self.bar_x();
        let span = 10 * self.unit;
        if x == bar_x && y >= self.half - span && y < self.half + span {
            return Some(EdgeClass::High);
        }
        if (bar_x - self.unit..=bar_x + self.unit).contains(&x) && (y == self.half - span - 1 || y == self.half + span)
        {
            return Some(EdgeClass::Low);
        }
        None
    }

    /// Class of an edge of the fundamental square (base already reduced mod `side`).
    pub fn classify(&self, e: Edge) -> Option<EdgeClass> {
        let mut class = None;
        for g in Symmetry::ALL {
            // every group element is an involution, so e ∈ g(D) iff g(e) ∈ D
            let image = e.map(|p| g.apply(p, self.side));
            match self.base_class(image) {
                Some(EdgeClass::High) => return Some(EdgeClass::High),
                Some(EdgeClass::Low) => class = Some(EdgeClass::Low),
                None => {}
            }
        }
        class
    }

    /// Vertical high-conductance edges of the unreflected bar.
    pub fn bar_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let span = 10 * self.unit;
        (self.half - span..self.half + span).map(move |y| Edge::vertical(self.bar_x(), y))
    }

    /// Low-conductance vertical edges of both crossbars of the unreflected I.
    pub fn crossbar_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let span = 10 * self.unit;
        let bar_x = self.bar_x();
        (bar_x - self.unit..=bar_x + self.unit).flat_map(move |x| {
            [
                Edge::vertical(x, self.half - span - 1),
                Edge::vertical(x, self.half + span),
            ]
        })
    }

    /// `w⁰`: centre of the left crossbar of the R₁ image (the lowest obstacle).
    pub fn lowest_obstacle_anchor(&self) -> Point {
        Point::new(self.half - 10 * self.unit - 1, self.half - self.offset)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleAtlas {
    pub level: u32,
    pub side: u64,
    pub segments: Vec<(Edge, EdgeClass)>,
}

impl ObstacleAtlas {
    pub fn count(&self, class: EdgeClass) -> usize {
        self.segments.iter().filter(|(_, c)| *c == class).count()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn class_of(&self, edge: Edge) -> Option<EdgeClass> {
        self.segments
            .binary_search_by(|(e, _)| e.cmp(&edge))
            .ok()
            .map(|i| self.segments[i].1)
    }

    /// True when the classed edge set is fixed by `g`.
    pub fn is_invariant_under(&self, g: Symmetry) -> bool {
        let side = self.side as i64;
        self.segments
            .iter()
            .all(|&(e, c)| self.class_of(e.map(|p| g.apply(p, side))) == Some(c))
    }
}

/// Enumerate the classed edges of one level by taking the orbit of the base I.
pub fn obstacle_atlas(scale: &ScaleParams) -> Result<ObstacleAtlas, EnvironmentError> {
    let geometry = ObstacleGeometry::new(scale)?;
    let mut classes: BTreeMap<Edge, EdgeClass> = BTreeMap::new();
    let mut conflicts = 0usize;
    let base: Vec<(Edge, EdgeClass)> = geometry
        .bar_edges()
        .map(|e| (e, EdgeClass::High))
        .chain(geometry.crossbar_edges().map(|e| (e, EdgeClass::Low)))
        .collect();
    for g in Symmetry::ALL {
        for &(e, class) in &base {
            let image = e.map(|p| g.apply(p, geometry.side));
            match classes.get(&image) {
                Some(&existing) if existing != class => {
                    conflicts += 1;
                    classes.insert(image, EdgeClass::High);
                }
                Some(_) => {}
                None => {
                    classes.insert(image, class);
                }
            }
        }
    }
    debug_assert_eq!(conflicts, 0, "bar and crossbar edge sets overlap");
    Ok(ObstacleAtlas {
        level: scale.level,
        side: scale.a,
        segments: classes.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale(a: u64, b: u64, beta: u64) -> ScaleParams {
        ScaleParams::new(1, a, b, beta)
    }

    #[test]
    fn high_edges_per_obstacle_span_twenty_units() {
        let s = scale(224, 8, 96);
        let g = ObstacleGeometry::new(&s).unwrap();
        assert_eq!(g.bar_edges().count(), 20 * 8);
        assert_eq!(g.crossbar_edges().count(), 2 * (2 * 8 + 1));
    }

    #[test]
    fn corner_crossbar_edge_is_low() {
        let s = scale(224, 8, 96);
        let g = ObstacleGeometry::new(&s).unwrap();
        let (half, b, beta) = (112, 8, 96);
        let e = Edge::vertical(half - beta - b, half + 10 * b);
        assert_eq!(g.classify(e), Some(EdgeClass::Low));
        let atlas = obstacle_atlas(&s).unwrap();
        assert_eq!(atlas.class_of(e), Some(EdgeClass::Low));
    }

    #[test]
    fn census_for_unit_four() {
        let atlas = obstacle_atlas(&scale(96, 4, 24)).unwrap();
        assert_eq!(atlas.count(EdgeClass::High), 320);
        assert_eq!(atlas.count(EdgeClass::Low), 72);
        assert!(atlas.len() < 100 * 4);
    }

    #[test]
    fn atlas_is_symmetric() {
        for (a, b, beta) in [(224, 8, 96), (96, 4, 24), (84, 4, 8)] {
            let atlas = obstacle_atlas(&scale(a, b, beta)).unwrap();
            for g in Symmetry::ALL {
                assert!(atlas.is_invariant_under(g), "{a} {b} {beta} {g:?}");
            }
        }
    }

    #[test]
    fn enumeration_and_closed_form_agree_on_every_edge() {
        for (a, b, beta) in [(96, 4, 24), (84, 4, 8), (112, 4, 48)] {
            let s = scale(a, b, beta);
            let atlas = obstacle_atlas(&s).unwrap();
            let geometry = ObstacleGeometry::new(&s).unwrap();
            let side = a as i64;
            let mut seen = 0;
            for x in 0..side {
                for y in 0..side {
                    for e in [Edge::horizontal(x, y), Edge::vertical(x, y)] {
                        let c = geometry.classify(e);
                        assert_eq!(c, atlas.class_of(e), "{e:?}");
                        seen += c.is_some() as usize;
                    }
                }
            }
            assert_eq!(seen, atlas.len());
        }
    }

    #[test]
    fn footprint_outside_square_is_rejected() {
        // a' − 10b − 1 = −1
        let err = obstacle_atlas(&scale(80, 4, 8)).unwrap_err();
        assert!(matches!(err, EnvironmentError::InfeasibleGeometry { .. }));
    }

    #[test]
    fn edges_near_boundary_are_never_classed() {
        let s = scale(224, 8, 96);
        let g = ObstacleGeometry::new(&s).unwrap();
        for t in 0..224 {
            for e in [
                Edge::horizontal(t, 0),
                Edge::vertical(0, t),
                Edge::horizontal(t, 223),
                Edge::vertical(223, t),
            ] {
                assert_eq!(g.classify(e), None);
            }
        }
    }
}
