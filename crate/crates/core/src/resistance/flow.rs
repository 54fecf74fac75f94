//! Flows on `[0, a]²`: antisymmetric edge currents, flux and energy.

use crate::lattice::{Direction, Edge, Point};
use crate::scalar::{CompensatedSum, Scalar};

use super::network::{edge_on_square_border, NetworkWeights};
use super::potential::PotentialField;
use super::ResistanceError;

/// Current along every edge of `[0, a]²`, stored in the positive coordinate direction.
/// `current(p, q) = −current(q, p)` by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField<T> {
    side: usize,
    horizontal: Vec<T>,
    vertical: Vec<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn zero(side: usize) -> Self {
        Self {
            side,
            horizontal: vec![T::zero(); side * (side + 1)],
            vertical: vec![T::zero(); side * (side + 1)],
        }
    }

    /// The only unit flow on the unit square: ½ up each side.
    pub fn unit_cell() -> Self {
        let mut f = Self::zero(1);
        let half = T::of(0.5);
        f.add_current(Point::new(0, 0), Point::new(0, 1), half);
        f.add_current(Point::new(1, 0), Point::new(1, 1), half);
        f
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn contains(&self, p: Point) -> bool {
        let a = self.side as i64;
        (0..=a).contains(&p.x) && (0..=a).contains(&p.y)
    }

    fn slot(&self, e: Edge) -> Option<(Direction, usize)> {
        let (p, q) = e.endpoints();
        if !self.contains(p) || !self.contains(q) {
            return None;
        }
        let (x, y) = (e.base.x as usize, e.base.y as usize);
        Some(match e.direction {
            Direction::Horizontal => (Direction::Horizontal, y * self.side + x),
            Direction::Vertical => (Direction::Vertical, y * (self.side + 1) + x),
        })
    }

    /// Current along `e` from its base to its head.
    pub fn edge_current(&self, e: Edge) -> T {
        match self.slot(e) {
            Some((Direction::Horizontal, i)) => self.horizontal[i],
            Some((Direction::Vertical, i)) => self.vertical[i],
            None => T::zero(),
        }
    }

    fn slot_mut(&mut self, e: Edge) -> &mut T {
        match self.slot(e) {
            Some((Direction::Horizontal, i)) => &mut self.horizontal[i],
            Some((Direction::Vertical, i)) => &mut self.vertical[i],
            None => panic!("edge {e:?} outside the square of side {}", self.side),
        }
    }

    /// `I(p, q)`; zero unless `p ~ q`.
    pub fn current(&self, p: Point, q: Point) -> T {
        match Edge::between(p, q) {
            Some(e) if e.base == p => self.edge_current(e),
            Some(e) => -self.edge_current(e),
            None => T::zero(),
        }
    }

    /// Push `amount` of current from `p` to its neighbour `q`.
    pub fn add_current(&mut self, p: Point, q: Point, amount: T) {
        let e = Edge::between(p, q).expect("current only flows between neighbours");
        let signed = if e.base == p { amount } else { -amount };
        let slot = self.slot_mut(e);
        *slot = *slot + signed;
    }

    pub fn set_edge_current(&mut self, e: Edge, value: T) {
        *self.slot_mut(e) = value;
    }

    /// Every edge with its current.
    pub fn edges(&self) -> impl Iterator<Item = (Edge, T)> + '_ {
        let a = self.side as i64;
        (0..=a).flat_map(move |y| {
            (0..=a).flat_map(move |x| {
                let mut v = Vec::with_capacity(2);
                if x < a {
                    let e = Edge::horizontal(x, y);
                    v.push((e, self.edge_current(e)));
                }
                if y < a {
                    let e = Edge::vertical(x, y);
                    v.push((e, self.edge_current(e)));
                }
                v
            })
        })
    }

    /// Net current leaving `p`: `Σ_q I(p, q)`.
    pub fn divergence(&self, p: Point) -> T {
        p.neighbours()
            .into_iter()
            .filter(|&q| self.contains(q))
            .fold(T::zero(), |s, q| s + self.current(p, q))
    }

    /// Largest node imbalance over the strip without its top and bottom rows.
    pub fn balance_error(&self) -> T {
        let a = self.side as i64;
        let mut worst = T::zero();
        for y in 1..a {
            for x in 0..=a {
                worst = worst.max(self.divergence(Point::new(x, y)).abs());
            }
        }
        worst
    }

    /// Net current delivered to the top row.
    pub fn flux(&self) -> T {
        let a = self.side as i64;
        accumulate((0..=a).map(|x| -self.divergence(Point::new(x, a))))
    }

    pub fn scaled(mut self, factor: T) -> Self {
        for v in self.horizontal.iter_mut().chain(self.vertical.iter_mut()) {
            *v = *v * factor;
        }
        self
    }

    pub fn add_assign(&mut self, other: &Self, factor: T) {
        assert_eq!(self.side, other.side);
        for (a, b) in self.horizontal.iter_mut().zip(&other.horizontal) {
            *a = *a + factor * *b;
        }
        for (a, b) in self.vertical.iter_mut().zip(&other.vertical) {
            *a = *a + factor * *b;
        }
    }

    /// Add `factor · tile` with the tile's origin placed at `origin`.
    pub fn add_at(&mut self, tile: &Self, origin: Point, factor: T) {
        for (e, i) in tile.edges() {
            if i != T::zero() {
                let (p, q) = e.translate(origin).endpoints();
                self.add_current(p, q, factor * i);
            }
        }
    }

    /// Image under a map of the square onto itself that preserves adjacency.
    pub fn transform(&self, map: impl Fn(Point) -> Point) -> Self {
        let mut out = Self::zero(self.side);
        for (e, i) in self.edges() {
            if i != T::zero() {
                let (p, q) = e.endpoints();
                out.add_current(map(p), map(q), i);
            }
        }
        out
    }

    /// Reflection in the diagonal `x = y`.
    pub fn reflect_diagonal(&self) -> Self {
        self.transform(|p| Point::new(p.y, p.x))
    }

    /// Sub-flow on the `side × side` square with lower-left corner `origin`.
    pub fn window(&self, origin: Point, side: usize) -> Self {
        let mut out = Self::zero(side);
        for (e, _) in Self::zero(side).edges() {
            let value = self.edge_current(e.translate(origin));
            out.set_edge_current(e, value);
        }
        out
    }
}

fn accumulate<T: Scalar>(terms: impl Iterator<Item = T>) -> T {
    terms.collect::<CompensatedSum<T>>().value()
}

/// Gradient flow `I(x, y) = w_xy (f(y) − f(x))` of a potential.
pub fn gradient_flow<T: Scalar>(f: &PotentialField<T>, weights: &NetworkWeights<T>) -> FlowField<T> {
    let mut flow = FlowField::zero(weights.side());
    for e in weights.edges() {
        let w = weights.weight(e).expect("edge inside square");
        let (p, q) = e.endpoints();
        flow.set_edge_current(e, w * (f.get(q) - f.get(p)));
    }
    flow
}

/// Flux of a flow (current delivered to the top row).
pub fn flux<T: Scalar>(flow: &FlowField<T>) -> T {
    flow.flux()
}

/// `E(I, I) = Σ_e I_e² / w_e` with the weights' border convention.
pub fn flow_energy<T: Scalar>(flow: &FlowField<T>, weights: &NetworkWeights<T>) -> Result<T, ResistanceError> {
    assert_eq!(flow.side(), weights.side());
    let mut acc = CompensatedSum::new();
    for (e, i) in flow.edges() {
        if i == T::zero() {
            continue;
        }
        let w = weights.weight(e).expect("edge inside square");
        if w == T::zero() {
            return Err(ResistanceError::InfiniteEnergy { edge: e });
        }
        acc.add(i * i / w);
    }
    Ok(acc.value())
}

/// Energy of a tile-local flow placed with its lower-left corner at `origin`, using the
/// raw conductances halved along the tile's own border.
pub fn tile_energy<T: Scalar>(
    local: &FlowField<T>,
    weights: &NetworkWeights<T>,
    origin: Point,
) -> Result<T, ResistanceError> {
    let mut acc = CompensatedSum::new();
    for (e, i) in local.edges() {
        if i == T::zero() {
            continue;
        }
        let mut w = weights.raw(e.translate(origin)).expect("tile inside square");
        if edge_on_square_border(e, Point::ORIGIN, local.side() as i64) {
            w = w * T::of(0.5);
        }
        if w == T::zero() {
            return Err(ResistanceError::InfiniteEnergy {
                edge: e.translate(origin),
            });
        }
        acc.add(i * i / w);
    }
    Ok(acc.value())
}

/// Make `flow` a genuine flow: every node imbalance off the top and bottom rows is pushed,
/// along a breadth-first forest of positive-weight edges rooted at those rows, to a root.
pub fn rebalance<T: Scalar>(flow: &FlowField<T>, weights: &NetworkWeights<T>) -> FlowField<T> {
    let a = flow.side() as i64;
    let width = (a + 1) as usize;
    let id = |p: Point| p.y as usize * width + p.x as usize;
    let mut parent = vec![None::<Point>; width * width];
    let mut seen = vec![false; width * width];
    let mut order = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for x in 0..=a {
        for y in [0, a] {
            let p = Point::new(x, y);
            seen[id(p)] = true;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        for q in p.neighbours() {
            if !(0..=a).contains(&q.x) || !(1..a).contains(&q.y) || seen[id(q)] {
                continue;
            }
            let e = Edge::between(p, q).expect("neighbours");
            if weights.weight(e).is_some_and(|w| w > T::zero()) {
                seen[id(q)] = true;
                parent[id(q)] = Some(p);
                order.push(q);
                queue.push_back(q);
            }
        }
    }
    let mut out = flow.clone();
    for &q in order.iter().rev() {
        let excess = out.divergence(q);
        if excess != T::zero() {
            let p = parent[id(q)].expect("forest node has a parent");
            out.add_current(p, q, excess);
        }
    }
    out
}

/// `m²` copies of `m⁻¹ · base`, one per sub-square of `[0, m a]²`.
pub fn paste_flow<T: Scalar>(base: &FlowField<T>, m: usize) -> FlowField<T> {
    let a = base.side();
    let mut out = FlowField::zero(a * m);
    let factor = T::one() / T::of(m as f64);
    for i in 0..m {
        for j in 0..m {
            out.add_at(base, Point::new((i * a) as i64, (j * a) as i64), factor);
        }
    }
    out
}
