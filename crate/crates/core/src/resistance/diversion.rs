//! A unit flow that avoids the low-conductance crossbars of one level.
//!
//! The starting point is the pasted flow `I′` made of `m²` copies of `m⁻¹ I_{n−1}`. It is
//! then modified on the grid of side-`b` tiles: the current of the tile column running
//! into a crossbar turns left below it, climbs in the neighbouring column and turns back
//! right above it, where it is fed sideways into the high-conductance bar. Any current left
//! on a low edge is finally pushed around it along a shortest detour.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::environment::{obstacle_atlas, EdgeClass, Environment};
use crate::lattice::{Edge, Point};
use crate::scalar::Scalar;

use super::flow::{gradient_flow, paste_flow, FlowField};
use super::network::{NetworkWeights, MAX_DENSE_SIDE};
use super::potential::{solve_potential, SolverOptions};
use super::ResistanceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Bottom,
    Left,
    Top,
    Right,
}

fn side_of(p: Point, q: Point, b: i64) -> Option<Side> {
    if p.y == 0 && q.y == 0 {
        Some(Side::Bottom)
    } else if p.y == b && q.y == b {
        Some(Side::Top)
    } else if p.x == 0 && q.x == 0 {
        Some(Side::Left)
    } else if p.x == b && q.x == b {
        Some(Side::Right)
    } else {
        None
    }
}

/// The eight symmetries of the square `[0, b]²`.
fn dihedral(k: usize, b: i64) -> impl Fn(Point) -> Point {
    move |p: Point| match k {
        0 => Point::new(p.x, p.y),
        1 => Point::new(b - p.x, p.y),
        2 => Point::new(p.x, b - p.y),
        3 => Point::new(b - p.x, b - p.y),
        4 => Point::new(p.y, p.x),
        5 => Point::new(b - p.y, p.x),
        6 => Point::new(p.y, b - p.x),
        _ => Point::new(b - p.y, b - p.x),
    }
}

fn map_side(s: Side, g: &impl Fn(Point) -> Point, b: i64) -> Side {
    let (p, q) = match s {
        Side::Bottom => (Point::new(0, 0), Point::new(b, 0)),
        Side::Top => (Point::new(0, b), Point::new(b, b)),
        Side::Left => (Point::new(0, 0), Point::new(0, b)),
        Side::Right => (Point::new(b, 0), Point::new(b, b)),
    };
    side_of(g(p), g(q), b).expect("symmetries map sides to sides")
}

/// Tile-local flows with a fixed, mirror-symmetric boundary profile.
#[derive(Clone, Debug)]
pub struct TileKit<T> {
    b: usize,
    profile: Vec<T>,
    straight: FlowField<T>,
    corner: FlowField<T>,
}

impl<T: Scalar> TileKit<T> {
    /// `profile[k]` is the current entering at the k-th node of a side.
    pub fn new(profile: Vec<T>) -> Result<Self, ResistanceError> {
        let b = profile.len() - 1;
        let scale = profile.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        for k in 0..=b {
            if (profile[k] - profile[b - k]).abs() > T::of(1e-12) * scale {
                return Err(ResistanceError::RoutingConflict(
                    "tile boundary profile is not mirror symmetric".into(),
                ));
            }
        }
        let mut straight = FlowField::zero(b);
        let mut corner = FlowField::zero(b);
        for (k, &c) in profile.iter().enumerate() {
            let k = k as i64;
            for y in 0..b as i64 {
                straight.add_current(Point::new(k, y), Point::new(k, y + 1), c);
            }
            // nested L: up column k to row k, then left along row k
            for y in 0..k {
                corner.add_current(Point::new(k, y), Point::new(k, y + 1), c);
            }
            for x in (1..=k).rev() {
                corner.add_current(Point::new(x, k), Point::new(x - 1, k), c);
            }
        }
        Ok(Self {
            b,
            profile,
            straight,
            corner,
        })
    }

    pub fn side(&self) -> usize {
        self.b
    }

    pub fn profile(&self) -> &[T] {
        &self.profile
    }

    /// Flow entering through `from` and leaving through `to`.
    pub fn flow(&self, from: Side, to: Side) -> FlowField<T> {
        assert_ne!(from, to, "a tile flow needs two different sides");
        let b = self.b as i64;
        let opposite = matches!(
            (from, to),
            (Side::Bottom, Side::Top)
                | (Side::Top, Side::Bottom)
                | (Side::Left, Side::Right)
                | (Side::Right, Side::Left)
        );
        let (base, s0, s1) = if opposite {
            (&self.straight, Side::Bottom, Side::Top)
        } else {
            (&self.corner, Side::Bottom, Side::Left)
        };
        for k in 0..8 {
            let g = dihedral(k, b);
            let (a0, a1) = (map_side(s0, &g, b), map_side(s1, &g, b));
            if (a0, a1) == (from, to) {
                return base.transform(g);
            }
            if (a1, a0) == (from, to) {
                return base.transform(g).scaled(-T::one());
            }
        }
        unreachable!("the dihedral group acts transitively on side pairs")
    }
}

/// Outcome of [`build_diverted_flow`].
#[derive(Clone, Debug)]
pub struct DivertedFlow<T> {
    pub flow: FlowField<T>,
    /// The pasted flow `I′` before any modification.
    pub pasted: FlowField<T>,
    /// Tiles `(i, j)` whose flow was changed.
    pub tiles: Vec<(i64, i64)>,
    /// Low edges whose current was pushed around them by the detour pass.
    pub detours: usize,
}

/// Unit flow on `[0, a]²` from the optimal flow of the level below, normalised.
pub fn level_base_flow<T: Scalar>(
    env: &Environment,
    level: u32,
    opts: &SolverOptions,
) -> Result<FlowField<T>, ResistanceError> {
    if level == 0 {
        return Ok(FlowField::unit_cell());
    }
    let pinned = Environment::new(env.spec().pinned())?;
    let weights = NetworkWeights::<T>::from_environment(&pinned, level, None, true)?;
    let solution = solve_potential(&weights, opts, None)?;
    let g = gradient_flow(&solution.potential, &weights);
    let f = g.flux();
    Ok(g.scaled(T::one() / f))
}

/// Detour around a single obstacle tile `(i1, j1)`: the column turns left
/// below the tile, climbs through the neighbouring column and turns back right above it.
pub fn divert_around_tile<T: Scalar>(
    flow: &FlowField<T>,
    share: &FlowField<T>,
    kit: &TileKit<T>,
    tile: (i64, i64),
) -> Result<FlowField<T>, ResistanceError> {
    let b = kit.side() as i64;
    let cells = flow.side() as i64 / b;
    let (i1, j1) = tile;
    if i1 < 1 || i1 >= cells || j1 < 1 || j1 + 1 >= cells {
        return Err(ResistanceError::RoutingConflict(format!(
            "tile {tile:?} has no room for a detour"
        )));
    }
    let at = |i: i64, j: i64| Point::new(i * b, j * b);
    let mut out = flow.clone();
    for j in j1 - 1..=j1 + 1 {
        out.add_at(share, at(i1, j), -T::one());
    }
    out.add_at(&kit.flow(Side::Bottom, Side::Left), at(i1, j1 - 1), T::one());
    out.add_at(&kit.flow(Side::Right, Side::Top), at(i1 - 1, j1 - 1), T::one());
    out.add_at(&kit.flow(Side::Bottom, Side::Top), at(i1 - 1, j1), T::one());
    out.add_at(&kit.flow(Side::Bottom, Side::Right), at(i1 - 1, j1 + 1), T::one());
    out.add_at(&kit.flow(Side::Left, Side::Top), at(i1, j1 + 1), T::one());
    Ok(out)
}

/// Build a unit-flux flow on `B_n` avoiding the level-n crossbars and routing the diverted
/// columns through the high-conductance bars of the two vertical obstacles.
pub fn build_diverted_flow<T: Scalar>(
    env: &Environment,
    level: u32,
    opts: &SolverOptions,
) -> Result<DivertedFlow<T>, ResistanceError> {
    let scale = env.spec().scale(level)?.clone();
    let (a, b, beta) = (scale.a as i64, scale.b as i64, scale.beta as i64);
    if scale.a > MAX_DENSE_SIDE {
        return Err(ResistanceError::TooLarge { side: scale.a });
    }
    let ell = a / b;
    if ell % 2 != 0 {
        return Err(ResistanceError::RoutingConflict(format!(
            "a/b = {ell} is odd, so the crossbars do not sit on tile boundaries"
        )));
    }
    let a_prev = if level == 1 {
        1
    } else {
        env.spec().scale(level - 1)?.a as i64
    };
    let base = level_base_flow::<T>(env, level - 1, opts)?;
    let m = (a / a_prev) as usize;
    let per_tile = (b / a_prev) as usize;
    let pasted = paste_flow(&base, m);
    let share = paste_flow(&base, per_tile).scaled(T::of(per_tile as f64 / m as f64));
    let profile: Vec<T> = (0..=b).map(|k| share.divergence(Point::new(k, 0))).collect();
    let kit = TileKit::new(profile.clone())?;

    let half = a / 2;
    let i1 = (half - beta) / b - 1;
    let j1 = (half - 10 * b) / b - 1;
    let mid = ell / 2;
    if i1 < 1 || j1 < 1 || i1 + 3 > mid {
        return Err(ResistanceError::RoutingConflict(
            "obstacle branch has no room for a detour inside its half of the square".into(),
        ));
    }

    // tiles of the bottom-left branch and their images under the three mirrors
    let mut branch: Vec<(i64, i64)> = (j1 - 1..mid).map(|j| (i1, j)).collect();
    branch.extend([(i1 - 1, j1 - 1), (i1 - 1, j1), (i1 - 1, j1 + 1)]);
    let mut seen = BTreeSet::new();
    let mut tiles = Vec::new();
    for mx in [false, true] {
        for my in [false, true] {
            for mm in [false, true] {
                for &(i, j) in &branch {
                    let i = if mx { 2 * i1 + 1 - i } else { i };
                    let j = if my { ell - 1 - j } else { j };
                    let i = if mm { ell - 1 - i } else { i };
                    if !(0..ell).contains(&i) || !(0..ell).contains(&j) || !seen.insert((i, j)) {
                        return Err(ResistanceError::RoutingConflict(format!(
                            "tile ({i}, {j}) is claimed twice by the obstacle detours"
                        )));
                    }
                    tiles.push((i, j));
                }
            }
        }
    }

    let at = |i: i64, j: i64| Point::new(i * b, j * b);
    let mut delta = FlowField::<T>::zero(a as usize);
    for j in j1 - 1..mid {
        delta.add_at(&share, at(i1, j), -T::one());
    }
    delta.add_at(&kit.flow(Side::Bottom, Side::Left), at(i1, j1 - 1), T::one());
    delta.add_at(&kit.flow(Side::Right, Side::Top), at(i1 - 1, j1 - 1), T::one());
    delta.add_at(&kit.flow(Side::Bottom, Side::Top), at(i1 - 1, j1), T::one());
    delta.add_at(&kit.flow(Side::Bottom, Side::Right), at(i1 - 1, j1 + 1), T::one());
    delta.add_at(&kit.flow(Side::Left, Side::Right), at(i1, j1 + 1), T::one());
    // current fed into the bar from the left accumulates on its way up to the centre row
    let bar_x = (i1 + 1) * b;
    let y0 = (j1 + 1) * b;
    let mut carried = T::zero();
    for y in y0..half {
        if y - y0 <= b {
            carried = carried + profile[(y - y0) as usize];
        }
        delta.add_current(Point::new(bar_x, y), Point::new(bar_x, y + 1), carried);
    }
    let mut left_obstacle = delta.clone();
    left_obstacle.add_assign(&delta.transform(|p| Point::new(2 * bar_x - p.x, p.y)), T::one());
    let upper = left_obstacle.transform(|p| Point::new(p.x, a - p.y));
    left_obstacle.add_assign(&upper, -T::one());
    let mut flow = pasted.clone();
    flow.add_assign(&left_obstacle, T::one());
    flow.add_assign(&left_obstacle.transform(|p| Point::new(a - p.x, p.y)), T::one());

    let detours = detour_low_edges(&mut flow, &low_edges(env, level)?);

    let tol = T::of(1e-10) * T::of(1.0 / ell as f64);
    let balance = flow.balance_error();
    let flux = flow.flux();
    if balance > tol || (flux - T::one()).abs() > T::of(1e-10) {
        return Err(ResistanceError::RoutingConflict(format!(
            "diverted flow is not a unit flow (balance {balance}, flux {flux})"
        )));
    }
    Ok(DivertedFlow {
        flow,
        pasted,
        tiles,
        detours,
    })
}

fn low_edges(env: &Environment, level: u32) -> Result<BTreeSet<Edge>, ResistanceError> {
    let atlas = obstacle_atlas(env.spec().scale(level)?)?;
    Ok(atlas
        .segments
        .iter()
        .filter(|(_, c)| *c == EdgeClass::Low)
        .map(|(e, _)| *e)
        .collect())
}

/// Move the current of every low edge onto a shortest path between its endpoints that
/// avoids all low edges, exploring neighbours left, down, right, up.
fn detour_low_edges<T: Scalar>(flow: &mut FlowField<T>, low: &BTreeSet<Edge>) -> usize {
    let a = flow.side() as i64;
    let mut count = 0;
    for &e in low {
        let i = flow.edge_current(e);
        if i == T::zero() {
            continue;
        }
        let (u, v) = e.endpoints();
        let Some(path) = shortest_path(u, v, a, low) else {
            continue;
        };
        flow.set_edge_current(e, T::zero());
        for w in path.windows(2) {
            flow.add_current(w[0], w[1], i);
        }
        count += 1;
    }
    count
}

fn shortest_path(from: Point, to: Point, a: i64, blocked: &BTreeSet<Edge>) -> Option<Vec<Point>> {
    let width = (a + 1) as usize;
    let id = |p: Point| p.y as usize * width + p.x as usize;
    let mut prev = vec![usize::MAX; width * width];
    let mut queue = VecDeque::from([from]);
    prev[id(from)] = id(from);
    while let Some(p) = queue.pop_front() {
        if p == to {
            let mut path = vec![to];
            let mut k = id(to);
            while k != id(from) {
                k = prev[k];
                path.push(Point::new((k % width) as i64, (k / width) as i64));
            }
            path.reverse();
            return Some(path);
        }
        for q in p.neighbours() {
            if !(0..=a).contains(&q.x) || !(0..=a).contains(&q.y) || prev[id(q)] != usize::MAX {
                continue;
            }
            if blocked.contains(&Edge::between(p, q).expect("neighbours")) {
                continue;
            }
            prev[id(q)] = id(p);
            queue.push_back(q);
        }
    }
    None
}
