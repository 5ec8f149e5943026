//! Metric boxes, uniform grid covers and the cell lookup (`disc`) they induce.
//!
//! Every box carries the L∞ metric rescaled per dimension so that its diameter is
//! exactly 1. The joint state-action metric is the sum of the two box metrics.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::sync::OnceLock;

use arrayvec::ArrayVec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::Decoder;
use crate::env::Observation;
use crate::error::{invalid_param, Error, Result};

pub const MAX_DIMS: usize = 4;

/// Points in a latent state or action box.
pub type Point = ArrayVec<f64, MAX_DIMS>;

/// Round-off allowance (in normalized units) before a point counts as outside its box.
pub const BOX_TOLERANCE: f64 = 1e-9;

pub fn point(coords: &[f64]) -> Point {
    coords.iter().copied().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl MetricBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() > MAX_DIMS {
            return Err(invalid_param(format!(
                "box needs 1..={MAX_DIMS} matching bounds, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(invalid_param(format!("degenerate box side [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dims: usize) -> Self {
        Self::new(vec![0.0; dims], vec![1.0; dims]).expect("unit box")
    }

    pub fn symmetric(dims: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dims], vec![half_width; dims])
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    pub fn center(&self) -> Point {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Coordinates mapped to the unit cube.
    pub fn normalize(&self, p: &[f64]) -> Point {
        p.iter()
            .enumerate()
            .map(|(d, x)| (x - self.lower[d]) / self.width(d))
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Point {
        u.iter()
            .enumerate()
            .map(|(d, x)| self.lower[d] + x * self.width(d))
            .collect()
    }

    /// Scaled L∞ distance; the diameter of the box is 1.
    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .enumerate()
            .map(|(d, (a, b))| (a - b).abs() / self.width(d))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dims()
            && p.iter().enumerate().all(|(d, x)| {
                let u = (x - self.lower[d]) / self.width(d);
                (-BOX_TOLERANCE..=1.0 + BOX_TOLERANCE).contains(&u)
            })
    }

    /// Clamps round-off overshoot; anything further out is an error.
    pub fn clamp_point(&self, p: &[f64]) -> Result<Point> {
        if !self.contains(p) {
            return Err(Error::OutOfDomain { point: p.to_vec() });
        }
        Ok(p
            .iter()
            .enumerate()
            .map(|(d, x)| x.clamp(self.lower[d], self.upper[d]))
            .collect())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        (0..self.dims())
            .map(|d| rng.gen_range(self.lower[d]..=self.upper[d]))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub usize);

impl CellId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Uniform grid cover: `ceil(1/eta)` cells per dimension, cells ordered row-major
/// with the first coordinate most significant.
#[derive(Clone, Debug)]
pub struct CoverIndex {
    bbox: MetricBox,
    eta: f64,
    per_dim: usize,
    centers: Vec<Point>,
}

impl CoverIndex {
    pub fn build(bbox: &MetricBox, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(invalid_param(format!("cover scale must lie in (0, 1], got {eta}")));
        }
        let per_dim = ((1.0 / eta) - 1e-12).ceil().max(1.0) as usize;
        let dims = bbox.dims();
        let total = per_dim
            .checked_pow(dims as u32)
            .filter(|n| *n <= 1 << 24)
            .ok_or_else(|| invalid_param(format!("cover with {per_dim}^{dims} cells is too large")))?;
        let mut centers = Vec::with_capacity(total);
        let mut coords = vec![0usize; dims];
        for _ in 0..total {
            let u: Point = coords.iter().map(|&i| (i as f64 + 0.5) / per_dim as f64).collect();
            centers.push(bbox.denormalize(&u));
            for d in (0..dims).rev() {
                coords[d] += 1;
                if coords[d] < per_dim {
                    break;
                }
                coords[d] = 0;
            }
        }
        Ok(Self { bbox: bbox.clone(), eta, per_dim, centers })
    }

    pub fn bbox(&self) -> &MetricBox {
        &self.bbox
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn per_dim(&self) -> usize {
        self.per_dim
    }

    pub fn d_eta(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn center(&self, cell: CellId) -> &Point {
        &self.centers[cell.0]
    }

    /// Side length of a cell in normalized units.
    pub fn cell_width(&self) -> f64 {
        1.0 / self.per_dim as f64
    }

    /// Cell containing `p`. Points on a shared face go to the lower-index cell.
    pub fn disc(&self, p: &[f64]) -> Result<CellId> {
        if !self.bbox.contains(p) {
            return Err(Error::OutOfDomain { point: p.to_vec() });
        }
        let k = self.per_dim as f64;
        let mut index = 0usize;
        for (d, x) in p.iter().enumerate() {
            let u = ((x - self.bbox.lower()[d]) / self.bbox.width(d)).clamp(0.0, 1.0);
            let i = ((u * k).ceil() as isize - 1).clamp(0, self.per_dim as isize - 1) as usize;
            index = index * self.per_dim + i;
        }
        Ok(CellId(index))
    }

    pub fn grid_coords(&self, cell: CellId) -> Vec<usize> {
        let dims = self.bbox.dims();
        let mut coords = vec![0; dims];
        let mut rest = cell.0;
        for d in (0..dims).rev() {
            coords[d] = rest % self.per_dim;
            rest /= self.per_dim;
        }
        coords
    }

    pub fn cell_from_coords(&self, coords: &[usize]) -> CellId {
        CellId(coords.iter().fold(0, |acc, &i| acc * self.per_dim + i))
    }

    /// Undirected king-move adjacency; shortest paths in this graph reproduce the
    /// L∞ distance between centers.
    fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let dims = self.bbox.dims();
        let mut out = Vec::new();
        let offsets: Vec<Vec<isize>> = (0..3usize.pow(dims as u32))
            .map(|mut code| {
                (0..dims)
                    .map(|_| {
                        let o = (code % 3) as isize - 1;
                        code /= 3;
                        o
                    })
                    .collect()
            })
            .filter(|o: &Vec<isize>| o.iter().any(|&x| x != 0))
            .collect();
        for cell in 0..self.d_eta() {
            let coords = self.grid_coords(CellId(cell));
            for off in &offsets {
                let moved: Option<Vec<usize>> = coords
                    .iter()
                    .zip(off)
                    .map(|(&c, &o)| {
                        let n = c as isize + o;
                        (0..self.per_dim as isize).contains(&n).then_some(n as usize)
                    })
                    .collect();
                if let Some(m) = moved {
                    let other = self.cell_from_coords(&m).0;
                    if other > cell {
                        out.push((cell, other));
                    }
                }
            }
        }
        out
    }
}

/// Edge of the joint adjacency graph: cells `a < b` at center distance `length`.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// A state cover and an action cover; joint cell index is
/// `action_cells * state_cell + action_cell`.
#[derive(Debug)]
pub struct JointCover {
    states: CoverIndex,
    actions: CoverIndex,
    edges: OnceLock<Vec<Edge>>,
}

impl Clone for JointCover {
    fn clone(&self) -> Self {
        Self::new(self.states.clone(), self.actions.clone())
    }
}

impl JointCover {
    pub fn new(states: CoverIndex, actions: CoverIndex) -> Self {
        Self { states, actions, edges: OnceLock::new() }
    }

    pub fn build(state_box: &MetricBox, state_eta: f64, action_box: &MetricBox, action_eta: f64) -> Result<Self> {
        Ok(Self::new(
            CoverIndex::build(state_box, state_eta)?,
            CoverIndex::build(action_box, action_eta)?,
        ))
    }

    /// Cover whose action side is a single cell, for functions of the state alone.
    pub fn state_only(state_box: &MetricBox, eta: f64, action_box: &MetricBox) -> Result<Self> {
        Self::build(state_box, eta, action_box, 1.0)
    }

    pub fn states(&self) -> &CoverIndex {
        &self.states
    }

    pub fn actions(&self) -> &CoverIndex {
        &self.actions
    }

    pub fn d_eta(&self) -> usize {
        self.states.d_eta() * self.actions.d_eta()
    }

    pub fn joint(&self, state: CellId, action: CellId) -> CellId {
        CellId(self.actions.d_eta() * state.0 + action.0)
    }

    pub fn split(&self, cell: CellId) -> (CellId, CellId) {
        let n = self.actions.d_eta();
        (CellId(cell.0 / n), CellId(cell.0 % n))
    }

    pub fn disc(&self, s: &[f64], a: &[f64]) -> Result<CellId> {
        Ok(self.joint(self.states.disc(s)?, self.actions.disc(a)?))
    }

    /// D_S + D_A between the centers of two joint cells.
    pub fn distance(&self, c1: CellId, c2: CellId) -> f64 {
        let (s1, a1) = self.split(c1);
        let (s2, a2) = self.split(c2);
        self.states.bbox().distance(self.states.center(s1), self.states.center(s2))
            + self.actions.bbox().distance(self.actions.center(a1), self.actions.center(a2))
    }

    pub fn edges(&self) -> &[Edge] {
        self.edges.get_or_init(|| {
            let na = self.actions.d_eta();
            let ns = self.states.d_eta();
            let ws = self.states.cell_width();
            let wa = self.actions.cell_width();
            let mut edges = Vec::new();
            for (s1, s2) in self.states.neighbor_pairs() {
                for a in 0..na {
                    edges.push(Edge { a: s1 * na + a, b: s2 * na + a, length: ws });
                }
            }
            for (a1, a2) in self.actions.neighbor_pairs() {
                for s in 0..ns {
                    edges.push(Edge { a: s * na + a1, b: s * na + a2, length: wa });
                }
            }
            edges.sort_by_key(|e| (e.a, e.b));
            edges
        })
    }

    /// `min over sources (value + slope * D(cell, source))` for every cell, by
    /// Dijkstra over the adjacency graph (its path metric equals D).
    pub fn upper_envelope(&self, sources: &[(usize, f64)], slope: f64) -> Vec<f64> {
        let n = self.d_eta();
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for e in self.edges() {
            adjacency[e.a].push((e.b, e.length));
            adjacency[e.b].push((e.a, e.length));
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        for &(c, v) in sources {
            if v < dist[c] {
                dist[c] = v;
                heap.push(HeapItem(v, c));
            }
        }
        while let Some(HeapItem(d, c)) = heap.pop() {
            if d > dist[c] {
                continue;
            }
            for &(nb, len) in &adjacency[c] {
                let cand = d + slope * len;
                if cand < dist[nb] {
                    dist[nb] = cand;
                    heap.push(HeapItem(cand, nb));
                }
            }
        }
        dist
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    // Min-heap on the distance, then on the cell index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// N_{η,φ}(x, a, D): dataset pairs sharing the query's joint cell under `phi`.
pub fn count_visits(
    cover: &JointCover,
    phi: &Decoder,
    h: usize,
    dataset: &[(Observation, Point)],
    query: (&Observation, &[f64]),
) -> Result<usize> {
    let target = cover.disc(&phi.decode(h, query.0), query.1)?;
    let mut n = 0;
    for (x, a) in dataset {
        if cover.disc(&phi.decode(h, x), a)? == target {
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_half_cover() {
        let c = CoverIndex::build(&MetricBox::unit(1), 0.5).unwrap();
        assert_eq!(c.d_eta(), 2);
        assert_eq!(c.centers()[0][0], 0.25);
        assert_eq!(c.centers()[1][0], 0.75);
    }

    #[test]
    fn square_quarter_cover_size() {
        let c = CoverIndex::build(&MetricBox::unit(2), 0.25).unwrap();
        assert_eq!(c.d_eta(), 16);
        assert!(c.d_eta() as f64 <= (2.0f64 / 0.25).powi(2));
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(CoverIndex::build(&MetricBox::unit(1), 0.0).is_err());
        assert!(CoverIndex::build(&MetricBox::unit(1), -0.1).is_err());
        assert!(CoverIndex::build(&MetricBox::unit(1), 1.5).is_err());
    }

    #[test]
    fn boundary_goes_to_lower_cell() {
        let c = CoverIndex::build(&MetricBox::unit(1), 0.1).unwrap();
        assert_eq!(c.disc(&[0.4]).unwrap(), CellId(3));
        assert_eq!(c.disc(&[0.0]).unwrap(), CellId(0));
        assert_eq!(c.disc(&[1.0]).unwrap(), CellId(9));
        assert_eq!(c.disc(&[c.centers()[6][0]]).unwrap(), CellId(6));
    }

    #[test]
    fn round_off_is_clamped_but_far_points_fail() {
        let c = CoverIndex::build(&MetricBox::unit(1), 0.5).unwrap();
        assert_eq!(c.disc(&[1.0 + 1e-12]).unwrap(), CellId(1));
        assert_eq!(c.disc(&[-1e-12]).unwrap(), CellId(0));
        assert!(matches!(c.disc(&[1.01]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn scaled_metric_has_unit_diameter() {
        let b = MetricBox::symmetric(2, 0.2).unwrap();
        assert!((b.distance(&[-0.2, -0.2], &[0.2, 0.2]) - 1.0).abs() < 1e-15);
        assert!((b.distance(&[0.0, 0.0], &[0.1, 0.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn joint_layout_is_state_major() {
        let jc = JointCover::build(&MetricBox::unit(1), 0.25, &MetricBox::unit(1), 0.5).unwrap();
        assert_eq!(jc.d_eta(), 8);
        let cell = jc.disc(&[0.6], &[0.9]).unwrap();
        assert_eq!(cell, CellId(2 * 2 + 1));
        assert_eq!(jc.split(cell), (CellId(2), CellId(1)));
    }

    #[test]
    fn graph_metric_matches_center_distance() {
        let jc = JointCover::build(&MetricBox::unit(2), 0.34, &MetricBox::unit(1), 0.5).unwrap();
        for src in 0..jc.d_eta() {
            let env = jc.upper_envelope(&[(src, 0.0)], 1.0);
            for (c, d) in env.iter().enumerate() {
                assert!((d - jc.distance(CellId(src), CellId(c))).abs() < 1e-12);
            }
        }
    }
}
