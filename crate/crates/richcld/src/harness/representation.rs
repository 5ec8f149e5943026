//! Representation-quality measurements on mazes: random-walk data, k-means in a
//! decoder's latent space, and two scores of the resulting clusters against the
//! maze geometry.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bcrl::{Transition, TransitionDataset};
use crate::cover::{point, CoverIndex, Point};
use crate::decoder::{permuted, Decoder, DecoderClass};
use crate::env::ppm::RgbImage;
use crate::env::{Dynamics, Layout, Maze, RichCldMdp};
use crate::error::{invalid_input, invalid_param, Result};
use crate::rng::SimRng;

/// Fixed cluster colors, indexed by cluster id modulo 16.
pub const PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [0, 0, 128],
];

/// Start progress of each straight leg of the spiral centerline, in corridor
/// length units.
const SPIRAL_LEGS: [f64; 7] = [0.0, 0.9, 1.7, 2.5, 3.1, 3.7, 4.0];

pub fn maze_of(mdp: &RichCldMdp) -> Result<&Maze> {
    match &mdp.dynamics {
        Dynamics::Maze(m) => Ok(m),
        _ => Err(invalid_input(format!("`{}` is not a maze", mdp.label))),
    }
}

/// Layer-1 tuples from one long uniformly random walk. The walk restarts at a
/// uniform state every `reset_every` steps.
pub fn random_walk_dataset(mdp: &RichCldMdp, samples: usize, reset_every: usize, rng: &mut SimRng) -> Result<TransitionDataset> {
    if reset_every == 0 {
        return Err(invalid_param("reset period must be positive"));
    }
    let mut out = TransitionDataset::new(1);
    let mut s = mdp.state_box.sample_uniform(rng);
    for i in 0..samples {
        if i > 0 && i % reset_every == 0 {
            s = mdp.state_box.sample_uniform(rng);
        }
        let a = mdp.action_box.sample_uniform(rng);
        let next = mdp.step(1, &s, &a, rng);
        out.push(Transition { x: mdp.emit(1, &s), r: mdp.reward(1, &s, &a), a, x_next: mdp.emit(2, &next) });
        s = next;
    }
    Ok(out)
}

/// Truth, `permutations` cell-shuffled copies of it at scale `eta`, and the
/// constant decoder, in a seed-dependent order so that exact ties in the
/// selection are not broken in favor of any particular member.
pub fn maze_decoder_class(mdp: &RichCldMdp, permutations: usize, eta: f64, rng: &mut SimRng) -> Result<DecoderClass> {
    let truth = Decoder::ground_truth(mdp);
    let center = mdp.state_box.center();
    let mut members = vec![truth.clone(), Decoder::new("constant", move |_, _| center.clone())];
    for i in 0..permutations {
        let cover = CoverIndex::build(&mdp.state_box, eta)?;
        let mut perm: Vec<usize> = (0..cover.d_eta()).collect();
        perm.shuffle(rng);
        members.push(permuted(&truth, cover, perm, format!("permute{i}"))?);
    }
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.shuffle(rng);
    let truth_at = order.iter().position(|&i| i == 0);
    let decoders = order.into_iter().map(|i| members[i].clone()).collect();
    DecoderClass::new(decoders, truth_at, mdp.state_box.clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Point>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum()
}

fn nearest(centers: &[Point], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm from k-means++ seeding. Stops when no center moves by more
/// than `tol` (Euclidean) or after `max_iters` rounds. Empty clusters keep
/// their previous center.
pub fn kmeans(points: &[Point], k: usize, max_iters: usize, tol: f64, rng: &mut SimRng) -> Result<KMeans> {
    if points.is_empty() || k == 0 {
        return Err(invalid_param("k-means needs points and k >= 1"));
    }
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    let dims = points[0].len();
    let mut assignments = vec![0; points.len()];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        for (a, p) in assignments.iter_mut().zip(points) {
            *a = nearest(&centers, p).0;
        }
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let c: Point = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sq_dist(&c, &centers[j]).sqrt());
            centers[j] = c;
        }
        if shift <= tol {
            break;
        }
    }
    for (a, p) in assignments.iter_mut().zip(points) {
        *a = nearest(&centers, p).0;
    }
    Ok(KMeans { centers, assignments, iterations })
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index of two labelings. Two single-cluster labelings score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(invalid_input("labelings must be nonempty and of equal length"));
    }
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&n| choose2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| choose2(n)).sum();
    let expected = sum_a * sum_b / choose2(a.len());
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Reference region of a position: its cell in a `grid x grid` partition of the
/// unit square, split further by spiral leg so that no region spans a wall.
pub fn corridor_region(maze: &Maze, p: [f64; 2], grid: usize) -> usize {
    let cell = |v: f64| ((v * grid as f64).floor() as usize).min(grid - 1);
    let leg = match (maze.layout, maze.corridor_coordinates(p)) {
        (Layout::Spiral, Some((progress, _))) => {
            let along = progress * crate::env::maze::SPIRAL_LENGTH;
            SPIRAL_LEGS.iter().rposition(|&start| along >= start).unwrap_or(0)
        }
        _ => 0,
    };
    (leg * grid + cell(p[1])) * grid + cell(p[0])
}

/// Fraction of same-cluster position pairs whose connecting segment touches a
/// wall; 0 when no cluster has two members.
pub fn wall_crossing_fraction(maze: &Maze, positions: &[[f64; 2]], assignments: &[usize]) -> Result<f64> {
    if positions.len() != assignments.len() {
        return Err(invalid_input("one assignment per position"));
    }
    let mut groups: HashMap<usize, Vec<[f64; 2]>> = HashMap::new();
    for (&p, &a) in positions.iter().zip(assignments) {
        groups.entry(a).or_default().push(p);
    }
    let (mut pairs, mut crossing) = (0u64, 0u64);
    for members in groups.values() {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                pairs += 1;
                crossing += maze.separated(members[i], members[j]) as u64;
            }
        }
    }
    Ok(if pairs == 0 { 0.0 } else { crossing as f64 / pairs as f64 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterScores {
    pub decoder: String,
    pub ari: f64,
    pub wall_crossing: f64,
    pub clusters: usize,
    /// Sampled positions and their clusters.
    pub positions: Vec<[f64; 2]>,
    pub assignments: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterSpec {
    pub points: usize,
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Cells per side of the reference grid.
    pub grid: usize,
    /// Cap on positions used for the pairwise wall score.
    pub pair_sample: usize,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self { points: 10_000, k: 16, max_iters: 200, tol: 1e-6, grid: 4, pair_sample: 2_000 }
    }
}

/// Clusters the decoder's image of uniformly sampled states and scores the
/// clusters against the maze. `positions` and `kmeans_rng` are shared across
/// decoders so that scores are comparable.
pub fn cluster_scores(
    mdp: &RichCldMdp,
    phi: &Decoder,
    positions: &[[f64; 2]],
    spec: &ClusterSpec,
    kmeans_rng: &mut SimRng,
) -> Result<ClusterScores> {
    let maze = maze_of(mdp)?;
    let latent: Vec<Point> = positions.iter().map(|&p| phi.decode(1, &mdp.emit(1, &point(&p)))).collect();
    let km = kmeans(&latent, spec.k, spec.max_iters, spec.tol, kmeans_rng)?;
    let reference: Vec<usize> = positions.iter().map(|&p| corridor_region(maze, p, spec.grid)).collect();
    let m = spec.pair_sample.min(positions.len());
    let wall_crossing = wall_crossing_fraction(maze, &positions[..m], &km.assignments[..m])?;
    let mut used = km.assignments.clone();
    used.sort_unstable();
    used.dedup();
    Ok(ClusterScores {
        decoder: phi.label().to_string(),
        ari: adjusted_rand_index(&km.assignments, &reference)?,
        wall_crossing,
        clusters: used.len(),
        positions: positions.to_vec(),
        assignments: km.assignments,
    })
}

pub fn uniform_positions(mdp: &RichCldMdp, n: usize, rng: &mut SimRng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            let s = mdp.state_box.sample_uniform(rng);
            [s[0], s[1]]
        })
        .collect()
}

/// `size x size` image; each pixel shows the cluster of the nearest sampled
/// position, walls drawn in black.
pub fn cluster_map(maze: &Maze, scores: &ClusterScores, size: usize) -> RgbImage {
    let mut img = RgbImage::new(size, size, [255, 255, 255]);
    let mut buckets: HashMap<(usize, usize), usize> = HashMap::new();
    let cell = |v: f64| ((v * size as f64).floor() as usize).min(size - 1);
    for (i, p) in scores.positions.iter().enumerate() {
        buckets.entry((cell(p[0]), cell(p[1]))).or_insert(i);
    }
    for row in 0..size {
        for col in 0..size {
            let c = [(col as f64 + 0.5) / size as f64, (row as f64 + 0.5) / size as f64];
            let i = buckets.get(&(col, row)).copied().unwrap_or_else(|| {
                let mut best = (0, f64::INFINITY);
                for (i, p) in scores.positions.iter().enumerate() {
                    let d = sq_dist(p, &c);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                best.0
            });
            img.set_latent(col, row, PALETTE[scores.assignments[i] % PALETTE.len()]);
        }
    }
    for w in &maze.walls {
        let steps = 2 * size;
        for t in 0..=steps {
            let f = t as f64 / steps as f64;
            let (x, y) = (w.x0 + f * (w.x1 - w.x0), w.y0 + f * (w.y1 - w.y0));
            img.set_latent(cell(x), cell(y), [0, 0, 0]);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_maze, RewardSpec};
    use crate::rng::seeded;

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0, 0], &[1, 1, 1, 1]).unwrap(), 1.0);
        // Standard worked example: contingency [[1,1],[0,2]] gives 0.
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert!(ari.abs() < 1e-12, "{ari}");
        assert_eq!(adjusted_rand_index(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn kmeans_separates_two_blobs() {
        let pts: Vec<Point> =
            (0..40).map(|i| point(&[if i < 20 { 0.0 } else { 10.0 } + 0.01 * (i % 5) as f64, 0.0])).collect();
        let km = kmeans(&pts, 2, 200, 1e-6, &mut seeded(3)).unwrap();
        assert!(km.assignments[..20].iter().all(|&a| a == km.assignments[0]));
        assert!(km.assignments[20..].iter().all(|&a| a == km.assignments[20]));
        assert_ne!(km.assignments[0], km.assignments[20]);
        let again = kmeans(&pts, 2, 200, 1e-6, &mut seeded(3)).unwrap();
        assert_eq!(km, again);
    }

    #[test]
    fn constant_decoder_gives_one_cluster() {
        let mdp = make_maze(Layout::Spiral, 30, 2, RewardSpec::Zero).unwrap();
        let phi = Decoder::new("constant", |_, _| point(&[0.5, 0.5]));
        let pos = uniform_positions(&mdp, 500, &mut seeded(1));
        let s = cluster_scores(&mdp, &phi, &pos, &ClusterSpec::default(), &mut seeded(2)).unwrap();
        assert_eq!(s.clusters, 1);
        assert_eq!(s.ari, 0.0);
        let img = cluster_map(maze_of(&mdp).unwrap(), &s, 60);
        assert!(img.pixels.iter().all(|&p| p == PALETTE[0] || p == [0, 0, 0]));
    }

    #[test]
    fn truth_beats_constant_on_the_spiral() {
        let mdp = make_maze(Layout::Spiral, 30, 2, RewardSpec::Zero).unwrap();
        let pos = uniform_positions(&mdp, 2000, &mut seeded(1));
        let spec = ClusterSpec::default();
        let truth = cluster_scores(&mdp, &Decoder::ground_truth(&mdp), &pos, &spec, &mut seeded(2)).unwrap();
        let flat = Decoder::new("constant", |_, _| point(&[0.5, 0.5]));
        let constant = cluster_scores(&mdp, &flat, &pos, &spec, &mut seeded(2)).unwrap();
        assert!(truth.ari > constant.ari && truth.wall_crossing < constant.wall_crossing);
    }

    #[test]
    fn regions_do_not_span_walls() {
        let maze = Maze::new(Layout::Spiral, 0.01);
        // Same 4x4 grid cell, opposite sides of the wall at x = 0.2.
        assert_ne!(corridor_region(&maze, [0.15, 0.1], 4), corridor_region(&maze, [0.22, 0.1], 4));
        assert_eq!(corridor_region(&maze, [0.05, 0.1], 4), corridor_region(&maze, [0.15, 0.2], 4));
    }
}
