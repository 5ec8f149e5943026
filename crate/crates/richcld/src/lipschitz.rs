//! Bounded Lipschitz prediction heads on a joint cover and the constrained
//! least-squares fit that produces them.
//!
//! A head is piecewise constant on joint cells. Feasibility means
//! `0 <= v <= bound` and `|v(c) - v(c')| <= slope * D(c, c')` between centers.
//! Because the cover's adjacency graph has path metric exactly D, checking the
//! Lipschitz condition on graph edges is enough.

use std::sync::Arc;

use crate::cover::{CellId, JointCover};
use crate::decoder::Decoder;
use crate::env::Observation;
use crate::error::{invalid_input, invalid_param, Result};

#[derive(Clone, Debug)]
pub struct GridLipFn {
    cover: Arc<JointCover>,
    values: Vec<f64>,
    bound: f64,
    slope: f64,
}

impl GridLipFn {
    pub fn constant(cover: Arc<JointCover>, value: f64, bound: f64) -> Self {
        let n = cover.d_eta();
        Self { cover, values: vec![value.clamp(0.0, bound); n], bound, slope: 1.0 }
    }

    /// Wraps raw values; fails unless they already satisfy the constraints.
    pub fn from_values(cover: Arc<JointCover>, values: Vec<f64>, bound: f64, slope: f64) -> Result<Self> {
        if values.len() != cover.d_eta() {
            return Err(invalid_input("value count does not match the cover"));
        }
        let f = Self { cover, values, bound, slope };
        let v = f.max_violation();
        if v > 1e-9 {
            return Err(invalid_input(format!("values violate the constraints by {v}")));
        }
        Ok(f)
    }

    pub fn cover(&self) -> &Arc<JointCover> {
        &self.cover
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn value(&self, cell: CellId) -> f64 {
        self.values[cell.0]
    }

    pub fn at(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.values[self.cover.disc(s, a)?.0])
    }

    /// Largest box or Lipschitz violation (0 when feasible).
    pub fn max_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for &v in &self.values {
            worst = worst.max(-v).max(v - self.bound);
        }
        if self.slope.is_finite() {
            for e in self.cover.edges() {
                worst = worst.max((self.values[e.a] - self.values[e.b]).abs() - self.slope * e.length);
            }
        }
        worst
    }
}

/// g(φ(x), a).
pub fn eval_lip(g: &GridLipFn, phi: &Decoder, h: usize, x: &Observation, a: &[f64]) -> Result<f64> {
    g.at(&phi.decode(h, x), a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionSample {
    pub cell: CellId,
    pub target: f64,
}

/// Per-cell count, mean and within-cell sum of squares.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub count: Vec<f64>,
    pub mean: Vec<f64>,
    pub within: f64,
    pub total: usize,
}

impl CellStats {
    /// Two-pass aggregation of `(cell, target)` pairs over `n_cells` cells.
    pub fn from_pairs(n_cells: usize, cells: &[usize], targets: &[f64]) -> Self {
        debug_assert_eq!(cells.len(), targets.len());
        let mut count = vec![0.0; n_cells];
        let mut mean = vec![0.0; n_cells];
        for (&c, &t) in cells.iter().zip(targets) {
            count[c] += 1.0;
            mean[c] += t;
        }
        for (m, &n) in mean.iter_mut().zip(&count) {
            if n > 0.0 {
                *m /= n;
            }
        }
        let within = cells.iter().zip(targets).map(|(&c, &t)| (t - mean[c]).powi(2)).sum();
        Self { count, mean, within, total: cells.len() }
    }

    pub fn from_samples(n_cells: usize, samples: &[RegressionSample]) -> Self {
        let cells: Vec<usize> = samples.iter().map(|s| s.cell.0).collect();
        let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
        Self::from_pairs(n_cells, &cells, &targets)
    }

    /// Σ (v(cell_i) − target_i)² for a value vector.
    pub fn objective(&self, values: &[f64]) -> f64 {
        self.within
            + self.count.iter().zip(&self.mean).zip(values).map(|((&n, &m), &v)| n * (v - m).powi(2)).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Range bound L.
    pub bound: f64,
    /// Lipschitz constant; `INFINITY` drops the Lipschitz constraints.
    pub slope: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl FitOptions {
    pub fn new(bound: f64) -> Self {
        Self { bound, slope: 1.0, tol: 1e-9, max_iters: 20_000 }
    }

    pub fn with_slope(self, slope: f64) -> Self {
        Self { slope, ..self }
    }
}

#[derive(Clone, Debug)]
pub struct LipFit {
    pub func: GridLipFn,
    /// Sum of squared residuals at the returned values.
    pub objective: f64,
    pub converged: bool,
    pub sweeps: usize,
}

/// Constrained least squares over the head class.
pub fn fit_lip(
    samples: &[RegressionSample],
    cover: &Arc<JointCover>,
    bound: f64,
    tol: f64,
    max_iters: usize,
) -> Result<LipFit> {
    if samples.is_empty() {
        return Err(invalid_input("fit_lip needs at least one sample"));
    }
    if samples.iter().any(|s| !s.target.is_finite() || s.cell.0 >= cover.d_eta()) {
        return Err(invalid_input("samples must have finite targets and cells inside the cover"));
    }
    let stats = CellStats::from_samples(cover.d_eta(), samples);
    fit_stats(&stats, cover, FitOptions { bound, slope: 1.0, tol, max_iters })
}

/// Same fit from pre-aggregated statistics.
pub fn fit_stats(stats: &CellStats, cover: &Arc<JointCover>, opts: FitOptions) -> Result<LipFit> {
    let problem = LipProblem::new(cover, &stats.count, opts)?;
    Ok(problem.solve(stats))
}

/// The fit's constraint structure for one pattern of occupied cells, reusable
/// across target vectors.
///
/// Empty cells carry no weight, so the problem reduces to the occupied cells
/// with a Lipschitz constraint between every pair; a pair is dropped when a
/// third occupied cell lies metrically between them, since the two shorter
/// constraints imply it. Empty cells are filled afterwards by the McShane
/// extension, clipped to the range, which stays feasible and does not change
/// the objective.
#[derive(Clone, Debug)]
pub struct LipProblem {
    cover: Arc<JointCover>,
    opts: FitOptions,
    cells: Vec<usize>,
    inv_w: Vec<f64>,
    /// `(i, j, limit)` over local indices.
    pairs: Vec<(usize, usize, f64)>,
}

impl LipProblem {
    pub fn new(cover: &Arc<JointCover>, counts: &[f64], opts: FitOptions) -> Result<Self> {
        if !(opts.bound > 0.0) || !(opts.slope > 0.0) {
            return Err(invalid_param("bound and slope must be positive"));
        }
        if counts.len() != cover.d_eta() {
            return Err(invalid_input("count vector does not match the cover"));
        }
        let cells: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0.0).collect();
        if cells.is_empty() {
            return Err(invalid_input("fit needs at least one sample"));
        }
        let inv_w = cells.iter().map(|&c| 1.0 / counts[c]).collect();
        let mut pairs = Vec::new();
        if opts.slope.is_finite() {
            let k = cells.len();
            let dist: Vec<Vec<f64>> = cells
                .iter()
                .map(|&a| cells.iter().map(|&b| cover.distance(CellId(a), CellId(b))).collect())
                .collect();
            for i in 0..k {
                for j in i + 1..k {
                    let dij = dist[i][j];
                    let implied = (0..k).any(|m| m != i && m != j && dist[i][m] + dist[m][j] <= dij + 1e-12);
                    if !implied {
                        pairs.push((i, j, opts.slope * dij));
                    }
                }
            }
        }
        Ok(Self { cover: cover.clone(), opts, cells, inv_w, pairs })
    }

    pub fn occupied(&self) -> &[usize] {
        &self.cells
    }

    pub fn constraints(&self) -> usize {
        self.pairs.len()
    }

    /// Best head for `stats`, whose occupied cells must be this problem's.
    pub fn solve(&self, stats: &CellStats) -> LipFit {
        debug_assert!(self.cells.iter().all(|&c| stats.count[c] > 0.0));
        let opts = self.opts;
        let target: Vec<f64> = self.cells.iter().map(|&c| stats.mean[c]).collect();
        let (local, converged, sweeps) = if self.pairs.is_empty() {
            (target.iter().map(|m| m.clamp(0.0, opts.bound)).collect(), true, 0)
        } else {
            hildreth(&self.pairs, &target, &self.inv_w, opts)
        };
        let n = self.cover.d_eta();
        let values: Vec<f64> = if opts.slope.is_finite() {
            // Exact feasibility: Lipschitz envelope of the iterate, then clip.
            let anchors: Vec<(usize, f64)> = self.cells.iter().copied().zip(local).collect();
            self.cover.upper_envelope(&anchors, opts.slope).into_iter().map(|v| v.clamp(0.0, opts.bound)).collect()
        } else {
            // Unconstrained heads: clipped cell means, empty cells at the pooled mean.
            let pooled = self.cells.iter().map(|&c| stats.count[c] * stats.mean[c]).sum::<f64>() / stats.total as f64;
            let mut values = vec![pooled.clamp(0.0, opts.bound); n];
            for (&c, v) in self.cells.iter().zip(local) {
                values[c] = v;
            }
            values
        };
        let objective = stats.objective(&values);
        let func = GridLipFn { cover: self.cover.clone(), values, bound: opts.bound, slope: opts.slope };
        LipFit { func, objective, converged, sweeps }
    }
}

/// Dual coordinate ascent (Hildreth) for `min Σ w_i (v_i − y_i)²` subject to
/// `|v_i − v_j| <= limit` on the given pairs and `0 <= v <= bound`. Sweeps
/// alternate direction; stops when both the largest primal move and the largest
/// violation fall below `tol`.
fn hildreth(pairs: &[(usize, usize, f64)], target: &[f64], inv_w: &[f64], opts: FitOptions) -> (Vec<f64>, bool, usize) {
    let n = target.len();
    let mut v = target.to_vec();
    let mut lam_pair = vec![[0.0f64; 2]; pairs.len()];
    let mut lam_box = vec![[0.0f64; 2]; n];
    for sweep in 1..=opts.max_iters {
        let mut max_move = 0.0f64;
        let mut max_viol = 0.0f64;
        let forward = sweep % 2 == 1;
        for k in 0..pairs.len() {
            let idx = if forward { k } else { pairs.len() - 1 - k };
            let (a, b, limit) = pairs[idx];
            let denom = inv_w[a] + inv_w[b];
            for (dir, sign) in [(0usize, 1.0f64), (1, -1.0)] {
                let r = sign * (v[a] - v[b]) - limit;
                max_viol = max_viol.max(r);
                let lam = &mut lam_pair[idx][dir];
                let delta = (r / denom).max(-*lam);
                if delta != 0.0 {
                    *lam += delta;
                    v[a] -= sign * delta * inv_w[a];
                    v[b] += sign * delta * inv_w[b];
                    max_move = max_move.max((delta * inv_w[a]).abs()).max((delta * inv_w[b]).abs());
                }
            }
        }
        for c in 0..n {
            let c = if forward { c } else { n - 1 - c };
            for (dir, sign, b) in [(0usize, 1.0f64, opts.bound), (1, -1.0, 0.0)] {
                let r = sign * v[c] - b;
                max_viol = max_viol.max(r);
                let lam = &mut lam_box[c][dir];
                let delta = (r / inv_w[c]).max(-*lam);
                if delta != 0.0 {
                    *lam += delta;
                    v[c] -= sign * delta * inv_w[c];
                    max_move = max_move.max((delta * inv_w[c]).abs());
                }
            }
        }
        if max_move < opts.tol && max_viol < opts.tol {
            return (v, true, sweep);
        }
    }
    (v, false, opts.max_iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::MetricBox;

    fn line(cells: usize) -> Arc<JointCover> {
        Arc::new(JointCover::state_only(&MetricBox::unit(1), 1.0 / cells as f64, &MetricBox::unit(1)).unwrap())
    }

    fn sample(cell: usize, target: f64) -> RegressionSample {
        RegressionSample { cell: CellId(cell), target }
    }

    #[test]
    fn worked_example() {
        let cover = line(5);
        let fit = fit_lip(&[sample(1, 0.0), sample(2, 1.0)], &cover, 1.0, 1e-12, 100_000).unwrap();
        assert!(fit.converged);
        assert!((fit.func.values()[1] - 0.4).abs() < 1e-6);
        assert!((fit.func.values()[2] - 0.6).abs() < 1e-6);
        assert!((fit.objective - 0.32).abs() < 1e-6);
    }

    #[test]
    fn constant_targets_are_reproduced() {
        let cover = line(10);
        let samples: Vec<_> = (0..10).map(|c| sample(c, 0.7)).collect();
        let fit = fit_lip(&samples, &cover, 1.0, 1e-12, 1000).unwrap();
        assert!(fit.objective < 1e-20);
        assert!(fit.func.values().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn single_sample_extends_by_mcshane() {
        let cover = line(10);
        let fit = fit_lip(&[sample(2, 0.3)], &cover, 1.0, 1e-12, 1000).unwrap();
        let v = fit.func.values();
        assert!((v[2] - 0.3).abs() < 1e-12);
        for c in 0..10 {
            let expect = (0.3 + cover.distance(CellId(2), CellId(c))).min(1.0);
            assert!((v[c] - expect).abs() < 1e-12, "cell {c}: {} vs {expect}", v[c]);
        }
    }

    #[test]
    fn unconstrained_slope_gives_cell_means() {
        let cover = line(4);
        let samples = [sample(0, 0.0), sample(0, 1.0), sample(1, 2.0), sample(3, -1.0)];
        let fit = fit_stats(
            &CellStats::from_samples(4, &samples),
            &cover,
            FitOptions::new(1.5).with_slope(f64::INFINITY),
        )
        .unwrap();
        assert_eq!(&fit.func.values()[..2], &[0.5, 1.5]);
        assert_eq!(fit.func.values()[3], 0.0);
    }

    #[test]
    fn empty_samples_rejected() {
        assert!(fit_lip(&[], &line(2), 1.0, 1e-9, 10).is_err());
    }

    #[test]
    fn infeasible_values_rejected() {
        assert!(GridLipFn::from_values(line(2), vec![0.0, 1.0], 1.0, 1.0).is_err());
        assert!(GridLipFn::from_values(line(2), vec![0.0, 0.5], 1.0, 1.0).is_ok());
    }
}
