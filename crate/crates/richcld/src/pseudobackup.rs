//! Pseudobackups: least-squares approximations of Bellman backups of a target
//! function, in three flavors, and optimistic dynamic programming built on the
//! linear one.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bcrl::{RewardFn, TransitionDataset};
use crate::cover::{CellId, JointCover, Point};
use crate::decoder::Decoder;
use crate::env::{Observation, Policy};
use crate::error::{invalid_input, Error, Result};
use crate::lipschitz::{fit_stats, CellStats, FitOptions};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Lipschitz head fitted by constrained least squares.
    Continuous,
    /// Per-cell mean of the targets (one-hot features), clipped.
    Linear,
    /// Per-cell mean of the continuous model over the dataset's own inputs.
    Discretized,
}

/// A fitted backup model: one value per joint cell of `(φ(x), a)`.
#[derive(Clone, Debug)]
pub struct PseudoBackupModel {
    pub flavor: Flavor,
    pub phi: Decoder,
    pub layer: usize,
    pub cover: Arc<JointCover>,
    pub values: Vec<f64>,
    /// Dataset visits per cell.
    pub counts: Vec<f64>,
    pub bound: f64,
}

impl PseudoBackupModel {
    pub fn cell(&self, x: &Observation, a: &[f64]) -> Result<CellId> {
        self.cover.disc(&self.phi.decode(self.layer, x), a)
    }

    pub fn eval(&self, x: &Observation, a: &[f64]) -> Result<f64> {
        Ok(self.values[self.cell(x, a)?.0])
    }

    pub fn value(&self, cell: CellId) -> f64 {
        self.values[cell.0]
    }
}

/// Target values at each tuple's next observation.
pub fn next_targets(data: &TransitionDataset, f: &dyn Fn(&Observation) -> f64) -> Vec<f64> {
    data.tuples.iter().map(|t| f(&t.x_next)).collect()
}

fn counts_and_cells(data: &TransitionDataset, phi: &Decoder, cover: &JointCover) -> Result<(Vec<usize>, Vec<f64>)> {
    let cells = data.cells(cover, phi)?;
    let mut counts = vec![0.0; cover.d_eta()];
    for &c in &cells {
        counts[c] += 1.0;
    }
    Ok((cells, counts))
}

pub fn continuous_pseudobackup(
    data: &TransitionDataset,
    phi: &Decoder,
    cover: &Arc<JointCover>,
    targets: &[f64],
    opts: FitOptions,
) -> Result<PseudoBackupModel> {
    if data.is_empty() {
        return Err(invalid_input("continuous pseudobackup needs data"));
    }
    let (cells, counts) = counts_and_cells(data, phi, cover)?;
    let stats = CellStats::from_pairs(cover.d_eta(), &cells, targets);
    let fit = fit_stats(&stats, cover, opts)?;
    Ok(PseudoBackupModel {
        flavor: Flavor::Continuous,
        phi: phi.clone(),
        layer: data.layer,
        cover: cover.clone(),
        values: fit.func.values().to_vec(),
        counts,
        bound: opts.bound,
    })
}

/// Per-cell target means clipped to `[-bound, bound]`; empty cells are 0.
pub fn linear_pseudobackup(
    data: &TransitionDataset,
    phi: &Decoder,
    cover: &Arc<JointCover>,
    targets: &[f64],
    bound: f64,
) -> Result<PseudoBackupModel> {
    if targets.len() != data.len() {
        return Err(invalid_input("one target per tuple required"));
    }
    let (cells, counts) = counts_and_cells(data, phi, cover)?;
    let mut values = vec![0.0; cover.d_eta()];
    for (&c, &t) in cells.iter().zip(targets) {
        values[c] += t;
    }
    for (v, &n) in values.iter_mut().zip(&counts) {
        *v = if n > 0.0 { (*v / n).clamp(-bound, bound) } else { 0.0 };
    }
    Ok(PseudoBackupModel {
        flavor: Flavor::Linear,
        phi: phi.clone(),
        layer: data.layer,
        cover: cover.clone(),
        values,
        counts,
        bound,
    })
}

/// Averages a continuous model over the dataset inputs landing in each cell.
pub fn discretized_pseudobackup(data: &TransitionDataset, continuous: &PseudoBackupModel) -> Result<PseudoBackupModel> {
    if data.is_empty() {
        return Err(invalid_input("discretized pseudobackup needs data"));
    }
    let cover = &continuous.cover;
    let (cells, counts) = counts_and_cells(data, &continuous.phi, cover)?;
    let mut values = vec![0.0; cover.d_eta()];
    for (t, &c) in data.tuples.iter().zip(&cells) {
        values[c] += continuous.eval(&t.x, &t.a)?;
    }
    for (v, &n) in values.iter_mut().zip(&counts) {
        if n > 0.0 {
            *v /= n;
        }
    }
    Ok(PseudoBackupModel { flavor: Flavor::Discretized, values, counts, ..continuous.clone() })
}

/// Mean squared gap between a model and exact backups over evaluation inputs.
pub fn backup_error(
    model: &PseudoBackupModel,
    inputs: &[(Observation, Point)],
    exact: &dyn Fn(&Observation, &[f64]) -> f64,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(invalid_input("no evaluation inputs"));
    }
    let mut total = 0.0;
    for (x, a) in inputs {
        total += (model.eval(x, a)? - exact(x, a)).powi(2);
    }
    Ok(total / inputs.len() as f64)
}

/// Bonus as a function of `(x, a)` at a fixed layer.
pub type BonusFn = Arc<dyn Fn(&Observation, &[f64]) -> f64 + Send + Sync>;

pub fn zero_bonus() -> BonusFn {
    Arc::new(|_, _| 0.0)
}

/// One layer of the optimistic recursion.
#[derive(Clone)]
pub struct OptLayer {
    pub q: PseudoBackupModel,
    pub bonus: BonusFn,
}

/// Per-layer optimistic Q functions and the greedy policy over cover actions.
#[derive(Clone)]
pub struct ValueTable {
    pub layers: Vec<OptLayer>,
    pub reward: RewardFn,
    pub actions: Vec<Point>,
}

impl fmt::Debug for ValueTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueTable").field("horizon", &self.layers.len()).finish_non_exhaustive()
    }
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    /// `Q_h(x, a)` for every cover action.
    pub fn q_values(&self, h: usize, x: &Observation) -> Result<Vec<f64>> {
        if h == 0 || h > self.horizon() {
            return Err(Error::LayerOutOfRange { h, max: self.horizon() });
        }
        layer_q_values(&self.layers[h - 1], &self.reward, &self.actions, h, x)
    }

    /// `V_h(x)`; zero past the horizon.
    pub fn value(&self, h: usize, x: &Observation) -> Result<f64> {
        if h > self.horizon() {
            return Ok(0.0);
        }
        Ok(self.q_values(h, x)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    /// `Q_h(x, a)` at an arbitrary action, through its cover cell.
    pub fn q_at(&self, h: usize, x: &Observation, a: &[f64]) -> Result<f64> {
        if h == 0 || h > self.horizon() {
            return Err(Error::LayerOutOfRange { h, max: self.horizon() });
        }
        let layer = &self.layers[h - 1];
        Ok((self.reward)(h, x, a) + (layer.bonus)(x, a) + layer.q.eval(x, a)?)
    }

    /// Greedy action index, lowest index on ties.
    pub fn greedy(&self, h: usize, x: &Observation) -> Result<usize> {
        let q = self.q_values(h, x)?;
        let mut best = 0;
        for (i, &v) in q.iter().enumerate() {
            if v > q[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

pub(crate) fn layer_q_values(layer: &OptLayer, reward: &RewardFn, actions: &[Point], h: usize, x: &Observation) -> Result<Vec<f64>> {
    let s_cell = layer.q.cover.states().disc(&layer.q.phi.decode(h, x))?;
    Ok(actions
        .iter()
        .enumerate()
        .map(|(ai, a)| reward(h, x, a) + (layer.bonus)(x, a) + layer.q.value(layer.q.cover.joint(s_cell, CellId(ai))))
        .collect())
}

/// The greedy policy of a value table.
#[derive(Clone, Debug)]
pub struct GreedyPolicy(pub Arc<ValueTable>);

impl Policy for GreedyPolicy {
    fn act(&self, h: usize, x: &Observation, _rng: &mut SimRng) -> Point {
        let i = self.0.greedy(h, x).expect("decoders map into the state box");
        self.0.actions[i].clone()
    }
}

/// Backward optimistic recursion: `q_h` is the linear pseudobackup of `V_{h+1}`
/// with weight bound `bound`, `Q_h = R_h + b_h + q_h`, `V_h = max over A_η`.
/// `decoders[h-1]`, `datasets[h-1]` and `bonuses[h-1]` belong to layer `h`.
pub fn optdp(
    decoders: &[Decoder],
    datasets: &[&TransitionDataset],
    bonuses: &[BonusFn],
    cover: &Arc<JointCover>,
    reward: RewardFn,
    bound: f64,
) -> Result<ValueTable> {
    let horizon = decoders.len();
    if horizon == 0 || datasets.len() != horizon || bonuses.len() != horizon {
        return Err(invalid_input("decoders, datasets and bonuses must cover the same layers"));
    }
    for (i, d) in datasets.iter().enumerate() {
        if d.layer != i + 1 {
            return Err(invalid_input(format!("dataset {i} holds layer {}, expected {}", d.layer, i + 1)));
        }
    }
    let actions = cover.actions().centers().to_vec();
    let mut layers: Vec<Option<OptLayer>> = vec![None; horizon];
    for h in (1..=horizon).rev() {
        let data = datasets[h - 1];
        let targets = match &layers.get(h).and_then(|l| l.as_ref()) {
            None => vec![0.0; data.len()],
            Some(next) => data
                .tuples
                .iter()
                .map(|t| {
                    let q = layer_q_values(next, &reward, &actions, h + 1, &t.x_next)?;
                    Ok(q.into_iter().fold(f64::NEG_INFINITY, f64::max))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let q = linear_pseudobackup(data, &decoders[h - 1], cover, &targets, bound)?;
        layers[h - 1] = Some(OptLayer { q, bonus: bonuses[h - 1].clone() });
    }
    Ok(ValueTable { layers: layers.into_iter().map(|l| l.expect("filled")).collect(), reward, actions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcrl::Transition;
    use crate::cover::{point, MetricBox};

    fn token_phi() -> Decoder {
        Decoder::new("tok", |_, x| match *x {
            Observation::Token(t) => point(&[(t as f64 + 0.5) / 2.0]),
            _ => point(&[0.0]),
        })
    }

    fn cover() -> Arc<JointCover> {
        Arc::new(JointCover::build(&MetricBox::unit(1), 0.5, &MetricBox::unit(1), 0.5).unwrap())
    }

    fn tup(s: u64, a: f64, s2: u64) -> Transition {
        Transition { x: Observation::Token(s), a: point(&[a]), r: 0.0, x_next: Observation::Token(s2) }
    }

    #[test]
    fn linear_empty_and_mean() {
        let empty = TransitionDataset::new(1);
        let m = linear_pseudobackup(&empty, &token_phi(), &cover(), &[], 2.0).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
        let mut d = TransitionDataset::new(1);
        d.push(tup(0, 0.2, 0));
        d.push(tup(0, 0.2, 1));
        let m = linear_pseudobackup(&d, &token_phi(), &cover(), &[0.2, 0.4], 2.0).unwrap();
        assert!((m.values[0] - 0.3).abs() < 1e-15);
        assert_eq!(m.values[1..], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn discretized_matches_continuous_on_visited_cells() {
        let mut d = TransitionDataset::new(1);
        for (s, a, s2) in [(0, 0.2, 1), (1, 0.7, 0), (0, 0.7, 1), (1, 0.2, 1)] {
            d.push(tup(s, a, s2));
        }
        let targets = next_targets(&d, &|x| if *x == Observation::Token(1) { 0.8 } else { 0.1 });
        let c = continuous_pseudobackup(&d, &token_phi(), &cover(), &targets, FitOptions::new(2.0)).unwrap();
        let disc = discretized_pseudobackup(&d, &c).unwrap();
        for cell in 0..4 {
            assert!((c.values[cell] - disc.values[cell]).abs() < 1e-15);
        }
    }

    #[test]
    fn horizon_one_is_greedy_on_reward_plus_bonus() {
        let mut d = TransitionDataset::new(1);
        d.push(tup(0, 0.2, 0));
        let reward: RewardFn = Arc::new(|_, _, a| if a[0] > 0.5 { 0.5 } else { 0.2 });
        let bonus: BonusFn = Arc::new(|_, a| if a[0] < 0.5 { 0.4 } else { 0.0 });
        let t = optdp(&[token_phi()], &[&d], &[bonus], &cover(), reward, 2.0).unwrap();
        assert_eq!(t.greedy(1, &Observation::Token(0)).unwrap(), 0);
        assert!((t.value(1, &Observation::Token(0)).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_reward_zero_bonus_is_zero() {
        let mut d1 = TransitionDataset::new(1);
        let mut d2 = TransitionDataset::new(2);
        d1.push(tup(0, 0.2, 1));
        d2.push(tup(1, 0.7, 0));
        let reward: RewardFn = Arc::new(|_, _, _| 0.0);
        let t = optdp(&[token_phi(), token_phi()], &[&d1, &d2], &[zero_bonus(), zero_bonus()], &cover(), reward, 2.0)
            .unwrap();
        for h in 1..=2 {
            for s in 0..2 {
                assert_eq!(t.value(h, &Observation::Token(s)).unwrap(), 0.0);
                assert_eq!(t.greedy(h, &Observation::Token(s)).unwrap(), 0);
            }
        }
    }

    #[test]
    fn two_layer_backup_propagates() {
        let mut d1 = TransitionDataset::new(1);
        let mut d2 = TransitionDataset::new(2);
        // From token 0, action cell 1 reaches token 1, where action cell 0 pays 1.
        d1.push(tup(0, 0.2, 0));
        d1.push(tup(0, 0.7, 1));
        d2.push(tup(1, 0.2, 1));
        let reward: RewardFn =
            Arc::new(|h, x, a| if h == 2 && *x == Observation::Token(1) && a[0] < 0.5 { 1.0 } else { 0.0 });
        let t = optdp(&[token_phi(), token_phi()], &[&d1, &d2], &[zero_bonus(), zero_bonus()], &cover(), reward, 2.0)
            .unwrap();
        assert_eq!(t.greedy(1, &Observation::Token(0)).unwrap(), 1);
        assert_eq!(t.value(1, &Observation::Token(0)).unwrap(), 1.0);
    }
}
