//! Decoders (observation -> latent state) and finite decoder classes.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cover::{CellId, CoverIndex, JointCover, MetricBox, Point};
use crate::env::{Observation, RichCldMdp};
use crate::error::{invalid_param, Error, Result};
use crate::rng::{seeded, SimRng};

type DecodeFn = dyn Fn(usize, &Observation) -> Point + Send + Sync;

/// A per-layer map from observations to latent points. Cheap to clone.
#[derive(Clone)]
pub struct Decoder {
    label: String,
    map: Arc<DecodeFn>,
}

impl fmt::Debug for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Decoder").field("label", &self.label).finish_non_exhaustive()
    }
}

impl Decoder {
    pub fn new<F>(label: impl Into<String>, map: F) -> Self
    where
        F: Fn(usize, &Observation) -> Point + Send + Sync + 'static,
    {
        Self { label: label.into(), map: Arc::new(map) }
    }

    /// The environment's own inverse emission.
    pub fn ground_truth(mdp: &RichCldMdp) -> Self {
        let mdp = mdp.clone();
        Self::new("truth", move |h, x| mdp.true_decode(h, x))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn decode(&self, h: usize, x: &Observation) -> Point {
        (self.map)(h, x)
    }

    /// `post ∘ self`, relabelled.
    pub fn then<F>(&self, label: impl Into<String>, post: F) -> Self
    where
        F: Fn(Point) -> Point + Send + Sync + 'static,
    {
        let inner = self.clone();
        Self::new(label, move |h, x| post(inner.decode(h, x)))
    }
}

/// A nonempty ordered decoder class. The truth index is for evaluation only.
#[derive(Clone, Debug)]
pub struct DecoderClass {
    decoders: Vec<Decoder>,
    truth: Option<usize>,
    state_box: MetricBox,
}

impl DecoderClass {
    pub fn new(decoders: Vec<Decoder>, truth: Option<usize>, state_box: MetricBox) -> Result<Self> {
        if decoders.is_empty() {
            return Err(invalid_param("decoder class must be nonempty"));
        }
        if truth.is_some_and(|t| t >= decoders.len()) {
            return Err(invalid_param("truth index out of range"));
        }
        Ok(Self { decoders, truth, state_box })
    }

    /// The ground-truth decoder at index 0 followed by the given distractors.
    pub fn with_distractors(mdp: &RichCldMdp, kinds: &[DistractorKind]) -> Result<Self> {
        let truth = Decoder::ground_truth(mdp);
        let mut decoders = vec![truth.clone()];
        decoders.extend(make_distractors(&truth, &mdp.state_box, kinds)?);
        Self::new(decoders, Some(0), mdp.state_box.clone())
    }

    pub fn len(&self) -> usize {
        self.decoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decoders.is_empty()
    }

    pub fn get(&self, i: usize) -> &Decoder {
        &self.decoders[i]
    }

    pub fn decoders(&self) -> &[Decoder] {
        &self.decoders
    }

    pub fn truth_index(&self) -> Option<usize> {
        self.truth
    }

    pub fn truth(&self) -> Option<&Decoder> {
        self.truth.map(|i| &self.decoders[i])
    }

    pub fn state_box(&self) -> &MetricBox {
        &self.state_box
    }

    pub fn labels(&self) -> Vec<String> {
        self.decoders.iter().map(|d| d.label.clone()).collect()
    }

    /// Same decoders in a new order; the truth index follows its decoder.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.len()).collect::<Vec<_>>() {
            return Err(invalid_param("reorder must be a permutation of the class"));
        }
        let truth = self.truth.map(|t| order.iter().position(|&i| i == t).expect("permutation"));
        Self::new(order.iter().map(|&i| self.decoders[i].clone()).collect(), truth, self.state_box.clone())
    }

    /// Confirms that the designated truth agrees with the environment's inverse
    /// emission on `samples` random latent states.
    pub fn verify_truth(&self, mdp: &RichCldMdp, samples: usize, rng: &mut SimRng) -> Result<()> {
        let truth = self.truth().ok_or_else(|| Error::CheckFailed("decoder class has no ground truth".into()))?;
        for _ in 0..samples {
            let h = 1 + rand::Rng::gen_range(rng, 0..mdp.horizon);
            let s = match mdp.initial {
                crate::env::Initial::TreeRoots => mdp.initial_state(rng),
                _ => mdp.state_box.sample_uniform(rng),
            };
            let x = mdp.emit(h, &s);
            if truth.decode(h, &x) != mdp.true_decode(h, &x) {
                return Err(Error::CheckFailed(format!(
                    "decoder `{}` disagrees with the emission inverse at {x:?}",
                    truth.label
                )));
            }
        }
        Ok(())
    }
}

/// Recipes for distractor decoders built from a truth decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistractorKind {
    /// Snap the latent output to the centers of a k-per-axis grid.
    Coarsen { k: usize },
    /// Shuffle the cells of an `eta`-cover, keeping the offset inside each cell.
    Permute { seed: u64, eta: f64 },
    /// Map everything to the box center.
    Constant,
    /// Reverse the coordinate order (identity in one dimension).
    SwapAxes,
    /// Mirror every coordinate inside the state box.
    Reflect,
}

pub fn make_distractors(truth: &Decoder, state_box: &MetricBox, kinds: &[DistractorKind]) -> Result<Vec<Decoder>> {
    if kinds.is_empty() {
        return Err(invalid_param("no distractor kinds given"));
    }
    kinds.iter().map(|k| make_distractor(truth, state_box, k)).collect()
}

fn make_distractor(truth: &Decoder, state_box: &MetricBox, kind: &DistractorKind) -> Result<Decoder> {
    let bbox = state_box.clone();
    Ok(match *kind {
        DistractorKind::Coarsen { k } => {
            if k == 0 {
                return Err(invalid_param("coarsen needs k >= 1"));
            }
            let grid = CoverIndex::build(state_box, 1.0 / k as f64)?;
            truth.then(format!("coarsen{k}"), move |p| {
                let p = bbox.clamp_point(&p).unwrap_or_else(|_| bbox.center());
                grid.center(grid.disc(&p).expect("clamped")).clone()
            })
        }
        DistractorKind::Permute { seed, eta } => {
            let cover = CoverIndex::build(state_box, eta)?;
            let mut perm: Vec<usize> = (0..cover.d_eta()).collect();
            perm.shuffle(&mut seeded(seed));
            permuted(truth, cover, perm, format!("permute{seed}"))?
        }
        DistractorKind::Constant => {
            let c = state_box.center();
            Decoder::new("constant", move |_, _| c.clone())
        }
        DistractorKind::SwapAxes => truth.then("swap-axes", |p| p.iter().rev().copied().collect()),
        DistractorKind::Reflect => truth.then("reflect", move |p| {
            p.iter().enumerate().map(|(d, x)| bbox.lower()[d] + bbox.upper()[d] - x).collect()
        }),
    })
}

/// `truth` followed by moving each cover cell onto cell `perm[cell]`, preserving
/// the offset from the cell center.
pub fn permuted(truth: &Decoder, cover: CoverIndex, perm: Vec<usize>, label: impl Into<String>) -> Result<Decoder> {
    let mut check = perm.clone();
    check.sort_unstable();
    if check != (0..cover.d_eta()).collect::<Vec<_>>() {
        return Err(invalid_param("cell permutation must be a bijection of the cover"));
    }
    let bbox = cover.bbox().clone();
    Ok(truth.then(label, move |p| {
        let p = bbox.clamp_point(&p).unwrap_or_else(|_| bbox.center());
        let from = cover.disc(&p).expect("clamped");
        let to = CellId(perm[from.0]);
        if to == from {
            return p;
        }
        let (c0, c1) = (cover.center(from), cover.center(to));
        let moved: Point = p.iter().zip(c0).zip(c1).map(|((x, a), b)| x - a + b).collect();
        bbox.clamp_point(&moved).expect("offset stays inside the target cell")
    }))
}

/// Joint cell of `(φ(x), a)`: the index of the one-hot feature.
pub fn feature_cell(cover: &JointCover, phi: &Decoder, h: usize, x: &Observation, a: &[f64]) -> Result<CellId> {
    cover.disc(&phi.decode(h, x), a)
}

/// One-hot encoding of `disc(φ(x), disc(a))`, length `d_eta` of the joint cover.
pub fn one_hot_features(cover: &JointCover, phi: &Decoder, h: usize, x: &Observation, a: &[f64]) -> Result<Vec<f64>> {
    let mut v = vec![0.0; cover.d_eta()];
    v[feature_cell(cover, phi, h, x, a)?.0] = 1.0;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::point;
    use crate::env::{make_maze, Layout, RewardSpec};
    use rand::Rng;
    use std::collections::BTreeSet;

    fn identity() -> Decoder {
        Decoder::new("id", |_, x| match *x {
            Observation::Token(t) => point(&[t as f64 / 100.0]),
            _ => point(&[0.0]),
        })
    }

    #[test]
    fn constant_maps_to_center() {
        let d = make_distractors(&identity(), &MetricBox::unit(1), &[DistractorKind::Constant]).unwrap();
        for t in [0, 50, 100] {
            assert_eq!(d[0].decode(1, &Observation::Token(t)), point(&[0.5]));
        }
    }

    #[test]
    fn reflect_mirrors_inside_the_box() {
        let d = make_distractors(&identity(), &MetricBox::unit(1), &[DistractorKind::Reflect]).unwrap();
        assert!((d[0].decode(1, &Observation::Token(30))[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn identity_permutation_equals_truth() {
        let cover = CoverIndex::build(&MetricBox::unit(1), 0.1).unwrap();
        let p = permuted(&identity(), cover, (0..10).collect(), "p").unwrap();
        for t in 0..=100 {
            let x = Observation::Token(t);
            assert_eq!(p.decode(1, &x), identity().decode(1, &x));
        }
    }

    #[test]
    fn permutation_moves_cells_and_keeps_offsets() {
        let cover = CoverIndex::build(&MetricBox::unit(1), 0.5).unwrap();
        let p = permuted(&identity(), cover.clone(), vec![1, 0], "swap").unwrap();
        let y = p.decode(1, &Observation::Token(10));
        assert!((y[0] - 0.6).abs() < 1e-12);
        assert!(permuted(&identity(), cover, vec![0, 0], "bad").is_err());
    }

    #[test]
    fn coarsen_two_on_maze_has_four_outputs() {
        let mdp = make_maze(Layout::Spiral, 30, 1, RewardSpec::Zero).unwrap();
        let truth = Decoder::ground_truth(&mdp);
        let d = make_distractors(&truth, &mdp.state_box, &[DistractorKind::Coarsen { k: 2 }]).unwrap();
        let mut rng = seeded(2);
        let mut seen = BTreeSet::new();
        for _ in 0..10_000 {
            let s = mdp.state_box.sample_uniform(&mut rng);
            let y = d[0].decode(1, &mdp.emit(1, &s));
            seen.insert((y[0].to_bits(), y[1].to_bits()));
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn one_hot_layout_is_state_major() {
        let cover = JointCover::build(&MetricBox::unit(1), 0.25, &MetricBox::unit(1), 0.5).unwrap();
        let phi = identity();
        let mut rng = seeded(4);
        for _ in 0..100 {
            let t: u64 = rng.gen_range(0..=100);
            let a: f64 = rng.gen();
            let v = one_hot_features(&cover, &phi, 1, &Observation::Token(t), &[a]).unwrap();
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            let hot = v.iter().position(|&u| u == 1.0).unwrap();
            let s_cell = cover.states().disc(&[t as f64 / 100.0]).unwrap().0;
            let a_cell = cover.actions().disc(&[a]).unwrap().0;
            assert_eq!(hot, 2 * s_cell + a_cell);
        }
    }

    #[test]
    fn reorder_tracks_truth() {
        let c = DecoderClass::new(
            vec![identity(), Decoder::new("zero", |_, _| point(&[0.0]))],
            Some(0),
            MetricBox::unit(1),
        )
        .unwrap();
        let r = c.reordered(&[1, 0]).unwrap();
        assert_eq!(r.truth_index(), Some(1));
        assert_eq!(r.truth().unwrap().label(), "id");
        assert!(c.reordered(&[0, 0]).is_err());
        assert!(DecoderClass::new(vec![], None, MetricBox::unit(1)).is_err());
    }
}
