//! Bellman-consistent representation learning with Lipschitz heads: the
//! min-max-min selection over a finite decoder class, its iterative variant, and
//! the discriminator classes it is run against.
//!
//! All minimizations over decoders are exact enumeration; minimizations over
//! heads go through [`LipProblem`], built once per (dataset, decoder). A loss matrix entry is the mean squared error
//! of the best head for one (decoder, discriminator) pair.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::cover::{CellId, JointCover, Point};
use crate::decoder::{Decoder, DecoderClass};
use crate::env::{Observation, RichCldMdp};
use crate::error::{invalid_input, invalid_param, Result};
use crate::lipschitz::{CellStats, FitOptions, GridLipFn, LipProblem};
use crate::rng::SimRng;

pub const REPORT_SCHEMA: &str = "bcrl-v1";

/// `(x_h, a_h, r_h, x_{h+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub x: Observation,
    pub a: Point,
    pub r: f64,
    pub x_next: Observation,
}

/// Tuples from one layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitionDataset {
    pub layer: usize,
    pub tuples: Vec<Transition>,
}

impl TransitionDataset {
    pub fn new(layer: usize) -> Self {
        Self { layer, tuples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.tuples.push(t);
    }

    /// `n` tuples with states and actions drawn uniformly from their boxes.
    pub fn exploratory(mdp: &RichCldMdp, layer: usize, n: usize, rng: &mut SimRng) -> Self {
        let mut out = Self::new(layer);
        for _ in 0..n {
            let s = mdp.state_box.sample_uniform(rng);
            let a = mdp.action_box.sample_uniform(rng);
            let next = mdp.step(layer, &s, &a, rng);
            out.push(Transition {
                x: mdp.emit(layer, &s),
                r: mdp.reward(layer, &s, &a),
                a,
                x_next: mdp.emit(layer + 1, &next),
            });
        }
        out
    }

    /// Joint cell of `(φ(x), a)` for every tuple.
    pub fn cells(&self, cover: &JointCover, phi: &Decoder) -> Result<Vec<usize>> {
        self.tuples.iter().map(|t| Ok(cover.disc(&phi.decode(self.layer, &t.x), &t.a)?.0)).collect()
    }
}

/// Reward as a function of `(layer, observation, action)`.
pub type RewardFn = Arc<dyn Fn(usize, &Observation, &[f64]) -> f64 + Send + Sync>;

type ObsFn = Arc<dyn Fn(&Observation) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DiscriminatorKind {
    /// `g(φ(x))` with `g` a state-only Lipschitz head.
    LipDecoder { phi: Decoder, g: GridLipFn },
    /// Mean over cover actions of `w[disc(φ(x), a)] − g(φ̃(x), a)`.
    Residual { phi: Decoder, phi_tilde: Decoder, w: Vec<f64>, g: GridLipFn },
    /// Max over cover actions of `(R + min(w·disc, 2)) / (2H + 1) + w̃·disc`.
    Optimistic { phi: Decoder, w: Vec<f64>, w_tilde: Vec<f64>, reward: RewardFn, horizon: usize, cover: Arc<JointCover> },
    /// Arbitrary function of the observation.
    Function(ObsFn),
}

/// A function of the next observation with range `[0, bound]` after clipping.
#[derive(Clone)]
pub struct Discriminator {
    pub label: String,
    /// Layer of the observations it is applied to.
    pub layer: usize,
    pub bound: f64,
    pub kind: DiscriminatorKind,
}

impl fmt::Debug for Discriminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discriminator").field("label", &self.label).field("layer", &self.layer).finish()
    }
}

impl Discriminator {
    pub fn constant(layer: usize, value: f64, bound: f64) -> Self {
        Self::function(format!("const{value}"), layer, bound, move |_| value)
    }

    pub fn function<F>(label: impl Into<String>, layer: usize, bound: f64, f: F) -> Self
    where
        F: Fn(&Observation) -> f64 + Send + Sync + 'static,
    {
        Self { label: label.into(), layer, bound, kind: DiscriminatorKind::Function(Arc::new(f)) }
    }

    pub fn eval(&self, x: &Observation) -> Result<f64> {
        let h = self.layer;
        let raw = match &self.kind {
            DiscriminatorKind::LipDecoder { phi, g } => {
                let s = phi.decode(h, x);
                let state = g.cover().states().disc(&s)?;
                g.value(g.cover().joint(state, CellId(0)))
            }
            DiscriminatorKind::Residual { phi, phi_tilde, w, g } => {
                let cover = g.cover();
                let s = cover.states().disc(&phi.decode(h, x))?;
                let s_tilde = cover.states().disc(&phi_tilde.decode(h, x))?;
                let na = cover.actions().d_eta();
                (0..na)
                    .map(|a| w[cover.joint(s, CellId(a)).0] - g.value(cover.joint(s_tilde, CellId(a))))
                    .sum::<f64>()
                    / na as f64
            }
            DiscriminatorKind::Optimistic { phi, w, w_tilde, reward, horizon, cover } => {
                let s = cover.states().disc(&phi.decode(h, x))?;
                let scale = (2 * horizon + 1) as f64;
                let mut best = f64::NEG_INFINITY;
                for (ai, a) in cover.actions().centers().iter().enumerate() {
                    let c = cover.joint(s, CellId(ai)).0;
                    let v = (reward(h, x, a) + w[c].min(2.0)) / scale + w_tilde[c];
                    best = best.max(v);
                }
                best
            }
            DiscriminatorKind::Function(f) => f(x),
        };
        Ok(raw.clamp(0.0, self.bound))
    }

    /// Values at the next observation of every tuple.
    pub fn targets(&self, data: &TransitionDataset) -> Result<Vec<f64>> {
        data.tuples.iter().map(|t| self.eval(&t.x_next)).collect()
    }
}

/// What [`build_discriminators`] samples from.
#[derive(Clone)]
pub struct DiscriminatorSpec {
    /// Joint cover used by the residual and optimistic families.
    pub cover: Arc<JointCover>,
    /// State-only cover for the Lipschitz-of-decoder family.
    pub state_cover: Arc<JointCover>,
    pub horizon: usize,
    pub reward: RewardFn,
    /// Range bound L of every discriminator.
    pub bound: f64,
    /// ∞-norm bound on the optimistic family's first weight vector.
    pub weight_bound: f64,
    /// Lipschitz-of-decoder members per decoder.
    pub lip_per_decoder: usize,
}

/// Random Lipschitz head: the lower envelope of a few random cones, clipped.
pub fn random_lip(cover: &Arc<JointCover>, bound: f64, rng: &mut SimRng) -> GridLipFn {
    let n = cover.d_eta();
    let anchors: Vec<(usize, f64)> =
        (0..rng.gen_range(1..=4)).map(|_| (rng.gen_range(0..n), rng.gen_range(0.0..bound))).collect();
    let values = cover.upper_envelope(&anchors, 1.0).into_iter().map(|v| v.clamp(0.0, bound)).collect();
    GridLipFn::from_values(cover.clone(), values, bound, 1.0).expect("envelope is feasible")
}

fn uniform_weights(n: usize, scale: f64, rng: &mut SimRng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

/// `budget / 2` residual and optimistic members each, plus
/// `lip_per_decoder` Lipschitz-of-decoder members for every decoder.
pub fn build_discriminators(
    class: &DecoderClass,
    spec: &DiscriminatorSpec,
    layer: usize,
    budget: usize,
    rng: &mut SimRng,
) -> Result<Vec<Discriminator>> {
    if budget < 2 {
        return Err(invalid_param("discriminator budget must be at least 2"));
    }
    let n = spec.cover.d_eta();
    let pick = |rng: &mut SimRng| class.get(rng.gen_range(0..class.len())).clone();
    let mut out = Vec::new();
    for (i, phi) in class.decoders().iter().enumerate() {
        for j in 0..spec.lip_per_decoder {
            out.push(Discriminator {
                label: format!("lip[{}]#{j}", phi.label()),
                layer,
                bound: spec.bound,
                kind: DiscriminatorKind::LipDecoder { phi: class.get(i).clone(), g: random_lip(&spec.state_cover, spec.bound, rng) },
            });
        }
    }
    for j in 0..budget / 2 {
        let (phi, phi_tilde) = (pick(rng), pick(rng));
        out.push(Discriminator {
            label: format!("residual[{},{}]#{j}", phi.label(), phi_tilde.label()),
            layer,
            bound: spec.bound,
            kind: DiscriminatorKind::Residual {
                phi,
                phi_tilde,
                w: uniform_weights(n, 1.0, rng),
                g: random_lip(&spec.cover, spec.bound, rng),
            },
        });
    }
    for j in 0..budget - budget / 2 {
        let phi = pick(rng);
        let spread = rng.gen_range(0.0..=1.0);
        out.push(Discriminator {
            label: format!("optimistic[{}]#{j}", phi.label()),
            layer,
            bound: spec.bound,
            kind: DiscriminatorKind::Optimistic {
                phi,
                w: uniform_weights(n, spec.weight_bound, rng),
                w_tilde: uniform_weights(n, 2.0 * spread, rng),
                reward: spec.reward.clone(),
                horizon: spec.horizon,
                cover: spec.cover.clone(),
            },
        });
    }
    Ok(out)
}

/// Mean of `(g(φ(x), a) − f(x'))²` over the dataset.
pub fn bcrl_loss(data: &TransitionDataset, phi: &Decoder, g: &GridLipFn, f: &Discriminator) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid_input("loss of an empty dataset"));
    }
    let mut total = 0.0;
    for t in &data.tuples {
        let pred = g.at(&phi.decode(data.layer, &t.x), &t.a)?;
        total += (pred - f.eval(&t.x_next)?).powi(2);
    }
    Ok(total / data.len() as f64)
}

/// Decoder cells per dataset, shared by every loss evaluation.
pub struct ObjectiveGrid<'a> {
    cover: Arc<JointCover>,
    datasets: Vec<&'a TransitionDataset>,
    /// `cells[d][i]`: cells of dataset `d` under decoder `i`.
    cells: Vec<Vec<Vec<usize>>>,
    problems: Vec<Vec<LipProblem>>,
}

impl<'a> ObjectiveGrid<'a> {
    pub fn new(
        datasets: Vec<&'a TransitionDataset>,
        class: &DecoderClass,
        cover: Arc<JointCover>,
        opts: FitOptions,
    ) -> Result<Self> {
        if datasets.iter().any(|d| d.is_empty()) || datasets.is_empty() {
            return Err(invalid_input("representation learning needs nonempty data"));
        }
        let cells = datasets
            .iter()
            .map(|d| class.decoders().iter().map(|phi| d.cells(&cover, phi)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let problems = cells
            .iter()
            .map(|per_decoder| {
                per_decoder
                    .par_iter()
                    .map(|c| {
                        let mut counts = vec![0.0; cover.d_eta()];
                        for &k in c {
                            counts[k] += 1.0;
                        }
                        LipProblem::new(&cover, &counts, opts)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cover, datasets, cells, problems })
    }

    pub fn decoders(&self) -> usize {
        self.cells[0].len()
    }

    /// Loss of the best head for decoder `i` against targets on dataset `d`.
    pub fn loss(&self, d: usize, i: usize, targets: &[f64]) -> Result<f64> {
        let stats = CellStats::from_pairs(self.cover.d_eta(), &self.cells[d][i], targets);
        Ok(self.problems[d][i].solve(&stats).objective / targets.len() as f64)
    }

    /// Per-decoder losses for one discriminator, whose layer picks the dataset.
    pub fn column(&self, f: &Discriminator) -> Result<Vec<f64>> {
        let d = self
            .datasets
            .iter()
            .position(|ds| ds.layer + 1 == f.layer)
            .ok_or_else(|| invalid_input(format!("no dataset feeds layer {}", f.layer)))?;
        let targets = f.targets(self.datasets[d])?;
        (0..self.decoders()).map(|i| self.loss(d, i, &targets)).collect()
    }

    pub fn columns(&self, discs: &[Discriminator]) -> Result<Vec<Vec<f64>>> {
        discs.par_iter().map(|f| self.column(f)).collect()
    }
}

/// `min_g ℓ(φ, g, f) − min_{φ̃, g̃} ℓ(φ̃, g̃, f)`.
pub fn debiased_objective(
    data: &TransitionDataset,
    phi_index: usize,
    f: &Discriminator,
    class: &DecoderClass,
    cover: &Arc<JointCover>,
    opts: FitOptions,
) -> Result<f64> {
    let grid = ObjectiveGrid::new(vec![data], class, cover.clone(), opts)?;
    let col = grid.column(f)?;
    Ok(col[phi_index] - col.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Exact enumeration over the supplied discriminators.
    Exhaustive,
    /// The adversarial discriminator's debiased loss fell below the threshold.
    BelowThreshold,
    IterationLimit,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Exhaustive => "exhaustive",
            Termination::BelowThreshold => "below-threshold",
            Termination::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveRow {
    pub decoder: String,
    pub discriminator: String,
    pub raw: f64,
    pub debiased: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcrlReport {
    pub chosen: usize,
    pub chosen_label: String,
    /// Worst debiased objective of the chosen decoder over the evaluated discriminators.
    pub worst_debiased: f64,
    pub rows: Vec<ObjectiveRow>,
    pub iterations: usize,
    pub termination: Termination,
}

impl BcrlReport {
    /// One row per (decoder, discriminator) then a summary row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["schema", "decoder", "discriminator", "raw_loss", "debiased_loss", "note"])?;
        for r in &self.rows {
            w.write_record([
                REPORT_SCHEMA,
                &r.decoder,
                &r.discriminator,
                &format!("{:.12e}", r.raw),
                &format!("{:.12e}", r.debiased),
                "",
            ])?;
        }
        w.write_record([
            REPORT_SCHEMA,
            &self.chosen_label,
            "*",
            "",
            &format!("{:.12e}", self.worst_debiased),
            &format!("chosen; iterations={}; termination={}", self.iterations, self.termination),
        ])?;
        w.flush()?;
        Ok(())
    }
}

fn rows_for(class: &DecoderClass, discs: &[&Discriminator], columns: &[&Vec<f64>]) -> Vec<ObjectiveRow> {
    let mut rows = Vec::new();
    for (i, phi) in class.decoders().iter().enumerate() {
        for (f, col) in discs.iter().zip(columns) {
            let best = col.iter().copied().fold(f64::INFINITY, f64::min);
            rows.push(ObjectiveRow {
                decoder: phi.label().to_string(),
                discriminator: f.label.clone(),
                raw: col[i],
                debiased: col[i] - best,
            });
        }
    }
    rows
}

/// Index of the smallest value, lowest index on ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Exact min-max-min over the class and the given discriminators, which may
/// span several layers (one dataset per layer; a decoder shared across layers).
pub fn bcrl_select_multi(
    datasets: &[&TransitionDataset],
    class: &DecoderClass,
    discs: &[Discriminator],
    cover: &Arc<JointCover>,
    opts: FitOptions,
) -> Result<BcrlReport> {
    if discs.is_empty() {
        return Err(invalid_input("no discriminators"));
    }
    let grid = ObjectiveGrid::new(datasets.to_vec(), class, cover.clone(), opts)?;
    let columns = grid.columns(discs)?;
    let worst: Vec<f64> = (0..class.len())
        .map(|i| {
            columns
                .iter()
                .map(|col| col[i] - col.iter().copied().fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let chosen = argmin(&worst);
    let disc_refs: Vec<&Discriminator> = discs.iter().collect();
    let col_refs: Vec<&Vec<f64>> = columns.iter().collect();
    Ok(BcrlReport {
        chosen,
        chosen_label: class.get(chosen).label().to_string(),
        worst_debiased: worst[chosen],
        rows: rows_for(class, &disc_refs, &col_refs),
        iterations: 1,
        termination: Termination::Exhaustive,
    })
}

pub fn bcrl_select(
    data: &TransitionDataset,
    class: &DecoderClass,
    discs: &[Discriminator],
    cover: &Arc<JointCover>,
    opts: FitOptions,
) -> Result<BcrlReport> {
    bcrl_select_multi(&[data], class, discs, cover, opts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterConfig {
    pub iterations: usize,
    /// Stop once the adversarial debiased loss is below this.
    pub beta: f64,
    /// Fresh candidates drawn from the generator each iteration.
    pub candidates: usize,
    /// Cap on retained discriminators; one is evicted at random beyond it.
    pub pool_cap: usize,
}

impl Default for IterConfig {
    fn default() -> Self {
        Self { iterations: 20, beta: 1e-3, candidates: 8, pool_cap: 125 }
    }
}

/// Alternates adversarial discriminator selection and decoder refits against
/// every retained discriminator.
pub fn iter_bcrl(
    datasets: &[&TransitionDataset],
    class: &DecoderClass,
    generator: &mut dyn FnMut(&mut SimRng) -> Discriminator,
    cfg: IterConfig,
    cover: &Arc<JointCover>,
    opts: FitOptions,
    rng: &mut SimRng,
) -> Result<BcrlReport> {
    if cfg.iterations == 0 || cfg.candidates == 0 || cfg.pool_cap == 0 || cfg.beta.is_nan() || cfg.beta < 0.0 {
        return Err(invalid_param("iterations, candidates and pool cap must be positive and beta >= 0"));
    }
    let grid = ObjectiveGrid::new(datasets.to_vec(), class, cover.clone(), opts)?;
    let mut current = rng.gen_range(0..class.len());
    let mut retained: Vec<(Discriminator, Vec<f64>)> = Vec::new();
    let mut seen: Vec<(Discriminator, Vec<f64>)> = Vec::new();
    let mut last_adv = f64::INFINITY;
    for t in 1..=cfg.iterations {
        let fresh: Vec<Discriminator> = (0..cfg.candidates).map(|_| generator(rng)).collect();
        let cols = grid.columns(&fresh)?;
        let mut best: Option<(f64, usize)> = None;
        for (k, col) in cols.iter().enumerate() {
            let d = col[current] - col.iter().copied().fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(b, _)| d > b) {
                best = Some((d, k));
            }
        }
        let (adv, k) = best.expect("at least one candidate");
        last_adv = adv;
        seen.extend(fresh.iter().cloned().zip(cols.iter().cloned()));
        if adv < cfg.beta {
            return Ok(iter_report(class, current, adv, &seen, t, Termination::BelowThreshold));
        }
        retained.push((fresh[k].clone(), cols[k].clone()));
        if retained.len() > cfg.pool_cap {
            let evict = rng.gen_range(0..retained.len());
            retained.swap_remove(evict);
        }
        let summed: Vec<f64> =
            (0..class.len()).map(|i| retained.iter().map(|(_, col)| col[i]).sum::<f64>()).collect();
        current = argmin(&summed);
    }
    Ok(iter_report(class, current, last_adv, &seen, cfg.iterations, Termination::IterationLimit))
}

fn iter_report(
    class: &DecoderClass,
    chosen: usize,
    adversarial: f64,
    seen: &[(Discriminator, Vec<f64>)],
    iterations: usize,
    termination: Termination,
) -> BcrlReport {
    let discs: Vec<&Discriminator> = seen.iter().map(|(f, _)| f).collect();
    let cols: Vec<&Vec<f64>> = seen.iter().map(|(_, c)| c).collect();
    BcrlReport {
        chosen,
        chosen_label: class.get(chosen).label().to_string(),
        worst_debiased: adversarial,
        rows: rows_for(class, &discs, &cols),
        iterations,
        termination,
    }
}

/// Draws discriminators from a prebuilt list uniformly at random.
pub fn pool_generator(pool: Vec<Discriminator>) -> impl FnMut(&mut SimRng) -> Discriminator {
    move |rng| pool.choose(rng).expect("nonempty pool").clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{point, MetricBox};
    use crate::rng::seeded;

    fn token_decoder(label: &str, scale: f64) -> Decoder {
        Decoder::new(label, move |_, x| match *x {
            Observation::Token(t) => point(&[(t as f64 * scale).min(1.0)]),
            _ => point(&[0.0]),
        })
    }

    fn cover() -> Arc<JointCover> {
        Arc::new(JointCover::build(&MetricBox::unit(1), 0.5, &MetricBox::unit(1), 0.5).unwrap())
    }

    fn data() -> TransitionDataset {
        let mut d = TransitionDataset::new(1);
        for (s, a, s2) in [(0u64, 0.2, 0u64), (1, 0.2, 1), (0, 0.8, 1), (1, 0.8, 0), (0, 0.2, 0)] {
            d.push(Transition { x: Observation::Token(s), a: point(&[a]), r: 0.0, x_next: Observation::Token(s2) });
        }
        d
    }

    #[test]
    fn zero_loss_cases() {
        let phi = token_decoder("id", 1.0);
        let zero = GridLipFn::constant(cover(), 0.0, 2.0);
        assert_eq!(bcrl_loss(&data(), &phi, &zero, &Discriminator::constant(2, 0.0, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn hand_loss() {
        let phi = token_decoder("id", 1.0);
        let g = GridLipFn::constant(cover(), 0.5, 2.0);
        let f = Discriminator::function("tok", 2, 2.0, |x| if *x == Observation::Token(1) { 1.0 } else { 0.0 });
        // Targets 0,1,1,0,0 against 0.5: every residual is 0.25.
        assert!((bcrl_loss(&data(), &phi, &g, &f).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_discriminator_ties_return_first() {
        let class = DecoderClass::new(
            vec![token_decoder("a", 1.0), token_decoder("b", 0.0)],
            Some(0),
            MetricBox::unit(1),
        )
        .unwrap();
        let rep =
            bcrl_select(&data(), &class, &[Discriminator::constant(2, 0.0, 2.0)], &cover(), FitOptions::new(2.0))
                .unwrap();
        assert_eq!(rep.chosen, 0);
        assert_eq!(rep.worst_debiased, 0.0);
    }

    #[test]
    fn informative_decoder_wins() {
        let class = DecoderClass::new(
            vec![token_decoder("blind", 0.0), token_decoder("id", 1.0)],
            Some(1),
            MetricBox::unit(1),
        )
        .unwrap();
        let f = Discriminator::function("tok", 2, 2.0, |x| if *x == Observation::Token(1) { 1.0 } else { 0.0 });
        let rep = bcrl_select(&data(), &class, &[f.clone()], &cover(), FitOptions::new(2.0)).unwrap();
        assert_eq!(rep.chosen, 1);
        let d = debiased_objective(&data(), 1, &f, &class, &cover(), FitOptions::new(2.0)).unwrap();
        assert!(d.abs() < 1e-12);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("schema,"));
        assert_eq!(text.lines().count(), 1 + 2 + 1);
    }

    #[test]
    fn infinite_beta_stops_immediately() {
        let class = DecoderClass::new(
            vec![token_decoder("blind", 0.0), token_decoder("id", 1.0)],
            None,
            MetricBox::unit(1),
        )
        .unwrap();
        let mut gen = pool_generator(vec![Discriminator::constant(2, 0.3, 2.0)]);
        let cfg = IterConfig { beta: f64::INFINITY, ..IterConfig::default() };
        let d = data();
        let rep = iter_bcrl(&[&d], &class, &mut gen, cfg, &cover(), FitOptions::new(2.0), &mut seeded(1)).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.termination, Termination::BelowThreshold);
    }

    #[test]
    fn residual_with_matching_weights_vanishes() {
        let c = cover();
        let phi = token_decoder("id", 1.0);
        let g = random_lip(&c, 2.0, &mut seeded(3));
        let f = Discriminator {
            label: "r".into(),
            layer: 2,
            bound: 2.0,
            kind: DiscriminatorKind::Residual { phi: phi.clone(), phi_tilde: phi, w: g.values().to_vec(), g },
        };
        for t in 0..3 {
            assert_eq!(f.eval(&Observation::Token(t)).unwrap(), 0.0);
        }
    }
}
