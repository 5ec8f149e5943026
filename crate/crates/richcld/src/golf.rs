//! Desk-scale GOLF.DBR: an explicitly enumerated value class, disagreement
//! filtered squared Bellman losses, version-space elimination and optimistic
//! selection. Exponential in the class size by construction; use it on tiny
//! enumerable instances only.
//!
//! Loss differences only depend on a member through its pair of heads on layers
//! `h` and `h + 1`, so the elimination statistics are kept as running sums per
//! `(head pair, competitor head)` and each round costs one pass over those.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bcrl::Transition;
use crate::cover::{CellId, JointCover, Point};
use crate::criee::{estimate_value, MixturePolicy};
use crate::decoder::{Decoder, DecoderClass};
use crate::env::{compose_policy, rollout, Observation, Policy, RichCldMdp, SharedPolicy, UniformCoverPolicy};
use crate::error::{invalid_param, Error, Result};
use crate::rng::{stream_rng, streams, SimRng};

pub const DIAGNOSTICS_SCHEMA: &str = "golf-v1";

/// Where the disagreement filter compares two heads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// At the logged action.
    #[default]
    AtAction,
    /// Largest disagreement over the action cover.
    SupOverActions,
}

/// `Σ W·(f_h(x,a) − r − next(x'))²` with `W = 1{|f_h − g_h| ≥ κ}`. `next` is the
/// maximum of `f_{h+1}` over the finite action set (zero after the last layer).
/// With `actions` given the filter takes the sup of the disagreement over them.
pub fn dbr_loss(
    data: &[Transition],
    kappa: f64,
    f: &dyn Fn(&Observation, &[f64]) -> f64,
    g: &dyn Fn(&Observation, &[f64]) -> f64,
    next: &dyn Fn(&Observation) -> f64,
    actions: Option<&[Point]>,
) -> f64 {
    data.iter()
        .filter(|t| {
            let gap = match actions {
                None => (f(&t.x, &t.a) - g(&t.x, &t.a)).abs(),
                Some(acts) => acts.iter().map(|a| (f(&t.x, a) - g(&t.x, a)).abs()).fold(0.0, f64::max),
            };
            gap >= kappa
        })
        .map(|t| (f(&t.x, &t.a) - t.r - next(&t.x_next)).powi(2))
        .sum()
}

/// Grid-valued Lipschitz tables on one layer's joint cells. Cells outside the
/// support are pinned at zero.
fn grid_tables(cover: &JointCover, support: &[CellId], gamma: f64, slope: f64) -> Vec<Vec<f64>> {
    let levels = (1.0 / gamma).round() as usize + 1;
    let n = cover.d_eta();
    let mut out = Vec::new();
    let mut digits = vec![0usize; support.len()];
    loop {
        let mut table = vec![0.0; n];
        for (c, &k) in support.iter().zip(&digits) {
            table[c.0] = (k as f64 * gamma).min(1.0);
        }
        let lipschitz = (0..n).all(|i| {
            (i + 1..n).all(|j| (table[i] - table[j]).abs() <= slope * cover.distance(CellId(i), CellId(j)) + 1e-12)
        });
        if lipschitz {
            out.push(table);
        }
        // Odometer over support digits, first support cell most significant.
        let mut d = support.len();
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            digits[d] += 1;
            if digits[d] < levels {
                break;
            }
            digits[d] = 0;
        }
    }
}

/// Settings for [`ValueClass::build`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueClassSpec {
    /// Value grid spacing γ; `1/γ` must be an integer.
    pub gamma: f64,
    /// Lipschitz constant of the heads.
    pub slope: f64,
    /// Per layer, the joint cells the heads may vary on; empty means all.
    pub support: Vec<Vec<usize>>,
    /// Refuse classes larger than this.
    pub max_members: usize,
}

impl Default for ValueClassSpec {
    fn default() -> Self {
        Self { gamma: 0.5, slope: 2.0, support: vec![], max_members: 50_000 }
    }
}

/// Members are `(decoder, table per layer)`, every layer sharing the decoder.
/// Member indices run decoder-major, then layer 1 table, then layer 2, and so on.
#[derive(Clone, Debug)]
pub struct ValueClass {
    cover: Arc<JointCover>,
    decoders: Vec<Decoder>,
    tables: Vec<Vec<Vec<f64>>>,
    gamma: f64,
}

impl ValueClass {
    pub fn build(class: &DecoderClass, cover: Arc<JointCover>, horizon: usize, spec: &ValueClassSpec) -> Result<Self> {
        let steps = 1.0 / spec.gamma;
        if !(spec.gamma > 0.0 && spec.gamma <= 1.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(invalid_param("value grid spacing must be 1/k for an integer k"));
        }
        if horizon == 0 || !(spec.slope > 0.0) {
            return Err(invalid_param("need horizon >= 1 and a positive slope"));
        }
        if !spec.support.is_empty() && spec.support.len() != horizon {
            return Err(invalid_param("support must list one cell set per layer"));
        }
        let mut tables = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let support: Vec<CellId> = match spec.support.get(h) {
                Some(cells) if !cells.is_empty() => {
                    if cells.iter().any(|&c| c >= cover.d_eta()) {
                        return Err(invalid_param("support cell outside the joint cover"));
                    }
                    cells.iter().map(|&c| CellId(c)).collect()
                }
                _ => (0..cover.d_eta()).map(CellId).collect(),
            };
            let raw = (steps.round() + 1.0).powi(support.len() as i32);
            if raw > 1e7 {
                return Err(invalid_param(format!("{raw} raw grid tables on layer {} is too many to enumerate", h + 1)));
            }
            tables.push(grid_tables(&cover, &support, spec.gamma, spec.slope));
        }
        let vc = Self { cover, decoders: class.decoders().to_vec(), tables, gamma: spec.gamma };
        if vc.len() > spec.max_members {
            return Err(invalid_param(format!("value class has {} members, cap is {}", vc.len(), spec.max_members)));
        }
        Ok(vc)
    }

    pub fn horizon(&self) -> usize {
        self.tables.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn cover(&self) -> &Arc<JointCover> {
        &self.cover
    }

    fn per_decoder(&self) -> usize {
        self.tables.iter().map(Vec::len).product()
    }

    pub fn len(&self) -> usize {
        self.decoders.len() * self.per_decoder()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Table count on 1-based layer `h`.
    pub fn tables_on(&self, h: usize) -> usize {
        self.tables[h - 1].len()
    }

    /// Decoder index and per-layer table indices of member `m`.
    pub fn unpack(&self, m: usize) -> (usize, Vec<usize>) {
        let mut rest = m % self.per_decoder();
        let mut idx = vec![0; self.horizon()];
        for h in (0..self.horizon()).rev() {
            idx[h] = rest % self.tables[h].len();
            rest /= self.tables[h].len();
        }
        (m / self.per_decoder(), idx)
    }

    pub fn pack(&self, decoder: usize, tables: &[usize]) -> usize {
        tables.iter().zip(&self.tables).fold(decoder, |acc, (&i, t)| acc * t.len() + i)
    }

    pub fn table(&self, h: usize, i: usize) -> &[f64] {
        &self.tables[h - 1][i]
    }

    fn state_cell(&self, decoder: usize, h: usize, x: &Observation) -> Result<CellId> {
        self.cover.states().disc(&self.decoders[decoder].decode(h, x))
    }

    /// Joint cell of `(φ_decoder(x), a)`.
    pub fn cell(&self, decoder: usize, h: usize, x: &Observation, a: &[f64]) -> Result<CellId> {
        self.cover.disc(&self.decoders[decoder].decode(h, x), a)
    }

    /// Best action-cover index and value of table `i` on layer `h` in the state
    /// cell of `x`; lowest index on ties.
    pub fn greedy(&self, decoder: usize, h: usize, i: usize, x: &Observation) -> Result<(usize, f64)> {
        let s = self.state_cell(decoder, h, x)?;
        let t = self.table(h, i);
        let mut best = (0, f64::NEG_INFINITY);
        for a in 0..self.cover.actions().d_eta() {
            let v = t[self.cover.joint(s, CellId(a)).0];
            if v > best.1 {
                best = (a, v);
            }
        }
        Ok(best)
    }

    /// Member whose tables are closest in sup norm to `target[h][cell]` on the
    /// given decoder, with that distance.
    pub fn closest(&self, decoder: usize, target: &[Vec<f64>]) -> Result<(usize, f64)> {
        if target.len() != self.horizon() || target.iter().any(|t| t.len() != self.cover.d_eta()) {
            return Err(invalid_param("target needs one full joint table per layer"));
        }
        let mut idx = Vec::with_capacity(self.horizon());
        let mut err = 0.0f64;
        for (h, want) in target.iter().enumerate() {
            let (i, e) = self.tables[h]
                .iter()
                .map(|t| t.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, e)| if e < best.1 { (i, e) } else { best });
            idx.push(i);
            err = err.max(e);
        }
        Ok((self.pack(decoder, &idx), err))
    }
}

/// Greedy policy of one class member over the action cover.
#[derive(Clone, Debug)]
pub struct MemberPolicy {
    class: Arc<ValueClass>,
    member: usize,
}

impl MemberPolicy {
    pub fn new(class: Arc<ValueClass>, member: usize) -> Self {
        Self { class, member }
    }
}

impl Policy for MemberPolicy {
    fn act(&self, h: usize, x: &Observation, _rng: &mut SimRng) -> Point {
        let (d, idx) = self.class.unpack(self.member);
        let a = self.class.greedy(d, h, idx[h - 1], x).map_or(0, |g| g.0);
        self.class.cover.actions().center(CellId(a)).clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GolfConfig {
    pub rounds: usize,
    /// Action cover scale of the collection and greedy policies.
    pub eta: f64,
    /// Confidence radius; `None` uses `ln(T·H·|F|/δ)`.
    pub beta: Option<f64>,
    pub delta: f64,
    /// Filter level κ.
    pub kappa: f64,
    pub filter: FilterMode,
    /// Rollouts per round for the J(π^t) estimate; zero skips it.
    pub eval_rollouts: usize,
    pub seed: u64,
}

impl Default for GolfConfig {
    fn default() -> Self {
        Self { rounds: 200, eta: 0.5, beta: None, delta: 0.1, kappa: 0.25, filter: FilterMode::AtAction, eval_rollouts: 0, seed: 0 }
    }
}

pub fn default_beta(rounds: usize, horizon: usize, class_size: usize, delta: f64) -> f64 {
    ((rounds * horizon * class_size) as f64 / delta).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GolfRound {
    pub round: usize,
    /// Members alive when the round's policy was chosen.
    pub alive: usize,
    pub chosen: usize,
    /// Whether the tracked member is still alive after this round's elimination.
    pub survivor: Option<bool>,
    pub root_value: f64,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Clone)]
pub struct GolfOutcome {
    pub mixture: MixturePolicy,
    pub chosen: Vec<usize>,
    pub rounds: Vec<GolfRound>,
    pub alive: Vec<bool>,
    pub beta: f64,
    pub data: Vec<Vec<Transition>>,
}

/// Running elimination statistics for one layer.
struct LayerStats {
    /// `sums[pair * heads + g]`, pair = `(decoder, table_h, table_{h+1})`.
    sums: Vec<f64>,
    next_tables: usize,
}

impl LayerStats {
    fn pair(&self, decoder: usize, tables_h: usize, i: usize, j: usize) -> usize {
        (decoder * tables_h + i) * self.next_tables + j
    }
}

/// Runs GOLF.DBR. `track` names a member whose survival is reported.
pub fn golf_run(mdp: &RichCldMdp, class: Arc<ValueClass>, cfg: &GolfConfig, track: Option<usize>) -> Result<GolfOutcome> {
    let hz = mdp.horizon;
    if class.is_empty() || class.horizon() != hz {
        return Err(invalid_param("value class must be nonempty and match the horizon"));
    }
    if cfg.rounds == 0 || !(cfg.kappa >= 0.0) || !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(invalid_param("need rounds >= 1, kappa >= 0 and delta in (0, 1)"));
    }
    if track.is_some_and(|m| m >= class.len()) {
        return Err(invalid_param("tracked member outside the class"));
    }
    let beta = cfg.beta.unwrap_or_else(|| default_beta(cfg.rounds, hz, class.len(), cfg.delta));
    let cover = class.cover.clone();
    if (cover.actions().eta() - cfg.eta).abs() > 1e-12 {
        return Err(invalid_param("value class cover and eta disagree"));
    }
    let n_dec = class.decoders.len();
    let acts: Vec<Point> = cover.actions().centers().to_vec();
    let unif: SharedPolicy = Arc::new(UniformCoverPolicy::new(cover.actions()));
    let x1 = mdp.emit(1, &mdp.initial_state(&mut stream_rng(cfg.seed, streams::EVALUATE, 0)));

    let mut stats: Vec<LayerStats> = (1..=hz)
        .map(|h| {
            let next_tables = if h < hz { class.tables_on(h + 1) } else { 1 };
            let pairs = n_dec * class.tables_on(h) * next_tables;
            let heads = n_dec * class.tables_on(h);
            LayerStats { sums: vec![0.0; pairs * heads], next_tables }
        })
        .collect();
    let mut alive = vec![true; class.len()];
    let mut data: Vec<Vec<Transition>> = vec![Vec::new(); hz];
    let mut out = GolfOutcome {
        mixture: MixturePolicy { policies: vec![] },
        chosen: vec![],
        rounds: vec![],
        alive: vec![],
        beta,
        data: vec![],
    };

    for t in 1..=cfg.rounds {
        let n_alive = alive.iter().filter(|&&a| a).count();
        let (chosen, root_value) = optimistic(&class, &alive, &x1)?;
        let policy: SharedPolicy = Arc::new(MemberPolicy::new(class.clone(), chosen));
        for h in 1..=hz {
            let mut rng = stream_rng(cfg.seed, streams::GOLF, (t * (hz + 1) + h) as u64);
            let mixed = compose_policy(policy.clone(), h, unif.clone(), hz)?;
            let tr = rollout(mdp, mixed.as_ref(), &mut rng)?.transition(h);
            update(&class, &mut stats[h - 1], h, &tr, cfg, &acts)?;
            data[h - 1].push(tr);
        }
        for (m, keep) in alive.iter_mut().enumerate() {
            if *keep {
                let (d, idx) = class.unpack(m);
                *keep = (1..=hz).all(|h| {
                    let s = &stats[h - 1];
                    let j = if h < hz { idx[h] } else { 0 };
                    let heads = n_dec * class.tables_on(h);
                    let p = s.pair(d, class.tables_on(h), idx[h - 1], j);
                    s.sums[p * heads..(p + 1) * heads].iter().all(|&v| v <= beta)
                });
            }
        }
        if !alive.iter().any(|&a| a) {
            return Err(Error::EmptyVersionSpace { round: t });
        }
        let (value, stderr) = if cfg.eval_rollouts > 0 {
            let (v, s) = estimate_value(mdp, policy.as_ref(), cfg.eval_rollouts, cfg.seed, t as u64)?;
            (Some(v), Some(s))
        } else {
            (None, None)
        };
        out.rounds.push(GolfRound {
            round: t,
            alive: n_alive,
            chosen,
            survivor: track.map(|m| alive[m]),
            root_value,
            value,
            stderr,
        });
        out.chosen.push(chosen);
        out.mixture.policies.push(policy);
    }
    out.alive = alive;
    out.data = data;
    Ok(out)
}

/// Alive member with the largest greedy root value, lowest index on ties.
fn optimistic(class: &ValueClass, alive: &[bool], x1: &Observation) -> Result<(usize, f64)> {
    // Root values depend only on (decoder, layer-1 table).
    let n1 = class.tables_on(1);
    let mut root = vec![0.0; class.decoders.len() * n1];
    for d in 0..class.decoders.len() {
        for i in 0..n1 {
            root[d * n1 + i] = class.greedy(d, 1, i, x1)?.1;
        }
    }
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (m, _) in alive.iter().enumerate().filter(|(_, &a)| a) {
        let (d, idx) = class.unpack(m);
        let v = root[d * n1 + idx[0]];
        if v > best.1 {
            best = (m, v);
        }
    }
    Ok(best)
}

/// Adds one tuple's contribution to every `(pair, competitor)` running sum.
fn update(class: &ValueClass, s: &mut LayerStats, h: usize, tr: &Transition, cfg: &GolfConfig, acts: &[Point]) -> Result<()> {
    let n_dec = class.decoders.len();
    let nh = class.tables_on(h);
    let heads = n_dec * nh;
    let last = h == class.horizon();
    // Per decoder: the logged cell, all action cells at x, and the next-layer maxima.
    let mut cells = Vec::with_capacity(n_dec);
    let mut act_cells = Vec::with_capacity(n_dec);
    let mut next_max = Vec::with_capacity(n_dec);
    for d in 0..n_dec {
        cells.push(class.cell(d, h, &tr.x, &tr.a)?.0);
        act_cells.push(acts.iter().map(|a| class.cell(d, h, &tr.x, a).map(|c| c.0)).collect::<Result<Vec<_>>>()?);
        next_max.push(if last {
            vec![0.0]
        } else {
            (0..class.tables_on(h + 1)).map(|j| class.greedy(d, h + 1, j, &tr.x_next).map(|g| g.1)).collect::<Result<Vec<_>>>()?
        });
    }
    let value = |d: usize, i: usize| class.table(h, i)[cells[d]];
    let disagree = |df: usize, i: usize, dg: usize, k: usize| -> f64 {
        match cfg.filter {
            FilterMode::AtAction => (value(df, i) - value(dg, k)).abs(),
            FilterMode::SupOverActions => act_cells[df]
                .iter()
                .zip(&act_cells[dg])
                .map(|(&cf, &cg)| (class.table(h, i)[cf] - class.table(h, k)[cg]).abs())
                .fold(0.0, f64::max),
        }
    };
    // The filter only involves (f_h, g_h); precompute it once per head pair.
    let mut on = vec![false; heads * heads];
    for f in 0..heads {
        for g in 0..heads {
            on[f * heads + g] = disagree(f / nh, f % nh, g / nh, g % nh) >= cfg.kappa;
        }
    }
    for d in 0..n_dec {
        for i in 0..nh {
            let f_head = d * nh + i;
            let fv = value(d, i);
            for (j, &nm) in next_max[d].iter().enumerate() {
                let y = tr.r + nm;
                let base = s.pair(d, nh, i, j) * heads;
                let rf = (fv - y).powi(2);
                for g in 0..heads {
                    if on[f_head * heads + g] {
                        let gv = value(g / nh, g % nh);
                        s.sums[base + g] += rf - (gv - y).powi(2);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Per-round diagnostics as CSV with a schema column.
pub fn write_diagnostics_csv<W: Write>(rounds: &[GolfRound], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["schema", "round", "alive", "chosen", "survivor", "root_value", "value", "stderr"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.12e}"));
    for r in rounds {
        w.write_record([
            DIAGNOSTICS_SCHEMA.to_string(),
            r.round.to_string(),
            r.alive.to_string(),
            r.chosen.to_string(),
            r.survivor.map_or(String::new(), |b| b.to_string()),
            format!("{:.12e}", r.root_value),
            opt(r.value),
            opt(r.stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{point, MetricBox};
    use crate::env::chain::{chain_token, make_chain_mdp, tiny_chain_mirrored};
    use crate::rng::seeded;
    use rand::Rng;

    fn setup() -> (RichCldMdp, Arc<ValueClass>, usize) {
        let chain = tiny_chain_mirrored();
        let mdp = make_chain_mdp("tiny", chain.clone()).unwrap();
        let truth = Decoder::ground_truth(&mdp);
        let mirror = truth.then("mirror", |p| point(&[1.0 - p[0]]));
        let class = DecoderClass::new(vec![truth, mirror], Some(0), MetricBox::unit(1)).unwrap();
        let cover = Arc::new(JointCover::build(&mdp.state_box, 0.5, &mdp.action_box, 0.5).unwrap());
        let start = cover.states().disc(&chain.state_point(chain.start)).unwrap();
        let spec = ValueClassSpec {
            support: vec![(0..2).map(|a| cover.joint(start, CellId(a)).0).collect(), vec![]],
            ..Default::default()
        };
        let vc = Arc::new(ValueClass::build(&class, cover, 2, &spec).unwrap());
        let q = q_star(&chain);
        let (star, err) = vc.closest(0, &q).unwrap();
        assert_eq!(err, 0.0);
        (mdp, vc, star)
    }

    /// Q* of the chain on the joint cells; layer 1 only at the start cell.
    fn q_star(chain: &crate::env::chain::CellChain) -> Vec<Vec<f64>> {
        let f = chain.to_finite();
        let (v, _) = f.optimal();
        (0..2)
            .map(|h| {
                (0..4)
                    .map(|c| {
                        let (s, a) = (c / 2, c % 2);
                        if h == 0 && s != chain.start {
                            return 0.0;
                        }
                        let i = s * 2 + a;
                        f.reward[h][i] + f.transition[h][i].iter().zip(&v[h + 1]).map(|(p, x)| p * x).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn class_size_and_packing() {
        let (_, vc, _) = setup();
        assert_eq!(vc.tables_on(1), 9);
        assert_eq!(vc.tables_on(2), 81);
        assert_eq!(vc.len(), 1458);
        let mut rng = seeded(5);
        for _ in 0..100 {
            let m = rng.gen_range(0..vc.len());
            let (d, idx) = vc.unpack(m);
            assert_eq!(vc.pack(d, &idx), m);
        }
    }

    #[test]
    fn lipschitz_filter_drops_steep_tables() {
        let (_, vc, _) = setup();
        let cover = vc.cover().clone();
        // Slope 1 allows steps of 0.5 between neighbours at distance 0.5, and the
        // pinned zeros next door cap both free cells at 0.5.
        let gentle = grid_tables(&cover, &[CellId(0), CellId(1)], 0.5, 1.0);
        assert_eq!(gentle.len(), 4);
        assert!(gentle.iter().all(|t| t[0] <= 0.5 && t[1] <= 0.5));
    }

    #[test]
    fn loss_edge_cases_and_hand_example() {
        let x = chain_token(0);
        let data = vec![
            Transition { x, a: point(&[0.25]), r: 0.0, x_next: chain_token(1) },
            Transition { x, a: point(&[0.75]), r: 1.0, x_next: chain_token(0) },
            Transition { x, a: point(&[0.25]), r: 0.5, x_next: chain_token(0) },
        ];
        let f = |_: &Observation, a: &[f64]| if a[0] < 0.5 { 0.5 } else { 1.0 };
        let g = |_: &Observation, _: &[f64]| 0.5;
        let next = |x: &Observation| if *x == chain_token(1) { 0.25 } else { 0.0 };
        assert_eq!(dbr_loss(&data, f64::INFINITY, &f, &g, &next, None), 0.0);
        // Residuals 0.25, 0, 0.
        assert!((dbr_loss(&data, 0.0, &f, &f, &next, None) - 0.0625).abs() < 1e-15);
        // κ = 0.1: only the second tuple has |f − g| = 0.5; its residual is 0.
        assert_eq!(dbr_loss(&data, 0.1, &f, &g, &next, None), 0.0);
        // Sup filter sees the disagreement at the other action on every tuple.
        let acts = [point(&[0.25]), point(&[0.75])];
        assert!((dbr_loss(&data, 0.1, &f, &g, &next, Some(&acts)) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn running_sums_match_direct_losses() {
        let (mdp, vc, _) = setup();
        let cfg = GolfConfig { rounds: 30, beta: Some(f64::INFINITY), ..Default::default() };
        let out = golf_run(&mdp, vc.clone(), &cfg, None).unwrap();
        let acts: Vec<Point> = vc.cover().actions().centers().to_vec();
        let mut stats = LayerStats { sums: vec![0.0; 2 * 81 * 162], next_tables: 1 };
        for tr in &out.data[1] {
            update(&vc, &mut stats, 2, tr, &cfg, &acts).unwrap();
        }
        let mut rng = seeded(9);
        for _ in 0..50 {
            let (fd, fi) = (rng.gen_range(0..2), rng.gen_range(0..81));
            let (gd, gi) = (rng.gen_range(0..2), rng.gen_range(0..81));
            let head = |d: usize, i: usize| {
                let vc = vc.clone();
                move |x: &Observation, a: &[f64]| vc.table(2, i)[vc.cell(d, 2, x, a).unwrap().0]
            };
            let (f, g) = (head(fd, fi), head(gd, gi));
            let zero = |_: &Observation| 0.0;
            let direct = dbr_loss(&out.data[1], cfg.kappa, &f, &g, &zero, None)
                - dbr_loss(&out.data[1], cfg.kappa, &g, &f, &zero, None);
            let kept = stats.sums[stats.pair(fd, 81, fi, 0) * 162 + gd * 81 + gi];
            assert!((direct - kept).abs() < 1e-9, "{direct} vs {kept}");
        }
    }

    #[test]
    fn infinite_radius_keeps_everything_and_repeats_the_policy() {
        let (mdp, vc, _) = setup();
        let cfg = GolfConfig { rounds: 10, beta: Some(f64::INFINITY), ..Default::default() };
        let out = golf_run(&mdp, vc.clone(), &cfg, None).unwrap();
        assert!(out.alive.iter().all(|&a| a));
        assert!(out.chosen.iter().all(|&m| m == out.chosen[0]));
        assert_eq!(out.rounds[0].root_value, 1.0);
    }

    #[test]
    fn version_space_shrinks_monotonically_and_keeps_the_truth() {
        let (mdp, vc, star) = setup();
        let cfg = GolfConfig { rounds: 60, seed: 3, ..Default::default() };
        let out = golf_run(&mdp, vc, &cfg, Some(star)).unwrap();
        assert!(out.rounds.windows(2).all(|w| w[1].alive <= w[0].alive));
        assert!(out.rounds.iter().all(|r| r.survivor == Some(true)));
        assert!(out.rounds.last().unwrap().alive < 1458);
    }

    #[test]
    fn tiny_radius_empties_the_version_space() {
        let (mdp, vc, _) = setup();
        let cfg = GolfConfig { rounds: 50, beta: Some(-1.0), ..Default::default() };
        assert!(matches!(golf_run(&mdp, vc, &cfg, None), Err(Error::EmptyVersionSpace { round: 1 })));
    }

    #[test]
    fn diagnostics_csv_has_schema_column() {
        let (mdp, vc, star) = setup();
        let cfg = GolfConfig { rounds: 3, eval_rollouts: 4, ..Default::default() };
        let out = golf_run(&mdp, vc, &cfg, Some(star)).unwrap();
        let mut buf = Vec::new();
        write_diagnostics_csv(&out.rounds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("golf-v1,1,1458,"));
    }
}
