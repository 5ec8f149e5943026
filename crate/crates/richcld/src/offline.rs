//! Offline approximate dynamic programming on learned decoders, a Monte-Carlo
//! estimator of the Bellman transfer coefficient, and the fixed-width record
//! format for offline datasets.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::bcrl::{RewardFn, Transition, TransitionDataset};
use crate::cover::{point, JointCover, Point};
use crate::decoder::Decoder;
use crate::env::{rollout, Dynamics, Emission, Observation, Policy, RichCldMdp};
use crate::error::{invalid_input, invalid_param, Result};
use crate::lipschitz::FitOptions;
use crate::pseudobackup::{continuous_pseudobackup, layer_q_values, zero_bonus, OptLayer, ValueTable};
use crate::rng::{stream_rng, streams, SimRng};

pub const EVALUATION_SCHEMA: &str = "offline-eval-v1";
const RECORD_MAGIC: &str = "# richcld-offline-v1";

/// One dataset and one decoder per layer.
#[derive(Clone, Debug)]
pub struct OfflineBundle {
    datasets: Vec<TransitionDataset>,
    decoders: Vec<Decoder>,
}

impl OfflineBundle {
    pub fn new(datasets: Vec<TransitionDataset>, decoders: Vec<Decoder>) -> Result<Self> {
        if datasets.is_empty() || datasets.len() != decoders.len() {
            return Err(invalid_input("need one dataset and one decoder per layer"));
        }
        for (i, d) in datasets.iter().enumerate() {
            if d.layer != i + 1 {
                return Err(invalid_input(format!("dataset {i} holds layer {}, expected {}", d.layer, i + 1)));
            }
        }
        Ok(Self { datasets, decoders })
    }

    pub fn horizon(&self) -> usize {
        self.datasets.len()
    }

    pub fn datasets(&self) -> &[TransitionDataset] {
        &self.datasets
    }

    pub fn decoders(&self) -> &[Decoder] {
        &self.decoders
    }
}

/// Backward recursion `f_h = R_h + P̃[f^π_{h+1}]` with Lipschitz-head
/// pseudobackups and greedy `π_h` over the action cover; `f_{H+1} = 0`.
pub fn adp(bundle: &OfflineBundle, reward: RewardFn, cover: &Arc<JointCover>, head: FitOptions) -> Result<ValueTable> {
    let hz = bundle.horizon();
    if let Some(d) = bundle.datasets.iter().find(|d| d.is_empty()) {
        return Err(invalid_input(format!("offline dataset for layer {} is empty", d.layer)));
    }
    let actions = cover.actions().centers().to_vec();
    let mut layers: Vec<OptLayer> = Vec::with_capacity(hz);
    for h in (1..=hz).rev() {
        let data = &bundle.datasets[h - 1];
        let targets: Vec<f64> = match layers.last() {
            None => vec![0.0; data.len()],
            Some(next) => data
                .tuples
                .iter()
                .map(|t| {
                    let q = layer_q_values(next, &reward, &actions, h + 1, &t.x_next)?;
                    Ok(q.into_iter().fold(f64::NEG_INFINITY, f64::max))
                })
                .collect::<Result<_>>()?,
        };
        let q = continuous_pseudobackup(data, &bundle.decoders[h - 1], cover, &targets, head)?;
        layers.push(OptLayer { q, bonus: zero_bonus() });
    }
    layers.reverse();
    Ok(ValueTable { layers, reward, actions })
}

/// How true conditional expectations `E[v(x') | x, a]` are computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BackupOracle {
    /// Exact sums over the next-state law; finite chains and the 1-d pixel drift toy.
    Exact,
    MonteCarlo { samples: usize },
}

/// `E[v(x_{h+1}) | x_h = x, a_h = a]` by simulation access to the latent state.
pub fn expected_next(
    mdp: &RichCldMdp,
    h: usize,
    x: &Observation,
    a: &[f64],
    v: &dyn Fn(&Observation) -> f64,
    oracle: BackupOracle,
    rng: &mut SimRng,
) -> Result<f64> {
    let s = mdp.true_decode(h, x);
    match oracle {
        BackupOracle::Exact => match (&mdp.dynamics, &mdp.emission) {
            (Dynamics::Chain(c), _) => {
                let row = &c.kernel[(h - 1).min(c.horizon() - 1)][c.state_of(&s)][c.action_of(a)];
                Ok(row
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(j, p)| p * v(&mdp.emit(h + 1, &c.state_point(j))))
                    .sum())
            }
            (Dynamics::Drift(d), Emission::Pixel { width }) if mdp.state_box.dims() == 1 => Ok(d
                .pixel_distribution(s[0], a[0], *width)
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(j, p)| p * v(&Observation::Pixel { width: *width, dims: 1, index: j as u32 }))
                .sum()),
            _ => Err(invalid_param("exact backups need a finite chain or the 1-d pixel drift toy")),
        },
        BackupOracle::MonteCarlo { samples } => {
            if samples == 0 {
                return Err(invalid_param("Monte-Carlo backups need at least one sample"));
            }
            let total: f64 = (0..samples).map(|_| v(&mdp.emit(h + 1, &mdp.step(h, &s, a, rng)))).sum();
            Ok(total / samples as f64)
        }
    }
}

/// A candidate Q function `(layer, x, a) -> value`.
pub type QFn = Arc<dyn Fn(usize, &Observation, &[f64]) -> f64 + Send + Sync>;

fn max_over(f: &QFn, h: usize, x: &Observation, actions: &[Point]) -> f64 {
    actions.iter().map(|a| f(h, x, a)).fold(f64::NEG_INFINITY, f64::max)
}

/// `f_h(x, a) − R_h(x, a) − E[max_{a'} f_{h+1}(x', a')]`, with the maximum over
/// `actions` and `f_{H+1} = 0`.
pub fn bellman_residual(
    mdp: &RichCldMdp,
    f: &QFn,
    actions: &[Point],
    h: usize,
    x: &Observation,
    a: &[f64],
    oracle: BackupOracle,
    rng: &mut SimRng,
) -> Result<f64> {
    let s = mdp.true_decode(h, x);
    let tail = if h == mdp.horizon {
        0.0
    } else {
        expected_next(mdp, h, x, a, &|x2| max_over(f, h + 1, x2, actions), oracle, rng)?
    };
    Ok(f(h, x, a) - mdp.reward(h, &s, a) - tail)
}

/// Per-layer weighted `(x, a)` samples standing for a distribution.
pub type Weighted = Vec<Vec<(Observation, Point, f64)>>;

/// `ρ_h` as the empirical law of each dataset's inputs.
pub fn empirical(datasets: &[TransitionDataset]) -> Weighted {
    datasets
        .iter()
        .map(|d| {
            let w = 1.0 / d.len().max(1) as f64;
            d.tuples.iter().map(|t| (t.x, t.a.clone(), w)).collect()
        })
        .collect()
}

/// Empirical `d^π_h` from `m` rollouts.
pub fn occupancy_samples(mdp: &RichCldMdp, policy: &dyn Policy, m: usize, rng: &mut SimRng) -> Result<Weighted> {
    let mut out: Weighted = vec![Vec::with_capacity(m); mdp.horizon];
    for _ in 0..m {
        let tr = rollout(mdp, policy, rng)?;
        for (h, step) in tr.steps.iter().enumerate() {
            out[h].push((step.obs, step.action.clone(), 1.0 / m as f64));
        }
    }
    Ok(out)
}

/// `Σ_h E_on|e_h| / Σ_h sqrt(E_ρ e_h²)` for a residual function `e`; `None`
/// when the denominator vanishes.
pub fn transfer_ratio(residual: &dyn Fn(usize, &Observation, &[f64]) -> Result<f64>, on_policy: &Weighted, rho: &Weighted) -> Result<Option<f64>> {
    let mut num = 0.0;
    for (h, layer) in on_policy.iter().enumerate() {
        for (x, a, w) in layer {
            num += w * residual(h + 1, x, a)?.abs();
        }
    }
    let mut den = 0.0;
    for (h, layer) in rho.iter().enumerate() {
        let mut sq = 0.0;
        for (x, a, w) in layer {
            sq += w * residual(h + 1, x, a)?.powi(2);
        }
        den += sq.sqrt();
    }
    Ok(if den > 1e-15 { Some(num / den) } else { None })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferEstimate {
    /// Largest ratio over the evaluated pairs; a lower bound on the coefficient
    /// of the full class, and only an estimate of that.
    pub ratio: f64,
    /// `(f, g)` indices attaining it.
    pub argmax: Option<(usize, usize)>,
    /// Pairs dropped for a zero denominator.
    pub skipped: usize,
}

/// Greedy policy of a candidate over `actions`, lowest index on ties.
pub struct QGreedy {
    pub f: QFn,
    pub actions: Vec<Point>,
}

impl Policy for QGreedy {
    fn act(&self, h: usize, x: &Observation, _rng: &mut SimRng) -> Point {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, a) in self.actions.iter().enumerate() {
            let v = (self.f)(h, x, a);
            if v > best.1 {
                best = (i, v);
            }
        }
        self.actions[best.0].clone()
    }
}

/// Max over pairs `(f, g)` of sampled candidates of the transfer ratio, with the
/// numerator occupancy of `π_g` estimated from `rollouts` episodes.
pub fn estimate_transfer_coeff(
    mdp: &RichCldMdp,
    rho: &[TransitionDataset],
    fclass: &[QFn],
    actions: &[Point],
    rollouts: usize,
    oracle: BackupOracle,
    seed: u64,
) -> Result<TransferEstimate> {
    if fclass.is_empty() || rho.len() != mdp.horizon || rollouts == 0 {
        return Err(invalid_param("need candidates, one dataset per layer and at least one rollout"));
    }
    let rho = empirical(rho);
    let occupancies = fclass
        .par_iter()
        .enumerate()
        .map(|(gi, g)| {
            let pi = QGreedy { f: g.clone(), actions: actions.to_vec() };
            occupancy_samples(mdp, &pi, rollouts, &mut stream_rng(seed, streams::OFFLINE, gi as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios = fclass
        .par_iter()
        .enumerate()
        .map(|(fi, f)| {
            // Monte-Carlo backups draw from a per-candidate stream so pairs stay reproducible.
            let residual = |h: usize, x: &Observation, a: &[f64]| {
                let mut rng = stream_rng(seed, streams::OFFLINE, (1 << 32) + fi as u64);
                bellman_residual(mdp, f, actions, h, x, a, oracle, &mut rng)
            };
            occupancies.iter().map(|on| transfer_ratio(&residual, on, &rho)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut est = TransferEstimate { ratio: 0.0, argmax: None, skipped: 0 };
    for (fi, row) in ratios.iter().enumerate() {
        for (gi, r) in row.iter().enumerate() {
            match r {
                None => est.skipped += 1,
                Some(r) if est.argmax.is_none() || *r > est.ratio => {
                    est.ratio = *r;
                    est.argmax = Some((fi, gi));
                }
                Some(_) => {}
            }
        }
    }
    Ok(est)
}

/// One step of an offline dataset with its latent state.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineRecord {
    pub h: usize,
    pub s: Point,
    pub a: Point,
    pub r: f64,
    pub obs: Observation,
    pub next_obs: Observation,
}

const H_WIDTH: usize = 4;
const NUM_WIDTH: usize = 25;
const REF_WIDTH: usize = 25;

/// Writes records as fixed-width text. After a header line naming the format
/// and the state and action dimensions, each line holds: layer (4 columns),
/// then each state coordinate, action coordinate and the reward (25 columns
/// each, right aligned, `{:.16e}`), then the observation and next-observation
/// references (25 columns each, right aligned).
pub fn write_records<W: Write>(records: &[OfflineRecord], dim_s: usize, dim_a: usize, mut out: W) -> Result<()> {
    writeln!(out, "{RECORD_MAGIC} dim_s={dim_s} dim_a={dim_a}")?;
    for rec in records {
        if rec.s.len() != dim_s || rec.a.len() != dim_a {
            return Err(invalid_input("record dimensions disagree with the header"));
        }
        let mut line = format!("{:>H_WIDTH$}", rec.h);
        for v in rec.s.iter().chain(rec.a.iter()).chain(std::iter::once(&rec.r)) {
            line.push_str(&format!("{v:>NUM_WIDTH$.16e}"));
        }
        for o in [&rec.obs, &rec.next_obs] {
            let r = o.reference();
            if r.len() >= REF_WIDTH {
                return Err(invalid_input(format!("observation reference `{r}` is too long")));
            }
            line.push_str(&format!("{r:>REF_WIDTH$}"));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<(usize, usize, Vec<OfflineRecord>)> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| invalid_input("empty record file"))??;
    let rest = header.strip_prefix(RECORD_MAGIC).ok_or_else(|| invalid_input("missing record header"))?;
    let dim = |key: &str| -> Result<usize> {
        rest.split_whitespace()
            .find_map(|kv| kv.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| invalid_input(format!("header lacks {key}")))
    };
    let (dim_s, dim_a) = (dim("dim_s=")?, dim("dim_a=")?);
    let nums = dim_s + dim_a + 1;
    let expected = H_WIDTH + nums * NUM_WIDTH + 2 * REF_WIDTH;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| invalid_input(format!("record line {}: {what}", i + 2));
        if line.len() != expected || !line.is_ascii() {
            return Err(bad("wrong width"));
        }
        let field = |k: usize, w: usize| line[k..k + w].trim();
        let h = field(0, H_WIDTH).parse().map_err(|_| bad("layer"))?;
        let mut vals = Vec::with_capacity(nums);
        for j in 0..nums {
            vals.push(field(H_WIDTH + j * NUM_WIDTH, NUM_WIDTH).parse::<f64>().map_err(|_| bad("number"))?);
        }
        let refs = H_WIDTH + nums * NUM_WIDTH;
        out.push(OfflineRecord {
            h,
            s: point(&vals[..dim_s]),
            a: point(&vals[dim_s..dim_s + dim_a]),
            r: vals[nums - 1],
            obs: Observation::parse_reference(field(refs, REF_WIDTH))?,
            next_obs: Observation::parse_reference(field(refs + REF_WIDTH, REF_WIDTH))?,
        });
    }
    Ok((dim_s, dim_a, out))
}

/// Offline datasets from the exploratory distribution (uniform latent state
/// and action), with their records.
pub fn exploratory_records(mdp: &RichCldMdp, per_layer: usize, seed: u64) -> Vec<OfflineRecord> {
    let mut out = Vec::with_capacity(per_layer * mdp.horizon);
    for h in 1..=mdp.horizon {
        let mut rng = stream_rng(seed, streams::OFFLINE, h as u64);
        for _ in 0..per_layer {
            let s = mdp.state_box.sample_uniform(&mut rng);
            let a = mdp.action_box.sample_uniform(&mut rng);
            let next = mdp.step(h, &s, &a, &mut rng);
            out.push(OfflineRecord {
                h,
                obs: mdp.emit(h, &s),
                next_obs: mdp.emit(h + 1, &next),
                r: mdp.reward(h, &s, &a),
                s,
                a,
            });
        }
    }
    out
}

/// Groups records into per-layer datasets for layers `1..=horizon`.
pub fn datasets_from_records(records: &[OfflineRecord], horizon: usize) -> Result<Vec<TransitionDataset>> {
    let mut out: Vec<TransitionDataset> = (1..=horizon).map(TransitionDataset::new).collect();
    for r in records {
        if r.h == 0 || r.h > horizon {
            return Err(invalid_input(format!("record layer {} outside 1..={horizon}", r.h)));
        }
        out[r.h - 1].push(Transition { x: r.obs, a: r.a.clone(), r: r.r, x_next: r.next_obs });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEvaluation {
    pub label: String,
    pub samples_per_layer: usize,
    pub value: f64,
    pub stderr: f64,
    pub optimal: Option<f64>,
}

pub fn write_evaluation_csv<W: Write>(rows: &[PolicyEvaluation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["schema", "policy", "samples_per_layer", "value", "stderr", "optimal", "gap"])?;
    for r in rows {
        let opt = r.optimal.map_or(String::new(), |v| format!("{v:.12e}"));
        let gap = r.optimal.map_or(String::new(), |v| format!("{:.12e}", v - r.value));
        w.write_record([
            EVALUATION_SCHEMA.to_string(),
            r.label.clone(),
            r.samples_per_layer.to_string(),
            format!("{:.12e}", r.value),
            format!("{:.12e}", r.stderr),
            opt,
            gap,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::MetricBox;
    use crate::env::chain::{chain_token, make_chain_mdp, tiny_chain, CellChain};
    use crate::pseudobackup::GreedyPolicy;
    use crate::rng::seeded;

    fn chain_setup(c: CellChain) -> (RichCldMdp, Arc<JointCover>, RewardFn) {
        let mdp = make_chain_mdp("chain", c).unwrap();
        let cover = Arc::new(JointCover::build(&MetricBox::unit(1), 0.5, &MetricBox::unit(1), 0.5).unwrap());
        let m = mdp.clone();
        let reward: RewardFn = Arc::new(move |h, x, a| m.observed_reward(h, x, a));
        (mdp, cover, reward)
    }

    fn bundle(mdp: &RichCldMdp, n: usize, seed: u64) -> OfflineBundle {
        let recs = exploratory_records(mdp, n, seed);
        let data = datasets_from_records(&recs, mdp.horizon).unwrap();
        OfflineBundle::new(data, vec![Decoder::ground_truth(mdp); mdp.horizon]).unwrap()
    }

    #[test]
    fn exhaustive_data_recovers_the_optimal_policy() {
        let chain = tiny_chain();
        let (mdp, cover, reward) = chain_setup(chain.clone());
        let table = adp(&bundle(&mdp, 2000, 1), reward, &cover, FitOptions::new(1.0).with_slope(2.0)).unwrap();
        let pi = chain.policy_table(&GreedyPolicy(Arc::new(table)));
        let f = chain.to_finite();
        assert_eq!(f.value(&pi), f.optimal_value());
    }

    #[test]
    fn zero_reward_gives_zero_values() {
        let mut chain = tiny_chain();
        chain.rewards = vec![vec![vec![0.0; 2]; 2]; 2];
        let (mdp, cover, reward) = chain_setup(chain);
        let table = adp(&bundle(&mdp, 50, 2), reward, &cover, FitOptions::new(1.0)).unwrap();
        for h in 1..=2 {
            for s in 0..2 {
                assert_eq!(table.value(h, &chain_token(s)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn empty_layer_is_rejected() {
        let (mdp, cover, reward) = chain_setup(tiny_chain());
        let mut b = bundle(&mdp, 10, 3);
        b.datasets[1].tuples.clear();
        assert!(adp(&b, reward, &cover, FitOptions::new(1.0)).is_err());
    }

    fn q_star_fn(chain: &CellChain) -> QFn {
        let f = chain.to_finite();
        let (v, _) = f.optimal();
        let c = chain.clone();
        Arc::new(move |h, x, a| {
            let Observation::Token(s) = *x else { return 0.0 };
            let i = s as usize * f.actions + c.action_of(a);
            f.reward[h - 1][i] + f.transition[h - 1][i].iter().zip(&v[h]).map(|(p, w)| p * w).sum::<f64>()
        })
    }

    #[test]
    fn optimal_q_has_zero_residual_and_is_skipped() {
        let chain = tiny_chain();
        let (mdp, cover, _) = chain_setup(chain.clone());
        let acts = cover.actions().centers().to_vec();
        let q = q_star_fn(&chain);
        let mut rng = seeded(0);
        for h in 1..=2 {
            for s in 0..2 {
                for a in &acts {
                    let e = bellman_residual(&mdp, &q, &acts, h, &chain_token(s), a, BackupOracle::Exact, &mut rng).unwrap();
                    assert!(e.abs() < 1e-15);
                }
            }
        }
        let b = bundle(&mdp, 20, 4);
        let est = estimate_transfer_coeff(&mdp, b.datasets(), &[q], &acts, 10, BackupOracle::Exact, 0).unwrap();
        assert_eq!((est.skipped, est.argmax), (1, None));
    }

    #[test]
    fn on_policy_ratio_is_at_most_one() {
        let chain = tiny_chain();
        let (mdp, cover, _) = chain_setup(chain.clone());
        let acts = cover.actions().centers().to_vec();
        let f: QFn = Arc::new(|h, x, a| {
            let Observation::Token(s) = *x else { return 0.0 };
            0.1 * h as f64 + 0.3 * s as f64 + 0.2 * a[0]
        });
        // Exact occupancy of the greedy policy of f, used as both numerator and ρ.
        let pi = QGreedy { f: f.clone(), actions: acts.clone() };
        let table = chain.policy_table(&pi);
        let occ = chain.to_finite().occupancy(&table);
        let exact: Weighted = occ
            .iter()
            .enumerate()
            .map(|(h, d)| d.iter().enumerate().map(|(s, &w)| (chain_token(s), chain.action_point(table[h][s]), w)).collect())
            .collect();
        let residual = |h: usize, x: &Observation, a: &[f64]| bellman_residual(&mdp, &f, &acts, h, x, a, BackupOracle::Exact, &mut seeded(0));
        let ratio = transfer_ratio(&residual, &exact, &exact).unwrap().unwrap();
        assert!(ratio <= 1.0 + 1e-12, "{ratio}");
    }

    #[test]
    fn off_policy_mass_inflates_the_ratio() {
        // A candidate wrong only at (start, second action), visited by its own
        // greedy policy, while ρ puts 1% there: numerator 0.5 at layer 1,
        // denominator sqrt(0.01 · 0.25) = 0.05.
        let chain = tiny_chain();
        let (mdp, cover, _) = chain_setup(chain.clone());
        let acts = cover.actions().centers().to_vec();
        let q = q_star_fn(&chain);
        let f: QFn = Arc::new(move |h, x, a| if h == 1 && *x == chain_token(0) && a[0] > 0.5 { q(h, x, a) + 0.5 } else { q(h, x, a) });
        let on: Weighted = vec![vec![(chain_token(0), acts[1].clone(), 1.0)], vec![]];
        let rho: Weighted = vec![vec![(chain_token(0), acts[1].clone(), 0.01), (chain_token(0), acts[0].clone(), 0.99)], vec![]];
        let residual = |h: usize, x: &Observation, a: &[f64]| bellman_residual(&mdp, &f, &acts, h, x, a, BackupOracle::Exact, &mut seeded(0));
        let ratio = transfer_ratio(&residual, &on, &rho).unwrap().unwrap();
        assert!((ratio - 10.0).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn records_roundtrip() {
        let (mdp, _, _) = chain_setup(tiny_chain());
        let recs = exploratory_records(&mdp, 5, 7);
        let mut buf = Vec::new();
        write_records(&recs, 1, 1, &mut buf).unwrap();
        let (ds, da, back) = read_records(buf.as_slice()).unwrap();
        assert_eq!((ds, da), (1, 1));
        assert_eq!(back, recs);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().skip(1).all(|l| l.len() == 4 + 3 * 25 + 50));
        let mut broken = text.clone();
        broken.push_str("   1 garbage\n");
        assert!(read_records(broken.as_bytes()).is_err());
    }

    #[test]
    fn evaluation_csv_columns() {
        let rows = [PolicyEvaluation { label: "adp".into(), samples_per_layer: 10, value: 0.5, stderr: 0.0, optimal: Some(0.5) }];
        let mut buf = Vec::new();
        write_evaluation_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "offline-eval-v1,adp,10,5.000000000000e-1,0.000000000000e0,5.000000000000e-1,0.000000000000e0");
    }
}
