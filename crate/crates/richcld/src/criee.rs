//! The online loop: per iteration, gather one tuple per layer from each of two
//! roll-in variants, relearn decoders, rebuild count bonuses and plan
//! optimistically. The output is the uniform mixture of the per-iteration
//! greedy policies.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcrl::{
    bcrl_select_multi, build_discriminators, iter_bcrl, pool_generator, BcrlReport, Discriminator, DiscriminatorSpec,
    IterConfig, RewardFn, Transition, TransitionDataset,
};
use crate::cover::JointCover;
use crate::decoder::{Decoder, DecoderClass};
use crate::env::{compose_policy, rollout, Observation, Policy, RichCldMdp, SharedPolicy, UniformCoverPolicy};
use crate::error::{invalid_param, Error, Result};
use crate::lipschitz::FitOptions;
use crate::pseudobackup::{optdp, BonusFn, GreedyPolicy, ValueTable};
use crate::rng::{stream_rng, streams, SimRng};

pub const METRICS_SCHEMA: &str = "criee-v1";

/// Exponents of the theoretical schedules for latent dimensions `dim_s`, `dim_a`.
pub fn schedule_exponents(dim_s: usize, dim_a: usize) -> (f64, f64) {
    let (sa, a) = ((dim_s + dim_a) as f64, dim_a as f64);
    let tilde = 3.0 * sa * sa + 4.0 * sa * a + 5.0 * sa + 4.0 * a + 1.0;
    let bar = 1.5 * sa * sa + 2.0 * sa * a + sa + a;
    (tilde, bar)
}

/// Leading constants and confidence level of the bonus schedules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConstants {
    pub lambda: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        Self { lambda: 1.0, alpha: 1.0, delta: 0.1 }
    }
}

/// `(λ_t, α_t)` at iteration `t`.
pub fn schedules(t: usize, dim_s: usize, dim_a: usize, class_size: usize, c: ScheduleConstants) -> Result<(f64, f64)> {
    if t == 0 {
        return Err(invalid_param("schedules start at t = 1"));
    }
    if !(c.delta > 0.0 && c.delta < 1.0) || c.lambda <= 0.0 || c.alpha < 0.0 {
        return Err(invalid_param("need delta in (0, 1), lambda constant > 0, alpha constant >= 0"));
    }
    let (tilde, bar) = schedule_exponents(dim_s, dim_a);
    let t = t as f64;
    let log = (t * class_size as f64 / c.delta).ln();
    let sa = (dim_s + dim_a) as f64;
    Ok((c.lambda * t.powf(sa / (tilde + 2.0)) * log, c.alpha * t.powf(bar / tilde) * log))
}

/// `min(α / sqrt(N + λ), 2)` with `N` the visits of `d1` to the query's cell
/// under `phi`.
pub fn count_bonus(
    phi: &Decoder,
    d1: &TransitionDataset,
    lambda: f64,
    alpha: f64,
    cover: &Arc<JointCover>,
) -> Result<BonusFn> {
    if lambda <= 0.0 || alpha < 0.0 {
        return Err(invalid_param("bonus needs lambda > 0 and alpha >= 0"));
    }
    let mut counts = vec![0usize; cover.d_eta()];
    for c in d1.cells(cover, phi)? {
        counts[c] += 1;
    }
    let (phi, cover, h) = (phi.clone(), cover.clone(), d1.layer);
    Ok(Arc::new(move |x: &Observation, a: &[f64]| {
        let n = cover.disc(&phi.decode(h, x), a).map_or(0, |c| counts[c.0]);
        (alpha / (n as f64 + lambda).sqrt()).min(2.0)
    }))
}

/// One layer-`h` tuple from each of `π ∘_h unif` and `π ∘_{max(h-1,1)} unif`.
pub fn collect(
    mdp: &RichCldMdp,
    pi_prev: &SharedPolicy,
    unif: &SharedPolicy,
    h: usize,
    rng: &mut SimRng,
) -> Result<(Transition, Transition)> {
    if h == 0 || h > mdp.horizon {
        return Err(Error::LayerOutOfRange { h, max: mdp.horizon });
    }
    let first = compose_policy(pi_prev.clone(), h, unif.clone(), mdp.horizon)?;
    let second = compose_policy(pi_prev.clone(), (h - 1).max(1), unif.clone(), mdp.horizon)?;
    let t1 = rollout(mdp, first.as_ref(), rng)?.transition(h);
    let t2 = rollout(mdp, second.as_ref(), rng)?.transition(h);
    Ok((t1, t2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RepMode {
    /// Exact selection against a fresh discriminator sample of the given size.
    Exact { budget: usize },
    /// Iterative selection drawing from a sample of the given size.
    Iterative { budget: usize, iterations: usize, candidates: usize, beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrieeConfig {
    pub iterations: usize,
    pub eta: f64,
    pub schedule: ScheduleConstants,
    pub rep: RepMode,
    /// Lipschitz-of-decoder discriminators per decoder.
    pub lip_per_decoder: usize,
    /// One decoder for every layer.
    pub share_decoder: bool,
    /// Range bound of the sampled discriminators.
    pub disc_bound: f64,
    /// Lipschitz constant of the regression heads.
    pub head_slope: f64,
    /// Rollouts per iteration used to estimate J(π^t).
    pub eval_rollouts: usize,
    /// J(π*) when known; otherwise regret is measured against 1.
    pub reference_value: Option<f64>,
    pub seed: u64,
}

impl Default for CrieeConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            eta: 0.1,
            schedule: ScheduleConstants::default(),
            rep: RepMode::Exact { budget: 12 },
            lip_per_decoder: 1,
            share_decoder: true,
            disc_bound: 2.0,
            head_slope: 1.0,
            eval_rollouts: 20,
            reference_value: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationMetrics {
    pub t: usize,
    /// Chosen decoder label per layer.
    pub labels: Vec<String>,
    /// Largest worst-case debiased objective over layers.
    pub worst_debiased: f64,
    pub mean_bonus: f64,
    /// Optimistic root value of the planner.
    pub root_value: f64,
    pub value: f64,
    pub stderr: f64,
    pub cumulative_regret: f64,
}

/// Uniform mixture over per-iteration policies, drawn once per episode.
#[derive(Clone)]
pub struct MixturePolicy {
    pub policies: Vec<SharedPolicy>,
}

impl MixturePolicy {
    pub fn episode_policy(&self, rng: &mut SimRng) -> &SharedPolicy {
        &self.policies[rng.gen_range(0..self.policies.len())]
    }
}

/// Mean return and its standard error over `m` seeded rollouts.
pub fn estimate_value(mdp: &RichCldMdp, policy: &dyn Policy, m: usize, seed: u64, index: u64) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(invalid_param("need at least one evaluation rollout"));
    }
    let returns = (0..m)
        .map(|k| {
            let mut rng = stream_rng(seed, streams::EVALUATE, index.wrapping_mul(1 << 20) + k as u64);
            Ok(rollout(mdp, policy, &mut rng)?.total_reward())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_stderr(&returns))
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Empirical value of the mixture: each episode draws its own member.
pub fn estimate_mixture_value(mdp: &RichCldMdp, mixture: &MixturePolicy, m: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = stream_rng(seed, streams::MIXTURE, 0);
    let mut returns = Vec::with_capacity(m);
    for _ in 0..m {
        let pi = mixture.episode_policy(&mut rng).clone();
        returns.push(rollout(mdp, pi.as_ref(), &mut rng)?.total_reward());
    }
    Ok(mean_and_stderr(&returns))
}

pub struct CrieeOutcome {
    pub mixture: MixturePolicy,
    pub tables: Vec<Arc<ValueTable>>,
    pub metrics: Vec<IterationMetrics>,
    /// Per layer: the first-variant, second-variant and union datasets.
    pub d1: Vec<TransitionDataset>,
    pub d2: Vec<TransitionDataset>,
    pub data: Vec<TransitionDataset>,
}

/// Decoder, bonus and table for one iteration given the datasets so far.
struct Plan {
    labels: Vec<String>,
    worst: f64,
    bonuses: Vec<BonusFn>,
    table: ValueTable,
}

pub fn criee_run(mdp: &RichCldMdp, class: &DecoderClass, cfg: &CrieeConfig) -> Result<CrieeOutcome> {
    if cfg.iterations == 0 || !(cfg.eta > 0.0 && cfg.eta <= 1.0) || cfg.eval_rollouts == 0 {
        return Err(invalid_param("need iterations >= 1, eta in (0, 1] and eval_rollouts >= 1"));
    }
    let hz = mdp.horizon;
    let cover = Arc::new(JointCover::build(&mdp.state_box, cfg.eta, &mdp.action_box, cfg.eta)?);
    let state_cover = Arc::new(JointCover::state_only(&mdp.state_box, cfg.eta, &mdp.action_box)?);
    let unif: SharedPolicy = Arc::new(UniformCoverPolicy::new(cover.actions()));
    let reward: RewardFn = {
        let m = mdp.clone();
        Arc::new(move |h, x, a| m.observed_reward(h, x, a))
    };
    let spec = DiscriminatorSpec {
        cover: cover.clone(),
        state_cover,
        horizon: hz,
        reward: reward.clone(),
        bound: cfg.disc_bound,
        weight_bound: 2.0,
        lip_per_decoder: cfg.lip_per_decoder,
    };
    let mut d1: Vec<TransitionDataset> = (1..=hz).map(TransitionDataset::new).collect();
    let mut d2 = d1.clone();
    let mut data = d1.clone();
    let mut pi_prev = unif.clone();
    let mut out = CrieeOutcome { mixture: MixturePolicy { policies: vec![] }, tables: vec![], metrics: vec![], d1: vec![], d2: vec![], data: vec![] };
    let reference = cfg.reference_value.unwrap_or(1.0);
    let mut regret = 0.0;
    for t in 1..=cfg.iterations {
        let wrap = |e: Error| Error::Iteration { iteration: t, source: Box::new(e) };
        let pairs = (1..=hz)
            .into_par_iter()
            .map(|h| {
                let mut rng = stream_rng(cfg.seed, streams::COLLECT, (t * (hz + 1) + h) as u64);
                collect(mdp, &pi_prev, &unif, h, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(wrap)?;
        for (h, (a, b)) in pairs.into_iter().enumerate() {
            d1[h].push(a.clone());
            d2[h].push(b.clone());
            data[h].push(a);
            data[h].push(b);
        }
        let plan = plan_iteration(mdp, class, cfg, t, &cover, &spec, &d1, &data, reward.clone()).map_err(wrap)?;
        let x1 = mdp.emit(1, &mdp.initial_state(&mut stream_rng(cfg.seed, streams::EVALUATE, 0)));
        let root_value = plan.table.value(1, &x1).map_err(wrap)?;
        let table = Arc::new(plan.table);
        let policy: SharedPolicy = Arc::new(GreedyPolicy(table.clone()));
        let (value, stderr) = estimate_value(mdp, policy.as_ref(), cfg.eval_rollouts, cfg.seed, t as u64).map_err(wrap)?;
        let mut bonus_sum = 0.0;
        let mut bonus_n = 0usize;
        for (h, d) in d1.iter().enumerate() {
            for tup in &d.tuples {
                bonus_sum += (plan.bonuses[h])(&tup.x, &tup.a);
                bonus_n += 1;
            }
        }
        regret += reference - value;
        out.metrics.push(IterationMetrics {
            t,
            labels: plan.labels,
            worst_debiased: plan.worst,
            mean_bonus: bonus_sum / bonus_n.max(1) as f64,
            root_value,
            value,
            stderr,
            cumulative_regret: regret,
        });
        out.tables.push(table);
        out.mixture.policies.push(policy.clone());
        pi_prev = policy;
    }
    out.d1 = d1;
    out.d2 = d2;
    out.data = data;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn plan_iteration(
    mdp: &RichCldMdp,
    class: &DecoderClass,
    cfg: &CrieeConfig,
    t: usize,
    cover: &Arc<JointCover>,
    spec: &DiscriminatorSpec,
    d1: &[TransitionDataset],
    data: &[TransitionDataset],
    reward: RewardFn,
) -> Result<Plan> {
    let hz = mdp.horizon;
    let opts = FitOptions::new(spec.bound).with_slope(cfg.head_slope);
    let mut rng = stream_rng(cfg.seed, streams::DISCRIMINATORS, t as u64);
    let budget = match cfg.rep {
        RepMode::Exact { budget } | RepMode::Iterative { budget, .. } => budget,
    };
    // Discriminators for layer h act on layer h + 1 observations.
    let mut per_layer = Vec::with_capacity(hz);
    for h in 1..=hz {
        per_layer.push(build_discriminators(class, spec, h + 1, budget, &mut rng)?);
    }
    let select = |sets: Vec<&TransitionDataset>, discs: Vec<Discriminator>, rng: &mut SimRng| -> Result<BcrlReport> {
        match cfg.rep {
            RepMode::Exact { .. } => bcrl_select_multi(&sets, class, &discs, cover, opts),
            RepMode::Iterative { iterations, candidates, beta, .. } => {
                let icfg = IterConfig { iterations, beta, candidates, pool_cap: IterConfig::default().pool_cap };
                iter_bcrl(&sets, class, &mut pool_generator(discs), icfg, cover, opts, rng)
            }
        }
    };
    let reports: Vec<BcrlReport> = if cfg.share_decoder {
        let all: Vec<Discriminator> = per_layer.into_iter().flatten().collect();
        let report = select(data.iter().collect(), all, &mut rng)?;
        vec![report; hz]
    } else {
        let seeds: Vec<u64> = (0..hz).map(|_| rng.gen()).collect();
        per_layer
            .into_par_iter()
            .zip(data.par_iter())
            .zip(seeds)
            .map(|((discs, d), s)| select(vec![d], discs, &mut crate::rng::seeded(s)))
            .collect::<Result<Vec<_>>>()?
    };
    let decoders: Vec<Decoder> = reports.iter().map(|r| class.get(r.chosen).clone()).collect();
    let (lambda, alpha) =
        schedules(t, mdp.state_box.dims(), mdp.action_box.dims(), class.len(), cfg.schedule)?;
    let bonuses = decoders
        .iter()
        .zip(d1)
        .map(|(phi, d)| count_bonus(phi, d, lambda, alpha, cover))
        .collect::<Result<Vec<_>>>()?;
    let sets: Vec<&TransitionDataset> = data.iter().collect();
    let table = optdp(&decoders, &sets, &bonuses, cover, reward, 2.0)?;
    Ok(Plan {
        labels: reports.iter().map(|r| r.chosen_label.clone()).collect(),
        worst: reports.iter().map(|r| r.worst_debiased).fold(f64::NEG_INFINITY, f64::max),
        bonuses,
        table,
    })
}

/// Per-iteration metrics as CSV with a schema column.
pub fn write_metrics_csv<W: Write>(metrics: &[IterationMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "schema",
        "t",
        "decoders",
        "worst_debiased",
        "mean_bonus",
        "root_value",
        "value",
        "stderr",
        "cumulative_regret",
    ])?;
    for m in metrics {
        w.write_record([
            METRICS_SCHEMA.to_string(),
            m.t.to_string(),
            m.labels.join(";"),
            format!("{:.12e}", m.worst_debiased),
            format!("{:.12e}", m.mean_bonus),
            format!("{:.12e}", m.root_value),
            format!("{:.12e}", m.value),
            format!("{:.12e}", m.stderr),
            format!("{:.12e}", m.cumulative_regret),
        ])?;
    }
    w.flush()?;
    Ok(())
}
