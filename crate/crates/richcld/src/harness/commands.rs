//! Subcommand bodies. The per-seed functions return in-memory results; the
//! `cmd_*` functions write them into the run directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::bcrl::{
    bcrl_select, build_discriminators, iter_bcrl, pool_generator, BcrlReport, DiscriminatorSpec, IterConfig,
    RewardFn, TransitionDataset,
};
use crate::cover::{CellId, JointCover};
use crate::criee::{criee_run, estimate_value, write_metrics_csv, CrieeOutcome};
use crate::decoder::{Decoder, DecoderClass};
use crate::env::chain::CellChain;
use crate::env::ppm::observation_image;
use crate::env::{tv_lipschitz_audit, Dynamics, Policy, RichCldMdp, UniformCoverPolicy};
use crate::error::{Error, Result};
use crate::golf::{golf_run, write_diagnostics_csv, GolfOutcome, ValueClass};
use crate::harness::config::{Algorithm, Command, ExperimentConfig};
use crate::harness::representation::{
    cluster_map, cluster_scores, maze_decoder_class, maze_of, random_walk_dataset, uniform_positions, ClusterScores,
    ClusterSpec,
};
use crate::harness::theory::{counterexample_battery, theory_report, write_theory_csv};
use crate::lipschitz::FitOptions;
use crate::offline::{
    adp, datasets_from_records, estimate_transfer_coeff, exploratory_records, read_records, write_evaluation_csv,
    write_records, BackupOracle, OfflineBundle, OfflineRecord, PolicyEvaluation, QFn, TransferEstimate,
};
use crate::pseudobackup::{GreedyPolicy, ValueTable};
use crate::rng::{stream_rng, streams};
use crate::tabular::{FiniteMdp, PixelChain};

pub const VERSION: &str = concat!("richcld ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Replaces the config's seed list with this one seed.
    pub seed: Option<u64>,
    pub dry_run: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub plan: String,
    /// Files written, relative to the run directory.
    pub files: Vec<String>,
    pub summary: String,
}

/// Validates, writes the run header files, then runs `cmd`. With `dry_run`
/// only the plan is produced.
pub fn run(cmd: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate(cmd)?;
    let plan = plan(cmd, &cfg, &opts.out);
    if opts.dry_run {
        return Ok(RunReport { plan, files: vec![], summary: String::new() });
    }
    std::fs::create_dir_all(&opts.out)?;
    let mut run = RunDir { root: opts.out.clone(), files: vec![] };
    run.write_text("resolved.toml", &cfg.to_toml()?)?;
    run.write_text("seed", &cfg.seeds.iter().map(|s| format!("{s}\n")).collect::<String>())?;
    run.write_text("version", &format!("{VERSION}\n"))?;
    let summary = match cmd {
        Command::EnvGen => cmd_env_gen(&cfg, &mut run)?,
        Command::TrainRep => cmd_train_rep(&cfg, &mut run)?,
        Command::Criee => cmd_criee(&cfg, &mut run)?,
        Command::Golf => cmd_golf(&cfg, &mut run)?,
        Command::Offline => cmd_offline(&cfg, &mut run)?,
        Command::TheoryChecks => cmd_theory_checks(&cfg, &mut run)?,
        Command::Audit => cmd_audit(&cfg, &mut run)?,
    };
    Ok(RunReport { plan, files: run.files, summary })
}

/// Human-readable description of what `run` would do.
pub fn plan(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> String {
    let env = match cmd {
        Command::TheoryChecks => "counterexample family".to_string(),
        _ => cfg.env.build().map(|m| format!("{} (horizon {})", m.label, m.horizon)).unwrap_or_else(|e| e.to_string()),
    };
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let per_seed: &[&str] = match cmd {
        Command::EnvGen => &["obs-<i>.ppm"],
        Command::TrainRep => &["bcrl.csv", "bcrl-no-lipschitz.csv", "assignments.csv", "clusters-<method>.ppm"],
        Command::Criee => &["iterations.csv", "regret.csv"],
        Command::Golf => &["rounds.csv", "regret.csv"],
        Command::Offline => &["records.txt", "evaluation.csv", "regret.csv"],
        Command::TheoryChecks | Command::Audit => &[],
    };
    let mut files = vec!["resolved.toml".to_string(), "seed".into(), "version".into(), "metrics.csv".into()];
    if cmd == Command::TheoryChecks {
        files.push("theory-report.txt".into());
    }
    files.extend(per_seed.iter().map(|f| format!("seed-<s>-{f}")));
    let mut text = format!("command: {cmd}\nalgorithm: {:?}\nenvironment: {env}\nseeds: {}\noutput: {}\nwrites:\n", cfg.algorithm, seeds.join(", "), out.display());
    for f in files {
        text.push_str(&format!("  {f}\n"));
    }
    text
}

struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.root.join(name))?))
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let mut f = self.create(name)?;
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv::Writer::from_writer(self.create(name)?))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), fmt)
}

fn reward_fn(mdp: &RichCldMdp) -> RewardFn {
    let m = mdp.clone();
    Arc::new(move |h, x, a| m.observed_reward(h, x, a))
}

/// Exact policy values where the environment admits them.
pub enum ValueOracle {
    Chain { chain: CellChain, finite: FiniteMdp },
    Pixel(PixelChain),
    Unavailable,
}

impl ValueOracle {
    pub fn new(mdp: &RichCldMdp) -> Self {
        match &mdp.dynamics {
            Dynamics::Chain(c) => ValueOracle::Chain { chain: c.clone(), finite: c.to_finite() },
            Dynamics::Drift(_) => PixelChain::new(mdp).map_or(ValueOracle::Unavailable, ValueOracle::Pixel),
            _ => ValueOracle::Unavailable,
        }
    }

    /// J(π*); drift toys maximize over an action grid of the given spacing.
    pub fn optimal(&self, resolution: f64) -> Option<f64> {
        match self {
            ValueOracle::Chain { finite, .. } => Some(finite.optimal_value()),
            ValueOracle::Pixel(p) => {
                let steps = (1.0 / resolution).round() as usize;
                let grid: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
                Some(p.optimal_value(&grid))
            }
            ValueOracle::Unavailable => None,
        }
    }

    /// Value of a deterministic observation-based policy.
    pub fn value(&self, policy: &dyn Policy) -> Option<f64> {
        match self {
            ValueOracle::Chain { chain, finite } => Some(finite.value(&chain.policy_table(policy))),
            ValueOracle::Pixel(p) => Some(p.policy_value(policy)),
            ValueOracle::Unavailable => None,
        }
    }
}

// ---------------------------------------------------------------- env-gen

fn cmd_env_gen(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<String> {
    let mdp = cfg.env.build()?;
    let mut w = run.csv("metrics.csv")?;
    w.write_record(["schema", "seed", "index", "state", "observation", "decoded", "image"])?;
    let join = |p: &[f64]| p.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(";");
    let mut images = 0;
    for &seed in &cfg.seeds {
        let mut rng = stream_rng(seed, streams::DATA, 0);
        for i in 0..cfg.audit.images {
            let s = mdp.state_box.sample_uniform(&mut rng);
            let x = mdp.emit(1, &s);
            let image = match observation_image(&x) {
                Ok(img) => {
                    let name = format!("seed-{seed}-obs-{i}.ppm");
                    let mut f = run.create(&name)?;
                    f.write_all(&img.encode())?;
                    f.flush()?;
                    images += 1;
                    name
                }
                Err(_) => String::new(),
            };
            w.write_record([
                "env-gen-v1".to_string(),
                seed.to_string(),
                i.to_string(),
                join(&s),
                x.reference(),
                join(&mdp.true_decode(1, &x)),
                image,
            ])?;
        }
    }
    w.flush()?;
    Ok(format!("{}: wrote {images} observation images\n", mdp.label))
}

// ---------------------------------------------------------------- audit

fn cmd_audit(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<String> {
    let mdp = cfg.env.build()?;
    let a = &cfg.audit;
    let mut w = run.csv("metrics.csv")?;
    w.write_record(["schema", "seed", "pairs_used", "pairs_skipped", "samples", "bin_eta", "max_ratio"])?;
    let mut summary = String::new();
    for &seed in &cfg.seeds {
        let rep = tv_lipschitz_audit(&mdp, a.pairs, a.samples, a.bin_eta, &mut stream_rng(seed, streams::AUDIT, 0))?;
        w.write_record([
            "audit-v1".to_string(),
            seed.to_string(),
            rep.pairs_used.to_string(),
            rep.pairs_skipped.to_string(),
            a.samples.to_string(),
            fmt(a.bin_eta),
            fmt(rep.max_ratio),
        ])?;
        summary.push_str(&format!("seed {seed}: max binned TV / distance = {:.4}\n", rep.max_ratio));
    }
    w.flush()?;
    Ok(summary)
}

// ---------------------------------------------------------------- theory-checks

fn cmd_theory_checks(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<String> {
    let rows = counterexample_battery(&cfg.theory.delta_exponents)?;
    write_theory_csv(&rows, run.create("metrics.csv")?)?;
    let report = theory_report(&rows);
    run.write_text("theory-report.txt", &report)?;
    if rows.iter().any(|r| !r.passed) {
        return Err(Error::CheckFailed("counterexample margins differ from 1/6".into()));
    }
    Ok(report)
}

// ---------------------------------------------------------------- train-rep

pub struct RepOutcome {
    pub class_labels: Vec<String>,
    pub truth_label: String,
    pub lipschitz: BcrlReport,
    pub no_lipschitz: BcrlReport,
    /// Scores of the Lipschitz choice, the unconstrained choice and the
    /// constant decoder, in that order.
    pub scores: [ClusterScores; 3],
}

pub const REP_METHODS: [&str; 3] = ["lipschitz", "no-lipschitz", "constant"];

/// Representation learning on one seed with and without the Lipschitz head
/// constraint, and the cluster scores of both choices and of the constant decoder.
pub fn train_rep_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RepOutcome> {
    let mdp = cfg.env.build()?;
    let p = &cfg.representation;
    let data = random_walk_dataset(&mdp, p.samples, p.reset_every, &mut stream_rng(seed, streams::DATA, 0))?;
    let class = maze_decoder_class(&mdp, p.permutations, p.permutation_eta, &mut stream_rng(seed, streams::DECODERS, 0))?;
    let cover = Arc::new(JointCover::build(&mdp.state_box, p.state_eta, &mdp.action_box, p.action_eta)?);
    let spec = DiscriminatorSpec {
        cover: cover.clone(),
        state_cover: Arc::new(JointCover::state_only(&mdp.state_box, p.state_eta, &mdp.action_box)?),
        horizon: mdp.horizon.max(2),
        reward: reward_fn(&mdp),
        bound: p.disc_bound,
        weight_bound: 2.0,
        lip_per_decoder: p.lip_per_decoder,
    };
    let discs = build_discriminators(&class, &spec, 2, p.budget, &mut stream_rng(seed, streams::DISCRIMINATORS, 0))?;
    let select = |slope: f64| -> Result<BcrlReport> {
        let opts = FitOptions::new(p.disc_bound).with_slope(slope);
        match cfg.algorithm {
            Algorithm::IterBcrl => {
                let mut gen = pool_generator(discs.clone());
                let iter = IterConfig { iterations: p.iterations, beta: p.beta, candidates: p.candidates, pool_cap: p.pool_cap };
                iter_bcrl(&[&data], &class, &mut gen, iter, &cover, opts, &mut stream_rng(seed, streams::POOL, 0))
            }
            _ => bcrl_select(&data, &class, &discs, &cover, opts),
        }
    };
    let lipschitz = select(p.head_slope)?;
    let no_lipschitz = select(f64::INFINITY)?;
    let positions = uniform_positions(&mdp, p.points, &mut stream_rng(seed, streams::EVALUATE, 0));
    let spec = ClusterSpec {
        points: p.points,
        k: p.clusters,
        max_iters: p.kmeans_iters,
        tol: p.kmeans_tol,
        grid: p.grid,
        pair_sample: p.pair_sample,
    };
    let center = mdp.state_box.center();
    let constant = Decoder::new("constant", move |_, _| center.clone());
    let score = |phi: &Decoder| cluster_scores(&mdp, phi, &positions, &spec, &mut stream_rng(seed, streams::KMEANS, 0));
    let scores = [score(class.get(lipschitz.chosen))?, score(class.get(no_lipschitz.chosen))?, score(&constant)?];
    Ok(RepOutcome {
        class_labels: class.labels(),
        truth_label: class.truth().map(|d| d.label().to_string()).unwrap_or_default(),
        lipschitz,
        no_lipschitz,
        scores,
    })
}

fn cmd_train_rep(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<String> {
    let mdp = cfg.env.build()?;
    let maze = maze_of(&mdp)?.clone();
    let mut metrics = run.csv("metrics.csv")?;
    metrics.write_record(["schema", "seed", "method", "decoder", "is_truth", "ari", "wall_crossing", "clusters"])?;
    let mut summary = String::new();
    for &seed in &cfg.seeds {
        let out = train_rep_seed(cfg, seed)?;
        out.lipschitz.write_csv(run.create(&format!("seed-{seed}-bcrl.csv"))?)?;
        out.no_lipschitz.write_csv(run.create(&format!("seed-{seed}-bcrl-no-lipschitz.csv"))?)?;
        let mut assign = run.csv(&format!("seed-{seed}-assignments.csv"))?;
        assign.write_record(["schema", "method", "x", "y", "cluster"])?;
        for (method, s) in REP_METHODS.iter().zip(&out.scores) {
            metrics.write_record([
                "train-rep-v1".to_string(),
                seed.to_string(),
                method.to_string(),
                s.decoder.clone(),
                (s.decoder == out.truth_label).to_string(),
                fmt(s.ari),
                fmt(s.wall_crossing),
                s.clusters.to_string(),
            ])?;
            for (p, c) in s.positions.iter().zip(&s.assignments) {
                assign.write_record(["assign-v1".to_string(), method.to_string(), fmt(p[0]), fmt(p[1]), c.to_string()])?;
            }
            let img = cluster_map(&maze, s, cfg.representation.image_size);
            let mut f = run.create(&format!("seed-{seed}-clusters-{method}.ppm"))?;
            f.write_all(&img.encode())?;
            f.flush()?;
            summary.push_str(&format!(
                "seed {seed} {method:>12}: {:<10} ARI {:.3}  wall-crossing {:.3}\n",
                s.decoder, s.ari, s.wall_crossing
            ));
        }
        assign.flush()?;
    }
    metrics.flush()?;
    Ok(summary)
}

// ---------------------------------------------------------------- criee

pub struct CrieeSeed {
    pub outcome: CrieeOutcome,
    pub reference: Option<f64>,
    /// Exact value of each iteration's greedy policy, when available.
    pub exact_values: Option<Vec<f64>>,
}

impl CrieeSeed {
    /// Exact value of the uniform mixture over iterations.
    pub fn mixture_value(&self) -> Option<f64> {
        self.exact_values.as_ref().map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn criee_seed(cfg: &ExperimentConfig, seed: u64) -> Result<CrieeSeed> {
    let mdp = cfg.env.build()?;
    let class = DecoderClass::with_distractors(&mdp, &cfg.class.distractors)?;
    let oracle = ValueOracle::new(&mdp);
    let mut run = cfg.criee.run.clone();
    run.seed = seed;
    let reference = run.reference_value.or_else(|| oracle.optimal(cfg.criee.oracle_resolution));
    run.reference_value = reference;
    let outcome = criee_run(&mdp, &class, &run)?;
    let exact_values = match oracle {
        ValueOracle::Unavailable => None,
        _ => Some(
            outcome
                .tables
                .iter()
                .map(|t| oracle.value(&GreedyPolicy(t.clone())).expect("oracle is available"))
                .collect(),
        ),
    };
    Ok(CrieeSeed { outcome, reference, exact_values })
}

fn cmd_criee(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<String> {
    let mut metrics = run.csv("metrics.csv")?;
    metrics.write_record(["schema", "seed", "iterations", "reference", "final_value", "mixture_value", "gap", "cumulative_regret"])?;
    let mut summary = String::new();
    for &seed in &cfg.seeds {
        let out = criee_seed(cfg, seed)?;
        let m = &out.outcome.metrics;
        write_metrics_csv(m, run.create(&format!("seed-{seed}-iterations.csv"))?)?;
        let mut regret = run.csv(&format!("seed-{seed}-regret.csv"))?;
        regret.write_record(["schema", "t", "value", "regret", "cumulative_regret", "exact_value"])?;
        let reference = out.reference.unwrap_or(1.0);
        for (i, it) in m.iter().enumerate() {
            let exact = out.exact_values.as_ref().map(|v| v[i]);
            regret.write_record([
                "criee-regret-v1".to_string(),
                it.t.to_string(),
                fmt(it.value),
                fmt(reference - it.value),
                fmt(it.cumulative_regret),
                fmt_opt(exact),
            ])?;
        }
        regret.flush()?;
        let mixture = out.mixture_value();
        let gap = mixture.zip(out.reference).map(|(v, r)| r - v);
        let last = m.last().expect("at least one iteration");
        metrics.write_record([
            "criee-summary-v1".to_string(),
            seed.to_string(),
            m.len().to_string(),
            fmt_opt(out.reference),
            fmt(last.value),
            fmt_opt(mixture),
            fmt_opt(gap),
            fmt(last.cumulative_regret),
        ])?;
        summary.push_str(&format!(
            "seed {seed}: J(pi*) {}  mixture value {}  gap {}\n",
            out.reference.map_or("n/a".into(), |v| format!("{v:.4}")),
            mixture.map_or("n/a".into(), |v| format!("{v:.4}")),
            gap.map_or("n/a".into(), |v| format!("{v:.4}")),
        ));
    }
    metrics.flush()?;
    Ok(summary)
}

// ---------------------------------------------------------------- golf

pub struct GolfSetup {
    pub mdp: RichCldMdp,
    pub class: Arc<ValueClass>,
    /// Member closest to the truth decoder's Q*, with its sup error.
    pub tracked: Option<(usize, f64)>,
    pub optimal: Option<f64>,
}

fn chain_q_star(chain: &CellChain, cover: &JointCover, support: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let finite = chain.to_finite();
    let (v, _) = finite.optimal();
    (0..chain.horizon())
        .map(|h| {
            (0..cover.d_eta())
                .map(|c| {
                    if support.get(h).is_some_and(|s| !s.is_empty() && !s.contains(&c)) {
                        return 0.0;
                    }
                    let (sc, ac) = cover.split(CellId(c));
                    let s = chain.state_of(cover.states().center(sc));
                    let a = chain.action_of(cover.actions().center(ac));
                    let i = s * finite.actions + a;
                    finite.reward[h][i] + finite.transition[h][i].iter().zip(&v[h + 1]).map(|(p, x)| p * x).sum::<f64>()
                })
                .collect()
        })
        .collect()
}

pub fn golf_setup(cfg: &ExperimentConfig) -> Result<GolfSetup> {
    let mdp = cfg.env.build()?;
    let class = DecoderClass::with_distractors(&mdp, &cfg.class.distractors)?;
    let eta = cfg.golf.run.eta;
    let cover = Arc::new(JointCover::build(&mdp.state_box, eta, &mdp.action_box, eta)?);
    let mut spec = cfg.golf.value_class.clone();
    if cfg.golf.start_support && spec.support.iter().all(Vec::is_empty) {
        let start = cover.states().disc(&mdp.initial_state(&mut stream_rng(0, streams::EVALUATE, 0)))?;
        let first: Vec<usize> = (0..cover.actions().d_eta()).map(|a| cover.joint(start, CellId(a)).0).collect();
        spec.support = vec![first];
        spec.support.resize(mdp.horizon, vec![]);
    }
    let vc = Arc::new(ValueClass::build(&class, cover.clone(), mdp.horizon, &spec)?);
    let tracked = match (&mdp.dynamics, class.truth_index()) {
        (Dynamics::Chain(chain), Some(truth)) => Some(vc.closest(truth, &chain_q_star(chain, &cover, &spec.support))?),
        _ => None,
    };
    let optimal = ValueOracle::new(&mdp).optimal(cfg.criee.oracle_resolution);
    Ok(GolfSetup { mdp, class: vc, tracked, optimal })
}

pub struct GolfSeed {
    pub outcome: GolfOutcome,
    pub exact_values: Option<Vec<f64>>,
}

impl GolfSeed {
    /// Average suboptimality of the first `n` policies.
    pub fn running_suboptimality(&self, optimal: f64, n: usize) -> Option<f64> {
        let v = self.exact_values.as_ref()?;
        let n = n.min(v.len());
        (n > 0).then(|| v[..n].iter().map(|x| optimal - x).sum::<f64>() / n as f64)
    }
}

pub fn golf_seed(setup: &GolfSetup, cfg: &ExperimentConfig, seed: u64) -> Result<GolfSeed> {
    let mut run = cfg.golf.run.clone();
    run.seed = seed;
    let outcome = golf_run(&setup.mdp, setup.class.clone(), &run, setup.tracked.map(|t| t.0))?;
    let oracle = ValueOracle::new(&setup.mdp);
    let exact_values = match oracle {
        ValueOracle::Unavailable => None,
        _ => Some(outcome.mixture.policies.iter().map(|p| oracle.value(p.as_ref()).expect("available")).collect()),
    };
    Ok(GolfSeed { outcome, exact_values })
}

fn cmd_golf(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<String> {
    let setup = golf_setup(cfg)?;
    let mut metrics = run.csv("metrics.csv")?;
    metrics.write_record([
        "schema",
        "seed",
        "members",
        "beta",
        "final_alive",
        "tracked_member",
        "tracked_error",
        "tracked_survived",
        "optimal",
        "early_suboptimality",
        "final_suboptimality",
        "cumulative_regret",
    ])?;
    let mut summary = String::new();
    for &seed in &cfg.seeds {
        let out = golf_seed(&setup, cfg, seed)?;
        let rounds = &out.outcome.rounds;
        write_diagnostics_csv(rounds, run.create(&format!("seed-{seed}-rounds.csv"))?)?;
        let mut regret = run.csv(&format!("seed-{seed}-regret.csv"))?;
        regret.write_record(["schema", "round", "value", "regret", "cumulative_regret"])?;
        let mut cumulative = None;
        if let (Some(values), Some(opt)) = (&out.exact_values, setup.optimal) {
            let mut total = 0.0;
            for (t, v) in values.iter().enumerate() {
                total += opt - v;
                regret.write_record(["golf-regret-v1".to_string(), (t + 1).to_string(), fmt(*v), fmt(opt - v), fmt(total)])?;
            }
            cumulative = Some(total);
        }
        regret.flush()?;
        let n = rounds.len();
        let early = setup.optimal.and_then(|o| out.running_suboptimality(o, n / 4));
        let late = setup.optimal.and_then(|o| out.running_suboptimality(o, n));
        let survived = setup.tracked.map(|_| rounds.iter().all(|r| r.survivor == Some(true)));
        metrics.write_record([
            "golf-summary-v1".to_string(),
            seed.to_string(),
            setup.class.len().to_string(),
            fmt(out.outcome.beta),
            rounds.last().map_or(0, |r| r.alive).to_string(),
            setup.tracked.map_or(String::new(), |t| t.0.to_string()),
            fmt_opt(setup.tracked.map(|t| t.1)),
            survived.map_or(String::new(), |b| b.to_string()),
            fmt_opt(setup.optimal),
            fmt_opt(early),
            fmt_opt(late),
            fmt_opt(cumulative),
        ])?;
        summary.push_str(&format!(
            "seed {seed}: {} of {} members alive, tracked survived {:?}, running suboptimality {} -> {}\n",
            rounds.last().map_or(0, |r| r.alive),
            setup.class.len(),
            survived,
            early.map_or("n/a".into(), |v| format!("{v:.4}")),
            late.map_or("n/a".into(), |v| format!("{v:.4}")),
        ));
    }
    metrics.flush()?;
    Ok(summary)
}

// ---------------------------------------------------------------- offline

pub struct OfflineSeed {
    pub evaluations: Vec<PolicyEvaluation>,
    /// Chosen decoder label per layer, for each dataset size.
    pub decoders: Vec<Vec<String>>,
    pub transfer: TransferEstimate,
}

fn learn_decoders(
    cfg: &ExperimentConfig,
    mdp: &RichCldMdp,
    class: &DecoderClass,
    cover: &Arc<JointCover>,
    datasets: &[TransitionDataset],
    seed: u64,
    round: usize,
) -> Result<Vec<Decoder>> {
    if class.len() == 1 {
        return Ok(vec![class.get(0).clone(); datasets.len()]);
    }
    let spec = DiscriminatorSpec {
        cover: cover.clone(),
        state_cover: Arc::new(JointCover::state_only(&mdp.state_box, cfg.offline.eta, &mdp.action_box)?),
        horizon: mdp.horizon,
        reward: reward_fn(mdp),
        bound: 2.0,
        weight_bound: 2.0,
        lip_per_decoder: 1,
    };
    datasets
        .iter()
        .map(|d| {
            let index = (round * (mdp.horizon + 1) + d.layer) as u64;
            let mut rng = stream_rng(seed, streams::DISCRIMINATORS, index);
            let discs = build_discriminators(class, &spec, d.layer + 1, cfg.offline.budget, &mut rng)?;
            let rep = bcrl_select(d, class, &discs, cover, FitOptions::new(2.0))?;
            Ok(class.get(rep.chosen).clone())
        })
        .collect()
}

fn table_q(table: Arc<ValueTable>) -> QFn {
    Arc::new(move |h, x, a| table.q_at(h, x, a).unwrap_or(0.0))
}

/// ADP at every configured dataset size, on nested prefixes of `records`.
pub fn offline_seed(cfg: &ExperimentConfig, records: &[OfflineRecord], seed: u64) -> Result<OfflineSeed> {
    let mdp = cfg.env.build()?;
    let o = &cfg.offline;
    let class = DecoderClass::with_distractors(&mdp, &cfg.class.distractors)?;
    let cover = Arc::new(JointCover::build(&mdp.state_box, o.eta, &mdp.action_box, o.eta)?);
    let full = datasets_from_records(records, mdp.horizon)?;
    let oracle = ValueOracle::new(&mdp);
    let optimal = oracle.optimal(cfg.criee.oracle_resolution);
    let head = FitOptions::new(o.head_bound).with_slope(o.head_slope);
    let mut evaluations = Vec::new();
    let mut decoders = Vec::new();
    let mut candidates: Vec<QFn> = Vec::new();
    for (round, &n) in o.samples_per_layer.iter().enumerate() {
        let datasets: Vec<TransitionDataset> = full
            .iter()
            .map(|d| TransitionDataset { layer: d.layer, tuples: d.tuples.iter().take(n).cloned().collect() })
            .collect();
        let phis = learn_decoders(cfg, &mdp, &class, &cover, &datasets, seed, round)?;
        decoders.push(phis.iter().map(|p| p.label().to_string()).collect());
        let table = Arc::new(adp(&OfflineBundle::new(datasets, phis)?, reward_fn(&mdp), &cover, head)?);
        let policy = GreedyPolicy(table.clone());
        let (value, stderr) = match oracle.value(&policy) {
            Some(v) => (v, 0.0),
            None => estimate_value(&mdp, &policy, o.eval_rollouts, seed, round as u64)?,
        };
        evaluations.push(PolicyEvaluation { label: "adp".into(), samples_per_layer: n, value, stderr, optimal });
        candidates.push(table_q(table));
    }
    let uniform = UniformCoverPolicy::new(cover.actions());
    let (value, stderr) = estimate_value(&mdp, &uniform, o.eval_rollouts, seed, o.samples_per_layer.len() as u64)?;
    evaluations.push(PolicyEvaluation { label: "uniform".into(), samples_per_layer: 0, value, stderr, optimal });
    let oracle_kind = match mdp.dynamics {
        Dynamics::Chain(_) | Dynamics::Drift(_) => BackupOracle::Exact,
        _ => BackupOracle::MonteCarlo { samples: o.backup_samples },
    };
    let actions = cover.actions().centers().to_vec();
    let transfer = estimate_transfer_coeff(&mdp, &full, &candidates, &actions, o.transfer_rollouts, oracle_kind, seed)?;
    Ok(OfflineSeed { evaluations, decoders, transfer })
}

fn cmd_offline(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<String> {
    let mdp = cfg.env.build()?;
    let largest = *cfg.offline.samples_per_layer.iter().max().expect("validated nonempty");
    let mut metrics = run.csv("metrics.csv")?;
    metrics.write_record(["schema", "seed", "samples_per_layer", "decoders", "value", "optimal", "gap", "transfer_ratio"])?;
    let mut summary = String::new();
    for &seed in &cfg.seeds {
        let name = format!("seed-{seed}-records.txt");
        let records = exploratory_records(&mdp, largest, seed);
        let mut f = run.create(&name)?;
        write_records(&records, mdp.state_box.dims(), mdp.action_box.dims(), &mut f)?;
        f.flush()?;
        drop(f);
        let (_, _, records) = read_records(BufReader::new(File::open(run.root.join(&name))?))?;
        let out = offline_seed(cfg, &records, seed)?;
        write_evaluation_csv(&out.evaluations, run.create(&format!("seed-{seed}-evaluation.csv"))?)?;
        let mut regret = run.csv(&format!("seed-{seed}-regret.csv"))?;
        regret.write_record(["schema", "samples_per_layer", "value", "optimal", "gap"])?;
        for (e, phis) in out.evaluations.iter().filter(|e| e.label == "adp").zip(&out.decoders) {
            let gap = e.optimal.map(|o| o - e.value);
            regret.write_record([
                "offline-regret-v1".to_string(),
                e.samples_per_layer.to_string(),
                fmt(e.value),
                fmt_opt(e.optimal),
                fmt_opt(gap),
            ])?;
            metrics.write_record([
                "offline-summary-v1".to_string(),
                seed.to_string(),
                e.samples_per_layer.to_string(),
                phis.join(";"),
                fmt(e.value),
                fmt_opt(e.optimal),
                fmt_opt(gap),
                fmt(out.transfer.ratio),
            ])?;
            summary.push_str(&format!(
                "seed {seed}: n = {:>6}  value {:.4}  gap {}\n",
                e.samples_per_layer,
                e.value,
                gap.map_or("n/a".into(), |g| format!("{g:.4}"))
            ));
        }
        regret.flush()?;
        summary.push_str(&format!("seed {seed}: transfer ratio estimate {:.3}\n", out.transfer.ratio));
    }
    metrics.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::chain::{make_chain_mdp, tiny_chain};
    use crate::cover::point;
    use crate::env::ConstantPolicy;

    #[test]
    fn chain_oracle_matches_the_finite_model() {
        let mdp = make_chain_mdp("tiny", tiny_chain()).unwrap();
        let oracle = ValueOracle::new(&mdp);
        assert_eq!(oracle.optimal(0.01), Some(0.5));
        // Always the first action: stays at the start and never collects.
        assert_eq!(oracle.value(&ConstantPolicy(point(&[0.25]))), Some(0.0));
    }

    #[test]
    fn plan_lists_the_outputs() {
        let cfg = ExperimentConfig::preset(Command::Criee);
        let text = plan(Command::Criee, &cfg, Path::new("/tmp/x"));
        assert!(text.contains("command: criee") && text.contains("seed-<s>-regret.csv"), "{text}");
    }
}
