//! Experiment configuration files.
//!
//! A config is TOML. Every section is optional and falls back to the defaults
//! below; keys that the schema does not know are rejected. The resolved config
//! (all defaults filled in) is written next to every run's outputs and can be
//! fed back in to reproduce it.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::criee::CrieeConfig;
use crate::decoder::DistractorKind;
use crate::env::chain::{make_chain_mdp, tiny_chain, tiny_chain_mirrored};
use crate::env::drift::{make_dense_drift_toy, make_drift_toy};
use crate::env::maze::default_goal;
use crate::env::{make_lower_bound_family, make_maze, Drift, Dynamics, Layout, Maze, RewardSpec, RichCldMdp};
use crate::error::{Error, Result};
use crate::golf::{GolfConfig, ValueClassSpec};

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Subcommands of the experiment driver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    EnvGen,
    TrainRep,
    Criee,
    Golf,
    Offline,
    TheoryChecks,
    Audit,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::EnvGen,
        Command::TrainRep,
        Command::Criee,
        Command::Golf,
        Command::Offline,
        Command::TheoryChecks,
        Command::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::EnvGen => "env-gen",
            Command::TrainRep => "train-rep",
            Command::Criee => "criee",
            Command::Golf => "golf",
            Command::Offline => "offline",
            Command::TheoryChecks => "theory-checks",
            Command::Audit => "audit",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| config_error(format!("unknown command `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bcrl,
    IterBcrl,
    Criee,
    GolfDbr,
    OfflineAdp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainName {
    Tiny,
    TinyMirrored,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Maze {
        layout: Layout,
        obs_width: u32,
        horizon: usize,
        /// Side of the uniform action-noise square.
        noise: f64,
        /// Defaults to the layout's goal region at the last layer.
        reward: Option<RewardSpec>,
    },
    Drift {
        horizon: usize,
        obs_width: u32,
        start: f64,
        goal: f64,
        drift: Drift,
        /// Reward on every layer instead of only the last.
        dense: bool,
    },
    Chain {
        chain: ChainName,
    },
    LowerBound {
        n: usize,
        /// Which member of the family, 1..=n.
        shift: usize,
    },
}

impl EnvSpec {
    pub fn spiral() -> Self {
        EnvSpec::Maze { layout: Layout::Spiral, obs_width: 30, horizon: 5, noise: 0.01, reward: None }
    }

    pub fn dense_drift() -> Self {
        EnvSpec::Drift { horizon: 3, obs_width: 100, start: 0.1, goal: 0.9, drift: Drift::default(), dense: true }
    }

    pub fn build(&self) -> Result<RichCldMdp> {
        match self {
            EnvSpec::Maze { layout, obs_width, horizon, noise, reward } => {
                if !(*noise > 0.0 && *noise <= 0.1) {
                    return Err(config_error("maze noise must lie in (0, 0.1]"));
                }
                let reward = reward.clone().unwrap_or_else(|| default_goal(*layout, *horizon));
                let mut mdp = make_maze(*layout, *obs_width, *horizon, reward)?;
                mdp.dynamics = Dynamics::Maze(Maze::new(*layout, *noise));
                Ok(mdp)
            }
            EnvSpec::Drift { horizon, obs_width, start, goal, drift, dense } => {
                if *dense {
                    make_dense_drift_toy(*horizon, *obs_width, *start, *goal, drift.clone())
                } else {
                    make_drift_toy(*horizon, *obs_width, *start, *goal, drift.clone())
                }
            }
            EnvSpec::Chain { chain } => match chain {
                ChainName::Tiny => make_chain_mdp("tiny-chain", tiny_chain()),
                ChainName::TinyMirrored => make_chain_mdp("tiny-chain-mirrored", tiny_chain_mirrored()),
            },
            EnvSpec::LowerBound { n, shift } => {
                let family = make_lower_bound_family(*n)?;
                if *shift == 0 || *shift > *n {
                    return Err(config_error(format!("shift must lie in 1..={n}")));
                }
                Ok(family[shift - 1].clone())
            }
        }
    }

    fn family(&self) -> &'static str {
        match self {
            EnvSpec::Maze { .. } => "maze",
            EnvSpec::Drift { .. } => "drift",
            EnvSpec::Chain { .. } => "chain",
            EnvSpec::LowerBound { .. } => "lower_bound",
        }
    }
}

/// Decoder class for the CRIEE, GOLF and offline commands: the ground truth
/// followed by these distractors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassSpec {
    pub distractors: Vec<DistractorKind>,
}

impl Default for ClassSpec {
    fn default() -> Self {
        Self {
            distractors: vec![
                DistractorKind::Coarsen { k: 3 },
                DistractorKind::Permute { seed: 1, eta: 0.05 },
                DistractorKind::Permute { seed: 2, eta: 0.05 },
                DistractorKind::Constant,
            ],
        }
    }
}

/// Representation learning on a maze and the cluster analysis of the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepParams {
    pub samples: usize,
    /// Random-walk restart period.
    pub reset_every: usize,
    /// Cell-shuffled copies of the truth in the class, besides the constant decoder.
    pub permutations: usize,
    pub permutation_eta: f64,
    pub state_eta: f64,
    pub action_eta: f64,
    /// Residual plus optimistic discriminators.
    pub budget: usize,
    pub lip_per_decoder: usize,
    pub disc_bound: f64,
    pub head_slope: f64,
    /// Iterative variant only.
    pub iterations: usize,
    pub candidates: usize,
    pub beta: f64,
    pub pool_cap: usize,
    pub points: usize,
    pub clusters: usize,
    pub kmeans_iters: usize,
    pub kmeans_tol: f64,
    /// Cells per side of the reference partition.
    pub grid: usize,
    pub pair_sample: usize,
    pub image_size: usize,
}

impl Default for RepParams {
    fn default() -> Self {
        Self {
            samples: 50_000,
            reset_every: 500,
            permutations: 9,
            permutation_eta: 0.2,
            state_eta: 0.2,
            action_eta: 0.2,
            budget: 16,
            lip_per_decoder: 4,
            disc_bound: 2.0,
            head_slope: 1.0,
            iterations: 20,
            candidates: 8,
            beta: 1e-4,
            pool_cap: 125,
            points: 10_000,
            clusters: 16,
            kmeans_iters: 200,
            kmeans_tol: 1e-6,
            grid: 4,
            pair_sample: 2_000,
            image_size: 120,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrieeParams {
    #[serde(flatten)]
    pub run: CrieeConfig,
    /// Action-grid spacing of the exact value oracle (drift toys only).
    pub oracle_resolution: f64,
}

impl Default for CrieeParams {
    fn default() -> Self {
        Self { run: CrieeConfig::default(), oracle_resolution: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GolfParams {
    #[serde(flatten)]
    pub run: GolfConfig,
    #[serde(flatten)]
    pub value_class: ValueClassSpec,
    /// Restrict first-layer tables to the start cell.
    pub start_support: bool,
}

impl Default for GolfParams {
    fn default() -> Self {
        Self { run: GolfConfig::default(), value_class: ValueClassSpec::default(), start_support: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineParams {
    /// Dataset sizes per layer; the largest also feeds the transfer estimate.
    pub samples_per_layer: Vec<usize>,
    pub eta: f64,
    pub head_slope: f64,
    pub head_bound: f64,
    pub eval_rollouts: usize,
    pub transfer_rollouts: usize,
    /// Monte Carlo successors per residual when no exact backup exists.
    pub backup_samples: usize,
    /// Discriminators per layer when decoders are learned.
    pub budget: usize,
}

impl Default for OfflineParams {
    fn default() -> Self {
        Self {
            samples_per_layer: vec![50, 200, 1000],
            eta: 0.5,
            head_slope: 2.0,
            head_bound: 1.0,
            eval_rollouts: 200,
            transfer_rollouts: 200,
            backup_samples: 200,
            budget: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditParams {
    pub pairs: usize,
    pub samples: usize,
    pub bin_eta: f64,
    /// Observation images written by env-gen.
    pub images: usize,
}

impl Default for AuditParams {
    fn default() -> Self {
        Self { pairs: 100, samples: 10_000, bin_eta: 0.1, images: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryParams {
    /// Exponents k of δ = 10^-k.
    pub delta_exponents: Vec<u32>,
}

impl Default for TheoryParams {
    fn default() -> Self {
        Self { delta_exponents: vec![1, 2, 3, 4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Used when no output directory is given on the command line.
    #[serde(default)]
    pub out: Option<String>,
    pub env: EnvSpec,
    #[serde(default)]
    pub class: ClassSpec,
    #[serde(default)]
    pub representation: RepParams,
    #[serde(default)]
    pub criee: CrieeParams,
    #[serde(default)]
    pub golf: GolfParams,
    #[serde(default)]
    pub offline: OfflineParams,
    #[serde(default)]
    pub audit: AuditParams,
    #[serde(default)]
    pub theory: TheoryParams,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    /// The configuration each command runs with when no file is given.
    pub fn preset(cmd: Command) -> Self {
        let (algorithm, env) = match cmd {
            Command::EnvGen | Command::TrainRep | Command::Audit => (Algorithm::Bcrl, EnvSpec::spiral()),
            Command::Criee | Command::TheoryChecks => (Algorithm::Criee, EnvSpec::dense_drift()),
            Command::Golf => (Algorithm::GolfDbr, EnvSpec::Chain { chain: ChainName::TinyMirrored }),
            Command::Offline => (Algorithm::OfflineAdp, EnvSpec::Chain { chain: ChainName::Tiny }),
        };
        let mut cfg = Self {
            algorithm,
            seeds: default_seeds(),
            out: None,
            env,
            class: ClassSpec::default(),
            representation: RepParams::default(),
            criee: CrieeParams::default(),
            golf: GolfParams::default(),
            offline: OfflineParams::default(),
            audit: AuditParams::default(),
            theory: TheoryParams::default(),
        };
        match cmd {
            Command::Criee => cfg.criee.run.schedule.alpha = 0.005,
            Command::Golf => {
                cfg.class.distractors = vec![DistractorKind::Reflect];
                cfg.golf.run.eta = 0.5;
            }
            Command::Offline => cfg.class.distractors = vec![DistractorKind::Reflect],
            _ => {}
        }
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Value = text.parse().map_err(|e: toml::de::Error| config_error(e.to_string()))?;
        let cfg: Self = raw.clone().try_into().map_err(|e: toml::de::Error| config_error(e.to_string()))?;
        let resolved = toml::Value::try_from(&cfg).map_err(|e| config_error(e.to_string()))?;
        check_known_keys(&raw, &resolved, "")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    /// The resolved config as TOML, with every default written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| config_error(e.to_string()))
    }

    /// Checks ranges and that the command, algorithm and environment fit together.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_error("at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(config_error("seeds must be distinct"));
        }
        let family = self.env.family();
        let mismatch = |what: &str| {
            Err(config_error(format!("{cmd} cannot run {what} (algorithm {:?}, env family {family})", self.algorithm)))
        };
        match cmd {
            Command::TrainRep => {
                if !matches!(self.algorithm, Algorithm::Bcrl | Algorithm::IterBcrl) {
                    return mismatch("a non-representation algorithm");
                }
                if family != "maze" {
                    return mismatch("outside a maze");
                }
                let r = &self.representation;
                if r.samples == 0 || r.reset_every == 0 || r.points < 2 || r.clusters == 0 || r.grid == 0 {
                    return Err(config_error("representation sizes must be positive"));
                }
                if r.budget < 2 || r.image_size == 0 || r.kmeans_iters == 0 {
                    return Err(config_error("need budget >= 2, image_size >= 1 and kmeans_iters >= 1"));
                }
            }
            Command::Criee => {
                if self.algorithm != Algorithm::Criee {
                    return mismatch("this algorithm");
                }
                if family == "lower_bound" {
                    return mismatch("on the lower-bound family");
                }
                if !(self.criee.oracle_resolution > 0.0 && self.criee.oracle_resolution <= 1.0) {
                    return Err(config_error("oracle_resolution must lie in (0, 1]"));
                }
            }
            Command::Golf => {
                if self.algorithm != Algorithm::GolfDbr {
                    return mismatch("this algorithm");
                }
                if family != "chain" && family != "drift" {
                    return mismatch("on this environment");
                }
            }
            Command::Offline => {
                if self.algorithm != Algorithm::OfflineAdp {
                    return mismatch("this algorithm");
                }
                if family != "chain" && family != "drift" {
                    return mismatch("without an exact value oracle");
                }
                let o = &self.offline;
                if o.samples_per_layer.is_empty() || o.samples_per_layer.contains(&0) {
                    return Err(config_error("samples_per_layer must be nonempty and positive"));
                }
                if o.eval_rollouts == 0 || o.transfer_rollouts == 0 || o.backup_samples == 0 || o.budget < 2 {
                    return Err(config_error("rollout and sample counts must be positive and budget >= 2"));
                }
            }
            Command::Audit | Command::EnvGen => {
                if cmd == Command::Audit && (self.audit.pairs == 0 || self.audit.samples == 0) {
                    return Err(config_error("audit pairs and samples must be positive"));
                }
            }
            Command::TheoryChecks => {
                if self.theory.delta_exponents.is_empty() || self.theory.delta_exponents.iter().any(|&k| k == 0 || k > 15) {
                    return Err(config_error("delta exponents must lie in 1..=15"));
                }
            }
        }
        if cmd != Command::TheoryChecks {
            self.env.build()?;
        }
        Ok(())
    }
}

/// Every key of `raw` must survive the round trip through the typed config;
/// anything dropped was not part of the schema.
fn check_known_keys(raw: &toml::Value, resolved: &toml::Value, path: &str) -> Result<()> {
    match (raw, resolved) {
        (toml::Value::Table(r), toml::Value::Table(s)) => {
            for (k, v) in r {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match s.get(k) {
                    Some(sv) => check_known_keys(v, sv, &here)?,
                    None => return Err(config_error(format!("unknown key `{here}`"))),
                }
            }
            Ok(())
        }
        (toml::Value::Array(r), toml::Value::Array(s)) if r.len() == s.len() => {
            for (i, (a, b)) in r.iter().zip(s).enumerate() {
                check_known_keys(a, b, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cmd in Command::ALL {
            let cfg = ExperimentConfig::preset(cmd);
            cfg.validate(cmd).unwrap_or_else(|e| panic!("{cmd}: {e}"));
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{cmd}");
        }
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "algorithm = \"criee\"\nseeds = [3, 4]\n[env]\nfamily = \"chain\"\nchain = \"tiny\"\n[criee]\niterations = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.criee.run.iterations, 5);
        assert_eq!(cfg.criee.run.eta, CrieeConfig::default().eta);
        assert_eq!(cfg.representation, RepParams::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = "algorithm = \"golf-dbr\"\n[env]\nfamily = \"chain\"\nchain = \"tiny\"\n";
        assert!(ExperimentConfig::from_toml(base).is_ok());
        for extra in ["colour = 1\n", "[golf]\nrounds = 3\nroundz = 4\n", "[representation]\nsample = 5\n"] {
            let err = ExperimentConfig::from_toml(&format!("{base}{extra}")).unwrap_err();
            assert!(err.to_string().contains("unknown") || err.to_string().contains("unknown field"), "{err}");
        }
    }

    #[test]
    fn command_and_algorithm_must_match() {
        let mut cfg = ExperimentConfig::preset(Command::Criee);
        assert!(cfg.validate(Command::TrainRep).is_err());
        cfg.algorithm = Algorithm::Bcrl;
        assert!(cfg.validate(Command::TrainRep).is_err(), "drift toy is not a maze");
        assert!(ExperimentConfig::preset(Command::TrainRep).validate(Command::Golf).is_err());
        cfg.seeds = vec![];
        assert!(cfg.validate(Command::Audit).is_err());
    }
}
