//! Rich-observation MDPs with Lipschitz latent dynamics: the maze family, the
//! binary-tree lower-bound family, a 1-d drift toy, and trajectory rollout.

pub mod audit;
pub mod chain;
pub mod counterexample;
pub mod drift;
pub mod maze;
pub mod policy;
pub mod ppm;
pub mod tree;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cover::{point, MetricBox, Point};
use crate::error::{invalid_param, Error, Result};
use crate::rng::SimRng;

pub use audit::{tv_lipschitz_audit, AuditReport};
pub use chain::{make_chain_mdp, CellChain};
pub use counterexample::{make_counterexample_mdp, CounterexampleDynamics};
pub use drift::Drift;
pub use maze::{make_maze, Layout, Maze};
pub use policy::{compose_policy, ConstantPolicy, Policy, SharedPolicy, UniformCoverPolicy};
pub use tree::{make_lower_bound_family, TreeFamily};

/// An observation: a one-hot pixel grid (stored as the index of its lit pixel) or
/// an opaque token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Observation {
    Pixel { width: u32, dims: u8, index: u32 },
    Token(u64),
}

impl Observation {
    /// Dense one-hot image with `width^dims` entries, or `None` for tokens.
    pub fn to_image(&self) -> Option<Vec<u8>> {
        match *self {
            Observation::Pixel { width, dims, index } => {
                let mut img = vec![0u8; (width as usize).pow(dims as u32)];
                img[index as usize] = 1;
                Some(img)
            }
            Observation::Token(_) => None,
        }
    }

    /// Compact textual reference used in dataset files.
    pub fn reference(&self) -> String {
        match *self {
            Observation::Pixel { width, dims, index } => format!("px:{width}:{dims}:{index}"),
            Observation::Token(t) => format!("tok:{t}"),
        }
    }

    pub fn parse_reference(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("bad observation reference `{s}`"));
        let mut parts = s.split(':');
        match parts.next() {
            Some("px") => {
                let mut next = || parts.next().and_then(|p| p.parse::<u64>().ok()).ok_or_else(bad);
                let (width, dims, index) = (next()?, next()?, next()?);
                Ok(Observation::Pixel { width: width as u32, dims: dims as u8, index: index as u32 })
            }
            Some("tok") => Ok(Observation::Token(
                parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?,
            )),
            _ => Err(bad()),
        }
    }
}

/// Latent transition kernels.
#[derive(Clone, Debug)]
pub enum Dynamics {
    Maze(Maze),
    Drift(Drift),
    Tree(TreeFamily),
    Chain(CellChain),
}

/// Latent reward specifications. Per-trajectory sums never exceed 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardSpec {
    Zero,
    /// `scale` when the state lies within L∞ `radius` (raw units) of `center` at `layer`.
    GoalRegion { center: Vec<f64>, radius: f64, layer: usize, scale: f64 },
    /// `scale * max(0, 1 - D_S(s, target) / width)` on each listed layer.
    Bump { target: Vec<f64>, width: f64, layers: Vec<usize>, scale: f64 },
    /// Lower-bound family: 1 at layer H when the leaf matches the block.
    TreeLeaf,
    /// The reward table of a finite chain.
    Chain,
}

#[derive(Clone, Debug)]
pub enum Emission {
    /// One-hot image of `width` pixels per latent dimension.
    Pixel { width: u32 },
    /// Tokens: the shifted block index for trees, the cell index for chains.
    Token,
}

#[derive(Clone, Debug)]
pub enum Initial {
    Fixed(Point),
    /// Chance layer before layer 1: uniform over the roots of the tree family.
    TreeRoots,
}

#[derive(Clone, Debug)]
pub struct RichCldMdp {
    pub label: String,
    pub horizon: usize,
    pub state_box: MetricBox,
    pub action_box: MetricBox,
    pub dynamics: Dynamics,
    pub reward: RewardSpec,
    pub emission: Emission,
    pub initial: Initial,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Point,
    pub obs: Observation,
    pub action: Point,
    pub reward: f64,
}

/// Records for layers 1..=H plus the state reached after layer H.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: Point,
    pub final_obs: Observation,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// `(x_h, a_h, r_h, x_{h+1})` for 1-based layer `h`.
    pub fn transition(&self, h: usize) -> crate::bcrl::Transition {
        let step = &self.steps[h - 1];
        let next = self.steps.get(h).map_or(self.final_obs, |s| s.obs);
        crate::bcrl::Transition { x: step.obs, a: step.action.clone(), r: step.reward, x_next: next }
    }
}

impl RichCldMdp {
    pub fn initial_state(&self, rng: &mut SimRng) -> Point {
        match &self.initial {
            Initial::Fixed(s) => s.clone(),
            Initial::TreeRoots => match &self.dynamics {
                Dynamics::Tree(t) => t.encode(rng.gen_range(0..t.n), 0),
                _ => unreachable!("tree roots on a non-tree MDP"),
            },
        }
    }

    /// One latent transition. Defined for every layer, including H (the successor
    /// of the last layer is recorded in trajectories but never rewarded).
    pub fn step(&self, h: usize, s: &[f64], a: &[f64], rng: &mut SimRng) -> Point {
        match &self.dynamics {
            Dynamics::Maze(m) => {
                let noise = [rng.gen_range(0.0..m.noise), rng.gen_range(0.0..m.noise)];
                let target = [s[0] + a[0] + noise[0], s[1] + a[1] + noise[1]];
                let p = m.project_motion([s[0], s[1]], target);
                point(&p)
            }
            Dynamics::Drift(d) => point(&[d.sample_next(s[0], a[0], rng)]),
            Dynamics::Tree(t) => t.step(h, s, a),
            Dynamics::Chain(c) => c.step(h, s, a, rng),
        }
    }

    pub fn reward(&self, h: usize, s: &[f64], a: &[f64]) -> f64 {
        match &self.reward {
            RewardSpec::Zero => 0.0,
            RewardSpec::GoalRegion { center, radius, layer, scale } => {
                let inside = s.iter().zip(center).all(|(x, c)| (x - c).abs() <= *radius);
                if h == *layer && inside {
                    *scale
                } else {
                    0.0
                }
            }
            RewardSpec::Bump { target, width, layers, scale } => {
                if layers.contains(&h) {
                    scale * (1.0 - self.state_box.distance(s, target) / width).max(0.0)
                } else {
                    0.0
                }
            }
            RewardSpec::TreeLeaf => match &self.dynamics {
                Dynamics::Tree(t) if h == self.horizon => t.leaf_reward(s),
                _ => 0.0,
            },
            RewardSpec::Chain => match &self.dynamics {
                Dynamics::Chain(c) => c.reward(h, s, a),
                _ => 0.0,
            },
        }
    }

    pub fn emit(&self, h: usize, s: &[f64]) -> Observation {
        match &self.emission {
            Emission::Pixel { width } => pixel_of(&self.state_box, *width, s),
            Emission::Token => match &self.dynamics {
                Dynamics::Tree(t) => t.emit(h, s),
                Dynamics::Chain(c) => chain::chain_token(c.state_of(s)),
                _ => unreachable!("token emission needs a tree or chain"),
            },
        }
    }

    /// Inverse of the emission (pixel centers for pixel observations).
    pub fn true_decode(&self, h: usize, x: &Observation) -> Point {
        match (&self.emission, x) {
            (Emission::Pixel { .. }, Observation::Pixel { width, dims, index }) => {
                pixel_center(&self.state_box, *width, *dims, *index)
            }
            (Emission::Token, Observation::Token(t)) => match &self.dynamics {
                Dynamics::Tree(tree) => tree.decode_with_shift(h, x, tree.shift),
                Dynamics::Chain(c) => c.state_point((*t as usize).min(c.states - 1)),
                _ => unreachable!(),
            },
            _ => self.state_box.center(),
        }
    }

    /// Reward as a function of the observation, through the true decoder.
    pub fn observed_reward(&self, h: usize, x: &Observation, a: &[f64]) -> f64 {
        self.reward(h, &self.true_decode(h, x), a)
    }

    pub fn check_reward_budget(&self) -> Result<()> {
        let total = match &self.reward {
            RewardSpec::Zero => 0.0,
            RewardSpec::GoalRegion { scale, .. } => *scale,
            RewardSpec::Bump { scale, layers, .. } => scale * layers.len() as f64,
            RewardSpec::TreeLeaf => 1.0,
            RewardSpec::Chain => match &self.dynamics {
                Dynamics::Chain(c) => c.to_finite().max_total_reward(),
                _ => 0.0,
            },
        };
        if total > 1.0 + 1e-12 {
            return Err(invalid_param(format!("reward budget {total} exceeds 1")));
        }
        Ok(())
    }
}

/// Row-major pixel index of `s`; index per axis is `floor(u * W)` clamped to `W - 1`.
pub fn pixel_of(bbox: &MetricBox, width: u32, s: &[f64]) -> Observation {
    let u = bbox.normalize(s);
    let mut index = 0u32;
    // y (second coordinate) selects the row, x the column.
    for d in (0..u.len()).rev() {
        let i = ((u[d] * width as f64).floor().max(0.0) as u32).min(width - 1);
        index = index * width + i;
    }
    Observation::Pixel { width, dims: u.len() as u8, index }
}

pub fn pixel_center(bbox: &MetricBox, width: u32, dims: u8, index: u32) -> Point {
    let mut rest = index;
    let mut u = Point::new();
    for _ in 0..dims {
        u.push(((rest % width) as f64 + 0.5) / width as f64);
        rest /= width;
    }
    bbox.denormalize(&u)
}

/// Samples one trajectory. Actions outside the action box are an error.
pub fn rollout(mdp: &RichCldMdp, policy: &dyn Policy, rng: &mut SimRng) -> Result<Trajectory> {
    let mut s = mdp.initial_state(rng);
    let mut steps = Vec::with_capacity(mdp.horizon);
    for h in 1..=mdp.horizon {
        let x = mdp.emit(h, &s);
        let a = policy.act(h, &x, rng);
        if !mdp.action_box.contains(&a) {
            return Err(Error::ActionOutOfBox { h, action: a.to_vec() });
        }
        let a = mdp.action_box.clamp_point(&a)?;
        let r = mdp.reward(h, &s, &a);
        let next = mdp.step(h, &s, &a, rng);
        steps.push(Step { state: s, obs: x, action: a, reward: r });
        s = next;
    }
    let final_obs = mdp.emit(mdp.horizon + 1, &s);
    Ok(Trajectory { steps, final_state: s, final_obs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn pixel_roundtrip_within_quantization() {
        let b = MetricBox::unit(2);
        let mut rng = seeded(3);
        for _ in 0..1000 {
            let s = b.sample_uniform(&mut rng);
            let Observation::Pixel { width, dims, index } = pixel_of(&b, 30, &s) else { panic!() };
            let c = pixel_center(&b, width, dims, index);
            assert!(b.distance(&s, &c) <= 0.5 / 30.0 + 1e-12);
        }
        assert_eq!(pixel_of(&b, 10, &[1.0, 1.0]), Observation::Pixel { width: 10, dims: 2, index: 99 });
        assert_eq!(pixel_of(&b, 10, &[0.15, 0.0]), Observation::Pixel { width: 10, dims: 2, index: 1 });
    }

    #[test]
    fn one_hot_image_has_single_lit_pixel() {
        let x = Observation::Pixel { width: 12, dims: 2, index: 37 };
        let img = x.to_image().unwrap();
        assert_eq!(img.len(), 144);
        assert_eq!(img.iter().map(|&v| v as usize).sum::<usize>(), 1);
        assert_eq!(img[37], 1);
        assert!(Observation::Token(4).to_image().is_none());
    }

    #[test]
    fn references_roundtrip() {
        for x in [Observation::Pixel { width: 30, dims: 2, index: 899 }, Observation::Token(12345)] {
            assert_eq!(Observation::parse_reference(&x.reference()).unwrap(), x);
        }
        assert!(Observation::parse_reference("nope").is_err());
    }
}
