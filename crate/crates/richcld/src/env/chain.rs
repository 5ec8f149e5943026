//! Finite chains embedded in the unit interval: `states` equal cells of S = [0, 1],
//! `actions` equal cells of A = [0, 1], a per-layer kernel over cells and a
//! per-layer reward table. The latent state is always a cell center and the
//! observation is a token naming the cell, so these instances are exactly
//! enumerable.

use rand::Rng;

use crate::cover::{point, MetricBox, Point};
use crate::env::{Dynamics, Emission, Initial, Observation, Policy, RewardSpec, RichCldMdp};
use crate::error::{invalid_param, Result};
use crate::rng::{seeded, SimRng};
use crate::tabular::{FiniteMdp, PolicyTable};

#[derive(Clone, Debug, PartialEq)]
pub struct CellChain {
    pub states: usize,
    pub actions: usize,
    /// `kernel[h-1][s][a][s']`.
    pub kernel: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[h-1][s][a]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub start: usize,
}

impl CellChain {
    pub fn horizon(&self) -> usize {
        self.kernel.len()
    }

    pub fn state_point(&self, s: usize) -> Point {
        point(&[(s as f64 + 0.5) / self.states as f64])
    }

    pub fn action_point(&self, a: usize) -> Point {
        point(&[(a as f64 + 0.5) / self.actions as f64])
    }

    fn index(v: f64, n: usize) -> usize {
        ((v * n as f64).floor().max(0.0) as usize).min(n - 1)
    }

    pub fn state_of(&self, s: &[f64]) -> usize {
        Self::index(s[0], self.states)
    }

    pub fn action_of(&self, a: &[f64]) -> usize {
        Self::index(a[0], self.actions)
    }

    pub fn step(&self, h: usize, s: &[f64], a: &[f64], rng: &mut SimRng) -> Point {
        let row = &self.kernel[(h - 1).min(self.horizon() - 1)][self.state_of(s)][self.action_of(a)];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (next, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.state_point(next);
            }
        }
        // Round-off: fall back to the last state with positive mass.
        let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        self.state_point(last)
    }

    pub fn reward(&self, h: usize, s: &[f64], a: &[f64]) -> f64 {
        if h == 0 || h > self.horizon() {
            return 0.0;
        }
        self.rewards[h - 1][self.state_of(s)][self.action_of(a)]
    }

    pub fn to_finite(&self) -> FiniteMdp {
        let mut initial = vec![0.0; self.states];
        initial[self.start] = 1.0;
        FiniteMdp {
            states: self.states,
            actions: self.actions,
            transition: self
                .kernel
                .iter()
                .map(|layer| layer.iter().flat_map(|rows| rows.iter().cloned()).collect())
                .collect(),
            reward: self.rewards.iter().map(|layer| layer.iter().flatten().copied().collect()).collect(),
            initial,
        }
    }

    /// Table of a deterministic observation policy on this chain.
    pub fn policy_table(&self, policy: &dyn Policy) -> PolicyTable {
        let mut rng = seeded(0);
        (1..=self.horizon())
            .map(|h| (0..self.states).map(|s| self.action_of(&policy.act(h, &chain_token(s), &mut rng))).collect())
            .collect()
    }
}

pub fn make_chain_mdp(label: &str, chain: CellChain) -> Result<RichCldMdp> {
    let h = chain.horizon();
    if h == 0 || chain.rewards.len() != h || chain.states == 0 || chain.actions == 0 || chain.start >= chain.states {
        return Err(invalid_param("chain needs matching kernel/reward layers and a valid start"));
    }
    for layer in &chain.kernel {
        if layer.len() != chain.states {
            return Err(invalid_param("kernel layer has the wrong number of states"));
        }
        for rows in layer {
            if rows.len() != chain.actions {
                return Err(invalid_param("kernel row block has the wrong number of actions"));
            }
            for row in rows {
                let sum: f64 = row.iter().sum();
                if row.len() != chain.states || (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                    return Err(invalid_param("kernel rows must be distributions over the states"));
                }
            }
        }
    }
    if chain.rewards.iter().flatten().flatten().any(|&r| !(0.0..=1.0).contains(&r)) {
        return Err(invalid_param("rewards must lie in [0, 1]"));
    }
    let finite = chain.to_finite();
    let best = finite.max_total_reward();
    if best > 1.0 + 1e-12 {
        return Err(invalid_param(format!("some trajectory collects reward {best} > 1")));
    }
    Ok(RichCldMdp {
        label: label.to_string(),
        horizon: h,
        state_box: MetricBox::unit(1),
        action_box: MetricBox::unit(1),
        initial: Initial::Fixed(chain.state_point(chain.start)),
        dynamics: Dynamics::Chain(chain),
        reward: RewardSpec::Chain,
        emission: Emission::Token,
    })
}

/// Two layers, two state cells, two action cells. From the start cell the first
/// action stays put and the second moves to the rewarding cell with probability
/// one half; on the last layer the rewarding cell pays 1 for the first action.
/// Optimal values lie on the grid {0, 1/2, 1}.
pub fn tiny_chain() -> CellChain {
    CellChain {
        states: 2,
        actions: 2,
        kernel: vec![
            vec![vec![vec![1.0, 0.0], vec![0.5, 0.5]], vec![vec![0.0, 1.0], vec![0.5, 0.5]]],
            vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
        ],
        rewards: vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![vec![0.0, 0.0], vec![1.0, 0.0]]],
        start: 0,
    }
}

/// `tiny_chain` with the two action labels exchanged on every layer, so the
/// lowest-index action is optimal at the start and wrong at the rewarding cell.
pub fn tiny_chain_mirrored() -> CellChain {
    let mut c = tiny_chain();
    for layer in c.kernel.iter_mut() {
        for rows in layer.iter_mut() {
            rows.reverse();
        }
    }
    for layer in c.rewards.iter_mut() {
        for row in layer.iter_mut() {
            row.reverse();
        }
    }
    c
}

/// Observation of chain state `s`.
pub fn chain_token(s: usize) -> Observation {
    Observation::Token(s as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::rollout;
    use crate::rng::seeded;

    #[test]
    fn tiny_chain_values() {
        let c = tiny_chain();
        let f = c.to_finite();
        let (values, policy) = f.optimal();
        assert_eq!(values[0][0], 0.5);
        assert_eq!(policy[0][0], 1);
        assert_eq!(policy[1][1], 0);
        let mdp = make_chain_mdp("tiny", c).unwrap();
        assert_eq!(mdp.horizon, 2);
    }

    #[test]
    fn rollout_mean_matches_exact_value() {
        let c = tiny_chain();
        let mdp = make_chain_mdp("tiny", c.clone()).unwrap();
        let (a0, a1) = (c.action_point(0), c.action_point(1));
        let pol = move |h: usize, _: &Observation| if h == 1 { a1.clone() } else { a0.clone() };
        let exact = c.to_finite().evaluate(&[vec![1, 1], vec![0, 0]])[0][0];
        assert_eq!(exact, 0.5);
        let mut rng = seeded(4);
        let n = 10_000;
        let total: f64 = (0..n).map(|_| rollout(&mdp, &pol, &mut rng).unwrap().total_reward()).sum();
        let mean = total / n as f64;
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * sigma.max(1e-9), "{mean} vs {exact}");
    }

    #[test]
    fn mirrored_chain_flips_the_optimal_actions() {
        let c = tiny_chain_mirrored();
        let (values, policy) = c.to_finite().optimal();
        assert_eq!(values[0][0], 0.5);
        assert_eq!(policy[0][0], 0);
        assert_eq!(policy[1][1], 1);
        let a = c.action_point(1);
        let table = c.policy_table(&move |_: usize, _: &Observation| a.clone());
        assert_eq!(table, vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn invalid_chains_rejected() {
        let mut c = tiny_chain();
        c.kernel[0][0][0] = vec![0.7, 0.7];
        assert!(make_chain_mdp("bad", c).is_err());
        let mut c = tiny_chain();
        c.rewards[0][0][1] = 1.0;
        assert!(make_chain_mdp("too-rich", c).is_err());
    }
}
