//! Exact dynamic programming on finite MDPs, and the pixel-level discretization
//! of the drift toy used as its value oracle.

use crate::env::{Dynamics, Drift, Emission, Initial, Observation, Policy, RichCldMdp};
use crate::error::{invalid_input, Result};
use crate::rng::seeded;

/// Layer index `h` in `0..H` stands for layer `h + 1`. Rows may be
/// substochastic, which is how empirical models with unvisited cells look.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp {
    pub states: usize,
    pub actions: usize,
    /// `transition[h][s * actions + a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[h][s * actions + a]`.
    pub reward: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

/// Deterministic policy table `policy[h][s]`.
pub type PolicyTable = Vec<Vec<usize>>;

impl FiniteMdp {
    pub fn horizon(&self) -> usize {
        self.transition.len()
    }

    fn backup(&self, h: usize, s: usize, a: usize, next: &[f64]) -> f64 {
        let row = &self.transition[h][s * self.actions + a];
        self.reward[h][s * self.actions + a] + row.iter().zip(next).map(|(p, v)| p * v).sum::<f64>()
    }

    /// `values[h][s]` for layers 1..=H+1 (the last is zero) and a greedy
    /// policy, lowest action index on ties.
    pub fn optimal(&self) -> (Vec<Vec<f64>>, PolicyTable) {
        let hz = self.horizon();
        let mut values = vec![vec![0.0; self.states]; hz + 1];
        let mut policy = vec![vec![0; self.states]; hz];
        for h in (0..hz).rev() {
            for s in 0..self.states {
                let mut best = (f64::NEG_INFINITY, 0);
                for a in 0..self.actions {
                    let q = self.backup(h, s, a, &values[h + 1]);
                    if q > best.0 {
                        best = (q, a);
                    }
                }
                values[h][s] = best.0;
                policy[h][s] = best.1;
            }
        }
        (values, policy)
    }

    pub fn evaluate(&self, policy: &[Vec<usize>]) -> Vec<Vec<f64>> {
        let hz = self.horizon();
        let mut values = vec![vec![0.0; self.states]; hz + 1];
        for h in (0..hz).rev() {
            for s in 0..self.states {
                values[h][s] = self.backup(h, s, policy[h][s], &values[h + 1]);
            }
        }
        values
    }

    pub fn value(&self, policy: &[Vec<usize>]) -> f64 {
        dot(&self.initial, &self.evaluate(policy)[0])
    }

    pub fn optimal_value(&self) -> f64 {
        dot(&self.initial, &self.optimal().0[0])
    }

    /// State distributions at layers 1..=H under `policy`.
    pub fn occupancy(&self, policy: &[Vec<usize>]) -> Vec<Vec<f64>> {
        let mut out = vec![self.initial.clone()];
        for h in 0..self.horizon() - 1 {
            let mut next = vec![0.0; self.states];
            for (s, &mass) in out[h].iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (s2, p) in self.transition[h][s * self.actions + policy[h][s]].iter().enumerate() {
                    next[s2] += mass * p;
                }
            }
            out.push(next);
        }
        out
    }

    /// Largest reward sum along any trajectory with positive probability.
    pub fn max_total_reward(&self) -> f64 {
        let hz = self.horizon();
        let mut best = vec![0.0f64; self.states];
        for h in (0..hz).rev() {
            best = (0..self.states)
                .map(|s| {
                    (0..self.actions)
                        .map(|a| {
                            let row = &self.transition[h][s * self.actions + a];
                            let tail = row
                                .iter()
                                .zip(&best)
                                .filter(|(p, _)| **p > 0.0)
                                .map(|(_, v)| *v)
                                .fold(0.0f64, f64::max);
                            self.reward[h][s * self.actions + a] + tail
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
        }
        self.initial.iter().zip(&best).filter(|(p, _)| **p > 0.0).map(|(_, v)| *v).fold(0.0, f64::max)
    }

    /// Per-layer terms of the telescoped gap between this model's value of
    /// `policy` and its value in `truth`: the model's reward error plus the
    /// model-minus-true backup of the true value, weighted by the model's own
    /// forward state distribution. Their sum equals the value gap.
    pub fn simulation_terms(&self, truth: &FiniteMdp, policy: &[Vec<usize>]) -> Vec<f64> {
        let v_true = truth.evaluate(policy);
        let occupancy = self.occupancy(policy);
        (0..self.horizon())
            .map(|h| {
                (0..self.states)
                    .map(|s| {
                        let a = policy[h][s];
                        let i = s * self.actions + a;
                        let model_next: f64 =
                            self.transition[h][i].iter().zip(&v_true[h + 1]).map(|(p, v)| p * v).sum();
                        let true_next: f64 =
                            truth.transition[h][i].iter().zip(&v_true[h + 1]).map(|(p, v)| p * v).sum();
                        occupancy[h][s] * (self.reward[h][i] - truth.reward[h][i] + model_next - true_next)
                    })
                    .sum()
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The drift toy seen at pixel resolution: the first layer starts from the exact
/// start point, later layers from pixel centers. Policies act on pixels, so this
/// is the chain every observation-based policy actually induces, up to the
/// within-pixel position.
#[derive(Clone, Debug)]
pub struct PixelChain {
    mdp: RichCldMdp,
    drift: Drift,
    width: u32,
    start: f64,
}

impl PixelChain {
    pub fn new(mdp: &RichCldMdp) -> Result<Self> {
        let (Dynamics::Drift(drift), Emission::Pixel { width }, Initial::Fixed(start)) =
            (&mdp.dynamics, &mdp.emission, &mdp.initial)
        else {
            return Err(invalid_input("pixel chains need the drift toy"));
        };
        Ok(Self { mdp: mdp.clone(), drift: drift.clone(), width: *width, start: start[0] })
    }

    fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.width as f64
    }

    fn observation(&self, j: usize) -> Observation {
        Observation::Pixel { width: self.width, dims: 1, index: j as u32 }
    }

    fn start_pixel(&self) -> usize {
        ((self.start * self.width as f64).floor() as usize).min(self.width as usize - 1)
    }

    /// Latent position used for pixel `j` at layer `h`.
    fn position(&self, h: usize, j: usize) -> f64 {
        if h == 1 {
            self.start
        } else {
            self.center(j)
        }
    }

    /// Optimal value over the action grid `actions`.
    pub fn optimal_value(&self, actions: &[f64]) -> f64 {
        let w = self.width as usize;
        let hz = self.mdp.horizon;
        let mut next = vec![0.0; w];
        for h in (1..=hz).rev() {
            let pixels: Vec<usize> = if h == 1 { vec![self.start_pixel()] } else { (0..w).collect() };
            let mut cur = vec![0.0; w];
            for j in pixels {
                let s = self.position(h, j);
                cur[j] = actions
                    .iter()
                    .map(|&a| {
                        let p = self.drift.pixel_distribution(s, a, self.width);
                        self.mdp.reward(h, &[s], &[a]) + dot(&p, &next)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            next = cur;
        }
        next[self.start_pixel()]
    }

    /// Exact value of a deterministic observation-based policy.
    pub fn policy_value(&self, policy: &dyn Policy) -> f64 {
        let w = self.width as usize;
        let mut rng = seeded(0);
        let mut mass = vec![0.0; w];
        mass[self.start_pixel()] = 1.0;
        let mut total = 0.0;
        for h in 1..=self.mdp.horizon {
            let mut next = vec![0.0; w];
            for j in 0..w {
                if mass[j] == 0.0 {
                    continue;
                }
                let s = self.position(h, j);
                let a = policy.act(h, &self.observation(j), &mut rng);
                total += mass[j] * self.mdp.reward(h, &[s], &a);
                for (k, p) in self.drift.pixel_distribution(s, a[0], self.width).iter().enumerate() {
                    next[k] += mass[j] * p;
                }
            }
            mass = next;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::point;
    use crate::env::drift::make_drift_toy;
    use crate::env::ConstantPolicy;

    fn two_state() -> FiniteMdp {
        FiniteMdp {
            states: 2,
            actions: 2,
            transition: vec![
                vec![vec![1.0, 0.0], vec![0.3, 0.7], vec![0.0, 1.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            reward: vec![vec![0.0; 4], vec![0.0, 0.2, 1.0, 0.0]],
            initial: vec![1.0, 0.0],
        }
    }

    #[test]
    fn optimal_and_evaluate_agree() {
        let m = two_state();
        let (values, policy) = m.optimal();
        assert!((values[0][0] - 0.76).abs() < 1e-12);
        assert_eq!(policy[0][0], 1);
        assert!((m.value(&policy) - 0.76).abs() < 1e-12);
        assert!((m.value(&[vec![0, 0], vec![1, 0]]) - 0.2).abs() < 1e-12);
        assert_eq!(m.max_total_reward(), 1.0);
    }

    #[test]
    fn simulation_terms_sum_to_gap() {
        let truth = two_state();
        let mut model = truth.clone();
        model.transition[0][1] = vec![0.5, 0.4];
        model.reward[1][2] = 0.9;
        let policy = vec![vec![1, 0], vec![1, 0]];
        let gap = model.value(&policy) - truth.value(&policy);
        let terms: f64 = model.simulation_terms(&truth, &policy).iter().sum();
        assert!((gap - terms).abs() < 1e-12);
    }

    #[test]
    fn pixel_chain_bounds() {
        let mdp = make_drift_toy(3, 100, 0.1, 0.9, Drift::default()).unwrap();
        let chain = PixelChain::new(&mdp).unwrap();
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let best = chain.optimal_value(&grid);
        let low = chain.policy_value(&ConstantPolicy(point(&[0.0])));
        let high = chain.policy_value(&ConstantPolicy(point(&[1.0])));
        assert!(best >= high - 1e-12 && high > low, "{best} {high} {low}");
        assert!(best <= 1.0);
    }
}
