//! Binary-tree family used for the lower bound: N trees, one per block index,
//! whose leaves only pay off at the leaf matching the block. Observations show the
//! block index shifted by an unknown cyclic permutation.

use rand::Rng;

use crate::cover::{point, MetricBox, Point};
use crate::decoder::{Decoder, DecoderClass};
use crate::env::{Dynamics, Emission, Initial, Observation, RewardSpec, RichCldMdp};
use crate::error::{invalid_param, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeFamily {
    /// Number of blocks, roots and leaves.
    pub n: usize,
    pub horizon: usize,
    /// Cyclic shift ψ(k) = k + shift mod n applied to the observed block index.
    pub shift: usize,
}

impl TreeFamily {
    /// Latent point for block `i`, node `j` (the layer is implicit).
    pub fn encode(&self, i: usize, j: usize) -> Point {
        let n = self.n as f64;
        point(&[(i as f64 + 0.5) / n, (j as f64 + 0.5) / n])
    }

    pub fn decode_point(&self, s: &[f64]) -> (usize, usize) {
        let n = self.n as f64;
        let idx = |v: f64| ((v * n).floor().max(0.0) as usize).min(self.n - 1);
        (idx(s[0]), idx(s[1]))
    }

    pub fn step(&self, h: usize, s: &[f64], a: &[f64]) -> Point {
        let (i, j) = self.decode_point(s);
        if h < self.horizon {
            self.encode(i, 2 * j + action_bit(a))
        } else {
            self.encode(i, j)
        }
    }

    pub fn leaf_reward(&self, s: &[f64]) -> f64 {
        let (i, j) = self.decode_point(s);
        if i == j {
            1.0
        } else {
            0.0
        }
    }

    pub fn emit(&self, h: usize, s: &[f64]) -> Observation {
        let (i, j) = self.decode_point(s);
        let block = (i + self.shift) % self.n;
        Observation::Token((((block * (self.horizon + 2)) + h) * self.n + j) as u64)
    }

    /// Reads (observed block, layer, node) from a token.
    pub fn read_token(&self, x: &Observation) -> Option<(usize, usize, usize)> {
        let Observation::Token(t) = *x else { return None };
        let t = t as usize;
        let j = t % self.n;
        let rest = t / self.n;
        Some((rest / (self.horizon + 2), rest % (self.horizon + 2), j))
    }

    /// Decoder hypothesis that undoes a shift of `k`.
    pub fn decode_with_shift(&self, _h: usize, x: &Observation, k: usize) -> Point {
        match self.read_token(x) {
            Some((block, _, j)) => self.encode((block + self.n - k % self.n) % self.n, j),
            None => point(&[0.5, 0.5]),
        }
    }

    /// Exact optimal value with the latent state known: backward induction over
    /// every tree, averaged over the uniform root draw.
    pub fn optimal_value(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let mut values: Vec<f64> = (0..self.n).map(|j| if j == i { 1.0 } else { 0.0 }).collect();
                for _ in 1..self.horizon {
                    values = values.chunks(2).map(|c| c[0].max(c[1])).collect();
                }
                values[0]
            })
            .sum::<f64>()
            / self.n as f64
    }

    /// Value of the uniformly random policy.
    pub fn uniform_value(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let mut values: Vec<f64> = (0..self.n).map(|j| if j == i { 1.0 } else { 0.0 }).collect();
                for _ in 1..self.horizon {
                    values = values.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
                }
                values[0]
            })
            .sum::<f64>()
            / self.n as f64
    }

    /// Action bits of the optimal path in tree `i` (most significant first).
    pub fn optimal_path(&self, i: usize) -> Vec<usize> {
        let depth = self.horizon - 1;
        (0..depth).rev().map(|b| (i >> b) & 1).collect()
    }
}

pub fn action_bit(a: &[f64]) -> usize {
    usize::from(a[0] >= 0.5)
}

/// One MDP per cyclic shift ψ_i(k) = k + i mod N, i = 1..=N.
pub fn make_lower_bound_family(n: usize) -> Result<Vec<RichCldMdp>> {
    if n < 4 || !n.is_power_of_two() {
        return Err(invalid_param(format!("family size must be a power of two >= 4, got {n}")));
    }
    let horizon = n.trailing_zeros() as usize + 1;
    Ok((1..=n)
        .map(|shift| RichCldMdp {
            label: format!("tree-n{n}-shift{shift}"),
            horizon,
            state_box: MetricBox::unit(2),
            action_box: MetricBox::unit(1),
            dynamics: Dynamics::Tree(TreeFamily { n, horizon, shift }),
            reward: RewardSpec::TreeLeaf,
            emission: Emission::Token,
            initial: Initial::TreeRoots,
        })
        .collect())
}

/// Φ = {one decoder per candidate shift}; the member undoing `true_shift` is the truth.
pub fn shift_decoders(family: &TreeFamily) -> DecoderClass {
    let decoders = (1..=family.n)
        .map(|k| {
            let f = family.clone();
            Decoder::new(format!("shift{k}"), move |h, x| f.decode_with_shift(h, x, k))
        })
        .collect();
    DecoderClass::new(decoders, Some(family.shift - 1), MetricBox::unit(2)).expect("nonempty class")
}

/// Episodes a uniformly exploring learner needs before exactly one shift is
/// consistent with what it has seen, or `None` if `max_episodes` is exhausted.
pub fn episodes_to_identify(mdp: &RichCldMdp, rng: &mut SimRng, max_episodes: usize) -> Option<usize> {
    let Dynamics::Tree(family) = &mdp.dynamics else { return None };
    let n = family.n;
    let mut alive = vec![true; n];
    for episode in 1..=max_episodes {
        let mut s = mdp.initial_state(rng);
        for h in 1..mdp.horizon {
            let bit = rng.gen_range(0..2usize);
            s = mdp.step(h, &s, &[0.25 + 0.5 * bit as f64], rng);
        }
        let x = mdp.emit(mdp.horizon, &s);
        let r = mdp.reward(mdp.horizon, &s, &[0.25]);
        let (block, _, j) = family.read_token(&x)?;
        for (k, keep) in alive.iter_mut().enumerate() {
            let i = (block + n - (k + 1) % n) % n;
            let predicted = if j == i { 1.0 } else { 0.0 };
            if predicted != r {
                *keep = false;
            }
        }
        if alive.iter().filter(|&&a| a).count() == 1 {
            return Some(episode);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::rollout;
    use crate::env::policy::UniformCoverPolicy;
    use crate::cover::CoverIndex;
    use crate::rng::seeded;

    #[test]
    fn family_shape() {
        let fam = make_lower_bound_family(4).unwrap();
        assert_eq!(fam.len(), 4);
        for m in &fam {
            assert_eq!(m.horizon, 3);
            let Dynamics::Tree(t) = &m.dynamics else { panic!() };
            assert_eq!(t.n, 4);
        }
        assert!(make_lower_bound_family(6).is_err());
        assert!(make_lower_bound_family(2).is_err());
    }

    #[test]
    fn shifts_follow_the_cyclic_formula() {
        let fam = make_lower_bound_family(8).unwrap();
        for (idx, m) in fam.iter().enumerate() {
            let Dynamics::Tree(t) = &m.dynamics else { panic!() };
            assert_eq!(t.shift, idx + 1);
            let s = t.encode(3, 0);
            let (block, h, j) = t.read_token(&m.emit(1, &s)).unwrap();
            assert_eq!((block, h, j), ((3 + idx + 1) % 8, 1, 0));
        }
    }

    #[test]
    fn exact_values() {
        for n in [4, 8, 16] {
            let fam = make_lower_bound_family(n).unwrap();
            let Dynamics::Tree(t) = &fam[0].dynamics else { panic!() };
            assert_eq!(t.optimal_value(), 1.0);
            assert!((t.uniform_value() - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn optimal_path_reaches_the_paying_leaf() {
        let fam = make_lower_bound_family(8).unwrap();
        let m = &fam[2];
        let Dynamics::Tree(t) = &m.dynamics else { panic!() };
        let mut rng = seeded(0);
        for i in 0..8 {
            let mut s = t.encode(i, 0);
            for (h, bit) in t.optimal_path(i).into_iter().enumerate() {
                s = m.step(h + 1, &s, &[0.25 + 0.5 * bit as f64], &mut rng);
            }
            assert_eq!(m.reward(m.horizon, &s, &[0.0]), 1.0);
        }
    }

    #[test]
    fn true_decoder_inverts_emission() {
        let fam = make_lower_bound_family(8).unwrap();
        let m = &fam[4];
        let Dynamics::Tree(t) = &m.dynamics else { panic!() };
        for i in 0..8 {
            for j in 0..8 {
                let s = t.encode(i, j);
                assert_eq!(m.true_decode(3, &m.emit(3, &s)), s);
            }
        }
        let class = shift_decoders(t);
        let truth = class.truth().unwrap();
        assert_eq!(truth.decode(2, &m.emit(2, &t.encode(5, 1))), t.encode(5, 1));
    }

    #[test]
    fn uniform_policy_value_is_one_over_n() {
        let fam = make_lower_bound_family(4).unwrap();
        let m = &fam[1];
        let pol = UniformCoverPolicy::new(&CoverIndex::build(&m.action_box, 0.5).unwrap());
        let mut rng = seeded(9);
        let n = 20_000;
        let total: f64 = (0..n).map(|_| rollout(m, &pol, &mut rng).unwrap().total_reward()).sum();
        let mean = total / n as f64;
        assert!((mean - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }
}
