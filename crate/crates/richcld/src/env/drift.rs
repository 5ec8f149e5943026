//! One-dimensional drift chain: `s' = reflect(state_gain·s + action_gain·a + ξ)`,
//! `ξ ~ Unif[-half_width, half_width]`, reflected into [0, 1].
//!
//! With each gain at most `2·half_width` the kernel is 1-Lipschitz in total
//! variation under the unit-diameter metric, and the law of the next pixel has a
//! closed form, which makes exact backups available for testing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cover::{point, MetricBox};
use crate::env::{Dynamics, Emission, Initial, RewardSpec, RichCldMdp};
use crate::error::{invalid_param, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub state_gain: f64,
    pub action_gain: f64,
    pub half_width: f64,
}

impl Default for Drift {
    fn default() -> Self {
        Self { state_gain: 0.5, action_gain: 0.5, half_width: 0.25 }
    }
}

fn reflect(y: f64) -> f64 {
    if y < 0.0 {
        -y
    } else if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

impl Drift {
    pub fn mean(&self, s: f64, a: f64) -> f64 {
        self.state_gain * s + self.action_gain * a
    }

    pub fn sample_next(&self, s: f64, a: f64, rng: &mut SimRng) -> f64 {
        let xi = rng.gen_range(-self.half_width..=self.half_width);
        reflect(self.mean(s, a) + xi).clamp(0.0, 1.0)
    }

    /// P(s' ∈ [lo, hi]) for `0 <= lo <= hi <= 1`.
    pub fn interval_probability(&self, s: f64, a: f64, lo: f64, hi: f64) -> f64 {
        let m = self.mean(s, a);
        let (a0, a1) = (m - self.half_width, m + self.half_width);
        let overlap = |l: f64, u: f64| (u.min(a1) - l.max(a0)).max(0.0);
        // Mass reflected at 0 comes from [-hi, -lo]; at 1 from [2 - hi, 2 - lo].
        let mass = overlap(lo, hi) + overlap(-hi, -lo) + overlap(2.0 - hi, 2.0 - lo);
        mass / (2.0 * self.half_width)
    }

    /// Law of the pixel index of s' for an observation of `width` pixels.
    pub fn pixel_distribution(&self, s: f64, a: f64, width: u32) -> Vec<f64> {
        let w = width as f64;
        (0..width)
            .map(|j| self.interval_probability(s, a, j as f64 / w, (j + 1) as f64 / w))
            .collect()
    }
}

/// The 1-d toy: S = A = [0, 1], pixel observations, start `start`, and a bump
/// reward centred at `goal` on the final layer.
pub fn make_drift_toy(horizon: usize, obs_width: u32, start: f64, goal: f64, drift: Drift) -> Result<RichCldMdp> {
    if drift.state_gain < 0.0 || drift.action_gain < 0.0 {
        return Err(invalid_param("drift gains must be nonnegative"));
    }
    if drift.state_gain.max(drift.action_gain) > 2.0 * drift.half_width + 1e-12 {
        return Err(invalid_param("drift gains exceed the total-variation Lipschitz budget"));
    }
    if !(0.0..=0.5).contains(&drift.half_width) || drift.half_width == 0.0 {
        return Err(invalid_param("noise half-width must lie in (0, 0.5]"));
    }
    let mdp = RichCldMdp {
        label: "drift-toy".into(),
        horizon,
        state_box: MetricBox::unit(1),
        action_box: MetricBox::unit(1),
        dynamics: Dynamics::Drift(drift),
        reward: RewardSpec::Bump { target: vec![goal], width: 1.0, layers: vec![horizon], scale: 1.0 },
        emission: Emission::Pixel { width: obs_width },
        initial: Initial::Fixed(point(&[start])),
    };
    mdp.check_reward_budget()?;
    Ok(mdp)
}

/// The drift toy with the goal bump paid on every layer at scale `1/H`, so the
/// return stays in [0, 1] and every layer carries reward signal.
pub fn make_dense_drift_toy(horizon: usize, obs_width: u32, start: f64, goal: f64, drift: Drift) -> Result<RichCldMdp> {
    let mut mdp = make_drift_toy(horizon, obs_width, start, goal, drift)?;
    mdp.reward = RewardSpec::Bump {
        target: vec![goal],
        width: 1.0,
        layers: (1..=horizon).collect(),
        scale: 1.0 / horizon as f64,
    };
    mdp.label = "dense-drift-toy".into();
    mdp.check_reward_budget()?;
    Ok(mdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn pixel_law_is_a_distribution() {
        let d = Drift::default();
        for &(s, a) in &[(0.0, 0.0), (0.3, 0.9), (1.0, 1.0), (0.5, 0.5)] {
            let p = d.pixel_distribution(s, a, 100);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&q| q >= 0.0));
        }
    }

    #[test]
    fn sampled_frequencies_match_closed_form() {
        let d = Drift::default();
        let mut rng = seeded(11);
        let (s, a) = (0.1, 0.05);
        let n = 200_000;
        let hits = (0..n).filter(|_| d.sample_next(s, a, &mut rng) < 0.1).count();
        let exact = d.interval_probability(s, a, 0.0, 0.1);
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - exact).abs() < 4.0 * sigma, "{} vs {exact}", hits as f64 / n as f64);
    }

    #[test]
    fn total_variation_is_one_lipschitz() {
        let d = Drift::default();
        let mut rng = seeded(5);
        for _ in 0..500 {
            let (s1, a1, s2, a2): (f64, f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen(), rng.gen());
            let p = d.pixel_distribution(s1, a1, 200);
            let q = d.pixel_distribution(s2, a2, 200);
            let tv = 0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>();
            assert!(tv <= (s1 - s2).abs() + (a1 - a2).abs() + 1e-9);
        }
    }
}
