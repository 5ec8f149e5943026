use std::sync::Arc;

use rand::Rng;

use crate::cover::{CoverIndex, Point};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Nonstationary policy over observations. Layers are 1-based.
pub trait Policy: Send + Sync {
    fn act(&self, h: usize, x: &Observation, rng: &mut SimRng) -> Point;
}

pub type SharedPolicy = Arc<dyn Policy>;

impl<F> Policy for F
where
    F: Fn(usize, &Observation) -> Point + Send + Sync,
{
    fn act(&self, h: usize, x: &Observation, _rng: &mut SimRng) -> Point {
        self(h, x)
    }
}

#[derive(Clone, Debug)]
pub struct ConstantPolicy(pub Point);

impl Policy for ConstantPolicy {
    fn act(&self, _h: usize, _x: &Observation, _rng: &mut SimRng) -> Point {
        self.0.clone()
    }
}

/// Uniform over the centers of an action cover.
#[derive(Clone, Debug)]
pub struct UniformCoverPolicy {
    actions: Vec<Point>,
}

impl UniformCoverPolicy {
    pub fn new(cover: &CoverIndex) -> Self {
        Self { actions: cover.centers().to_vec() }
    }

    pub fn actions(&self) -> &[Point] {
        &self.actions
    }
}

impl Policy for UniformCoverPolicy {
    fn act(&self, _h: usize, _x: &Observation, rng: &mut SimRng) -> Point {
        self.actions[rng.gen_range(0..self.actions.len())].clone()
    }
}

/// `first` on layers before `switch`, `second` from `switch` on.
#[derive(Clone)]
pub struct ComposedPolicy {
    first: SharedPolicy,
    switch: usize,
    second: SharedPolicy,
}

impl Policy for ComposedPolicy {
    fn act(&self, h: usize, x: &Observation, rng: &mut SimRng) -> Point {
        if h < self.switch {
            self.first.act(h, x, rng)
        } else {
            self.second.act(h, x, rng)
        }
    }
}

/// π ∘_t π′. `t = H + 1` means π on every layer.
pub fn compose_policy(pi: SharedPolicy, t: usize, pi_prime: SharedPolicy, horizon: usize) -> Result<SharedPolicy> {
    if t == 0 || t > horizon + 1 {
        return Err(Error::LayerOutOfRange { h: t, max: horizon + 1 });
    }
    Ok(Arc::new(ComposedPolicy { first: pi, switch: t, second: pi_prime }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{point, MetricBox};
    use crate::rng::seeded;

    fn tagged(tag: f64) -> SharedPolicy {
        Arc::new(ConstantPolicy(point(&[tag])))
    }

    #[test]
    fn composition_dispatches_by_layer() {
        let x = Observation::Token(0);
        let mut rng = seeded(0);
        let all_second = compose_policy(tagged(0.0), 1, tagged(1.0), 3).unwrap();
        let all_first = compose_policy(tagged(0.0), 4, tagged(1.0), 3).unwrap();
        let mid = compose_policy(tagged(0.0), 2, tagged(1.0), 3).unwrap();
        for h in 1..=3 {
            assert_eq!(all_second.act(h, &x, &mut rng)[0], 1.0);
            assert_eq!(all_first.act(h, &x, &mut rng)[0], 0.0);
            assert_eq!(mid.act(h, &x, &mut rng)[0], if h < 2 { 0.0 } else { 1.0 });
        }
        assert!(compose_policy(tagged(0.0), 0, tagged(1.0), 3).is_err());
        assert!(compose_policy(tagged(0.0), 5, tagged(1.0), 3).is_err());
    }

    #[test]
    fn uniform_cover_policy_hits_every_center() {
        let cover = CoverIndex::build(&MetricBox::unit(1), 0.25).unwrap();
        let p = UniformCoverPolicy::new(&cover);
        let mut rng = seeded(1);
        let mut seen = [0usize; 4];
        for _ in 0..4000 {
            let a = p.act(1, &Observation::Token(0), &mut rng);
            seen[cover.disc(&a).unwrap().0] += 1;
        }
        assert!(seen.iter().all(|&n| n > 850 && n < 1150), "{seen:?}");
    }
}
