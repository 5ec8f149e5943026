//! Two states at distance δ, two actions, three successor states (the tracked
//! successor, its mirror, and one absorbing sink holding the remaining mass).
//!
//! Transitions are 1-Lipschitz in total variation, yet the population-optimal
//! inverse-kinematics and contrastive classifiers separate the two states by a
//! constant margin, so neither objective yields a Lipschitz representation.

use num_traits::{FromPrimitive, Num, Signed};

use crate::error::{invalid_param, Result};

pub const STATES: usize = 2;
pub const ACTIONS: usize = 2;
/// Successors: tracked state, mirrored state, sink.
pub const SUCCESSORS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CounterexampleDynamics<T> {
    pub delta: T,
}

impl<T> CounterexampleDynamics<T>
where
    T: Num + Signed + Copy + PartialOrd + FromPrimitive,
{
    pub fn new(delta: T) -> Result<Self> {
        let limit = T::one() / T::from_u32(10).expect("small constant");
        if delta <= T::zero() || delta > limit {
            return Err(invalid_param("delta must lie in (0, 0.1]"));
        }
        Ok(Self { delta })
    }

    fn two(&self) -> T {
        T::one() + T::one()
    }

    /// Successor law of state `s` under action `a` (0 = the first action).
    pub fn row(&self, s: usize, a: usize) -> [T; SUCCESSORS] {
        let d = self.delta;
        let two_d = self.two() * d;
        let residual = T::one() - (d + two_d);
        match (s, a) {
            (0, 0) => [two_d, d, residual],
            (1, 0) => [d, two_d, residual],
            // The second action moves both states identically.
            (_, _) => [d, two_d, residual],
        }
    }

    pub fn state_distance(&self, s1: usize, s2: usize) -> T {
        if s1 == s2 {
            T::zero()
        } else {
            self.delta
        }
    }

    pub fn action_distance(&self, a1: usize, a2: usize) -> T {
        if a1 == a2 {
            T::zero()
        } else {
            T::one()
        }
    }

    pub fn total_variation(&self, p: &[T; SUCCESSORS], q: &[T; SUCCESSORS]) -> T {
        let sum = p.iter().zip(q).fold(T::zero(), |acc, (x, y)| acc + (*x - *y).abs());
        sum / self.two()
    }

    /// Exact max of TV / D over all row pairs at positive distance.
    pub fn tv_lipschitz_ratio(&self) -> T {
        let mut best = T::zero();
        for s1 in 0..STATES {
            for a1 in 0..ACTIONS {
                for s2 in 0..STATES {
                    for a2 in 0..ACTIONS {
                        let dist = self.state_distance(s1, s2) + self.action_distance(a1, a2);
                        if dist == T::zero() {
                            continue;
                        }
                        let ratio = self.total_variation(&self.row(s1, a1), &self.row(s2, a2)) / dist;
                        if ratio > best {
                            best = ratio;
                        }
                    }
                }
            }
        }
        best
    }

    /// Population-optimal probability that the first action was taken, given the
    /// current state and the tracked successor, under uniformly random actions.
    pub fn inverse_kinematics(&self, s: usize) -> T {
        let p0 = self.row(s, 0)[0];
        let p1 = self.row(s, 1)[0];
        p0 / (p0 + p1)
    }

    pub fn inverse_kinematics_gap(&self) -> T {
        self.inverse_kinematics(0) - self.inverse_kinematics(1)
    }

    /// Marginal of the tracked successor when states are drawn from `rho` and
    /// actions uniformly.
    pub fn successor_marginal(&self, rho: [T; STATES]) -> T {
        let mut total = T::zero();
        for (s, weight) in rho.iter().enumerate() {
            let mean = (self.row(s, 0)[0] + self.row(s, 1)[0]) / self.two();
            total = total + *weight * mean;
        }
        total
    }

    /// Optimal contrastive classifier P(s, a, s') / (P(s, a, s') + marginal(s')).
    pub fn contrastive(&self, s: usize, rho: [T; STATES]) -> T {
        let p = self.row(s, 0)[0];
        p / (p + self.successor_marginal(rho))
    }

    pub fn contrastive_gap(&self, rho: [T; STATES]) -> T {
        self.contrastive(0, rho) - self.contrastive(1, rho)
    }
}

pub fn make_counterexample_mdp(delta: f64) -> Result<CounterexampleDynamics<f64>> {
    CounterexampleDynamics::new(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn rows_sum_to_one_exactly() {
        let c = CounterexampleDynamics::new(Ratio::new(1i64, 100)).unwrap();
        for s in 0..STATES {
            for a in 0..ACTIONS {
                let row = c.row(s, a);
                assert_eq!(row.iter().fold(Ratio::from_integer(0), |acc, x| acc + x), Ratio::from_integer(1));
                assert_eq!(row[2], Ratio::new(97, 100));
            }
        }
    }

    #[test]
    fn gaps_are_one_sixth_exactly() {
        for den in [10i64, 100, 1000, 10_000] {
            let c = CounterexampleDynamics::new(Ratio::new(1i64, den)).unwrap();
            let sixth = Ratio::new(1, 6);
            assert_eq!(c.inverse_kinematics_gap(), sixth);
            let rho = [Ratio::from_integer(0), Ratio::from_integer(1)];
            assert_eq!(c.successor_marginal(rho), c.delta);
            assert_eq!(c.contrastive_gap(rho), sixth);
            assert_eq!(c.tv_lipschitz_ratio(), Ratio::from_integer(1));
        }
    }

    #[test]
    fn first_action_rows_differ_by_delta() {
        let c = make_counterexample_mdp(0.05).unwrap();
        let tv = c.total_variation(&c.row(0, 0), &c.row(1, 0));
        assert!((tv - 0.05).abs() < 1e-15);
        assert_eq!(c.total_variation(&c.row(0, 1), &c.row(1, 1)), 0.0);
    }

    #[test]
    fn delta_range_is_enforced() {
        assert!(make_counterexample_mdp(0.0).is_err());
        assert!(make_counterexample_mdp(0.2).is_err());
        assert!(make_counterexample_mdp(0.1).is_ok());
    }
}
