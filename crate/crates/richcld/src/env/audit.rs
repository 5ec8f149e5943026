//! Empirical check of total-variation Lipschitzness of the latent transitions.

use crate::cover::{CoverIndex, Point};
use crate::env::RichCldMdp;
use crate::error::{invalid_param, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    /// Largest binned-TV / distance ratio over the evaluated pairs.
    pub max_ratio: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

/// A pair of state-action points to compare.
pub type AuditPair = (Point, Point, Point, Point);

/// Samples `pairs` uniform pairs and bins `mc_samples` successors of each side on a
/// state cover of scale `bin_eta`. Diagnostic only.
pub fn tv_lipschitz_audit(
    mdp: &RichCldMdp,
    pairs: usize,
    mc_samples: usize,
    bin_eta: f64,
    rng: &mut SimRng,
) -> Result<AuditReport> {
    let list: Vec<AuditPair> = (0..pairs)
        .map(|_| {
            (
                mdp.state_box.sample_uniform(rng),
                mdp.action_box.sample_uniform(rng),
                mdp.state_box.sample_uniform(rng),
                mdp.action_box.sample_uniform(rng),
            )
        })
        .collect();
    audit_pairs(mdp, &list, mc_samples, bin_eta, rng)
}

pub fn audit_pairs(
    mdp: &RichCldMdp,
    pairs: &[AuditPair],
    mc_samples: usize,
    bin_eta: f64,
    rng: &mut SimRng,
) -> Result<AuditReport> {
    if mc_samples == 0 {
        return Err(invalid_param("audit needs at least one successor sample"));
    }
    let bins = CoverIndex::build(&mdp.state_box, bin_eta)?;
    let mut report = AuditReport { max_ratio: 0.0, pairs_used: 0, pairs_skipped: 0 };
    for (s1, a1, s2, a2) in pairs {
        let dist = mdp.state_box.distance(s1, s2) + mdp.action_box.distance(a1, a2);
        if dist == 0.0 {
            report.pairs_skipped += 1;
            continue;
        }
        let p = successor_histogram(mdp, &bins, s1, a1, mc_samples, rng)?;
        let q = successor_histogram(mdp, &bins, s2, a2, mc_samples, rng)?;
        let tv = 0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>();
        report.max_ratio = report.max_ratio.max(tv / dist);
        report.pairs_used += 1;
    }
    Ok(report)
}

fn successor_histogram(
    mdp: &RichCldMdp,
    bins: &CoverIndex,
    s: &[f64],
    a: &[f64],
    n: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let mut hist = vec![0.0; bins.d_eta()];
    for _ in 0..n {
        let next = mdp.step(1, s, a, rng);
        hist[bins.disc(&next)?.0] += 1.0 / n as f64;
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::point;
    use crate::env::drift::{make_drift_toy, Drift};
    use crate::rng::seeded;

    #[test]
    fn duplicate_pairs_are_skipped() {
        let mdp = make_drift_toy(3, 100, 0.1, 0.9, Drift::default()).unwrap();
        let s = point(&[0.3]);
        let a = point(&[0.6]);
        let rep = audit_pairs(&mdp, &[(s.clone(), a.clone(), s, a)], 100, 0.1, &mut seeded(1)).unwrap();
        assert_eq!(rep.pairs_skipped, 1);
        assert_eq!(rep.pairs_used, 0);
        assert_eq!(rep.max_ratio, 0.0);
    }
}
