//! The counterexample battery: inverse-kinematics and contrastive objectives
//! separate two states at distance δ by a fixed margin however small δ is.

use std::fmt::Write as _;

use num_rational::Ratio;
use num_traits::ToPrimitive;

use crate::env::counterexample::CounterexampleDynamics;
use crate::env::make_counterexample_mdp;
use crate::error::{invalid_param, Result};

pub const THEORY_SCHEMA: &str = "theory-v1";
/// Float tolerance of the margin check.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryRow {
    pub delta: Ratio<i64>,
    pub inverse_kinematics_gap: Ratio<i64>,
    pub contrastive_gap: Ratio<i64>,
    /// TV-Lipschitz ratio of the construction.
    pub tv_ratio: Ratio<i64>,
    /// Margin divided by the state distance δ; grows without bound as δ → 0.
    pub gap_per_distance: Ratio<i64>,
    pub float_inverse_kinematics_gap: f64,
    pub float_contrastive_gap: f64,
    pub passed: bool,
}

/// Rows for δ = 10^-k, computed exactly and in floating point.
pub fn counterexample_battery(exponents: &[u32]) -> Result<Vec<TheoryRow>> {
    let sixth = Ratio::new(1, 6);
    exponents
        .iter()
        .map(|&k| {
            let den = 10i64.checked_pow(k).ok_or_else(|| invalid_param(format!("10^{k} overflows")))?;
            let exact = CounterexampleDynamics::new(Ratio::new(1, den))?;
            // All mass of ρ on the second state, so the successor marginal is δ.
            let rho = [Ratio::from_integer(0), Ratio::from_integer(1)];
            let ik = exact.inverse_kinematics_gap();
            let contrastive = exact.contrastive_gap(rho);
            let tv_ratio = exact.tv_lipschitz_ratio();
            let float = make_counterexample_mdp(1.0 / den as f64)?;
            let fik = float.inverse_kinematics_gap();
            let fcon = float.contrastive_gap([0.0, 1.0]);
            let passed = ik == sixth
                && contrastive == sixth
                && tv_ratio == Ratio::from_integer(1)
                && (fik - 1.0 / 6.0).abs() <= FLOAT_TOLERANCE
                && (fcon - 1.0 / 6.0).abs() <= FLOAT_TOLERANCE;
            Ok(TheoryRow {
                delta: exact.delta,
                inverse_kinematics_gap: ik,
                contrastive_gap: contrastive,
                tv_ratio,
                gap_per_distance: ik / exact.state_distance(0, 1),
                float_inverse_kinematics_gap: fik,
                float_contrastive_gap: fcon,
                passed,
            })
        })
        .collect()
}

pub fn write_theory_csv<W: std::io::Write>(rows: &[TheoryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "schema",
        "delta",
        "inverse_kinematics_gap",
        "contrastive_gap",
        "tv_ratio",
        "gap_per_distance",
        "float_inverse_kinematics_gap",
        "float_contrastive_gap",
        "passed",
    ])?;
    for r in rows {
        w.write_record([
            THEORY_SCHEMA.to_string(),
            r.delta.to_string(),
            r.inverse_kinematics_gap.to_string(),
            r.contrastive_gap.to_string(),
            r.tv_ratio.to_string(),
            r.gap_per_distance.to_string(),
            format!("{:.17e}", r.float_inverse_kinematics_gap),
            format!("{:.17e}", r.float_contrastive_gap),
            r.passed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table with one PASS/FAIL line per δ and an overall verdict.
pub fn theory_report(rows: &[TheoryRow]) -> String {
    let mut out = String::from("counterexample battery: both margins must equal 1/6 exactly, TV ratio 1\n\n");
    let _ = writeln!(out, "{:>10} {:>8} {:>12} {:>9} {:>14} {:>6}", "delta", "ik_gap", "contrastive", "tv_ratio", "gap/distance", "check");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>10} {:>8} {:>12} {:>9} {:>14} {:>6}",
            r.delta.to_string(),
            r.inverse_kinematics_gap.to_string(),
            r.contrastive_gap.to_string(),
            r.tv_ratio.to_string(),
            format!("{:.1}", r.gap_per_distance.to_f64().unwrap_or(f64::NAN)),
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let all = rows.iter().all(|r| r.passed);
    let _ = writeln!(out, "\noverall: {}", if all { "PASS" } else { "FAIL" });
    out
}
