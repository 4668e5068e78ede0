//! Reference values for the built-in designs and the checks behind
//! `experiment --check`.
//!
//! Statistical anchors are meaningful only at full scale (1000 instances per
//! block).

use std::fmt;

use prosumer_cournot::{DesignName, ExperimentDesign, Side};

use crate::error::{Result, SimError};
use crate::experiments::{
    aggregate, midpoint_solutions, sweep_series, GroupKey, Grouping, Moments, RunRecord,
};

/// Tolerance for identities that hold up to rounding.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// `|mean - target| <= max(4 SE, 10% of |target|)`.
pub fn near_mean(name: &str, m: Moments, target: f64) -> Check {
    let tol = (4.0 * m.se).max(0.1 * target.abs());
    let gap = (m.mean - target).abs();
    Check::new(
        name,
        gap <= tol,
        format!("mean {:.4} (se {:.4}) vs {target}, tol {tol:.4}", m.mean, m.se),
    )
}

pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Check {
    Check::new(
        name,
        (value - target).abs() <= tol,
        format!("{value:.4} vs {target} ± {tol}"),
    )
}

pub fn in_range(name: &str, value: f64, lo: f64, hi: f64) -> Check {
    Check::new(
        name,
        (lo..=hi).contains(&value),
        format!("{value:.4} in [{lo}, {hi}]"),
    )
}

/// Reference means of the two-prosumer duality deltas.
pub fn two_prosumer_checks(records: &[RunRecord]) -> Result<Vec<Check>> {
    let all = aggregate(records, Grouping::All)?;
    let g = &all.groups[0];
    let mut out = vec![
        near_mean("mean dx_s1 (all)", g.dx_s[0], 0.281),
        near_mean("mean dx_s2 (all)", g.dx_s[1], 0.262),
        near_mean("mean dp (all)", g.dp, -0.54),
    ];
    let sides = aggregate(records, Grouping::Side)?;
    match sides
        .groups
        .iter()
        .find(|g| g.key == GroupKey::Side(Side::Below))
    {
        Some(below) => out.push(within(
            "mean dx_s1 (below line)",
            below.dx_s[0].mean,
            -0.002,
            0.01,
        )),
        None => out.push(Check::new(
            "mean dx_s1 (below line)",
            false,
            "no instance falls below the indifference line",
        )),
    }
    out.push(price_identity(g.dp.mean, &g.dx_s));
    Ok(out)
}

fn price_identity(mean_dp: f64, dx: &[Moments]) -> Check {
    let sum: f64 = dx.iter().map(|m| m.mean).sum();
    Check::new(
        "mean dp = -sum(mean dx_s)",
        (mean_dp + sum).abs() <= IDENTITY_TOLERANCE,
        format!("{mean_dp:e} vs {:e}", -sum),
    )
}

/// Reference means of the seven-prosumer duality deltas.
pub fn seven_prosumer_checks(records: &[RunRecord]) -> Result<Vec<Check>> {
    let all = aggregate(records, Grouping::All)?;
    let g = &all.groups[0];
    let mut out: Vec<Check> = g
        .dx_s
        .iter()
        .enumerate()
        .map(|(i, m)| in_range(&format!("mean dx_s{}", i + 1), m.mean, 0.07, 0.11))
        .collect();
    out.push(within("mean dp", g.dp.mean, -0.637, 0.08));
    out.push(price_identity(g.dp.mean, &g.dx_s));
    Ok(out)
}

/// Block means of `prosumer` within `sigmas` SE of the midpoint solve, for
/// every block.
pub fn midpoint_checks(
    design: &ExperimentDesign,
    records: &[RunRecord],
    prosumer: usize,
    sigmas: f64,
) -> Result<Vec<Check>> {
    let anchors = midpoint_solutions(design)?;
    Ok(sweep_series(records, prosumer)?
        .iter()
        .map(|row| {
            let anchor = anchors[row.k][prosumer];
            let m = row.x_s_duality;
            let z = (m.mean - anchor) / m.se;
            Check::new(
                format!("midpoint oracle x_s{} k={}", prosumer + 1, row.k),
                z.abs() <= sigmas,
                format!("mean {:.4} vs midpoint {anchor:.4} ({z:+.2} se)", m.mean),
            )
        })
        .collect())
}

fn sweep_anchor(
    records: &[RunRecord],
    prosumer: usize,
    k: usize,
    target: f64,
    tol: f64,
) -> Result<Check> {
    let rows = sweep_series(records, prosumer)?;
    let value = rows.iter().find(|r| r.k == k).map(|r| r.x_s_duality.mean);
    let name = format!("x_s{} k={k}", prosumer + 1);
    Ok(match value {
        Some(v) => within(&name, v, target, tol),
        None => Check::new(name, false, "block missing"),
    })
}

/// Duality minus baseline supply of prosumer 1: positive in every block and
/// strictly decreasing from k = 1 onwards.
///
/// `records` must come from a run with common random numbers, so that the
/// j-th instance of every block shares its random stream. Each step is then
/// tested on the paired per-instance differences: the mean drop must exceed
/// 3 SE of that paired mean.
pub fn delta_trend_checks(design: &ExperimentDesign, records: &[RunRecord]) -> Result<Vec<Check>> {
    if !design.common_random_numbers {
        return Err(SimError::Input(
            "the paired trend check needs a common-random-numbers run".into(),
        ));
    }
    let rows = sweep_series(records, 0)?;
    let mut out: Vec<Check> = rows
        .iter()
        .map(|r| {
            Check::new(
                format!("delta x_s1 k={} positive", r.k),
                r.delta.mean > 0.0,
                format!("{:.5} (se {:.5})", r.delta.mean, r.delta.se),
            )
        })
        .collect();
    let mut by_block: Vec<Vec<f64>> = vec![Vec::new(); design.blocks.len()];
    for r in records {
        if let Some(s) = r.solved() {
            by_block[r.block_index].push(s.dx_s[0]);
        }
    }
    for k in 1..by_block.len().saturating_sub(1) {
        let (a, b) = (&by_block[k], &by_block[k + 1]);
        let name = format!("delta x_s1 k={k}->{} decreasing", k + 1);
        if a.len() != b.len() || a.is_empty() {
            out.push(Check::new(name, false, "blocks cannot be paired"));
            continue;
        }
        let drops: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let m = Moments::of(&drops);
        out.push(Check::new(
            name,
            m.mean > 3.0 * m.se,
            format!("paired drop {:.5} vs 3se {:.5}", m.mean, 3.0 * m.se),
        ));
    }
    Ok(out)
}

pub fn cost_sweep_checks(design: &ExperimentDesign, records: &[RunRecord]) -> Result<Vec<Check>> {
    let mut out = vec![
        sweep_anchor(records, 0, 1, 4.28, 0.15)?,
        sweep_anchor(records, 0, 2, 3.77, 0.15)?,
        sweep_anchor(records, 0, 7, 2.35, 0.15)?,
        sweep_anchor(records, 6, 0, 0.96, 0.1)?,
        sweep_anchor(records, 6, 6, 0.50, 0.1)?,
    ];
    out.extend(midpoint_checks(design, records, 0, 4.0)?);
    out.extend(midpoint_checks(design, records, 6, 4.0)?);
    Ok(out)
}

pub fn demand_sweep_checks(
    design: &ExperimentDesign,
    records: &[RunRecord],
) -> Result<Vec<Check>> {
    let mut out = vec![
        sweep_anchor(records, 0, 1, 2.61, 0.1)?,
        sweep_anchor(records, 0, 2, 2.58, 0.1)?,
        sweep_anchor(records, 0, 7, 2.41, 0.1)?,
        sweep_anchor(records, 6, 0, 2.26, 0.1)?,
        sweep_anchor(records, 6, 1, 2.26, 0.1)?,
        sweep_anchor(records, 6, 6, 2.05, 0.1)?,
    ];
    out.extend(midpoint_checks(design, records, 0, 4.0)?);
    out.extend(midpoint_checks(design, records, 6, 4.0)?);
    Ok(out)
}

/// Every sampled instance passed the deviation and dynamics oracles.
pub fn verification_check(records: &[RunRecord]) -> Check {
    let sampled: Vec<_> = records
        .iter()
        .filter_map(|r| r.solved().and_then(|s| s.verification))
        .collect();
    let failed = sampled.iter().filter(|v| !v.passed()).count();
    let unsolved = records.iter().filter(|r| r.solved().is_none()).count();
    Check::new(
        "sampled verification",
        failed == 0 && unsolved == 0,
        format!(
            "{} sampled, {failed} failed, {unsolved} unsolved",
            sampled.len()
        ),
    )
}

/// All checks that apply to a built-in design.
pub fn design_checks(
    which: DesignName,
    design: &ExperimentDesign,
    records: &[RunRecord],
) -> Result<Vec<Check>> {
    let mut out = match which {
        DesignName::TwoProsumer => two_prosumer_checks(records)?,
        DesignName::SevenProsumer => seven_prosumer_checks(records)?,
        DesignName::CostSweep => cost_sweep_checks(design, records)?,
        DesignName::DemandSweep => demand_sweep_checks(design, records)?,
    };
    out.push(verification_check(records));
    Ok(out)
}
