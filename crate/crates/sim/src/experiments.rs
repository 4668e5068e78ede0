//! Batch runs of an experiment design: every instance is solved under both
//! objectives, then folded into block or side means with standard errors.
//!
//! Instances are solved in parallel, but records always come back in
//! instance order and aggregation is a sequential fold, so every output is
//! independent of the worker count.

use std::collections::BTreeMap;

use prosumer_cournot::equilibrium::DECADE_GRID;
use prosumer_cournot::{
    best_response_dynamics, classify_two_prosumer, compare_modes, deviation_check, solve_n,
    DynamicsConfig, ExperimentDesign, Flags, MarketInstance, Mode, Side,
};
use rayon::prelude::*;

use crate::error::{Result, SimError};

/// Largest payoff gain tolerated by the sampled Nash check.
pub const NASH_TOLERANCE: f64 = 1e-9;
/// Agreement required between the dynamics oracle and the direct solve.
pub const DYNAMICS_AGREEMENT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Verify every `k`-th instance (by index) with the deviation and
    /// dynamics oracles; `None` disables verification.
    pub verify_every: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            threads: None,
            verify_every: Some(100),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    /// Both equilibria survive the deviation grid.
    pub is_nash: bool,
    pub deviation_improvement_max: f64,
    /// `None` when the dynamics did not converge in either mode.
    pub dynamics_agree: Option<bool>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.is_nash && self.dynamics_agree != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub x_s_duality: Vec<f64>,
    pub x_s_baseline: Vec<f64>,
    pub p_duality: f64,
    pub p_baseline: f64,
    pub dx_s: Vec<f64>,
    pub dp: f64,
    /// Position of prosumer 1 relative to its indifference line (n = 2 only).
    pub side: Option<Side>,
    pub flags_duality: Flags,
    pub flags_baseline: Flags,
    pub verification: Option<Verification>,
}

impl Solved {
    pub fn flagged(&self) -> bool {
        self.flags_duality.any() || self.flags_baseline.any()
    }

    pub fn x_s(&self, mode: Mode) -> &[f64] {
        match mode {
            Mode::Duality => &self.x_s_duality,
            Mode::Baseline => &self.x_s_baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub instance_index: usize,
    pub block_index: usize,
    /// Sampled parameters (stored in duality mode).
    pub instance: MarketInstance,
    pub outcome: std::result::Result<Solved, prosumer_cournot::Error>,
}

impl RunRecord {
    pub fn solved(&self) -> Option<&Solved> {
        self.outcome.as_ref().ok()
    }
}

/// Solves every instance of `design` under both objectives.
///
/// Per-instance solver failures are stored in the record; only an invalid
/// design or a thread pool failure aborts the batch.
pub fn run_batch(design: &ExperimentDesign, opts: &RunOptions) -> Result<Vec<RunRecord>> {
    design.validate()?;
    let slots = design.slots();
    let work = || {
        slots
            .par_iter()
            .map(|slot| {
                let instance = design.instance(slot, Mode::Duality)?;
                let verify = opts
                    .verify_every
                    .is_some_and(|k| k > 0 && slot.instance_index % k == 0);
                let outcome = solve_record(&instance, verify);
                Ok(RunRecord {
                    instance_index: slot.instance_index,
                    block_index: slot.block_index,
                    instance,
                    outcome,
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(work),
        None => work(),
    }
}

fn solve_record(
    m: &MarketInstance,
    verify: bool,
) -> std::result::Result<Solved, prosumer_cournot::Error> {
    let cmp = compare_modes(m)?;
    let side = if m.len() == 2 {
        Some(classify_two_prosumer(m, 0)?.side)
    } else {
        None
    };
    let verification = if verify {
        Some(verify_instance(m)?)
    } else {
        None
    };
    Ok(Solved {
        p_duality: cmp.duality.price,
        p_baseline: cmp.baseline.price,
        flags_duality: cmp.duality.flags,
        flags_baseline: cmp.baseline.flags,
        x_s_duality: cmp.duality.x_s,
        x_s_baseline: cmp.baseline.x_s,
        dx_s: cmp.delta.dx_s,
        dp: cmp.delta.dp,
        side,
        verification,
    })
}

/// Runs both independent oracles against the direct solve in each mode.
pub fn verify_instance(m: &MarketInstance) -> prosumer_cournot::Result<Verification> {
    let mut is_nash = true;
    let mut gain = f64::NEG_INFINITY;
    let mut agree = Some(true);
    for mode in Mode::BOTH {
        let m = m.with_mode(mode);
        let eq = solve_n(&m)?;
        let report = deviation_check(&m, &eq.x_s, &DECADE_GRID, NASH_TOLERANCE)?;
        is_nash &= report.is_nash;
        gain = gain.max(report.deviation_improvement_max);
        match best_response_dynamics(&m, &vec![0.0; m.len()], &DynamicsConfig::default()) {
            Ok(c) => {
                let ok = c
                    .equilibrium
                    .x_s
                    .iter()
                    .zip(&eq.x_s)
                    .all(|(a, b)| (a - b).abs() <= DYNAMICS_AGREEMENT);
                agree = agree.map(|prev| prev && ok);
            }
            Err(prosumer_cournot::Error::NotConverged { .. }) => agree = None,
            Err(e) => return Err(e),
        }
    }
    Ok(Verification {
        is_nash,
        deviation_improvement_max: gain,
        dynamics_agree: agree,
    })
}

/// Mean and standard error (sample standard deviation over `sqrt(count)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub se: f64,
}

impl Moments {
    /// Two-pass mean and variance in slice order. A single value has SE 0.
    pub fn of(values: &[f64]) -> Moments {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Moments { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Moments {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    All,
    Side,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    All,
    Side(Side),
    Block(usize),
}

impl GroupKey {
    pub fn label(&self) -> String {
        match self {
            GroupKey::All => "all".into(),
            GroupKey::Side(s) => s.as_str().into(),
            GroupKey::Block(k) => k.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub key: GroupKey,
    pub count: usize,
    pub dx_s: Vec<Moments>,
    pub dp: Moments,
    pub x_s_duality: Vec<Moments>,
    pub x_s_baseline: Vec<Moments>,
    pub p_duality: Moments,
    pub p_baseline: Moments,
    /// Records with a negative supply or non-positive price in either mode.
    /// They are included in the means.
    pub n_flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub groups: Vec<AggregateStats>,
    /// Groups that had no records and were left out.
    pub empty_groups: usize,
    /// Records whose solve failed; excluded from every group.
    pub failed: usize,
}

pub fn aggregate(records: &[RunRecord], grouping: Grouping) -> Result<Aggregation> {
    if records.is_empty() {
        return Err(SimError::Input("no records to aggregate".into()));
    }
    let solved: Vec<(&RunRecord, &Solved)> = records
        .iter()
        .filter_map(|r| r.solved().map(|s| (r, s)))
        .collect();
    let failed = records.len() - solved.len();

    let mut buckets: BTreeMap<GroupKey, Vec<&Solved>> = BTreeMap::new();
    let mut expected = Vec::new();
    match grouping {
        Grouping::All => expected.push(GroupKey::All),
        Grouping::Side => {
            expected.extend([Side::Above, Side::Below, Side::On].map(GroupKey::Side));
        }
        Grouping::Block => {
            let blocks = records.iter().map(|r| r.block_index).max().unwrap_or(0) + 1;
            expected.extend((0..blocks).map(GroupKey::Block));
        }
    }
    for (record, s) in &solved {
        let key = match grouping {
            Grouping::All => GroupKey::All,
            Grouping::Side => GroupKey::Side(s.side.ok_or_else(|| {
                SimError::Input("side grouping needs two-prosumer records".into())
            })?),
            Grouping::Block => GroupKey::Block(record.block_index),
        };
        buckets.entry(key).or_default().push(s);
    }

    let mut groups = Vec::new();
    let mut empty_groups = 0;
    for key in expected {
        match buckets.get(&key) {
            Some(members) => groups.push(group_stats(key, members)?),
            None => empty_groups += 1,
        }
    }
    Ok(Aggregation {
        groups,
        empty_groups,
        failed,
    })
}

fn group_stats(key: GroupKey, members: &[&Solved]) -> Result<AggregateStats> {
    let n = members[0].dx_s.len();
    if members.iter().any(|s| s.dx_s.len() != n) {
        return Err(SimError::Input(format!(
            "group {} mixes markets of different sizes",
            key.label()
        )));
    }
    let column = |f: &dyn Fn(&Solved) -> f64| -> Moments {
        Moments::of(&members.iter().map(|s| f(s)).collect::<Vec<_>>())
    };
    Ok(AggregateStats {
        key,
        count: members.len(),
        dx_s: (0..n).map(|i| column(&|s| s.dx_s[i])).collect(),
        dp: column(&|s| s.dp),
        x_s_duality: (0..n).map(|i| column(&|s| s.x_s_duality[i])).collect(),
        x_s_baseline: (0..n).map(|i| column(&|s| s.x_s_baseline[i])).collect(),
        p_duality: column(&|s| s.p_duality),
        p_baseline: column(&|s| s.p_baseline),
        n_flagged: members.iter().filter(|s| s.flagged()).count(),
    })
}

/// One block of a sweep for a single prosumer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub x_s_duality: Moments,
    pub x_s_baseline: Moments,
    /// Duality minus baseline supply.
    pub delta: Moments,
}

/// Per-block means of prosumer `prosumer`'s supply under both objectives and
/// of their difference.
pub fn sweep_series(records: &[RunRecord], prosumer: usize) -> Result<Vec<SweepRow>> {
    let agg = aggregate(records, Grouping::Block)?;
    agg.groups
        .iter()
        .map(|g| {
            let GroupKey::Block(k) = g.key else {
                unreachable!("block grouping")
            };
            if prosumer >= g.dx_s.len() {
                return Err(SimError::Input(format!(
                    "prosumer {} out of range for {} prosumers",
                    prosumer + 1,
                    g.dx_s.len()
                )));
            }
            Ok(SweepRow {
                k,
                x_s_duality: g.x_s_duality[prosumer],
                x_s_baseline: g.x_s_baseline[prosumer],
                delta: g.dx_s[prosumer],
            })
        })
        .collect()
}

/// Duality equilibrium of each block with all parameters at their range
/// midpoints: a deterministic anchor for the block means.
pub fn midpoint_solutions(design: &ExperimentDesign) -> Result<Vec<Vec<f64>>> {
    design
        .blocks
        .iter()
        .map(|b| Ok(solve_n(&b.midpoint_instance(Mode::Duality)?)?.x_s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use prosumer_cournot::builtin_design;

    fn small(name: &str) -> ExperimentDesign {
        builtin_design(name, 11).unwrap().scaled(0.05).unwrap()
    }

    #[test]
    fn records_are_in_index_order_and_consistent() {
        let design = small("cost-sweep");
        let records = run_batch(&design, &RunOptions::default()).unwrap();
        assert_eq!(records.len(), 400);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.instance_index, i);
            assert_eq!(r.block_index, i / 50);
            let s = r.solved().unwrap();
            let sum: f64 = s.dx_s.iter().sum();
            assert!((s.dp + sum).abs() <= 1e-12);
            assert!((s.p_duality - s.p_baseline - s.dp).abs() <= 1e-12);
            assert!(s.side.is_none());
            assert_eq!(s.verification.is_some(), i % 100 == 0);
        }
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let design = small("seven-prosumer");
        let one = run_batch(&design, &RunOptions { threads: Some(1), ..Default::default() }).unwrap();
        let four = run_batch(&design, &RunOptions { threads: Some(4), ..Default::default() }).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn moments_basic() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // Sample variance 5/3, SE sqrt(5/12).
        assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(Moments::of(&[7.0]), Moments { mean: 7.0, se: 0.0 });
    }

    #[test]
    fn side_grouping_omits_empty_groups() {
        let records = run_batch(&small("two-prosumer"), &RunOptions::default()).unwrap();
        let agg = aggregate(&records, Grouping::Side).unwrap();
        let total: usize = agg.groups.iter().map(|g| g.count).sum();
        assert_eq!(total, records.len());
        assert_eq!(agg.groups.len() + agg.empty_groups, 3);
        assert!(agg.groups.iter().all(|g| g.count > 0));
    }

    #[test]
    fn side_grouping_rejects_larger_markets() {
        let records = run_batch(&small("seven-prosumer"), &RunOptions::default()).unwrap();
        assert!(aggregate(&records, Grouping::Side).is_err());
        assert!(aggregate(&[], Grouping::All).is_err());
    }

    #[test]
    fn sweep_series_has_one_row_per_block() {
        let records = run_batch(&small("demand-sweep"), &RunOptions::default()).unwrap();
        let rows = sweep_series(&records, 0).unwrap();
        assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
        for r in &rows {
            assert!((r.x_s_duality.mean - r.x_s_baseline.mean - r.delta.mean).abs() < 1e-12);
        }
        assert!(sweep_series(&records, 7).is_err());
    }

    #[test]
    fn sampled_verification_passes() {
        let records = run_batch(
            &small("two-prosumer"),
            &RunOptions { threads: None, verify_every: Some(1) },
        )
        .unwrap();
        for r in &records {
            assert!(r.solved().unwrap().verification.unwrap().passed());
        }
    }
}
