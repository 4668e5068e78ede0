//! Table layouts for experiment results and indifference lines.

use std::path::{Path, PathBuf};

use prosumer_cournot::{ExperimentDesign, LinePoint};

use crate::error::{Result, SimError};
use crate::experiments::{
    aggregate, midpoint_solutions, sweep_series, Aggregation, Grouping, RunRecord,
};
use crate::table::{emit_table, Cell, OutputTable};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn preamble(table: &mut OutputTable, design: &ExperimentDesign) {
    table
        .comment("design", &design.name)
        .comment("seed", design.master_seed)
        .comment("version", VERSION);
}

fn uniform_size(records: &[RunRecord]) -> Result<usize> {
    let n = records.first().map_or(0, |r| r.instance.len());
    if records.iter().any(|r| r.instance.len() != n) {
        return Err(SimError::Input(
            "records mix markets of different sizes".into(),
        ));
    }
    Ok(n)
}

fn indexed(prefix: &'static str, n: usize, suffix: &'static str) -> impl Iterator<Item = String> {
    (1..=n).map(move |i| format!("{prefix}{i}{suffix}"))
}

/// One row per instance. `flags` packs bits 0-1 for the duality solution and
/// bits 2-3 for the baseline (negative supply, non-positive price);
/// `verified` is -1 when not sampled, else 1 pass / 0 fail.
pub fn records_table(design: &ExperimentDesign, records: &[RunRecord]) -> Result<OutputTable> {
    let n = match records.first() {
        Some(_) => uniform_size(records)?,
        None => design.blocks.first().map_or(0, |b| b.n_prosumers()),
    };
    let two = n == 2;
    let mut header: Vec<String> = vec!["instance".into(), "block".into(), "D".into()];
    for i in 1..=n {
        header.extend([format!("a_s{i}"), format!("b_s{i}"), format!("x_b{i}")]);
    }
    header.extend(indexed("x_s", n, "_duality"));
    header.extend(indexed("x_s", n, "_baseline"));
    header.extend(["p_duality".into(), "p_baseline".into()]);
    header.extend(indexed("dx_s", n, ""));
    header.push("dp".into());
    if two {
        header.push("side".into());
    }
    header.extend(["flags".into(), "verified".into()]);

    let mut table = OutputTable::new(header);
    preamble(&mut table, design);
    for r in records {
        let mut row: Vec<Cell> = vec![r.instance_index.into(), r.block_index.into()];
        row.push(r.instance.demand().into());
        for p in r.instance.prosumers() {
            row.extend([p.a_s.into(), p.b_s.into(), p.x_b.into()]);
        }
        match r.solved() {
            Some(s) => {
                row.extend(s.x_s_duality.iter().map(|&v| Cell::from(v)));
                row.extend(s.x_s_baseline.iter().map(|&v| Cell::from(v)));
                row.extend([s.p_duality.into(), s.p_baseline.into()]);
                row.extend(s.dx_s.iter().map(|&v| Cell::from(v)));
                row.push(s.dp.into());
                if two {
                    row.push(Cell::Int(s.side.map_or(0, |side| side.code() as i64)));
                }
                let flags = s.flags_duality.bits() | s.flags_baseline.bits() << 2;
                row.push(Cell::Int(flags as i64));
                row.push(Cell::Int(match s.verification {
                    None => -1,
                    Some(v) => v.passed() as i64,
                }));
            }
            None => {
                let missing = 3 * n + 3 + two as usize;
                row.extend(std::iter::repeat_n(Cell::Num(f64::NAN), missing));
                row.extend([Cell::Int(-1), Cell::Int(-1)]);
            }
        }
        table.push(row);
    }
    Ok(table)
}

/// `group, n, mean_dx_s1, se_dx_s1, ..., mean_dp, se_dp, n_flagged`.
pub fn aggregate_table(design: &ExperimentDesign, agg: &Aggregation) -> OutputTable {
    let n = agg.groups.first().map_or(0, |g| g.dx_s.len());
    let mut header = vec!["group".to_string(), "n".to_string()];
    for i in 1..=n {
        header.extend([format!("mean_dx_s{i}"), format!("se_dx_s{i}")]);
    }
    header.extend(["mean_dp", "se_dp", "n_flagged"].map(String::from));
    let mut table = OutputTable::new(header);
    preamble(&mut table, design);
    if agg.empty_groups > 0 {
        table.comment("empty_groups", agg.empty_groups);
    }
    if agg.failed > 0 {
        table.comment("failed_instances", agg.failed);
    }
    for g in &agg.groups {
        let mut row: Vec<Cell> = vec![g.key.label().into(), g.count.into()];
        for m in &g.dx_s {
            row.extend([m.mean.into(), m.se.into()]);
        }
        row.extend([g.dp.mean.into(), g.dp.se.into(), g.n_flagged.into()]);
        table.push(row);
    }
    table
}

/// `k, mean_x_s, se_x_s, mean_x_s_baseline, se_x_s_baseline, mean_delta`
/// for one prosumer; `mean_x_s` is the duality supply.
pub fn sweep_table(
    design: &ExperimentDesign,
    records: &[RunRecord],
    prosumer: usize,
) -> Result<OutputTable> {
    let mut table = OutputTable::new([
        "k",
        "mean_x_s",
        "se_x_s",
        "mean_x_s_baseline",
        "se_x_s_baseline",
        "mean_delta",
    ]);
    preamble(&mut table, design);
    table.comment("prosumer", prosumer + 1);
    for row in sweep_series(records, prosumer)? {
        table.push(vec![
            row.k.into(),
            row.x_s_duality.mean.into(),
            row.x_s_duality.se.into(),
            row.x_s_baseline.mean.into(),
            row.x_s_baseline.se.into(),
            row.delta.mean.into(),
        ]);
    }
    Ok(table)
}

/// Duality supplies of each block's midpoint instance.
pub fn midpoint_table(design: &ExperimentDesign) -> Result<OutputTable> {
    let solutions = midpoint_solutions(design)?;
    let n = solutions.first().map_or(0, Vec::len);
    if solutions.iter().any(|s| s.len() != n) {
        return Err(SimError::Input("blocks differ in market size".into()));
    }
    let mut header = vec!["k".to_string()];
    header.extend(indexed("x_s", n, ""));
    let mut table = OutputTable::new(header);
    preamble(&mut table, design);
    for (k, x) in solutions.iter().enumerate() {
        let mut row = vec![Cell::from(k)];
        row.extend(x.iter().map(|&v| Cell::from(v)));
        table.push(row);
    }
    Ok(table)
}

pub fn lines_table(points: &[LinePoint]) -> OutputTable {
    let mut table = OutputTable::new(["a_sj", "x_bj", "x_bi"]);
    table.comment("content", "indifference lines").comment("version", VERSION);
    for p in points {
        table.push(vec![p.a_sj.into(), p.x_bj.into(), p.x_bi.into()]);
    }
    table
}

/// Writes every table for a finished run into `dir` and returns the paths
/// in write order.
pub fn write_experiment(
    design: &ExperimentDesign,
    records: &[RunRecord],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: String, table: OutputTable| -> Result<()> {
        let path = dir.join(name);
        emit_table(&table, &path)?;
        written.push(path);
        Ok(())
    };
    put("records.csv".into(), records_table(design, records)?)?;
    if records.is_empty() {
        return Ok(written);
    }
    put(
        "aggregate_all.csv".into(),
        aggregate_table(design, &aggregate(records, Grouping::All)?),
    )?;
    let n = uniform_size(records)?;
    if n == 2 {
        put(
            "aggregate_side.csv".into(),
            aggregate_table(design, &aggregate(records, Grouping::Side)?),
        )?;
    }
    if design.blocks.len() > 1 {
        put(
            "aggregate_block.csv".into(),
            aggregate_table(design, &aggregate(records, Grouping::Block)?),
        )?;
        for i in 0..n {
            put(format!("sweep_prosumer{}.csv", i + 1), sweep_table(design, records, i)?)?;
        }
        put("midpoint.csv".into(), midpoint_table(design)?)?;
    }
    Ok(written)
}
