//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numerical failure,
//! 4 failed `experiment --check`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use prosumer_cournot::{
    best_response_dynamics, builtin_design, compare_modes, deviation_check,
    indifference_line_points, solve_n, DesignName, DynamicsConfig, ExperimentDesign,
    MarketInstance, Mode,
};

use crate::checks::{delta_trend_checks, design_checks};
use crate::error::{Result, SimError};
use crate::experiments::{run_batch, RunOptions, NASH_TOLERANCE};
use crate::market_file::parse_market_file;
use crate::outputs::{lines_table, write_experiment, VERSION};
use crate::table::{emit_table, Cell, OutputTable};

/// Overrides the default output directory of `experiment`.
pub const OUT_DIR_ENV: &str = "PROSUMER_COURNOT_OUT";
const DEFAULT_OUT_DIR: &str = "out";

/// Deviation grid of `verify`: `±k·step` for `k = 1..=GRID_STEPS`.
pub const GRID_STEPS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "prosumer-cournot", version, about = "Cournot equilibria with dual prosumers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Duality,
    Baseline,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one market file and print the equilibrium.
    Solve {
        #[arg(long)]
        market: PathBuf,
        /// Defaults to the mode given in the file.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Also run the deviation and best-response oracles.
        #[arg(long)]
        verify: bool,
    },
    /// Run a built-in or custom experiment and write its tables.
    Experiment {
        /// two-prosumer, seven-prosumer, cost-sweep or demand-sweep.
        #[arg(required_unless_present = "design")]
        name: Option<String>,
        /// Custom design as JSON instead of a built-in name.
        #[arg(long, conflicts_with = "name")]
        design: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplies every block's instance count.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Output directory (default: $PROSUMER_COURNOT_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Verify every k-th instance with the Nash oracles (0 disables).
        #[arg(long, default_value_t = 100)]
        verify_every: usize,
        /// Compare results against the reference values; exit 4 on mismatch.
        #[arg(long)]
        check: bool,
    },
    /// Write indifference lines x_bi = x_bj / (2 a_sj + 2).
    Lines {
        /// Comma-separated competitor cost slopes.
        #[arg(long, value_delimiter = ',', required = true)]
        asj: Vec<f64>,
        #[arg(long)]
        xbj_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the equilibrium of a market file against unilateral deviations.
    Verify {
        #[arg(long)]
        market: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        grid_step: f64,
    },
}

/// Runs a parsed command, writing reports to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Solve {
            market,
            mode,
            verify,
        } => solve_cmd(&market, mode, verify, out),
        Command::Experiment {
            name,
            design,
            seed,
            scale,
            out: dir,
            threads,
            verify_every,
            check,
        } => experiment_cmd(
            ExperimentArgs {
                name,
                design,
                seed,
                scale,
                dir,
                threads,
                verify_every,
                check,
            },
            out,
            err,
        ),
        Command::Lines {
            asj,
            xbj_max,
            points,
            out: path,
        } => lines_cmd(&asj, xbj_max, points, &path),
        Command::Verify { market, grid_step } => verify_cmd(&market, grid_step, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn read_market(path: &Path) -> Result<MarketInstance> {
    let bytes = fs::read(path).map_err(|e| SimError::io(path, e))?;
    parse_market_file(&bytes).map_err(|e| match e {
        SimError::Parse {
            line,
            column,
            message,
        } => SimError::Parse {
            line,
            column,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn solve_cmd(path: &Path, mode: Option<ModeArg>, verify: bool, out: &mut dyn Write) -> Result<u8> {
    let m = read_market(path)?;
    let modes: Vec<Mode> = match mode {
        None => vec![m.mode()],
        Some(ModeArg::Duality) => vec![Mode::Duality],
        Some(ModeArg::Baseline) => vec![Mode::Baseline],
        Some(ModeArg::Both) => Mode::BOTH.to_vec(),
    };
    let mut table = OutputTable::new(["mode", "prosumer", "x_s", "payoff", "price", "flags"]);
    table.comment("market", path.display()).comment("version", VERSION);
    let mut code = 0;
    for &mode in &modes {
        let mm = m.with_mode(mode);
        let eq = solve_n(&mm)?;
        table.comment(
            &format!("{} foc_residual_max", mode.as_str()),
            format!("{:e}", eq.foc_residual_max),
        );
        if verify {
            let rep = deviation_check(&mm, &eq.x_s, &prosumer_cournot::equilibrium::DECADE_GRID, NASH_TOLERANCE)?;
            table.comment(
                &format!("{} is_nash", mode.as_str()),
                format!("{} (max gain {:e})", rep.is_nash, rep.deviation_improvement_max),
            );
            match best_response_dynamics(&mm, &vec![0.0; mm.len()], &DynamicsConfig::default()) {
                Ok(c) => {
                    let gap = c
                        .equilibrium
                        .x_s
                        .iter()
                        .zip(&eq.x_s)
                        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                    table.comment(
                        &format!("{} dynamics", mode.as_str()),
                        format!("converged in {} iterations, max gap {gap:e}", c.iterations),
                    );
                }
                Err(e) => {
                    table.comment(&format!("{} dynamics", mode.as_str()), e);
                }
            }
            if !rep.is_nash {
                code = 3;
            }
        }
        for (i, (x, v)) in eq.x_s.iter().zip(&eq.payoffs).enumerate() {
            table.push(vec![
                mode.as_str().into(),
                (i + 1).into(),
                (*x).into(),
                (*v).into(),
                eq.price.into(),
                Cell::Int(eq.flags.bits() as i64),
            ]);
        }
    }
    if modes.len() == 2 {
        let delta = compare_modes(&m)?.delta;
        let dx: Vec<String> = delta.dx_s.iter().map(|v| format!("{v:.16e}")).collect();
        table.comment("dx_s", dx.join(" "));
        table.comment("dp", format!("{:.16e}", delta.dp));
    }
    out.write_all(table.render().as_bytes())
        .map_err(|e| SimError::io("<stdout>", e))?;
    Ok(code)
}

struct ExperimentArgs {
    name: Option<String>,
    design: Option<PathBuf>,
    seed: u64,
    scale: f64,
    dir: Option<PathBuf>,
    threads: Option<usize>,
    verify_every: usize,
    check: bool,
}

fn load_design(args: &ExperimentArgs) -> Result<(ExperimentDesign, Option<DesignName>)> {
    if let Some(path) = &args.design {
        let bytes = fs::read(path).map_err(|e| SimError::io(path, e))?;
        let design: ExperimentDesign =
            serde_json::from_slice(&bytes).map_err(|e| SimError::Parse {
                line: e.line(),
                column: e.column(),
                message: format!("{}: {e}", path.display()),
            })?;
        design.validate()?;
        return Ok((design, None));
    }
    let name = args.name.as_deref().unwrap_or_default();
    let which: DesignName = name
        .parse()
        .map_err(|_| SimError::Input(format!("unknown experiment `{name}`")))?;
    Ok((builtin_design(name, args.seed)?, Some(which)))
}

fn output_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn experiment_cmd(args: ExperimentArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    let (design, builtin) = load_design(&args)?;
    let design = if args.scale == 1.0 {
        design
    } else {
        design.scaled(args.scale)?
    };
    let opts = RunOptions {
        threads: args.threads,
        verify_every: (args.verify_every > 0).then_some(args.verify_every),
    };
    let records = run_batch(&design, &opts)?;
    let dir = output_dir(args.dir.clone());
    for path in write_experiment(&design, &records, &dir)? {
        let _ = writeln!(out, "wrote {}", path.display());
    }
    let flagged = records
        .iter()
        .filter(|r| r.solved().is_some_and(|s| s.flagged()))
        .count();
    let unsolved = records.iter().filter(|r| r.solved().is_none()).count();
    let _ = writeln!(
        err,
        "{}: {} instances, {flagged} flagged (negative supply or non-positive price), {unsolved} unsolved",
        design.name,
        records.len()
    );
    if !args.check {
        return Ok(if unsolved > 0 { 3 } else { 0 });
    }
    let Some(which) = builtin else {
        return Err(SimError::Input("--check needs a built-in design".into()));
    };
    let mut checks = design_checks(which, &design, &records)?;
    if which == DesignName::CostSweep {
        let paired = ExperimentDesign {
            common_random_numbers: true,
            ..design.clone()
        };
        let paired_records = run_batch(&paired, &RunOptions { verify_every: None, ..opts })?;
        checks.extend(delta_trend_checks(&paired, &paired_records)?);
    }
    for c in &checks {
        let _ = writeln!(out, "{c}");
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 4 })
}

fn lines_cmd(asj: &[f64], xbj_max: f64, points: usize, path: &Path) -> Result<u8> {
    let rows = indifference_line_points(asj, xbj_max, points)?;
    emit_table(&lines_table(&rows), path)?;
    Ok(0)
}

fn verify_cmd(path: &Path, step: f64, out: &mut dyn Write) -> Result<u8> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(SimError::Validation {
            field: "grid-step".into(),
            message: "must be a positive number".into(),
        });
    }
    let m = read_market(path)?;
    let grid: Vec<f64> = (1..=GRID_STEPS as i64)
        .flat_map(|k| [-(k as f64) * step, k as f64 * step])
        .collect();
    let eq = solve_n(&m)?;
    let rep = deviation_check(&m, &eq.x_s, &grid, NASH_TOLERANCE)?;
    let dynamics = best_response_dynamics(&m, &vec![0.0; m.len()], &DynamicsConfig::default());

    let mut table = OutputTable::new(["prosumer", "x_s", "foc_residual"]);
    table
        .comment("market", path.display())
        .comment("mode", m.mode().as_str())
        .comment("grid", format!("±k*{step} for k=1..{GRID_STEPS}"))
        .comment("is_nash", rep.is_nash)
        .comment("max_gain", format!("{:e}", rep.deviation_improvement_max));
    match &dynamics {
        Ok(c) => table.comment("dynamics_iterations", c.iterations),
        Err(e) => table.comment("dynamics", e),
    };
    for (i, (x, r)) in eq.x_s.iter().zip(&rep.foc_residuals).enumerate() {
        table.push(vec![(i + 1).into(), (*x).into(), (*r).into()]);
    }
    out.write_all(table.render().as_bytes())
        .map_err(|e| SimError::io("<stdout>", e))?;
    Ok(if rep.is_nash { 0 } else { 3 })
}
