//! End-to-end acceptance run: one PASS/FAIL line per criterion, detail lines
//! indented below it. Exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use prosumer_cournot::equilibrium::DECADE_GRID;
use prosumer_cournot::{
    assemble_foc_system, best_response_dynamics, builtin_design, compare_modes, deviation_check,
    solve_closed_form_2, solve_n, BlockSpec, DynamicsConfig, Error, ExperimentDesign,
    MarketInstance, Mode, ProsumerParams, ProsumerSpec, RangeSpec,
};
use prosumer_cournot_sim::checks::{
    cost_sweep_checks, delta_trend_checks, demand_sweep_checks, seven_prosumer_checks,
    two_prosumer_checks, Check,
};
use prosumer_cournot_sim::experiments::{run_batch, RunOptions, RunRecord, NASH_TOLERANCE};
use prosumer_cournot_sim::outputs::write_experiment;

const SEED: u64 = 7;

struct Outcome {
    passed: bool,
    details: Vec<String>,
}

impl Outcome {
    fn from_checks(checks: Vec<Check>) -> Self {
        Outcome {
            passed: checks.iter().all(|c| c.passed),
            details: checks.iter().map(ToString::to_string).collect(),
        }
    }

    fn with(mut self, check: Check) -> Self {
        self.passed &= check.passed;
        self.details.push(check.to_string());
        self
    }
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn runtime(name: &str, took: Duration, limit: f64) -> Check {
    let secs = took.as_secs_f64();
    check(name, secs < limit, format!("{secs:.3} s (limit {limit} s)"))
}

fn design(name: &str) -> ExperimentDesign {
    builtin_design(name, SEED).unwrap()
}

fn batch(d: &ExperimentDesign) -> Vec<RunRecord> {
    run_batch(d, &RunOptions::default()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

fn closed_form_equivalence() -> Outcome {
    let d = design("two-prosumer").scaled(10.0).unwrap();
    let instances: Vec<MarketInstance> = d
        .slots()
        .iter()
        .map(|s| d.instance(s, Mode::Duality).unwrap())
        .collect();
    let (gap, took) = timed(|| {
        let mut gap = 0.0f64;
        for m in &instances {
            for mode in Mode::BOTH {
                let m = m.with_mode(mode);
                let a = solve_closed_form_2(&m).unwrap();
                let b = solve_n(&m).unwrap();
                gap = gap.max(max_abs_diff(&a.x_s, &b.x_s));
            }
        }
        gap
    });
    Outcome::from_checks(vec![
        check(
            &format!("{} instances, max component gap", instances.len()),
            instances.len() == 10_000 && gap <= 1e-9,
            format!("{gap:e} (limit 1e-9)"),
        ),
        runtime("runtime", took, 1.0),
    ])
}

fn mixed_size_design() -> ExperimentDesign {
    let seven = design("seven-prosumer").blocks.remove(0);
    let mut two = design("two-prosumer").blocks.remove(0);
    two.n_instances = 334;
    let three = BlockSpec {
        n_instances: 333,
        demand: RangeSpec::new(10.0, 20.0),
        prosumers: vec![
            ProsumerSpec {
                a_s: RangeSpec::new(0.1, 10.0),
                b_s: RangeSpec::new(0.0, 2.0),
                x_b: RangeSpec::new(0.0, 5.0),
            };
            3
        ],
    };
    ExperimentDesign {
        name: "mixed".into(),
        master_seed: SEED,
        blocks: vec![two, three, BlockSpec { n_instances: 333, ..seven }],
        common_random_numbers: false,
    }
}

fn nash_oracle() -> Outcome {
    let d = mixed_size_design();
    let cfg = DynamicsConfig::default();
    let (mut checked, mut converged, mut diverged) = (0, 0, 0);
    let (mut worst_gain, mut worst_gap) = (f64::NEG_INFINITY, 0.0f64);
    for slot in d.slots() {
        for mode in Mode::BOTH {
            let m = d.instance(&slot, mode).unwrap();
            let eq = solve_n(&m).unwrap();
            let rep = deviation_check(&m, &eq.x_s, &DECADE_GRID, NASH_TOLERANCE).unwrap();
            worst_gain = worst_gain.max(rep.deviation_improvement_max);
            checked += 1;
            match best_response_dynamics(&m, &vec![0.0; m.len()], &cfg) {
                Ok(c) => {
                    converged += 1;
                    worst_gap = worst_gap.max(max_abs_diff(&c.equilibrium.x_s, &eq.x_s));
                }
                Err(Error::NotConverged { .. }) => diverged += 1,
                Err(e) => panic!("dynamics failed on {slot}: {e}"),
            }
        }
    }
    Outcome::from_checks(vec![
        check(
            "no profitable deviation",
            worst_gain <= NASH_TOLERANCE,
            format!("{checked} solves (n in 2, 3, 7), max gain {worst_gain:e} (limit 1e-9)"),
        ),
        check(
            "dynamics agree with direct solve",
            worst_gap <= 1e-8,
            format!("{converged} converged, {diverged} did not, max gap {worst_gap:e} (limit 1e-8)"),
        ),
    ])
}

fn delta_identities(suites: &[(ExperimentDesign, Vec<RunRecord>)]) -> Outcome {
    let (mut solved, mut worst_dp, mut worst_sys) = (0usize, 0.0f64, 0.0f64);
    let mut shifted_mismatch = 0usize;
    for (_, records) in suites {
        for r in records {
            let s = r.solved().expect("every instance solves");
            solved += 1;
            let sum: f64 = s.dx_s.iter().sum();
            worst_dp = worst_dp.max((s.dp + sum).abs());
            let (mat, _) = assemble_foc_system(&r.instance);
            let x_b: Vec<f64> = r.instance.prosumers().iter().map(|p| p.x_b).collect();
            worst_sys = worst_sys.max(max_abs_diff(&mat.mul_vec(&s.dx_s), &x_b));

            if r.instance_index % 10 == 0 {
                let m = &r.instance;
                let shifted: Vec<ProsumerParams> = m
                    .prosumers()
                    .iter()
                    .map(|p| ProsumerParams { b_s: p.b_s + 0.75, ..*p })
                    .collect();
                let moved = m
                    .with_demand(1.5 * m.demand() + 3.0)
                    .unwrap()
                    .with_prosumers(shifted)
                    .unwrap();
                let again = compare_modes(&moved).unwrap().delta;
                if again.dx_s != s.dx_s || again.dp != s.dp {
                    shifted_mismatch += 1;
                }
            }
        }
    }
    Outcome::from_checks(vec![
        check(
            "dp = -sum(dx_s)",
            worst_dp <= 1e-12,
            format!("{solved} instances, max error {worst_dp:e} (limit 1e-12)"),
        ),
        check(
            "M dx_s = x_b",
            worst_sys <= 1e-9,
            format!("max residual {worst_sys:e} (limit 1e-9)"),
        ),
        check(
            "invariant under D and b_s shifts",
            shifted_mismatch == 0,
            format!("{shifted_mismatch} of every 10th instance changed"),
        ),
    ])
}

fn two_prosumer(records: &[RunRecord], took: Duration) -> Outcome {
    Outcome::from_checks(two_prosumer_checks(records).unwrap()).with(runtime("runtime", took, 1.0))
}

fn trend() -> Outcome {
    let d = ExperimentDesign {
        common_random_numbers: true,
        ..design("cost-sweep")
    };
    let records = run_batch(&d, &RunOptions { verify_every: None, ..Default::default() }).unwrap();
    Outcome::from_checks(delta_trend_checks(&d, &records).unwrap())
}

type Files = Vec<(String, Vec<u8>)>;

fn output_files(dir: &Path) -> Files {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let runs: Vec<(String, Files)> = [None, Some("1"), Some("4"), Some("1")]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let dir = root.path().join(format!("run{i}"));
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_prosumer-cournot"));
            cmd.args(["experiment", "two-prosumer", "--seed", "7", "--out"]).arg(&dir);
            if let Some(t) = threads {
                cmd.args(["--threads", t]);
            }
            let status = cmd.output().unwrap().status;
            assert!(status.success(), "experiment run {i} failed: {status}");
            (threads.unwrap_or("default").to_string(), output_files(&dir))
        })
        .collect();
    let reference = &runs[0].1;
    let mut checks = vec![check(
        "files written",
        !reference.is_empty(),
        reference.iter().map(|f| f.0.as_str()).collect::<Vec<_>>().join(", "),
    )];
    for (threads, files) in &runs[1..] {
        checks.push(check(
            &format!("--threads {threads} matches default"),
            files == reference,
            "byte comparison of every file",
        ));
    }
    Outcome::from_checks(checks)
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    results.push(("1 closed form equals general solve", closed_form_equivalence()));
    results.push(("2 Nash oracle", nash_oracle()));

    let names = ["two-prosumer", "seven-prosumer", "cost-sweep", "demand-sweep"];
    let root = tempfile::tempdir().unwrap();
    let (suites, suite_time) = timed(|| {
        names
            .iter()
            .map(|n| {
                let d = design(n);
                let records = batch(&d);
                write_experiment(&d, &records, &root.path().join(n)).unwrap();
                (d, records)
            })
            .collect::<Vec<_>>()
    });
    let (two_records, two_time) = timed(|| batch(&design("two-prosumer")));

    results.push(("3 duality delta identities", delta_identities(&suites)));
    results.push(("4 two-prosumer reference means", two_prosumer(&two_records, two_time)));
    results.push((
        "5 seven-prosumer reference means",
        Outcome::from_checks(seven_prosumer_checks(&suites[1].1).unwrap()),
    ));
    results.push((
        "6 cost sweep anchors",
        Outcome::from_checks(cost_sweep_checks(&suites[2].0, &suites[2].1).unwrap()),
    ));
    results.push((
        "7 demand sweep anchors",
        Outcome::from_checks(demand_sweep_checks(&suites[3].0, &suites[3].1).unwrap()),
    ));
    results.push(("8 delta trend across the cost sweep", trend()));
    results.push(("9 deterministic output", determinism()));
    let total: usize = suites.iter().map(|s| s.1.len()).sum();
    results.push((
        "10 full suite performance",
        Outcome::from_checks(vec![
            check("instances", total == 18_000, total.to_string()),
            runtime("runtime", suite_time, 10.0),
        ]),
    ));

    println!();
    let mut failed = 0;
    for (name, outcome) in &results {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {name}");
        for d in &outcome.details {
            println!("    {d}");
        }
        failed += usize::from(!outcome.passed);
    }
    println!("\n{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
