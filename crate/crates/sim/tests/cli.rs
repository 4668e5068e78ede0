use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use prosumer_cournot_sim::cli::OUT_DIR_ENV;
use prosumer_cournot_sim::table::OutputTable;

const WORKED: &str = r#"{"D":10,"mode":"duality","prosumers":[{"a_s":1,"b_s":0,"x_b":4},{"a_s":1,"b_s":0,"x_b":0}]}"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prosumer-cournot"));
    cmd.env_remove(OUT_DIR_ENV);
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_market(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("market.json");
    fs::write(&path, text).unwrap();
    path
}

fn table(out: &Output) -> OutputTable {
    OutputTable::parse(&String::from_utf8_lossy(&out.stdout)).unwrap()
}

#[test]
fn solve_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let market = write_market(dir.path(), WORKED);
    let out = run(bin().args(["solve", "--mode", "both", "--market"]).arg(&market));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let t = table(&out);
    let x = t.column("x_s").unwrap();
    let got: Vec<f64> = t.rows.iter().map(|r| r[x].as_f64().unwrap()).collect();
    // Duality: 4x1 + x2 = 14, x1 + 4x2 = 10. Baseline: 4x1 + x2 = x1 + 4x2 = 10.
    let expected = [46.0 / 15.0, 26.0 / 15.0, 2.0, 2.0];
    for (g, e) in got.iter().zip(expected) {
        assert!((g - e).abs() < 1e-12, "{got:?}");
    }
    assert!(t.comments.iter().any(|c| c.starts_with("dp: ")));
}

#[test]
fn solve_verify_reports_nash() {
    let dir = tempfile::tempdir().unwrap();
    let market = write_market(dir.path(), WORKED);
    let out = run(bin().args(["solve", "--verify", "--market"]).arg(&market));
    assert_eq!(code(&out), 0);
    let t = table(&out);
    assert!(t.comments.iter().any(|c| c.starts_with("duality is_nash: true")), "{:?}", t.comments);
}

#[test]
fn invalid_market_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let market = write_market(dir.path(), &WORKED.replacen(r#""a_s":1"#, r#""a_s":0"#, 1));
    let out = run(bin().args(["solve", "--market"]).arg(&market));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("prosumers[0].a_s"));

    let market = write_market(dir.path(), "{\"D\": 10,");
    assert_eq!(code(&run(bin().args(["solve", "--market"]).arg(&market))), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(bin().args(["verify", "--market"]).arg(&missing))), 2);
}

#[test]
fn unknown_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args(["experiment", "five-prosumer", "--out"]).arg(dir.path()));
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_uses_grid_step() {
    let dir = tempfile::tempdir().unwrap();
    let market = write_market(dir.path(), WORKED);
    let out = run(bin().args(["verify", "--grid-step", "0.01", "--market"]).arg(&market));
    assert_eq!(code(&out), 0);
    let t = table(&out);
    assert!(t.comments.contains(&"is_nash: true".to_string()));
    assert!(t.comments.iter().any(|c| c.contains("±k*0.01")));
    assert_eq!(t.rows.len(), 2);

    let bad = run(bin().args(["verify", "--grid-step", "-1", "--market"]).arg(&market));
    assert_eq!(code(&bad), 2);
}

#[test]
fn lines_writes_threshold_points() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/lines.csv");
    let out = run(bin()
        .args(["lines", "--asj", "0.5,2", "--xbj-max", "6", "--points", "4", "--out"])
        .arg(&path));
    assert_eq!(code(&out), 0);
    let t = OutputTable::parse(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(t.header, ["a_sj", "x_bj", "x_bi"]);
    assert_eq!(t.rows.len(), 8);
    for r in &t.rows {
        let [a, xj, xi] = [0, 1, 2].map(|c| r[c].as_f64().unwrap());
        assert!((xi - xj / (2.0 * a + 2.0)).abs() < 1e-15);
    }
}

#[test]
fn experiment_honours_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = run(bin()
        .args(["experiment", "seven-prosumer", "--scale", "0.05"])
        .env(OUT_DIR_ENV, &target));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let records = fs::read_to_string(target.join("records.csv")).unwrap();
    let t = OutputTable::parse(&records).unwrap();
    assert_eq!(t.rows.len(), 50);
    assert!(t.comments.contains(&"design: seven-prosumer".to_string()));
    assert!(t.comments.contains(&"seed: 0".to_string()));
    assert!(target.join("aggregate_all.csv").exists());
    assert!(!target.join("aggregate_side.csv").exists());
}

#[test]
fn sweep_writes_per_prosumer_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["experiment", "demand-sweep", "--seed", "3", "--scale", "0.02", "--out"])
        .arg(dir.path()));
    assert_eq!(code(&out), 0);
    for i in 1..=7 {
        let t = OutputTable::parse(
            &fs::read_to_string(dir.path().join(format!("sweep_prosumer{i}.csv"))).unwrap(),
        )
        .unwrap();
        assert_eq!(t.rows.len(), 8);
        assert_eq!(t.header[1], "mean_x_s");
    }
    assert!(dir.path().join("midpoint.csv").exists());
    assert!(dir.path().join("aggregate_block.csv").exists());
}

#[test]
fn failed_check_exits_4() {
    // Reference means need full-size samples; a 20-instance run misses them.
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["experiment", "two-prosumer", "--scale", "0.02", "--check", "--out"])
        .arg(dir.path()));
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
}

#[test]
fn custom_design_with_empty_blocks_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    fs::write(
        &design,
        r#"{"name":"empty","master_seed":1,"blocks":[{"n_instances":0,"demand":{"min":5,"max":6},
            "prosumers":[{"a_s":{"min":1,"max":2},"b_s":{"min":0,"max":1},"x_b":{"min":0,"max":1}},
                         {"a_s":{"min":1,"max":2},"b_s":{"min":0,"max":1},"x_b":{"min":0,"max":1}}]}]}"#,
    )
    .unwrap();
    let outdir = dir.path().join("out");
    let out = run(bin().args(["experiment", "--design"]).arg(&design).arg("--out").arg(&outdir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(outdir.join("records.csv")).unwrap();
    let t = OutputTable::parse(&text).unwrap();
    assert!(t.rows.is_empty());
    assert!(t.column("x_s2_duality").is_some() && t.column("side").is_some());
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
}
