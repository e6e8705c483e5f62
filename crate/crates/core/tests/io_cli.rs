use std::io::Write;
use std::process::Command;

use bigsurv::cli;
use bigsurv::io::{read_dataset, write_dataset_file, ChunkReader, ColumnSpec};
use bigsurv::simulation::{generate, SimConfig};
use bigsurv::Subject;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bigsurv"))
}

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("bigsurv").chain(args.iter().copied()))
}

fn json(path: &std::path::Path) -> Value {
    serde_json::from_reader(std::fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn stream_order_equals_materialized_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let data = generate(&SimConfig::new(10_000, 4, 3)).unwrap();
    write_dataset_file(&data, &path).unwrap();

    let loaded = read_dataset(&path, &ColumnSpec::default()).unwrap();
    assert_eq!(loaded, data);
    let mut stream = ChunkReader::new(&path, ColumnSpec::default())
        .with_chunk_size(999)
        .stream()
        .unwrap();
    let stats = stream.stats();
    let streamed: Vec<Subject> = (&mut stream).map(Result::unwrap).collect();
    assert_eq!(streamed, data.subjects().collect::<Vec<_>>());
    assert_eq!(stats.materialized(), 11);
    assert_eq!(stats.max_live(), 1);
}

#[test]
fn stream_error_surfaces_after_good_rows() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "time,status,x").unwrap();
    for i in 1..=9 {
        writeln!(f, "{i},{},0.5", if i == 7 { "x" } else { "1" }).unwrap();
    }
    let items: Vec<_> = ChunkReader::new(f.path(), ColumnSpec::default())
        .with_chunk_size(4)
        .stream()
        .unwrap()
        .collect();
    assert_eq!(items.len(), 7);
    assert!(items[..6].iter().all(Result::is_ok));
    assert!(matches!(items[6], Err(bigsurv::Error::Parse { row: 7, .. })));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let code = run(&["simulate", "--n", "1000", "--p", "10", "--pc", "0.2", "--seed", "7", "--output", p.to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let d = read_dataset(&a, &ColumnSpec::default()).unwrap();
    assert_eq!(d, generate(&SimConfig { p_c: 0.2, ..SimConfig::new(1000, 10, 7) }).unwrap());
}

#[test]
fn fit_newton_ci_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_dataset_file(&generate(&SimConfig::new(400, 3, 5)).unwrap(), &data).unwrap();
    let d = data.to_str().unwrap();
    let out = |name: &str| dir.path().join(name);

    let fit = out("fit.json");
    let args = [
        "fit", "--data", d, "--time-col", "time", "--status-col", "status", "--strata-size", "20", "--epochs", "20",
        "--lr-const", "0.12", "--seed", "1", "--output", fit.to_str().unwrap(),
    ];
    assert_eq!(run(&args), 0);
    let j = json(&fit);
    assert_eq!(j["schema_version"], 1);
    assert_eq!(j["coefficients"].as_array().unwrap().len(), 3);
    assert_eq!(j["seed"], 1);
    assert_eq!(j["report"]["config"]["epochs"], 20);
    assert!(j["concordance"].as_f64().unwrap() > 0.6);
    let c0 = &j["coefficients"][0];
    assert_eq!(c0["hazard_ratio"].as_f64().unwrap(), c0["estimate"].as_f64().unwrap().exp());

    // rerunning from the echoed config reproduces the estimate exactly
    let again = out("fit2.json");
    let mut args2 = args.to_vec();
    *args2.last_mut().unwrap() = again.to_str().unwrap();
    assert_eq!(run(&args2), 0);
    assert_eq!(json(&again)["beta_tilde"], j["beta_tilde"]);

    let stream = out("stream.json");
    assert_eq!(
        run(&["fit", "--data", d, "--streaming", "--chunk-size", "64", "--epochs", "3", "--output", stream.to_str().unwrap()]),
        0
    );
    let s = json(&stream);
    assert_eq!(s["mode"], "streaming");
    assert!(s["concordance"].is_null());
    assert_eq!(s["n"], 400);

    let newton = out("newton.json");
    assert_eq!(run(&["newton", "--data", d, "--output", newton.to_str().unwrap()]), 0);
    let n = json(&newton);
    assert_eq!(n["report"]["converged"], true);
    assert_eq!(n["coefficients"].as_array().unwrap().len(), 3);

    let ci = out("ci.json");
    assert_eq!(
        run(&[
            "ci", "--data", d, "--method", "plugin", "--n-strata-per-obs", "40", "--alpha", "0.05", "--epochs", "20",
            "--output", ci.to_str().unwrap(),
        ]),
        0
    );
    let c = json(&ci);
    assert_eq!(c["interval"]["method"], "plugin");
    for coef in c["interval"]["coefficients"].as_array().unwrap() {
        assert!(coef["se"].as_f64().unwrap() > 0.0);
        assert!(coef["lower"].as_f64().unwrap() < coef["upper"].as_f64().unwrap());
    }

    let boot = out("boot.json");
    assert_eq!(
        run(&[
            "ci", "--data", d, "--method", "bootstrap", "--resamples", "20", "--boot-epochs", "5", "--beta", "1,1,1",
            "--output", boot.to_str().unwrap(),
        ]),
        0
    );
    let b = json(&boot);
    assert_eq!(b["interval"]["resamples_used"], 20);
    assert!(b["interval"]["notes"][0].as_str().unwrap().contains("midpoint"));
}

#[test]
fn bench_writes_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let js = dir.path().join("grid.json");
    let code = run(&[
        "bench", "--methods", "sgd,newton", "--ns", "200", "--ps", "2", "--ss", "2,10", "--replicates", "2", "--epochs",
        "5", "--csv", csv.to_str().unwrap(), "--json", js.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 2 + 2);
    assert!(table.starts_with("method,n,p,s,replicate"));
    let j = json(&js);
    assert_eq!(j["cells"].as_array().unwrap().len(), 3);
    assert!(j["mse_definition"].as_str().unwrap().contains("averaged"));
}

#[test]
fn usage_errors_exit_2_with_json() {
    let out = bin().args(["fit", "--data", "x.csv", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");

    let out = bin().args(["fit", "--data", "x.csv", "--strata-size", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["simulate", "--n", "10", "--p", "2", "--pc", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "time,status,x\n1,1,0\n2,2,1\n").unwrap();
    let out = bin().args(["fit", "--data", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "validation");
    assert!(err["error"]["message"].as_str().unwrap().contains("row 2"));

    std::fs::write(&path, "time,status,x\n").unwrap();
    let out = bin().args(["fit", "--data", path.to_str().unwrap(), "--streaming"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");

    let out = bin()
        .env("BIGSURV_THREADS", "zero")
        .args(["simulate", "--n", "5", "--p", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
