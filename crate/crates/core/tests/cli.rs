use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use symtail::cli::{read_symbol_file, without_timestamp};

fn symtail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symtail")).args(args).output().expect("binary runs")
}

fn ok_report(args: &[&str]) -> Value {
    let out = symtail(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn value(r: &Value, path: &str) -> f64 {
    let v = r.pointer(path).unwrap_or_else(|| panic!("missing {path}"));
    v.as_f64().unwrap_or_else(|| panic!("{path} is not a number"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn sample_then_fit_recovers_nu() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t5.csv");
    ok_report(&["sample", "--model", "student_t:5", "--n", "100000", "--seed", "3", "--output", p(&f)]);
    let r = ok_report(&["fit", "--input", p(&f)]);
    let nu = value(&r, "/results/nu_hat/value");
    assert!((nu - 5.0).abs() < 0.5, "{nu}");
    assert_eq!(r["results"]["nu_hat"]["unit"], "degrees_of_freedom");
    assert_eq!(r["results"]["nll"]["fitted"]["nll"]["unit"], "nats");
    let qq = fs::read_to_string(dir.path().join("t5.csv.qq.csv")).unwrap();
    assert!(qq.starts_with("level,empirical_q,model_q\n"));
    assert_eq!(qq.lines().count(), 100);
}

#[test]
fn gaussian_file_prefers_gaussian_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("g.csv");
    ok_report(&["sample", "--model", "gaussian", "--n", "100000", "--seed", "4", "--output", p(&f)]);
    let r = ok_report(&["fit", "--input", p(&f), "--qq", p(&dir.path().join("q.csv"))]);
    assert_eq!(r["results"]["hit_upper_bound"], true);
    assert_eq!(r["results"]["lowest_nll_baseline"], "gaussian");
    assert!(dir.path().join("q.csv").exists());
}

#[test]
fn empty_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("none.csv");
    ok_report(&["sample", "--model", "cauchy", "--n", "0", "--output", p(&f)]);
    assert_eq!(fs::read_to_string(&f).unwrap(), "dim_0\n");
    let out = symtail(&["fit", "--input", p(&f)]);
    assert_eq!(out.status.code(), Some(2));
    let e = dir.path().join("empty.csv");
    fs::write(&e, "").unwrap();
    let out = symtail(&["fit", "--input", p(&e)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn same_seed_gives_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ok_report(&["sample", "--model", "student_t:3", "--n", "1000", "--seed", "9", "--output", p(&a)]);
    ok_report(&["sample", "--model", "student_t:3", "--n", "1000", "--seed", "9", "--output", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let batch = read_symbol_file(&a).unwrap();
    assert_eq!(batch.rows(), 1000);
}

#[test]
fn kl_orders_targets() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("g.csv");
    ok_report(&["sample", "--model", "gaussian", "--n", "100000", "--seed", "5", "--output", p(&f)]);
    let g = value(&ok_report(&["kl", "--input", p(&f), "--target", "gaussian"]), "/results/kl/value");
    let c = value(&ok_report(&["kl", "--input", p(&f), "--target", "cauchy"]), "/results/kl/value");
    assert!(g < 0.02, "{g}");
    assert!(c > g);
    let n = value(&ok_report(&["kl", "--input", p(&f), "--target", "gaussian", "--mode", "non_identical"]), "/results/kl/value");
    assert!((n - g).abs() < 1e-12);

    let t = dir.path().join("t4.csv");
    ok_report(&["sample", "--model", "student_t:4", "--n", "100000", "--seed", "6", "--output", p(&t)]);
    let own = value(&ok_report(&["kl", "--input", p(&t), "--target", "student_t:4"]), "/results/kl/value");
    assert!(own < 0.02, "{own}");
    let out = symtail(&["kl", "--input", p(&t), "--target", "student_t:1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn maxent_writes_density_and_flags_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("dens.csv");
    let r = ok_report(&[
        "maxent", "--alpha", "1", "--sigma2", "1", "--payload", "0.4", "--density", p(&d),
    ]);
    assert_eq!(r["results"]["payload"]["unit"], "bits");
    assert!((value(&r, "/results/payload/value") - 0.4).abs() < 1e-6);
    assert_eq!(value(&r, "/results/violations/value"), 0.0);
    let text = fs::read_to_string(&d).unwrap();
    assert_eq!(text.lines().count(), 8002);
    let out = symtail(&["maxent", "--alpha", "1", "--sigma2", "1", "--payload", "50", "--density", p(&d)]);
    assert_eq!(out.status.code(), Some(3));
    let out = symtail(&["maxent", "--alpha", "2", "--sigma2", "1", "--payload", "1", "--density", p(&d)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mi_reports_capacity_column() {
    let r = ok_report(&["mi", "--model", "gaussian", "--snr-db", "0,10", "--n", "20000", "--seed", "2"]);
    let rows = r["results"]["sweep"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!((value(&rows[0], "/awgn_capacity/value") - 0.5).abs() < 1e-12);
    assert!((value(&rows[0], "/mi/value") - 0.5).abs() < 0.05);
    assert_eq!(rows[1]["mi"]["unit"], "bits");
}

#[test]
fn train_sweep_writes_matched_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"experiment":"lambda_sweep","codec":{"d":8,"k":4,"hidden":16,"batch":16,"epochs":3,"steps_per_epoch":4,"eval_batch":64},
            "lambdas":[0,0.0001],"seeds":[7]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let r = ok_report(&["train", "--config", p(&cfg), "--out-dir", p(&out_dir)]);
    assert_eq!(r["results"]["runs"].as_array().unwrap().len(), 2);
    for lambda in ["0e0", "1e-4"] {
        let m = fs::read_to_string(out_dir.join(format!("metrics_lambda={lambda}_seed=7.csv"))).unwrap();
        let mut lines = m.lines();
        assert_eq!(lines.next(), Some("epoch,mse,kl,nu_hat,nll"));
        assert_eq!(lines.count(), 3);
        let s = read_symbol_file(&out_dir.join(format!("symbols_lambda={lambda}_seed=7.csv"))).unwrap();
        assert_eq!(s.cols(), 4);
    }
    // the dumped symbols feed straight into fit
    let r = ok_report(&["fit", "--input", p(&out_dir.join("symbols_lambda=0e0_seed=7.csv"))]);
    assert!(value(&r, "/results/nu_hat/value") > 2.0);
}

#[test]
fn malformed_config_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"experiment":"single","codec":{"batch":4}}"#).unwrap();
    let out = symtail(&["train", "--config", p(&cfg), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("codec.batch"));
    fs::write(&cfg, r#"{"experiment":"single","codec":{"learning_rate":0.1}}"#).unwrap();
    let out = symtail(&["train", "--config", p(&cfg), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("codec.learning_rate"));
}

#[test]
fn single_run_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.json");
    fs::write(
        &cfg,
        r#"{"experiment":"single","codec":{"d":6,"k":3,"hidden":8,"batch":16,"epochs":2,"steps_per_epoch":3,"eval_batch":32,"lambda":0.01,"seed":5},
            "regime":{"kind":"variable_entropy","g_lo":0.5,"g_hi":2}}"#,
    )
    .unwrap();
    let a = ok_report(&["train", "--config", p(&cfg), "--out-dir", p(&dir.path().join("a"))]);
    let b = ok_report(&["train", "--config", p(&cfg), "--out-dir", p(&dir.path().join("b"))]);
    assert_eq!(without_timestamp(&a), without_timestamp(&b));
    assert_eq!(a["seed"], 5);
    for f in ["metrics.csv", "symbols.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
}
