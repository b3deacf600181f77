use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mlamc::montecarlo::load_dataset;
use mlamc_cli::output::strip_wall_times;
use serde_json::{json, Value};

fn mlamc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlamc"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("run.json");
    fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn small_config() -> Value {
    json!({
        "statistics": {"mu_cu": [18.6, 22.0], "cov": [0.3], "delta_h": [6]},
        "campaign": {"n_samples": 120, "base_seed": 11},
        "surrogate": {
            "train_count": 30,
            "repetitions": 2,
            "hyperparams": {"rf": {"n_estimators": 20}, "mlp": {"epochs": 10, "units": 8}}
        },
        "experiment": {"train_sizes": [10, 30], "repetitions": 2, "train_count": 60, "test_size": 60},
        "report": {"output_dir": "out"}
    })
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn read_report(path: &Path) -> Vec<Value> {
    let v: Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    v["rows"].as_array().unwrap().clone()
}

#[test]
fn generate_writes_one_dataset_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "statistics": {"mu_cu": [22.0], "cov": [0.1, 0.3, 0.5], "delta_h": [1, 6]},
        "campaign": {"n_samples": 8, "base_seed": 1},
        "report": {"output_dir": "out"}
    });
    write_config(dir.path(), &cfg);
    let o = mlamc(dir.path(), &["-c", "run.json", "generate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let n = fs::read_dir(dir.path().join("out/datasets")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "mlds")).count();
    assert_eq!(n, 6);
    assert!(dir.path().join("out/generate.resolved.json").exists());
}

#[test]
fn reruns_are_byte_identical_and_overwrite_is_explicit() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config());
    assert_eq!(code(&mlamc(dir.path(), &["-c", "run.json", "generate", "-o", "a"])), 0);
    assert_eq!(code(&mlamc(dir.path(), &["-c", "run.json", "generate", "-o", "b"])), 0);
    let ds = dir.path().join("a/datasets");
    for f in fs::read_dir(&ds).unwrap() {
        let p = f.unwrap().path();
        if p.extension().is_some_and(|x| x == "mlds") {
            let q = dir.path().join("b/datasets").join(p.file_name().unwrap());
            assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap());
        }
    }

    let before = fs::read(ds.join("cov0.3_xi6_mu22_dv1.mlds")).unwrap();
    let o = mlamc(dir.path(), &["-c", "run.json", "generate", "-o", "a", "--seed", "99"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--overwrite"));
    assert_eq!(fs::read(ds.join("cov0.3_xi6_mu22_dv1.mlds")).unwrap(), before);
    assert_eq!(code(&mlamc(dir.path(), &["-c", "run.json", "generate", "-o", "a", "--seed", "99", "--overwrite"])), 0);
    assert_ne!(fs::read(ds.join("cov0.3_xi6_mu22_dv1.mlds")).unwrap(), before);
    let resolved: Value = serde_json::from_slice(&fs::read(dir.path().join("a/generate.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["campaign"]["base_seed"], 99);
    assert_eq!(resolved["report"]["output_dir"], "a");
}

#[test]
fn mlamc_report_identities_and_recount() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config());
    for cmd in ["generate", "mlamc", "report"] {
        let o = mlamc(dir.path(), &["-c", "run.json", cmd]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let out = dir.path().join("out");
    let rows = read_report(&out.join("mlamc/report.json"));
    assert_eq!(rows.len(), 2 * 2 * 3);
    for r in &rows {
        let f = |k: &str| r[k].as_f64();
        let pf_full = f("pf_full").unwrap();
        let ds = load_dataset(out.join(format!("datasets/{}.mlds", r["config"].as_str().unwrap()))).unwrap();
        assert_eq!(pf_full, ds.pf().unwrap().pf);
        assert_eq!(f("pf_error_data_only").unwrap(), (f("pf_data_only").unwrap() - pf_full).abs());
        if r["skipped"].is_null() {
            assert_eq!(f("pf_error_surrogate").unwrap(), (f("pf_surrogate").unwrap() - pf_full).abs());
            let denom = f("t_sim_train").unwrap() + f("t_train").unwrap() + f("t_predict").unwrap();
            assert_eq!(f("speedup").unwrap(), f("t_sim_full").unwrap() / denom);
            let (acc, auc) = (f("acc").unwrap(), f("auc").unwrap());
            assert!((0.0..=1.0).contains(&acc) && (0.0..=1.0).contains(&auc));
        }
        assert_eq!(r["n_train"], 30);
    }

    let snapshot: Vec<(PathBuf, Vec<u8>)> =
        files(&out.join("report")).into_iter().map(|p| (p.clone(), fs::read(out.join("report").join(&p)).unwrap())).collect();
    assert_eq!(code(&mlamc(dir.path(), &["-c", "run.json", "report"])), 1);
    assert_eq!(code(&mlamc(dir.path(), &["-c", "run.json", "report", "--overwrite"])), 0);
    for (p, bytes) in &snapshot {
        assert_eq!(&fs::read(out.join("report").join(p)).unwrap(), bytes, "{}", p.display());
    }
    let timing = read_report(&out.join("report/timing.json"));
    assert!(timing.iter().all(|r| r["speedup"].as_f64().unwrap() > 0.0));
    let summary = read_report(&out.join("report/summary.json"));
    assert_eq!(summary.len(), 6);
}

#[test]
fn missing_inputs_and_bad_configs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config());
    let o = mlamc(dir.path(), &["-c", "run.json", "mlamc"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("timings.json"));
    let o = mlamc(dir.path(), &["-c", "run.json", "report"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("report.json"));

    let mut cfg = small_config();
    cfg["surrogate"]["train_count"] = json!(500);
    write_config(dir.path(), &cfg);
    assert_eq!(code(&mlamc(dir.path(), &["-c", "run.json", "generate"])), 1);
    assert_eq!(code(&mlamc(dir.path(), &["-c", "absent.json", "generate"])), 1);
    assert_eq!(code(&mlamc(dir.path(), &["--no-such-flag"])), 1);
    assert_eq!(code(&mlamc(dir.path(), &["--help"])), 0);

    let mut cfg = small_config();
    cfg["experiment"]["train_sizes"] = json!([10, 120, 400]);
    write_config(dir.path(), &cfg);
    assert_eq!(code(&mlamc(dir.path(), &["-c", "run.json", "generate"])), 0);
    let o = mlamc(dir.path(), &["-c", "run.json", "experiment", "train_size"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("120, 400") && !err.contains(" 10,"), "{err}");

    let o = mlamc(dir.path(), &["-c", "run.json", "export-csv"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("out/csv/cov0.3_xi6_mu22_dv1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 121);
    assert!(csv.starts_with("id,seed,label,"));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config());
    fs::write(dir.path().join("blocked"), b"").unwrap();
    let o = mlamc(dir.path(), &["-c", "run.json", "generate", "-o", "blocked"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn subset_only_campaigns_simulate_just_the_training_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["campaign"]["subset_only"] = json!(true);
    write_config(dir.path(), &cfg);
    assert_eq!(code(&mlamc(dir.path(), &["-c", "run.json", "mlamc"])), 1);

    cfg["surrogate"]["strategy"] = json!("random");
    write_config(dir.path(), &cfg);
    let o = mlamc(dir.path(), &["-c", "run.json", "mlamc"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("out/datasets").exists());
    for r in read_report(&dir.path().join("out/mlamc/report.json")) {
        assert!(r["pf_full"].is_null() && r["pf_error_surrogate"].is_null());
        assert_eq!(r["t_sim_full_projected"], true);
        if r["skipped"].is_null() {
            assert!(r["pf_surrogate"].as_f64().is_some());
        }
    }
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config());
    for (out, w) in [("w1", "1"), ("w4", "4")] {
        for cmd in [&["generate"][..], &["mlamc"], &["experiment", "degradation"], &["report"]] {
            let mut args = vec!["-c", "run.json", "-o", out, "--workers", w];
            args.extend_from_slice(cmd);
            let o = mlamc(dir.path(), &args);
            assert_eq!(code(&o), 0, "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let (a, b) = (dir.path().join("w1"), dir.path().join("w4"));
    assert_eq!(files(&a), files(&b));
    for p in files(&a) {
        let (x, y) = (fs::read(a.join(&p)).unwrap(), fs::read(b.join(&p)).unwrap());
        if p.file_name().unwrap().to_str().unwrap().ends_with(".resolved.json") {
            continue;
        }
        assert_eq!(strip_wall_times(&p, &x), strip_wall_times(&p, &y), "{}", p.display());
    }
}
