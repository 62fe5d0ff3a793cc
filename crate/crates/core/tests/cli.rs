mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::config_path;
use diffest::estimators::{estimate, one_step};
use diffest::cli::LoadedConfig;
use diffest::Trajectory;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn diffest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffest"))
        .args(args)
        .env_remove("DIFFEST_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_table_one_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("table1.toml");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let res = diffest(&["simulate", path_str(&cfg), "--out", path_str(out)]);
        assert!(res.status.success(), "{}", stderr(&res));
        assert!(stderr(&res).contains("n=12500"));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(data_rows(&text).len(), 12_501);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let sha = hex::encode(Sha256::digest(fs::read(&cfg).unwrap()));
    let first = text.lines().next().unwrap();
    assert_eq!(first, format!("# diffest {} config_sha256={sha} seed=20240101", env!("CARGO_PKG_VERSION")));
    assert_eq!(text.lines().nth(1), Some("index,time,x"));
}

#[test]
fn simulate_seed_override_is_recorded() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[simulation]\nhorizon = 8.0\n");
    let res = diffest(&["simulate", &cfg, "--seed", "77"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.lines().next().unwrap().ends_with(" seed=77"));
    assert_eq!(data_rows(&text).len(), 11);
}

#[test]
fn horizon_shorter_than_step_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[simulation]\nhorizon = 0.5\nstep = 0.8\n");
    let res = diffest(&["simulate", &cfg]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("fewer than 2 observations"), "{}", stderr(&res));
}

#[test]
fn unknown_config_key_names_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[simulation]\nstep = 0.5\nseeed = 3\n");
    let res = diffest(&["simulate", &cfg]);
    assert!(!res.status.success());
    let err = stderr(&res);
    assert!(err.contains("line 3") && err.contains("seeed"), "{err}");
}

#[test]
fn estimate_qmle_on_table_one_data() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("table1.toml");
    let data = dir.path().join("t.csv");
    assert!(diffest(&["simulate", path_str(&cfg), "--out", path_str(&data)]).status.success());
    let res = diffest(&["estimate", path_str(&cfg), "--data", path_str(&data)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = String::from_utf8(res.stdout).unwrap();
    let qmle: Vec<&str> = data_rows(&text)[0].split(',').collect();
    assert_eq!(qmle[0], "QMLE");
    let (alpha, beta): (f64, f64) = (qmle[1].parse().unwrap(), qmle[2].parse().unwrap());
    assert!((alpha - 1.0).abs() < 0.1 && (beta - 2.0).abs() < 0.15, "({alpha}, {beta})");
    assert_eq!(qmle[5], "true");
}

#[test]
fn malformed_data_row_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "[simulation]\nstep = 0.5\n");
    let data = write_config(&dir, "bad.csv", "index,time,x\n0,0,0.1\n1,0.5,0.2\n2,1.0,oops\n3,1.5,0.3\n");
    let res = diffest(&["estimate", &cfg, "--data", &data]);
    assert!(!res.status.success());
    let err = stderr(&res);
    assert!(err.contains("row 4"), "{err}");
}

#[test]
fn composed_pipeline_matches_separate_stages() {
    let dir = TempDir::new().unwrap();
    let text = "[simulation]\nhorizon = 800.0\nseed = 5\n\n[estimation]\npipelines = [\"cls-euler+onestep\"]\n";
    let cfg = write_config(&dir, "c.toml", text);
    let data = dir.path().join("t.csv");
    assert!(diffest(&["simulate", &cfg, "--out", path_str(&data)]).status.success());
    let out = diffest(&["estimate", &cfg, "--data", path_str(&data)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = String::from_utf8(out.stdout).unwrap();
    let rows = data_rows(&report);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("CLS-Euler,"));
    assert!(rows[1].starts_with("OS (CLS-Euler),"));

    let loaded = LoadedConfig::load(Path::new(&cfg)).unwrap().config;
    let model = loaded.model().unwrap();
    let traj = Trajectory::read_csv(fs::File::open(&data).unwrap()).unwrap();
    let pipeline = &loaded.pipelines().unwrap()[0];
    let base = estimate(&model, &traj, &pipeline.base).unwrap();
    let refined = one_step(&model, &traj, base.theta_hat, loaded.estimation.backend).unwrap();
    let fields = |row: &str| row.split(',').skip(1).take(2).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(fields(rows[0]), vec![base.theta_hat.alpha.to_string(), base.theta_hat.beta.to_string()]);
    assert_eq!(fields(rows[1]), vec![refined.theta_hat.alpha.to_string(), refined.theta_hat.beta.to_string()]);
}

#[test]
fn estimate_requires_a_data_source() {
    let res = diffest(&["estimate", path_str(&config_path("table1.toml"))]);
    assert!(!res.status.success());
}

#[test]
fn surface_figure_one_grid() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.csv");
    let res = diffest(&["surface", path_str(&config_path("figure1.toml")), "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = fs::read_to_string(&out).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 10_000);
    assert_eq!(text.lines().nth(1), Some("alpha,beta,value"));

    let best = rows
        .iter()
        .map(|r| r.split(',').map(str::to_string).collect::<Vec<_>>())
        .min_by(|a, b| a[2].parse::<f64>().unwrap().total_cmp(&b[2].parse::<f64>().unwrap()))
        .unwrap();
    let printed = format!("argmin alpha={} beta={} value={}", best[0], best[1], best[2]);
    assert!(stderr(&res).contains(&printed), "{} vs {printed}", stderr(&res));
}

#[test]
fn montecarlo_rows_and_worker_invariance() {
    let cfg = config_path("table1.toml");
    let run = |workers: &str| {
        let res = diffest(&["montecarlo", path_str(&cfg), "--replications", "3", "--workers", workers]);
        assert!(res.status.success(), "{}", stderr(&res));
        res.stdout
    };
    let one = run("1");
    assert_eq!(one, run("4"));
    let text = String::from_utf8(one).unwrap();
    let rows = data_rows(&text);
    assert_eq!(
        rows.iter().map(|r| r.split(',').next().unwrap()).collect::<Vec<_>>(),
        ["QMLE", "CLS-Euler", "OS (QMLE)", "Scoring (QMLE)", "OS (CLS-Euler)", "Scoring (CLS-Euler)"]
    );
    assert_eq!(text.lines().nth(1), Some("estimator,mean_alpha,sd_alpha,mean_beta,sd_beta,failures"));
}

#[test]
fn single_replication_marks_sd_absent() {
    let dir = TempDir::new().unwrap();
    let per_rep = dir.path().join("reps.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_diffest"))
        .args(["montecarlo", path_str(&config_path("table1.toml")), "--replications", "1"])
        .args(["--per-replication", path_str(&per_rep)])
        .env("DIFFEST_WORKERS", "2")
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", stderr(&res));
    let text = String::from_utf8(res.stdout).unwrap();
    for row in data_rows(&text) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!((f[2], f[4], f[5]), ("NA", "NA", "0"), "{row}");
    }
    let reps = fs::read_to_string(&per_rep).unwrap();
    assert_eq!(data_rows(&reps).len(), 6);
    assert!(data_rows(&reps).iter().all(|r| r.starts_with("0,20240101,")));
}
