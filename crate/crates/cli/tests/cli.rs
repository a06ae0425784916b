use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn percolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_percolab")).args(args).env_remove("PERCOLAB_SEED").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ponds_rows(seed: u64, radius: u32, rmax: u32) -> Vec<Vec<String>> {
    let o = percolab(&["ponds", "--seed", &seed.to_string(), "--stop-radius", &radius.to_string(), "--rmax", &rmax.to_string()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    csv::Reader::from_reader(o.stdout.as_slice())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn invade_writes_one_line_per_step() {
    let o = percolab(&["invade", "--seed", "1", "--stop-steps", "10"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 10);
    assert!(String::from_utf8_lossy(&o.stderr).contains("steps=10"));
}

#[test]
fn invade_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let o = percolab(&["invade", "--seed", "7", "--stop-radius", "12", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
        assert!(stdout(&o).starts_with("steps="));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn seed_comes_from_the_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_percolab"));
        c.args(args).env_remove("PERCOLAB_SEED");
        if let Some(s) = env {
            c.env("PERCOLAB_SEED", s);
        }
        c.output().unwrap().stdout
    };
    let base = ["invade", "--stop-steps", "5"];
    assert_eq!(run(Some("9"), &base), run(None, &["invade", "--stop-steps", "5", "--seed", "9"]));
    assert_ne!(run(Some("9"), &base), run(None, &base));
    // an explicit flag wins over the environment
    assert_eq!(run(Some("9"), &["invade", "--stop-steps", "5", "--seed", "1"]), run(None, &base));
}

#[test]
fn exit_codes() {
    assert_eq!(percolab(&["invade", "--stop-steps", "10", "--stop-radius", "8"]).status.code(), Some(3));
    assert_eq!(percolab(&["invade", "--seed", "1"]).status.code(), Some(3));
    assert_eq!(percolab(&["corrlen", "--p", "1.5"]).status.code(), Some(3));
    assert_eq!(percolab(&["corrlen", "--p", "0.4", "--trials", "100"]).status.code(), Some(1));
    assert_eq!(percolab(&["iic-sample", "--sigma", "oxo", "--n", "4"]).status.code(), Some(1));
    assert_eq!(percolab(&["iic-sample", "--sigma", "oooo", "--n", "8"]).status.code(), Some(1));
    // an open arm at p = 0 never happens
    let starved = percolab(&["iic-sample", "--sigma", "o", "--n", "8", "--p", "0", "--max-attempts", "300"]);
    assert_eq!(starved.status.code(), Some(2));
    assert_eq!(percolab(&["experiment", "--config", "/nonexistent/file.cfg"]).status.code(), Some(3));
    assert_eq!(percolab(&["bogus"]).status.code(), Some(3));
    assert_eq!(percolab(&["--help"]).status.code(), Some(0));
}

#[test]
fn ponds_table_shape() {
    // some runs reach the radius without crossing p_c; take the first that does not
    let rows = (0..20).map(|s| ponds_rows(s, 32, 64)).find(|r| !r.is_empty()).expect("a run with outlets");
    let taus: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(taus.windows(2).all(|w| w[1] < w[0]));
    assert!(taus.iter().all(|&t| t > 0.5));
    let o = percolab(&["ponds", "--seed", "3", "--stop-radius", "8", "--pc", "1"]);
    assert_eq!(stdout(&o), "k,tau_k,step_k,pond_volume,R_k,certified\r\n");
}

#[test]
fn doubling_rmax_never_uncertifies() {
    // paired seeds: certification flags may only move from false to true
    let seeds = 100;
    let mut bad = 0;
    let mut certified = 0;
    for seed in 0..seeds {
        let a = ponds_rows(seed, 32, 64);
        let b = ponds_rows(seed, 32, 128);
        assert_eq!(a.len(), b.len());
        certified += b.iter().filter(|r| r[5] == "true").count();
        if a.iter().zip(&b).any(|(x, y)| x[5] == "true" && y[5] == "false") {
            bad += 1;
        }
    }
    assert!(certified > 0);
    assert!(bad as f64 <= 0.01 * seeds as f64, "{bad} of {seeds} seeds lost a certification");
}

#[test]
fn estimator_commands() {
    let o = percolab(&["corrlen", "--p", "0.6", "--trials", "200", "--n-max", "64"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("p,epsilon,L,saturated,sigma,sigma_ci,trials\r\n"));
    let o = percolab(&["fourarm", "--n", "8", "--trials", "200", "--with-pn"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("n,p,prob,prob_ci,trials,p_n,p_n_ci,product,product_ci\r\n"));
    let o = percolab(&["iic-sample", "--sigma", "o", "--n", "4", "--samples", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 4);
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn experiment_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("classic");
    let cfg = write_config(dir.path(), &format!("# tiny\n[exp_classic]\ntrials = 2\noutput = {}\n", out.display()));
    let o = percolab(&["--threads", "1", "experiment", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("classic.csv"));
    assert!(text.lines().any(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    let first = fs::read(out.with_extension("csv")).unwrap();
    assert!(out.with_extension("json").exists());
    let o = percolab(&["experiment", "--config", &cfg]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.with_extension("csv")).unwrap(), first);

    let bad = write_config(dir.path(), "[exp_classic]\ntrials = 2\nnot a line\n");
    let o = percolab(&["experiment", "--config", &bad]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let unknown = write_config(dir.path(), "[exp_unknown]\n");
    assert_eq!(percolab(&["experiment", "--config", &unknown]).status.code(), Some(3));
}
