//! End-to-end tests of the `pekar` binary: subcommand surfaces, file
//! formats, validation, and the byte-identical rerun contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pekar() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pekar"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A configuration small enough for seconds-scale end-to-end runs. The
/// verification sections come out inconclusive at this size (by design:
/// too few effective samples), so run-all exits nonzero; artifacts and
/// determinism are what these tests pin down.
fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "schema_version": 1,
        "solver": {"r_max": 14.0, "n": 700, "tol": 1e-10, "mixing": 0.5, "max_iter": 300},
        "sampler": {
            "t_grid": [1.0, 2.0],
            "segments": 32,
            "betas": [0.0, 0.5, 1.0],
            "burn_in": 400,
            "draws": 40,
            "thinning": 20,
            "swap_interval": 20,
            "exchange": true,
            "eta_factor": 0.1
        },
        "sde": {"horizon": 200.0, "step": 1e-3, "record_stride": 10, "bins": 16, "hist_r_max": 5.0},
        "free_energy": {"t_values": [1.0, 2.0]},
        "verify": {"tube_epsilon_factor": 0.5, "min_effective_samples": 500.0}
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn solve_writes_solution_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(pekar()
        .args(["solve", "--rmax", "16", "--n", "800", "--tol", "1e-10"])
        .arg("--out")
        .arg(dir.path()));
    assert_success(&out);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap())
            .unwrap();
    let rho = meta["summary"]["rho"].as_f64().unwrap();
    assert!((rho - 0.217).abs() < 0.002, "rho = {rho}");
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(csv.starts_with("r,psi0,potential,drift\n"));
    assert_eq!(csv.lines().count(), 801);
    let psi_csv = fs::read_to_string(dir.path().join("psi0.csv")).unwrap();
    assert!(psi_csv.starts_with("r,psi0\n"));
}

#[test]
fn coulomb_command_reads_measure_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    // shell of 4 points at radius 2 on the axes; a regular configuration
    // with exact pairwise distances
    let csv = "x,y,z,w\n2,0,0,0.25\n-2,0,0,0.25\n0,2,0,0.25\n0,0,2,0.25\n";
    fs::write(dir.path().join("measure.csv"), csv).unwrap();
    fs::write(dir.path().join("measure.json"), r#"{"softening": 0.0}"#).unwrap();
    let out = run(pekar()
        .args(["coulomb", "--eval-grid", "0,0,0:3:0.75"])
        .arg("--measure")
        .arg(dir.path().join("measure.csv"))
        .arg("--out")
        .arg(dir.path().join("cl")));
    assert_success(&out);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cl/coulomb.json")).unwrap())
            .unwrap();
    // pairs: one antipodal at distance 4, five at distance 2*sqrt(2)
    let expect = 2.0 * (1.0 / 16.0) * (1.0 / 4.0 + 5.0 / (8.0f64).sqrt());
    let h = summary["hamiltonian"].as_f64().unwrap();
    assert!((h - expect).abs() < 1e-12, "{h} vs {expect}");
    let grid_csv = fs::read_to_string(dir.path().join("cl/lambda_grid.csv")).unwrap();
    assert!(grid_csv.starts_with("x,y,z,lambda\n"));
}

#[test]
fn sample_chain_and_ladder_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = run(pekar()
        .args(["sample", "--t", "1", "--beta", "0.5", "--seed", "9"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("chain")));
    assert_success(&out);
    let samples = fs::read_to_string(dir.path().join("chain/samples.csv")).unwrap();
    assert!(samples.starts_with("step,H,Yx,Yy,Yz,Wx,Wy,Wz,orbit_dist\n"));
    assert_eq!(samples.lines().count(), 41);

    let out = run(pekar()
        .args(["sample", "--t", "1", "--ladder", "--seed", "9"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("ladder")));
    assert_success(&out);
    assert!(dir.path().join("ladder/ladder.json").exists());
    assert!(dir.path().join("ladder/samples_beta0.000.csv").exists());
    assert!(dir.path().join("ladder/samples_beta1.000.csv").exists());
}

#[test]
fn config_validation_rejects_missing_beta_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = serde_json::json!({
        "schema_version": 1,
        "sampler": {
            "t_grid": [1.0], "segments": 32, "betas": [0.0, 0.5],
            "burn_in": 100, "draws": 10, "thinning": 10,
            "swap_interval": 10, "exchange": true, "eta_factor": 0.1
        }
    });
    let path = dir.path().join("bad.json");
    fs::write(&path, bad.to_string()).unwrap();
    let out = run(pekar()
        .args(["sample", "--t", "1"])
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("x")));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("betas must end at 1.0"), "stderr: {err}");
}

#[test]
fn run_all_produces_report_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let mut first = pekar();
    first
        .args(["run-all", "--seed", "31337"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("a"));
    let out_a = run(&mut first);
    // at this desk size several criteria are inconclusive or failing, so a
    // nonzero exit is expected; the report must exist either way
    assert!(
        out_a.status.code() == Some(0) || out_a.status.code() == Some(1),
        "unexpected exit: {:?}\nstderr: {}",
        out_a.status.code(),
        String::from_utf8_lossy(&out_a.stderr)
    );
    let report_a = fs::read_to_string(dir.path().join("a/report.json")).unwrap();
    for artifact in [
        "a/solution/solution.json",
        "a/solution/solution.csv",
        "a/samples_t1_beta0.csv",
        "a/samples_t1_beta1.csv",
        "a/samples_t2_beta0.csv",
        "a/samples_t2_beta1.csv",
        "a/sde_histogram.csv",
        "a/sde_ou_histogram.csv",
        "a/sde_summary.json",
        "a/ti_t1.json",
        "a/ti_integrand_t1.csv",
        "a/ti_t2.json",
        "a/measure_psi2_sample.csv",
        "a/measure_psi2_sample.json",
        "a/config_echo.json",
        "a/run_meta.json",
    ] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }

    // byte-identical rerun with the same seed root
    let mut second = pekar();
    second
        .args(["run-all", "--seed", "31337"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("b"));
    let out_b = run(&mut second);
    assert_eq!(out_a.status.code(), out_b.status.code());
    let report_b = fs::read_to_string(dir.path().join("b/report.json")).unwrap();
    assert_eq!(report_a, report_b, "report.json differs between identical runs");

    // a different seed changes the sampled numbers
    let mut third = pekar();
    third
        .args(["run-all", "--seed", "31338"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("c"));
    run(&mut third);
    let report_c = fs::read_to_string(dir.path().join("c/report.json")).unwrap();
    assert_ne!(report_a, report_c);

    // verify recomputes the sections from the artifacts
    let out_v = run(pekar()
        .arg("verify")
        .arg("--in")
        .arg(dir.path().join("a"))
        .arg("--out")
        .arg(dir.path().join("v")));
    assert!(
        out_v.status.code() == Some(0) || out_v.status.code() == Some(1),
        "verify crashed: {}",
        String::from_utf8_lossy(&out_v.stderr)
    );
    let recheck: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v/verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(
        recheck["consistent_with_report"]["mean_h_matches_sample_tables"],
        serde_json::Value::Bool(true)
    );
}

#[test]
fn sde_command_writes_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = run(pekar()
        .args(["solve", "--rmax", "14", "--n", "700"])
        .arg("--out")
        .arg(dir.path().join("sol")));
    assert_success(&out);
    let out = run(pekar()
        .args(["sde", "--seed", "5"])
        .arg("--config")
        .arg(&cfg)
        .arg("--solution")
        .arg(dir.path().join("sol"))
        .arg("--out")
        .arg(dir.path().join("sde")));
    assert_success(&out);
    let hist = fs::read_to_string(dir.path().join("sde/sde_histogram.csv")).unwrap();
    assert!(hist.starts_with("r_bin_center,count,reference_density\n"));
    assert_eq!(hist.lines().count(), 17);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sde/sde_summary.json")).unwrap())
            .unwrap();
    assert!(summary["l1_pekar"].as_f64().unwrap() < 0.5);
}

#[test]
fn free_energy_command_runs_degenerate_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = run(pekar()
        .args(["free-energy", "--seed", "2"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("fe")));
    assert_success(&out);
    let ti: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fe/ti_t1.json")).unwrap())
            .unwrap();
    assert!(ti["estimate"].as_f64().unwrap() > 0.0);
    let integrand = fs::read_to_string(dir.path().join("fe/ti_integrand_t1.csv")).unwrap();
    assert!(integrand.starts_with("beta,mean_H,std_err\n"));
    assert_eq!(integrand.lines().count(), 4);
}
