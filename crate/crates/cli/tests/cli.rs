//! Runs the `tclctl` binary on a small scenario.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcl_cli::scenario::{AuditFile, PlanFile};
use tcl_cli::{broadcast, io};
use tcl_core::generator::{baseline_power, TclParams};
use tcl_core::grid::build_grid;

fn tclctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclctl")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A 30-step, 2,000-unit scenario in `dir`; `extra` is appended to the config.
fn scenario(dir: &Path, weather: &str, extra: &str) -> PathBuf {
    std::fs::write(dir.join("weather.csv"), weather).unwrap();
    let mut reference = String::from("step,kw\n");
    for k in 0..30 {
        reference.push_str(&format!("{k},{}\n", 4400.0 + 1500.0 * (k as f64 / 5.0).sin()));
    }
    std::fs::write(dir.join("reference.csv"), reference).unwrap();
    let cfg = dir.join("scenario.toml");
    std::fs::write(
        &cfg,
        format!(
            "[fleet]\nn_tcl = 2000\nwarmup_minutes = 60.0\n\n[plan]\nhorizon = 30\nweather = \"weather.csv\"\nreference = \"reference.csv\"\n{extra}"
        ),
    )
    .unwrap();
    cfg
}

const WEATHER: &str = "minute,theta_a\n0,31.0\n60,33.0\n";

#[test]
fn plan_export_simulate_audit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), WEATHER, "");
    let out = dir.path().join("out");
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let o = tclctl(&["plan", "--config", cfg_s, "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plan_csv = std::fs::read_to_string(out.join("plan.csv")).unwrap();
    assert!(plan_csv.starts_with("# resolved configuration\n"));
    assert!(plan_csv.contains("# n_tcl = 2000"));
    let plan: PlanFile = io::read_json(&out.join("plan.json")).unwrap();
    assert_eq!(plan.schedule.len(), 30);
    assert!(plan.equivalence.relative_gap < 1e-3);

    let bc = out.join("broadcast.csv");
    let o = tclctl(&["export-broadcast", "--plan", out.join("plan.json").to_str().unwrap(), "--out", bc.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g = build_grid(20.0, 22.0, 10, 2).unwrap();
    let (cols, rows) = io::read_table(&bc).unwrap();
    assert_eq!(cols.len(), 1 + 18);
    assert!(rows.iter().all(|r| r.len() == 19));
    let back = broadcast::import(&bc, &g).unwrap();
    for (a, b) in back.iter().zip(&plan.schedule) {
        for (x, y) in a.switch_on.iter().chain(&a.switch_off).zip(b.switch_on.iter().chain(&b.switch_off)) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    let plan_path = out.join("plan.json");
    let o = tclctl(&["simulate", "--config", cfg_s, "--plan", plan_path.to_str().unwrap(), "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (cols, rows) = io::read_table(&out.join("trace.csv")).unwrap();
    assert_eq!(cols, ["k", "r_ba", "r", "y", "gamma_e", "tv"]);
    assert_eq!(rows.len(), 30);

    let audit = out.join("audit.json");
    let o = tclctl(&["audit", "--report", audit.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    // A report with a violation is flagged with exit code 4.
    let mut file: AuditFile = io::read_json(&audit).unwrap();
    file.report.cycling_violations = 3;
    file.report.tcls_with_violations = 1;
    let bad = dir.path().join("bad.json");
    io::write_json(&bad, &file).unwrap();
    let o = tclctl(&["audit", "--report", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn simulate_rejects_a_mismatched_fleet() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), WEATHER, "[solver]\neps = 1e-8\n");
    let out = dir.path().join("out");
    let o = tclctl(&["plan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let other = scenario(dir.path(), WEATHER, "[solver]\neps = 1e-8\n").with_file_name("other.toml");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("[fleet]\n", "[fleet]\nseed = 99\n");
    std::fs::write(&other, text).unwrap();
    let o = tclctl(&[
        "simulate",
        "--config",
        other.to_str().unwrap(),
        "--plan",
        out.join("plan.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_2_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let run = |weather: &str, extra: &str| {
        let cfg = scenario(dir.path(), weather, extra);
        tclctl(&["plan", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
    };
    let o = run("minute,theta_a\n0,31.0\n10,31.0\n", "");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("weather covers"), "{}", stderr(&o));

    let o = run("minute,theta_a\n0,31.0\n120,33.0\n", "dt_minutes = 3.0\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CFL"), "{}", stderr(&o));

    // Ambient at the setpoint breaks the drift-sign assumption.
    let o = run("minute,theta_a\n0,21.0\n60,21.0\n", "");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("assumption"), "{}", stderr(&o));

    let o = run(WEATHER, "[tcl]\nsigma2 = 4.0\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta_lambda^2/sigma2"), "{}", stderr(&o));

    let o = run(WEATHER, "[grid]\nq = 2\n");
    assert_eq!(o.status.code(), Some(2));

    let o = tclctl(&["plan", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_cap_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), WEATHER, "[solver]\nmax_iter = 2\n");
    let o = tclctl(&["plan", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn setpoint_weather_means_zero_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.csv");
    std::fs::write(&p, "minute,theta_a\n0,21\n1440,21\n").unwrap();
    let params = TclParams::reference();
    for t in io::read_weather(&p, 1.0, 360).unwrap() {
        assert_eq!(baseline_power(t, &params), 0.0);
    }
}

#[test]
fn validate_model_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), WEATHER, "[validate]\nsteps = 30\n");
    let out = dir.path().join("v");
    let o = tclctl(&[
        "validate-model",
        "--config",
        cfg.to_str().unwrap(),
        "--n-tcl",
        "1000",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("validation.json")).unwrap();
    assert!(text.contains("tv_mean_per_seed"));
}
