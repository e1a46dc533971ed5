use std::fs;
use std::path::Path;
use std::process::Command;

use lzsm_entanglement::config::Config;
use lzsm_entanglement::dynamics::{IntegratorConfig, Propagator};
use lzsm_entanglement::entanglement::{averaged_concurrence_numeric, concurrence, AveragingConfig};
use lzsm_entanglement::error::{ConfigError, DynamicsError, RunError};
use lzsm_entanglement::floquet::SeriesConfig;
use lzsm_entanglement::rwa::{reconstruct_original_frame, steady_state_rwa};
use lzsm_entanglement::sweep::run_dynamics;

const BASE: &str = r#"
[system]
delta1 = 0.1
delta2 = 0.15
eps1 = 3.2
eps2 = 6.4
g = 0.15

[drive]
amplitude = 5.0
omega = 1.0

[noise]
gamma1 = 1e-3
gamma2 = 1e-3
"#;

const GRID: &str = r#"
[sweep]
axis1 = { param = "eps1", min = 3.2, max = 3.5, n = 2 }
axis2 = { param = "g", min = 0.1, max = 0.15, n = 2 }
linked = [{ param = "eps2", source = "eps1", scale = 2.0 }]
method = "both"
output = "grid"
"#;

fn lzsm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lzsm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn sweep_writes_schema_overlay_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{BASE}{GRID}"));
    let out = dir.path().join("out");
    let run = lzsm(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let csv = out.join("grid.csv");
    assert_eq!(
        header(&csv),
        "eps1,g,cbar_numeric,cbar_analytic,tag,nearest,k,detuning,diagnostics"
    );
    let rows: Vec<String> = fs::read_to_string(&csv).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 4);
    // row-major: the second axis varies fastest
    assert!(rows[0].starts_with("3.2,0.1,"));
    assert!(rows[1].starts_with("3.2,0.15,"));
    assert!(rows[3].starts_with("3.5,0.15,"));
    for r in &rows {
        let tag = r.split(',').nth(4).unwrap();
        assert!(["nonres", "rwa", "numeric", "out_of_theory"].contains(&tag), "{r}");
    }

    let overlay = out.join("grid_overlay.csv");
    assert_eq!(header(&overlay), "condition,branch,k,x,y");
    let lines = fs::read_to_string(&overlay).unwrap();
    assert!(lines.lines().skip(1).count() > 0);
    for l in lines.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 5, "{l}");
        assert!(["standard", "extended"].contains(&f[1]));
        f[3].parse::<f64>().unwrap();
        f[4].parse::<f64>().unwrap();
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["workers"], 2);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_output_is_bit_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{BASE}{GRID}"));
    let mut files = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let run = lzsm(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert!(run.status.success());
        files.push(fs::read(out.join("grid.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn one_dimensional_sweep_and_method_override() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{BASE}\n[sweep]\naxis1 = {{ param = \"eps1\", min = 3.1, max = 3.2, n = 3 }}\n\
         linked = [{{ param = \"eps2\", source = \"eps1\", scale = 2.0 }}]\n"
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let run = lzsm(&[
        "sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--method", "analytic",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(text.starts_with("eps1,cbar_numeric,"));
    for r in text.lines().skip(1) {
        // analytic only: numeric column empty
        assert_eq!(r.split(',').nth(1), Some(""), "{r}");
    }
}

#[test]
fn unknown_key_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &BASE.replace("g = 0.15", "g = 0.15\ncoupling = 1.0"));
    let run = lzsm(&["sweep", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("coupling") && err.contains("line 8"), "{err}");

    match Config::from_toml(&BASE.replace("omega = 1.0", "omega = 1.0\nphase = 0.3")) {
        Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 12),
        other => panic!("{other:?}"),
    }
}

#[test]
fn dynamics_without_dissipation_is_rejected() {
    let text = BASE.replace("gamma1 = 1e-3", "gamma1 = 0.0").replace("gamma2 = 1e-3", "gamma2 = 0.0");
    let cfg = Config::from_toml(&text).unwrap();
    assert!(matches!(
        run_dynamics(&cfg),
        Err(RunError::Dynamics(DynamicsError::NoDissipation))
    ));
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &text);
    let run = lzsm(&["dynamics", "--config", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn dynamics_writes_trace_and_eigenvalue_columns() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[dynamics]\nt_max = 200.0\nsamples_per_period = 8\n");
    let cfg = write_config(dir.path(), &text);
    let run = lzsm(&["dynamics", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = dir.path().join("dynamics.csv");
    assert_eq!(header(&csv), "t_ns,C,trace,min_eig");
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    // 200 ns = 32 periods (rounded up) at 8 samples each, plus the initial row
    assert_eq!(rows.len(), 32 * 8 + 1);
    for r in &rows {
        assert!((r[2] - 1.0).abs() < 1e-9 && r[3] > -1e-8 && (0.0..=1.0).contains(&r[1]));
    }
    assert!(dir.path().join("dynamics_manifest.json").exists());
}

#[test]
fn uncoupled_tunnelling_gives_no_entanglement() {
    let cfg = Config::from_toml(&BASE.replace("delta1 = 0.1", "delta1 = 0.0")).unwrap();
    let c = averaged_concurrence_numeric(&cfg.params().unwrap(), &IntegratorConfig::default(), &AveragingConfig::default())
        .unwrap();
    assert!(c < 1e-6, "{c}");
}

#[test]
fn reconstructed_rwa_state_tracks_the_numeric_steady_state() {
    // close to the two-qubit line ε₁ + ε₂ = 10 (nearest single-qubit line 0.08 away)
    let text = BASE
        .replace("eps1 = 3.2", "eps1 = 3.3319")
        .replace("eps2 = 6.4", "eps2 = 6.6638")
        .replace("gamma1 = 1e-3", "gamma1 = 1e-4")
        .replace("gamma2 = 1e-3", "gamma2 = 1e-4");
    let p = Config::from_toml(&text).unwrap().params().unwrap();
    let ss = steady_state_rwa(&p, &SeriesConfig::default()).unwrap();
    let traj = Propagator::new(&p, &IntegratorConfig::default()).unwrap().steady_state().unwrap();
    let mut worst = 0.0f64;
    let stride = traj.len() / 8;
    for i in (0..traj.len()).step_by(stride) {
        let approx = reconstruct_original_frame(&ss, &p, traj.times[i]);
        worst = worst.max(approx.trace_distance(&traj.states[i]));
        assert!(concurrence(&approx).is_ok());
    }
    assert!(worst < 0.1, "{worst}");
}

#[test]
fn verify_subcommand_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let run = lzsm(&["verify", "--out", json.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    for c in report["checks"].as_array().unwrap() {
        assert!(c["name"].is_string() && c["value"].is_number() && c["bound"].is_number());
        assert_eq!(c["pass"], true);
    }
}

#[test]
fn resonances_subcommand_lists_closest_first() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let run = lzsm(&["resonances", "--config", &cfg]);
    assert!(run.status.success());
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(text.lines().count() >= 6, "{text}");
}
