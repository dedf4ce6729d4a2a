use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phipsim"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_slic_transfers() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["simulate", "--seq", "SLIC"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["slic_traj.csv", "slic_simulate.json", "slic_traj.svg"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
    let s = json(&d.path().join("slic_simulate.json"));
    assert!(s["p_final"].as_f64().unwrap() >= 0.98);
    let mut r = csv::Reader::from_path(d.path().join("slic_traj.csv")).unwrap();
    let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(h, ["t_s", "Sx", "Sy", "Sz", "Ix_ps", "Iy_ps", "Iz_ps", "p"]);
    let last = r.records().last().unwrap().unwrap();
    let p: f64 = last[7].parse().unwrap();
    assert!((p - s["p_final"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn missing_sequence_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["simulate"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["simulate", "--seq", "NOPE"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["--set", "bogus=1", "list"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["sweep", "--seq", "SLIC", "--error", "dXX"]).status.code(), Some(2));
}

#[test]
fn offset_override_spoils_pulsepol() {
    let d = tempfile::tempdir().unwrap();
    let base = run(d.path(), &["simulate", "--seq", "PulsePol"]);
    assert!(base.status.success());
    let p0 = json(&d.path().join("pulsepol_simulate.json"))["p_final"].as_f64().unwrap();
    let o = run(d.path(), &["--set", "d0_hz=1000", "simulate", "--seq", "PulsePol"]);
    assert!(o.status.success());
    let s = json(&d.path().join("pulsepol_simulate.json"));
    assert_eq!(s["errors_hz"]["d0_hz"].as_f64(), Some(1000.0));
    assert!(s["p_final"].as_f64().unwrap() < 0.9 * p0);
}

#[test]
fn aht_reports() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["aht", "--seq", "PulsePol", "--report", "alpha"]);
    assert!(o.status.success());
    let line = stdout(&o);
    let v: f64 = line.trim_start_matches("alpha = ").split('π').next().unwrap().parse().unwrap();
    assert!((v - 0.5).abs() < 1e-6, "{line}");
    let s = json(&d.path().join("pulsepol_aht.json"));
    assert!((s["alpha_pi"].as_f64().unwrap() - 0.5).abs() < 1e-6);

    let o = run(d.path(), &["aht", "--seq", "MREVpol", "--report", "residual"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("(suppressing)"));
    assert_eq!(json(&d.path().join("mrevpol_aht.json"))["status"], "suppressing");

    let o = run(d.path(), &["aht", "--seq", "SLIC", "--report", "residual"]);
    assert!(stdout(&o).contains("not suppressing"));
    assert_eq!(run(d.path(), &["aht", "--seq", "SLIC", "--report", "bogus"]).status.code(), Some(2));
}

#[test]
fn table_columns_and_sweep_files() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["--set", "per_decade=2", "table", "--rows", "SLIC"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(d.path().join("table.csv")).unwrap();
    let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(h, ["name", "category", "Astar_over_A", "dDF_Hz", "d0_Hz", "d1_Hz", "dCS_Hz", "dRD_Hz", "grid_spacing"]);
    let rows: Vec<_> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "SLIC");
    assert!(d.path().join("table.json").exists());

    let o = run(d.path(), &["--set", "per_decade=4", "sweep", "--seq", "PulsePol", "--error", "d0"]);
    assert!(o.status.success());
    let s = json(&d.path().join("pulsepol_sweep_d0.json"));
    let t = s["threshold90_Hz"].as_f64().unwrap();
    assert!(t > 100.0 && t < 400.0, "{t}");
    let svg = std::fs::read_to_string(d.path().join("pulsepol_sweep_d0.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn outputs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(run(d.path(), &["--threads", "1", "simulate", "--seq", "MA-SLIC"]).status.success());
    }
    for f in ["ma_slic_traj.csv", "ma_slic_simulate.json", "ma_slic_traj.svg"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["--set", "seq=SLIC", "--set", "j_tau_pi=0.5", "config"]);
    assert!(o.status.success());
    let cfg = d.path().join("cfg.json");
    std::fs::write(&cfg, stdout(&o)).unwrap();
    let again = Command::new(env!("CARGO_BIN_EXE_phipsim")).arg("--config").arg(&cfg).arg("config").output().unwrap();
    assert_eq!(stdout(&again), stdout(&o));
    std::fs::write(&cfg, "{\n  \"j_hz\": 11.7,\n  \"typo\": 1\n}\n").unwrap();
    let bad = Command::new(env!("CARGO_BIN_EXE_phipsim")).arg("--config").arg(&cfg).arg("list").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains(":3:"));
}
