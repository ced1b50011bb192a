use std::fs;
use std::process::Command;

use dtc_sweep::output::read_table;

fn dtcsync() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dtcsync"));
    c.env_remove("DTCSYNC_WORKERS");
    c
}

#[test]
fn invalid_flags_report_every_field() {
    let out = dtcsync().args(["--mode", "trajectories", "--nr", "0", "--dt=-1", "--window", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("error[config]: "));
    for field in ["line/grid", "output", "dt", "nr", "window"] {
        assert!(stdout.contains(&format!("{field}: ")), "{field} missing from {stdout}");
    }
}

#[test]
fn unreadable_config_is_an_io_error() {
    let out = dtcsync().args(["--config", "/nonexistent/run.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("error[io]: "));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "mode = \"lyapunov-map\"\noutput = \"{}\"\nnr = 3\nt_end = 5.0\nlle_transient = 1.0\n\n[line]\nc1 = 1.0\nc2 = 1.0\nc3 = 1.5\ngamma_min = 1.2\ngamma_max = 1.3\ngamma_step = 0.1\n",
            out_dir.display()
        ),
    )
    .unwrap();
    // Flags ask for a different mode, size and line; the file wins.
    let out = dtcsync()
        .args(["--mode", "pearson-map", "--nr", "9", "--seed", "4", "--workers", "1"])
        .args(["--c1", "2", "--c2", "1", "--c3", "2", "--gamma-min", "0", "--gamma-max", "1", "--gamma-step", "0.5"])
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    let (cols, rows) = read_table(&out_dir.join("meanfield.tsv")).unwrap();
    assert!(cols.contains(&"lle_mean".to_string()));
    assert!(!cols.contains(&"pearson".to_string()));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[cols.iter().position(|c| c == "lle_samples").unwrap()] == 3.0));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["mode"], "lyapunov-map");
    // Not in the file, so the flag value stands.
    assert_eq!(manifest["seed"], 4);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["outputs"][0], "meanfield.tsv");
}

#[test]
fn tables_name_columns_with_units() {
    let dir = tempfile::tempdir().unwrap();
    let out = dtcsync()
        .args(["--mode", "trajectories", "--spin", "1", "--nr", "4", "--t-end", "1", "--dt", "1e-3"])
        .args(["--c1", "2", "--c2", "1", "--c3", "2", "--gamma-min", "1", "--gamma-max", "1", "--gamma-step", "1"])
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("trajectories.tsv")).unwrap();
    let header = text.lines().find(|l| l.starts_with("# columns: ")).unwrap();
    for col in header.trim_start_matches("# columns: ").split('\t') {
        assert!(col.ends_with(']') && col.contains('['), "{col} lacks a unit");
    }
    assert!(dir.path().join("hist/point_0000.tsv").exists());
    assert!(dir.path().join("hist/point_0000_entropy.tsv").exists());
    assert!(dir.path().join("series/point_0000.tsv").exists());
    assert_eq!(fs::read_dir(dir.path().join("records/point_0000")).unwrap().count(), 4);
}
