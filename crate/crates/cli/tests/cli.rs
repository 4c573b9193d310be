use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command as Process;

use degctrl_cli::{run, Command};

fn bundled(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    fs::read_to_string(path).unwrap()
}

/// The bundled example at a coarser grid, to keep the tests quick.
fn small_example() -> String {
    bundled("example.toml").replace("n = 128\nm = 256", "n = 48\nm = 96")
}

fn diag_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("{key} missing"))
        .parse()
        .unwrap()
}

fn files_in(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[test]
fn bundled_example_validates() {
    let dir = tempfile::tempdir().unwrap();
    let (code, manifest) = run(Command::Validate, &bundled("example.toml"), dir.path());
    assert_eq!(code, 0);
    assert_eq!(manifest.status, "ok");
    let report = fs::read_to_string(dir.path().join("validation.txt")).unwrap();
    assert!(report.contains("overall: PASS"));
}

#[test]
fn alpha_outside_range_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("example.toml").replace("alpha = 0.5", "alpha = 1.5");
    let (code, _) = run(Command::Validate, &cfg, dir.path());
    assert_eq!(code, 2);
    let report = fs::read_to_string(dir.path().join("validation.txt")).unwrap();
    assert!(report.contains("H1.K_range"), "{report}");
}

#[test]
fn malformed_config_exits_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    fs::write(&cfg_path, "seed = 1\n[coefficient]\nalpha = \"half\"\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_degctrl"))
        .arg("validate")
        .arg(&cfg_path)
        .arg("-o")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let err = fs::read_to_string(dir.path().join("out/error.txt")).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_example().replace("[control]", "[control]\nstep = 3");
    let (code, _) = run(Command::Validate, &cfg, dir.path());
    assert_eq!(code, 4);
}

#[test]
fn control_linear_steers_to_zero_and_lists_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let (code, manifest) = run(Command::ControlLinear, &small_example(), dir.path());
    assert_eq!(code, 0);
    let diag = fs::read_to_string(dir.path().join("diagnostics.txt")).unwrap();
    assert!(diag_value(&diag, "terminal_ratio") <= 1e-3);
    let listed: BTreeSet<String> = manifest.outputs.iter().cloned().collect();
    assert_eq!(listed, files_in(dir.path()));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = small_example();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for cmd in [Command::ControlLinear, Command::ProbeObservability] {
        let (ca, ma) = run(cmd, &cfg, a.path());
        let (cb, _) = run(cmd, &cfg, b.path());
        assert_eq!((ca, cb), (0, 0));
        for f in ma.outputs.iter().filter(|f| f.ends_with(".csv")) {
            let (x, y) = (fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
            assert!(x == y, "{f} differs");
        }
    }
}

fn sweep_rows(cfg: &str) -> Vec<Vec<String>> {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(Command::Sweep, cfg, dir.path());
    assert_eq!(code, 0);
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn grid_sweep_gives_one_row_per_combination() {
    let cfg = format!("{}\n[sweep]\ns = [0.5, 1.0, 2.0]\nlambda = [2.0, 2.5, 3.0]\n", small_example());
    let rows = sweep_rows(&cfg);
    assert_eq!(rows.len(), 9);
    let hashes: BTreeSet<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(hashes.len(), 9);
}

#[test]
fn singleton_sweep_matches_a_single_run() {
    let base = small_example();
    let rows = sweep_rows(&format!("{base}\n[sweep]\ns = [1.0]\n"));
    assert_eq!(rows.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let (code, manifest) = run(Command::ControlLinear, &base, dir.path());
    assert_eq!(code, 0);
    assert_eq!(rows[0][1], manifest.config_hash);
    let diag = fs::read_to_string(dir.path().join("diagnostics.txt")).unwrap();
    assert_eq!(rows[0][9].parse::<f64>().unwrap(), diag_value(&diag, "terminal_ratio"));
    assert_eq!(rows[0][11].parse::<f64>().unwrap(), diag_value(&diag, "cg_iters"));
}

#[test]
fn bundled_alpha_sweep_controls_every_case() {
    let cfg = bundled("sweep_alpha.toml").replace("[sweep]", "[discretization]\nn = 48\nm = 96\n\n[sweep]");
    let rows = sweep_rows(&cfg);
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[7], "ok", "{r:?}");
        assert!(r[9].parse::<f64>().unwrap() <= 1e-3, "{r:?}");
    }
}
