use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use duct_channel_cli::config::{preset, Layers, Resolved, Source, PRESETS};

fn ductsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ductsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn ductsim")
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.txt"))
}

/// Set `UPDATE_GOLDEN=1` to rewrite the files after an intended change.
#[test]
fn resolved_presets_match_golden_files() {
    for p in PRESETS {
        let layers = Layers {
            preset: Some(preset(p.name).unwrap()),
            ..Layers::default()
        };
        let resolved = Resolved::resolve(&layers).unwrap();
        let mut text = format!("command = {}\n", p.command);
        for line in resolved.describe() {
            text.push_str(&line);
            text.push('\n');
        }
        let path = golden_path(p.name);
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(&path, &text).unwrap();
        }
        let expected =
            fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text, expected, "preset {}", p.name);
    }
}

#[test]
fn derived_values_follow_the_radius() {
    let layers = Layers::default()
        .with_flag("channel.radius=200 um")
        .unwrap();
    let r = Resolved::resolve(&layers).unwrap();
    assert_eq!(r.number("receiver.extent_x"), 1e-4);
    assert_eq!(r.source("receiver.extent_x"), Source::Derived);
    assert!((r.number("release.r0") - 1.5e-4).abs() < 1e-18);
    assert_eq!(r.source("channel.radius"), Source::Flag);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--seed",
        "42",
        "--set",
        "release.n_tx=3000",
        "--set",
        "cir.t_end=0.5 s",
        "--set",
        "cir.points=20",
    ];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(ductsim(&args, &a).status.success());
    assert!(ductsim(&args, &b).status.success());
    for name in ["simulate_d200um.csv", "simulate_d800um.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
        let text = String::from_utf8(x).unwrap();
        assert!(text.contains("# seed = 42  # flag"), "{text}");
    }

    let c = dir.path().join("c");
    let mut other = args;
    other[2] = "43";
    assert!(ductsim(&other, &c).status.success());
    assert_ne!(
        fs::read(a.join("simulate_d200um.csv")).unwrap(),
        fs::read(c.join("simulate_d200um.csv")).unwrap()
    );
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ductsim(&["regime", "--set", "channel.radiu=3 um"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("channel.radiu"), "{stderr}");
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn bad_values_and_files_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[channel]\nradius = \"-4 um\"\n").unwrap();
    let out = ductsim(
        &["regime", "--config", cfg.to_str().unwrap()],
        &dir.path().join("o"),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = ductsim(&["preset", "fig9"], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    let out = ductsim(&["regime", "--threads", "0"], &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn toml_file_layers_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 5\n[channel]\nradius = \"200 um\"\n[regime]\nradii = [\"50 um\"]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    let out = ductsim(
        &[
            "regime",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "receiver.distances=400 um",
        ],
        &out_dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(out_dir.join("regime.csv")).unwrap();
    assert!(text.contains("# seed = 5  # file"), "{text}");
    assert!(
        text.contains("# receiver.distances = [4e-4]  # flag"),
        "{text}"
    );
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2, "{text}");
}

#[test]
fn empty_grid_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = ductsim(
        &[
            "simulate",
            "--set",
            "cir.points=0",
            "--set",
            "receiver.distances=200 um",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("simulate_d200um.csv")).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data, vec!["t_s,count,n_tx"]);
}

#[test]
fn json_output_carries_config_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = ductsim(
        &["preset", "regime_map_fig3", "--format", "json"],
        dir.path(),
    );
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("regime.json")).unwrap()).unwrap();
    assert_eq!(doc["meta"]["preset"], "regime_map_fig3");
    assert_eq!(doc["meta"]["config"]["regime.radii"]["source"], "preset");
    assert_eq!(doc["columns"][0], "a_m");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 4);
}
