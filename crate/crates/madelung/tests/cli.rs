//! Command-line wiring: files appear, documents parse, errors are JSON.
//! Physics is checked in the library tests, not here.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn madelung(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_madelung"))
        .args(args)
        .env_remove("MADELUNG_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = madelung(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("{e}: {text}"));
    assert!(v["error"]["kind"].is_string() && v["error"]["message"].is_string(), "{v}");
    v
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Every printed artifact line names an existing file of the stated size.
fn check_listing(stdout: &str) -> usize {
    let mut n = 0;
    for line in stdout.lines().filter(|l| l.contains(" bytes  sha256:")) {
        let mut parts = line.split("  ");
        let path = parts.next().unwrap();
        let bytes: u64 = parts.next().unwrap().trim_end_matches(" bytes").parse().unwrap();
        assert_eq!(std::fs::metadata(path).unwrap().len(), bytes, "{path}");
        n += 1;
    }
    n
}

#[test]
fn scenario_writes_a_complete_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ws");
    let o = out.to_str().unwrap();
    let listing = ok(&["scenario", "--name", "well_superposition", "--out", o, "--grid-n", "801", "--frames", "9"]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["format"], "madelung-run/1");
    assert_eq!(m["scenario"], "well_superposition");
    assert_eq!(m["config"]["grid_n"], 801);
    let files = m["files"].as_array().unwrap();
    // the listing has every file plus the manifest itself
    assert_eq!(check_listing(&listing), files.len() + 1);
    for f in files {
        let p = out.join(f["path"].as_str().unwrap());
        assert_eq!(std::fs::metadata(&p).unwrap().len(), f["bytes"].as_u64().unwrap());
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
    let state = &m["states"][0];
    assert_eq!(state["frames"].as_array().unwrap().len(), 9);
    assert_eq!(state["figures"].as_array().unwrap().len(), 6);
    for key in ["state", "streamlines", "nodes"] {
        assert!(out.join(state[key].as_str().unwrap()).is_file(), "{key}");
    }
    let frame = std::fs::read_to_string(out.join(state["frames"][0]["file"].as_str().unwrap())).unwrap();
    let header = frame.lines().next().unwrap();
    assert!(header.starts_with("x,rho,valid,Q,K_a,K_s,Q_r,K_c,E_p,K_cl,U,q,"), "{header}");
    assert!(header.ends_with("soft_qka,hard_qka,soft_qrkc,hard_qrkc,forbidden_global,forbidden_local"));
    let svg = std::fs::read_to_string(out.join(state["figures"][0].as_str().unwrap())).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    // the written config reproduces the run's config
    let cfg = madelung::config::load_config(&out.join("config.toml")).unwrap();
    assert_eq!(serde_json::to_value(&cfg).unwrap(), m["config"]);
}

#[test]
fn qrkc_shading_covers_at_least_the_qka_shading() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("qs");
    let r = run.to_str().unwrap();
    ok(&["scenario", "--name", "quartic_superposition", "--out", r, "--grid-n", "1001", "--frames", "9"]);
    let shaded = |sh: &str| -> f64 {
        let svg = dir.path().join(format!("{sh}.svg"));
        let line = ok(&[
            "render", "--input", r, "--kind", "streamlines", "--shading", sh, "--out", svg.to_str().unwrap(),
        ]);
        assert!(svg.is_file());
        let stats = madelung::render::shaded_area(&std::fs::read_to_string(&svg).unwrap());
        let printed: f64 = line.split("shaded ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
        assert_eq!(printed, (stats.soft + stats.hard).round());
        stats.soft + stats.hard
    };
    let (qka, qrkc) = (shaded("qka"), shaded("qrkc"));
    assert!(qrkc >= qka, "{qrkc} < {qka}");
}

#[test]
fn single_purpose_commands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let common = ["--grid-n", "801", "--frames", "5"];
    let with = |cmd: &str, name: &str, out: &str| {
        let mut a = vec![cmd, "--name", name, "--out", out];
        a.extend(common);
        ok(&a)
    };

    let (e, ev, f, c, s) = (d("eigen"), d("evolve"), d("fields"), d("classify"), d("stream"));
    assert_eq!(check_listing(&with("eigen", "ho_eigenstates", &e)), 2);
    let basis = json(&dir.path().join("eigen/eigenbasis.json"));
    assert_eq!(basis["energies"].as_array().unwrap().len(), 2);

    assert_eq!(check_listing(&with("evolve", "well_superposition", &ev)), 6);
    let psi = std::fs::read_to_string(dir.path().join("evolve/pair/psi/psi_000.csv")).unwrap();
    assert_eq!(psi.lines().next().unwrap(), "x,re,im,mask");

    assert_eq!(check_listing(&with("fields", "well_barrier_superposition", &f)), 6);
    assert_eq!(json(&dir.path().join("fields/pair/checks.json")).as_array().unwrap().len(), 5);

    with("classify", "quartic_eigenstates", &c);
    for label in ["n0", "n1"] {
        let rel = json(&dir.path().join(format!("classify/{label}/relations.json")));
        assert!(rel[0]["global_in_hard"].is_boolean());
    }

    with("streamlines", "ho_superposition", &s);
    let nodes = json(&dir.path().join("stream/pair/nodes.json"));
    assert!(nodes["events"].is_array() && nodes["halted"].is_array());
    assert!(std::fs::read_to_string(dir.path().join("stream/pair/streamlines.csv"))
        .unwrap()
        .starts_with("seed_q,t,x\n"));
}

#[test]
fn vortex_command_writes_profile_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v");
    let stdout = ok(&["vortex", "--out", v.to_str().unwrap(), "--grid-n", "61", "--shading", "qka"]);
    assert!(stdout.contains("circulation"));
    for f in ["ledger.csv", "profile.csv", "loops.csv", "nodes.json", "state.json", "figures/vortex_qka.svg"] {
        assert!(v.join("vortex").join(f).is_file(), "{f}");
    }
    assert!(!v.join("vortex/figures/vortex_qrkc.svg").exists());
}

#[test]
fn config_files_drive_runs_and_must_agree_with_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "name = \"well_superposition\"\ngrid_n = 401\nframes = 3\n").unwrap();
    let out = dir.path().join("run");
    ok(&["fields", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(out.join("pair/frames/frame_002.csv").is_file());
    assert!(!out.join("pair/frames/frame_003.csv").exists());

    let bad = madelung(&["fields", "--config", cfg.to_str().unwrap(), "--name", "ho_superposition"]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(error_json(&bad)["error"]["kind"], "usage");
}

#[test]
fn every_shipped_config_is_its_preset() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for n in madelung::core::scenarios::ScenarioName::ALL {
        let cfg = madelung::config::load_config(&dir.join(format!("{n}.toml"))).unwrap();
        assert_eq!(cfg, madelung::core::scenarios::ScenarioConfig::preset(n));
        seen += 1;
    }
    assert_eq!(seen, 9);
}

#[test]
fn errors_are_json_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], i32, &str); 6] = [
        (&["scenario", "--bogus"], 2, "usage"),
        (&["frobnicate"], 2, "usage"),
        (&["scenario", "--name", "nope"], 2, "usage"),
        (&["scenario"], 2, "usage"),
        (&["eigen", "--name", "vortex_2d"], 2, "usage"),
        (&["render", "--input", "/nonexistent/run", "--kind", "densities"], 1, "io"),
    ];
    for (args, code, kind) in cases {
        let out = madelung(args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        assert_eq!(error_json(&out)["error"]["kind"], kind, "{args:?}");
    }
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "name = \"well_superposition\"\ngrid_n = 2\n").unwrap();
    let out = madelung(&["scenario", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "config");
    // failed preconditions from the library have their own kind
    let out = madelung(&["tune", "--name", "well_superposition", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "precondition");
}

#[test]
fn help_and_version_exit_cleanly() {
    assert!(ok(&["--help"]).contains("scenario"));
    assert!(ok(&["--version"]).starts_with("madelung"));
}
