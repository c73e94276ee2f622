use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    root.join(name).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("origami-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn origami(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_origami"))
        .args(args)
        .env_remove("ORIGAMI_CONFIG")
        .env_remove("ORIGAMI_STEP")
        .env_remove("ORIGAMI_OUTPUT")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn validate_square_and_hole() {
    let out = origami(&["validate", &data("square_diagonal.fold")]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["valid"], true);
    assert_eq!(v["inner_creases"], 1);

    let v = json(&origami(&["validate", &data("pentagon_hole.fold")]));
    assert_eq!(v["holes"], 1);
    assert_eq!(v["hole_residuals"], 6);
}

#[test]
fn validate_rejects_crossing_creases() {
    let dir = scratch("nonplanar");
    let file = dir.join("x.fold");
    std::fs::write(
        &file,
        r#"{"vertices_coords": [[0,0],[1,0],[1,1],[0,1]],
            "edges_vertices": [[0,1],[1,2],[2,3],[3,0],[0,2],[1,3]],
            "edges_assignment": ["B","B","B","B","F","F"],
            "faces_vertices": [[0,1,2],[0,2,3]]}"#,
    )
    .unwrap();
    let out = origami(&["validate", file.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["error"], "NonPlanar");
}

#[test]
fn analyze_reports_deg() {
    let v = json(&origami(&["analyze", &data("fig2_vertex.fold")]));
    assert_eq!(v["deg"], 2);
    assert_eq!(v["flat"], false);

    let out = origami(&["analyze", &data("cube_corner.fold")]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["deg"], 0);
    assert_eq!(v["first_order_rigid"], true);

    assert_eq!(json(&origami(&["analyze", &data("miura_3x3.fold")]))["deg"], 4);
}

#[test]
fn analyze_off_variety_is_numeric_failure() {
    let out = origami(&["analyze", &data("cube_corner.fold"), "--rho", "0,0,0"]);
    assert_eq!(code(&out), 3);
    assert_eq!(json(&out)["error"], "NotOnVariety");

    let out = origami(&["analyze", &data("fig2_vertex.fold"), "--rho", "0,0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn degrees_flag_converts_input() {
    let v = json(&origami(&["analyze", &data("cube_corner.fold"), "--degrees", "--rho", "90,90,90"]));
    assert_eq!(v["deg"], 0);
}

#[test]
fn reversed_track_is_mirrored() {
    let a = json(&origami(&["track", &data("fig2_vertex.fold"), "--steps", "40"]));
    let b = json(&origami(&["track", &data("fig2_vertex.fold"), "--steps", "40", "--reverse"]));
    let (sa, sb) = (a["path"]["samples"].as_array().unwrap(), b["path"]["samples"].as_array().unwrap());
    assert_eq!(sa.len(), 41);
    assert_eq!(sa.len(), sb.len());
    for (x, y) in sa.iter().zip(sb) {
        for (p, q) in x["rho"].as_array().unwrap().iter().zip(y["rho"].as_array().unwrap()) {
            assert!((p.as_f64().unwrap() + q.as_f64().unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn locked_state_exits_infeasible() {
    let out = origami(&["track", &data("fig6_locked.fold")]);
    assert_eq!(code(&out), 4);
    let v = json(&out);
    assert_eq!(v["path"]["termination"], "Stalled");
    assert_eq!(v["path"]["samples"].as_array().unwrap().len(), 1);
}

#[test]
fn track_to_target() {
    let out = origami(&["track", &data("fig2_vertex.fold"), "--target", "1,0,1,0"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["reached"], true);
    assert_eq!(v["path"]["termination"], "TargetReached");
}

#[test]
fn compose_forest_and_reject_cycle() {
    let out = origami(&["track", &data("forest_pair.fold"), "--compose"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["path"]["termination"], "Composed");

    let out = origami(&["track", &data("fig6_lock.fold"), "--compose"]);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["error"], "NotForest");
}

#[test]
fn export_flat_state_is_planar() {
    let out = origami(&["export-obj", &data("miura_3x3.fold")]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# origami fold state\n# rho: "));
    assert!(text.contains("# residual: "));
    for line in text.lines().filter(|l| l.starts_with("v ")) {
        let z: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
        assert_eq!(z, 0.0);
    }
}

#[test]
fn export_path_writes_numbered_frames() {
    let dir = scratch("frames");
    let path = dir.join("path.json");
    let frames = dir.join("frames");
    let out = origami(&["track", &data("fig2_vertex.fold"), "--steps", "4", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let out = origami(&["export-obj", &data("fig2_vertex.fold"), "--path", path.to_str().unwrap(), "-o", frames.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["frames"].as_array().unwrap().len(), 5);
    for k in 0..5 {
        assert!(frames.join(format!("frame_{k:04}.obj")).exists());
    }
}

#[test]
fn generic_verdict_and_dot() {
    let dir = scratch("dot");
    let dot = dir.join("h.dot");
    let out = origami(&["generic", &data("quad_grid_2x2.fold"), "--dot", dot.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["generically_rigid"], true);
    assert_eq!(v["packing"]["trees"].as_array().unwrap().len(), 6);
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("graph H {"));
}

#[test]
fn solve_vertex_closed_form_and_empty() {
    let out = origami(&["solve-vertex", "--degrees", "--alphas", "90,90,90"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["closed_form"]["case"], "Isolated");
    assert_eq!(v["closed_form"]["points"].as_array().unwrap().len(), 2);

    let out = origami(&["solve-vertex", "--alphas", "0.5,0.5,2"]);
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["space"], "Empty");

    let v = json(&origami(&["solve-vertex", "--degrees", "--alphas", "90,90,90,90", "--samples", "9"]));
    assert_eq!(v["cross"], true);
    assert!(!v["samples"].as_array().unwrap().is_empty());
}

#[test]
fn identical_inputs_give_identical_bytes() {
    for args in [
        vec!["analyze", "miura_3x3.fold"],
        vec!["track", "fig2_vertex.fold", "--steps", "30"],
        vec!["generic", "quad_grid_2x2.fold"],
    ] {
        let file = data(args[1]);
        let mut full = args.clone();
        full[1] = &file;
        let a = origami(&full);
        let b = origami(&full);
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn config_precedence_flag_env_file() {
    let dir = scratch("config");
    let cfg = dir.join("origami.toml");
    std::fs::write(&cfg, "step = 0.05\nmax_iter = 40\nrank_tol = 1e-7\n").unwrap();
    let run = |env_step: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_origami"));
        cmd.env("ORIGAMI_CONFIG", &cfg).env_remove("ORIGAMI_STEP").env_remove("ORIGAMI_MAX_ITER");
        if let Some(s) = env_step {
            cmd.env("ORIGAMI_STEP", s).env("ORIGAMI_MAX_ITER", "30");
        }
        cmd.arg("show-config");
        if let Some(f) = flag {
            cmd.args(["--step", f]);
        }
        serde_json::from_slice::<Value>(&cmd.output().unwrap().stdout).unwrap()
    };
    let v = run(None, None);
    assert_eq!(v["step"], 0.05);
    assert_eq!(v["max_iter"], 40);
    assert_eq!(v["rank_tol"], 1e-7);
    assert_eq!(v["residual_tol"], 1e-9);
    let v = run(Some("0.02"), None);
    assert_eq!(v["step"], 0.02);
    assert_eq!(v["max_iter"], 30);
    let v = run(Some("0.02"), Some("0.01"));
    assert_eq!(v["step"], 0.01);
}

#[test]
fn invalid_config_is_rejected() {
    let out = origami(&["show-config", "--step", "4"]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["error"], "Config");
}
