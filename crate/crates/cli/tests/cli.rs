//! End-to-end command tests against the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regionflow"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
    output
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Minimal XML well-formedness: every opened tag is closed in order.
fn assert_well_formed_xml(text: &str) {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        let end = rest[start..].find('>').expect("unclosed angle bracket") + start;
        let tag = &rest[start + 1..end];
        rest = &rest[end + 1..];
        if let Some(name) = tag.strip_prefix('/') {
            assert_eq!(stack.pop().as_deref(), Some(name.trim()), "mismatched close");
        } else if !tag.ends_with('/') {
            stack.push(tag.split_whitespace().next().unwrap().to_string());
        }
    }
    assert!(stack.is_empty(), "unclosed tags: {stack:?}");
}

#[test]
fn generated_grid_builds_the_expected_qubo_export() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("grid.json");
    let model = dir.path().join("model.txt");
    run_ok(&["gen-grid", "3", "3", "--p", "3", "--out", path_str(&inst)]);
    run_ok(&[
        "build",
        "--instance",
        path_str(&inst),
        "--form",
        "qubo",
        "--roots",
        "9,2,6",
        "--out",
        path_str(&model),
    ]);
    let text = std::fs::read_to_string(&model).unwrap();
    assert!(
        text.starts_with("# vars=195 offset="),
        "unexpected header: {}",
        text.lines().next().unwrap_or_default()
    );
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields.len(), 3, "bad line {line:?}");
        let i: u32 = fields[0].parse().unwrap();
        let j: u32 = fields[1].parse().unwrap();
        assert!(i <= j && j < 195);
        let _: f64 = fields[2].parse().unwrap();
    }
    // The manifest sits next to the output and hashes it.
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("model.txt.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "build");
    assert_eq!(manifest["config"]["form"], "qubo");
    let expected = {
        use sha2::Digest;
        let digest = sha2::Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    assert_eq!(manifest["outputs"][0]["sha256"], expected.as_str());
}

#[test]
fn dqm_export_has_the_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("grid.json");
    let model = dir.path().join("model.txt");
    run_ok(&["gen-grid", "3", "3", "--p", "3", "--out", path_str(&inst)]);
    run_ok(&[
        "build",
        "--instance",
        path_str(&inst),
        "--form",
        "dqm",
        "--roots",
        "9,2,6",
        "--out",
        path_str(&model),
    ]);
    let text = std::fs::read_to_string(&model).unwrap();
    assert!(
        text.starts_with("# dqm vars=57 "),
        "unexpected header: {}",
        text.lines().next().unwrap_or_default()
    );
}

#[test]
fn solve_then_verify_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("path.json");
    let sol = dir.path().join("solution.json");
    run_ok(&["gen-grid", "1", "3", "--p", "2", "--out", path_str(&inst)]);
    run_ok(&[
        "solve",
        "--instance",
        path_str(&inst),
        "--sampler",
        "exact",
        "--out",
        path_str(&sol),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert_eq!(doc["sampler"], "exact");
    assert_eq!(doc["num_vars"], 22);
    assert_eq!(doc["energy"], 1.0);
    assert_eq!(doc["heterogeneity"], 1.0);
    assert_eq!(doc["feasibility"]["feasible"], true);
    let runs: Vec<u64> = serde_json::from_value(doc["bits_rle"].clone()).unwrap();
    assert_eq!(runs.iter().sum::<u64>(), 22);
    let verify = run_ok(&[
        "verify",
        "--instance",
        path_str(&inst),
        "--solution",
        path_str(&sol),
        "--theorem1",
    ]);
    let stdout = String::from_utf8_lossy(&verify.stdout);
    assert!(stdout.contains("verdict: feasible"), "stdout: {stdout}");
    assert!(stdout.contains("balanced within-region flows exist"));
}

#[test]
fn verify_flags_broken_labelings() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("path.json");
    let sol = dir.path().join("solution.json");
    run_ok(&["gen-grid", "1", "3", "--p", "2", "--out", path_str(&inst)]);
    run_ok(&[
        "solve",
        "--instance",
        path_str(&inst),
        "--sampler",
        "exact",
        "--out",
        path_str(&sol),
    ]);
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    // Split region 1 across the two path endpoints.
    doc["labels"]["1"] = 1.into();
    doc["labels"]["2"] = 2.into();
    doc["labels"]["3"] = 1.into();
    doc["heterogeneity"] = 2.0.into();
    std::fs::write(&sol, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let output = bin()
        .args(["verify", "--instance", path_str(&inst), "--solution", path_str(&sol)])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("verdict: infeasible"), "stdout: {stdout}");
    assert!(stdout.contains("split into 2 components"), "stdout: {stdout}");
}

#[test]
fn outputs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let inst_a = dir.path().join("a.json");
    let inst_b = dir.path().join("b.json");
    for path in [&inst_a, &inst_b] {
        run_ok(&[
            "gen-grid", "4", "4", "--p", "3", "--attrs", "random", "--seed", "5", "--out",
            path_str(path),
        ]);
    }
    assert_eq!(
        std::fs::read(&inst_a).unwrap(),
        std::fs::read(&inst_b).unwrap()
    );
    let sol_a = dir.path().join("sa.json");
    let sol_b = dir.path().join("sb.json");
    for path in [&sol_a, &sol_b] {
        run_ok(&[
            "solve",
            "--instance",
            path_str(&inst_a),
            "--sampler",
            "sa",
            "--seed",
            "42",
            "--restarts",
            "4",
            "--sweeps",
            "120",
            "--out",
            path_str(path),
        ]);
    }
    assert_eq!(
        std::fs::read(&sol_a).unwrap(),
        std::fs::read(&sol_b).unwrap()
    );
}

#[test]
fn hybrid_solution_renders_to_well_formed_svg() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("grid.json");
    let sol = dir.path().join("solution.json");
    let pic = dir.path().join("map.svg");
    run_ok(&["gen-grid", "2", "3", "--p", "2", "--out", path_str(&inst)]);
    run_ok(&[
        "hybrid",
        "--instance",
        path_str(&inst),
        "--out",
        path_str(&sol),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert_eq!(doc["sampler"], "hybrid");
    assert_eq!(doc["feasibility"]["contiguous"], true);
    assert!(doc["history"].is_array());
    run_ok(&[
        "export-svg",
        "--instance",
        path_str(&inst),
        "--solution",
        path_str(&sol),
        "--out",
        path_str(&pic),
    ]);
    let svg = std::fs::read_to_string(&pic).unwrap();
    assert_well_formed_xml(&svg);
    assert_eq!(svg.matches("<rect").count(), 7); // background + 6 cells
    assert_eq!(svg.matches("stroke-width=\"3.5\"").count(), 2); // two roots
}

#[test]
fn bench_prints_a_summary_line() {
    let output = run_ok(&["bench", "--rows", "4", "--cols", "4", "--p", "2", "--seed", "1"]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("areas=16 p=2"), "stdout: {stdout}");
    assert!(stdout.contains("wall_clock_ms="), "stdout: {stdout}");
}

#[test]
fn failure_exit_codes_are_distinct() {
    // Unknown flag: usage error, code 2 from the parser.
    let usage = bin().args(["build", "--nonsense"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    // Missing file: operational error, code 1.
    let missing = bin()
        .args(["build", "--instance", "/nonexistent.json", "--form", "qubo", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}
