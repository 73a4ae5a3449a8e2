use std::process::{Command, Output};

use serde_json::Value;

fn weylflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weylflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn list_names_families_and_checks() {
    let out = weylflow(&["list"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["sphere", "bryant_profile", "weyl_evolution", "div_weyl_codazzi"] {
        assert!(text.contains(name), "{name} missing from list");
    }
}

#[test]
fn check_three_sphere_to_stdout() {
    let out = weylflow(&["check", "--metric", "sphere:n=3", "--points", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let root: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(root["schema"], 1);
    assert_eq!(root["header"]["points"], 5);
    let reports = root["reports"].as_array().unwrap();
    assert!(reports.iter().any(|r| r["check_id"] == "weyl_dim3"));
    assert!(reports.iter().all(|r| r["pass"] == true && r["metric"] == "sphere:n=3,r=1"));
    // checks needing n ≥ 4 are not reported for a 3-manifold
    assert!(!reports.iter().any(|r| r["check_id"] == "div_weyl_codazzi"));
}

#[test]
fn check_filter_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = weylflow(&[
        "check",
        "--metric",
        "perturbed_flat:n=4",
        "--check",
        "div_weyl_codazzi",
        "--points",
        "4",
        "--format",
        "csv",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    assert!(lines[0].starts_with("check_id,"));
    assert!(lines[1].starts_with("div_weyl_codazzi,") && lines[1].contains("\"perturbed_flat:eps=0.1,n=4\""));
}

#[test]
fn catalog_file_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    std::fs::write(
        &path,
        "name = \"scaled_flat\"\nn = 3\ncomponents = [\"4\", \"0\", \"0\", \"4\", \"0\", \"4\"]\n[domain]\nkind = \"box\"\nlo = [0, 0, 0]\nhi = [1, 1, 1]\n[facts]\nscalar_curvature = 0.0\n",
    )
    .unwrap();
    let out = weylflow(&["check", "--catalog-file", path.to_str().unwrap(), "--points", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let root: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(root["reports"].as_array().unwrap().iter().any(|r| r["check_id"] == "known_facts"));

    // a wrong fact makes the run fail
    let wrong = std::fs::read_to_string(&path)
        .unwrap()
        .replace("scalar_curvature = 0.0", "scalar_curvature = 1.0");
    std::fs::write(&path, wrong).unwrap();
    let out = weylflow(&["check", "--catalog-file", path.to_str().unwrap(), "--points", "3"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&weylflow(&[])), 2);
    assert_eq!(code(&weylflow(&["check"])), 2);
    assert_eq!(code(&weylflow(&["check", "--metric", "torus"])), 2);
    assert_eq!(code(&weylflow(&["check", "--metric", "sphere:n=4", "--check", "no_such_check"])), 2);
    assert_eq!(code(&weylflow(&["flow", "--family", "banana"])), 2);
    assert_eq!(code(&weylflow(&["check", "--all", "--points", "zero"])), 2);
}

#[test]
fn product_flow_collapses_at_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.csv");
    let out = weylflow(&["flow", "--family", "product-spheres", "--output", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!((summary["blowup"].as_f64().unwrap() - 0.5).abs() < 1e-9, "{summary}");
    let csv = std::fs::read_to_string(&path).unwrap();
    let last = csv.lines().last().unwrap();
    let t: f64 = last.split(',').next().unwrap().parse().unwrap();
    assert!((t - 0.5).abs() < 1e-3, "last time {t}");
}

#[test]
fn sphere_flow_reports_type_one() {
    let out = weylflow(&["flow", "--family", "round-sphere", "--n", "4"]);
    assert_eq!(code(&out), 0);
    let summary: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(summary["singularity"]["type"], "type_i", "{summary}");
    let limit = summary["singularity"]["limit"].as_f64().unwrap();
    assert!((limit - 6f64.sqrt() / 3.0).abs() < 1e-3);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("t,"));
}

#[test]
fn bryant_profile_rows() {
    let out = weylflow(&["bryant", "--samples", "11"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,h,h1,h2,f1,R,lambda,mu");
    assert_eq!(lines.len(), 12);
    let summary: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(summary["max_relative_residual"].as_f64().unwrap() <= 1e-6, "{summary}");
}

#[test]
fn repeated_runs_are_identical() {
    let args = [
        "check",
        "--metric",
        "lcf_example:n=4",
        "--metric",
        "cylinder_RxS:n=4,K=1",
        "--points",
        "4",
    ];
    let a = weylflow(&args);
    let b = weylflow(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}
