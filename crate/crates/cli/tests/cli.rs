use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sl3lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sl3lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("SL3LAB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_v_on_harvey_lawson_data_converges() {
    let tmp = TempDir::new().unwrap();
    let out = sl3lab(tmp.path(), &["solve-v", "--shape", "disc", "--nx", "65", "--ny", "65", "--a", "1", "--phi", "hl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&tmp.path().join("pair_report.json"));
    assert_eq!(report["converged"], true);
    assert!(report["iterations"].as_u64().unwrap() <= 12);
    let pair = json(&tmp.path().join("pair.json"));
    assert_eq!(pair["a"], 1.0);
    assert_eq!(pair["domain"]["nx"], 65);
    assert_eq!(pair["u_values"].as_array().unwrap().len(), pair["v_values"].as_array().unwrap().len());
}

#[test]
fn zero_a_is_rejected() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["solve-v", "solve-f"] {
        let out = sl3lab(tmp.path(), &[cmd, "--a", "0", "--nx", "17", "--ny", "17"]);
        assert_eq!(out.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&out.stderr).contains("zero-a-rejected"));
    }
    assert!(std::fs::read_dir(tmp.path()).unwrap().next().is_none(), "no artifacts on rejection");
}

#[test]
fn outputs_are_deterministic_and_honour_the_output_directory() {
    let tmp = TempDir::new().unwrap();
    let run = |sub: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_sl3lab"))
            .args(["solve-f", "--a", "0.5", "--nx", "25", "--ny", "25", "--phi", "harmonic-2", "--pair-out"])
            .arg(tmp.path().join(sub).join("pair.csv"))
            .env("SL3LAB_OUT_DIR", tmp.path().join(sub))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run("one");
    run("two");
    for file in ["f.json", "f_report.json", "pair.csv"] {
        let a = std::fs::read(tmp.path().join("one").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("two").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn boundary_data_can_come_from_a_field_csv() {
    let tmp = TempDir::new().unwrap();
    let base = ["solve-f", "--a", "1", "--nx", "21", "--ny", "21"];
    let first = sl3lab(tmp.path(), &[&base[..], &["--phi", "hl", "--out", "f.csv", "--report", "r1.json"]].concat());
    assert!(first.status.success());
    let second = sl3lab(tmp.path(), &[&base[..], &["--phi", "f.csv", "--out", "g.csv", "--report", "r2.json"]].concat());
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(std::fs::read(tmp.path().join("f.csv")).unwrap(), std::fs::read(tmp.path().join("g.csv")).unwrap());
    let missing = sl3lab(tmp.path(), &[&base[..], &["--phi", "nope.csv"]].concat());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn wind_counts_the_affine_zero() {
    let tmp = TempDir::new().unwrap();
    for (coeffs, name) in [("1,0.2,-0.1", "p1.json"), ("0,0,0", "p2.json")] {
        let out = sl3lab(tmp.path(), &["eval-family", "--family", "affine", "--affine", coeffs, "--a", "1", "--out", name]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = sl3lab(tmp.path(), &["wind", "--pair1", "p1.json", "--pair2", "p2.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let w = json(&tmp.path().join("wind.json"));
    assert_eq!(w["boundary_winding"], 1);
    assert_eq!(w["zeros"].as_array().unwrap().len(), 1);
    assert_eq!(w["zeros"][0]["k"], 1);
    assert!((w["zeros"][0]["x"].as_f64().unwrap() + 0.2).abs() < 1e-9);
    assert!((w["zeros"][0]["y"].as_f64().unwrap() - 0.1).abs() < 1e-9);
    assert_eq!(w["m"], 0);
    assert_eq!(w["bounds"]["morse_bound"], true);
    assert_eq!(w["bounds"]["transverse_bound"], true);
}

#[test]
fn lift_writes_mesh_and_report() {
    let tmp = TempDir::new().unwrap();
    let out = sl3lab(tmp.path(), &["eval-family", "--family", "hl", "--a", "1", "--nx", "9", "--ny", "9", "--out", "hl.json"]);
    assert!(out.status.success());
    let out = sl3lab(tmp.path(), &["lift", "--pair", "hl.json", "--theta-samples", "8", "--projection", "re_z1,re_z2,im_z3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let obj = std::fs::read_to_string(tmp.path().join("lift.obj")).unwrap();
    let pair = json(&tmp.path().join("hl.json"));
    let nodes = pair["u_values"].as_array().unwrap().len();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), nodes * 8);
    assert!(obj.lines().any(|l| l.starts_with("f ")));
    let report = json(&tmp.path().join("lift_report.json"));
    assert!(report["min_re_omega"].as_f64().unwrap() > 0.0);
    let bad = sl3lab(tmp.path(), &["lift", "--pair", "hl.json", "--projection", "re_z1,re_z9,im_z3"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn eval_family_emits_a_table() {
    let tmp = TempDir::new().unwrap();
    let out = sl3lab(tmp.path(), &["eval-family", "--family", "catenoid", "--shape", "rectangle", "--bounds=-1,1,-1,1", "--nx", "5", "--ny", "5"]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("family.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("i,j,x,y,u,v"));
    assert_eq!(csv.lines().count(), 26);
    assert_eq!(json(&tmp.path().join("family_report.json"))["a"], 0.0);
}

#[test]
fn quick_validation_passes() {
    let tmp = TempDir::new().unwrap();
    let out = sl3lab(tmp.path(), &["validate", "--quick", "--seed", "11"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let card = json(&tmp.path().join("scorecard.json"));
    assert_eq!(card["all_passed"], true);
    let names: Vec<&str> = card["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for required in ["cross_product_identities", "explicit_residuals", "maximum_principle_overshoot"] {
        assert!(names.contains(&required), "{required} missing");
    }
}

#[test]
fn convergence_reports_orders_and_gates_on_them() {
    let tmp = TempDir::new().unwrap();
    let out = sl3lab(tmp.path(), &["convergence", "--kind", "hl-residual", "--sizes", "17,33,65", "--min-order", "1.8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = json(&tmp.path().join("convergence.json"));
    assert_eq!(c["kind"], "hl-residual");
    assert!(c["ladders"]["cr_residual"]["fitted_order"].as_f64().unwrap() > 1.8);
    let strict = sl3lab(tmp.path(), &["convergence", "--kind", "hl-residual", "--sizes", "17,33", "--min-order", "5"]);
    assert_eq!(strict.status.code(), Some(3));
}
