use std::process::{Command, Output};

use serde_json::Value;

fn maxconst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxconst"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

const PI_CUBE: &str = "box:3.14159265,3.14159265,3.14159265";
const PI_OVER_8: &str = "0.392699081699";

#[test]
fn compute_is_reproducible_and_complete() {
    let args = ["compute", "--domain", PI_CUBE, "--h", PI_OVER_8];
    let a = maxconst(&args);
    let b = maxconst(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    for key in ["domain", "h", "constants", "eigenvalues", "diam_over_pi", "analytic", "residuals", "solver"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    for key in ["tol", "seed", "matvecs"] {
        assert!(v["solver"].get(key).is_some(), "missing solver.{key}");
    }
    let c = &v["constants"];
    assert_eq!(c["cmn"], c["cp"]);
}

#[test]
fn compute_writes_out_file_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let dump = dir.path().join("ops");
    let o = maxconst(&[
        "compute",
        "--domain",
        "box:1,1,1",
        "--h",
        "0.5",
        "--out",
        out.to_str().unwrap(),
        "--dump-ops",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["eigenvalues"]["lambda1"].as_f64(), Some(24.0));
    let ld = std::fs::read_to_string(dump.join("L_D.mtx")).unwrap();
    assert!(ld.starts_with("%%MatrixMarket matrix coordinate real general"));
    assert!(ld.lines().any(|l| l == "1 1 1"));
}

#[test]
fn configuration_errors_exit_two() {
    let coarse = maxconst(&["compute", "--domain", "box:1,1,1", "--h", "1"]);
    assert_eq!(coarse.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&coarse.stderr).contains("resolution too coarse"));
    let k0 = maxconst(&["spectrum", "--domain", "box:1,1,1", "--h", "0.25", "--operator", "ld", "--k", "0"]);
    assert_eq!(k0.status.code(), Some(2));
    let empty = maxconst(&["sweep", "--domain", "box:1,1,1"]);
    assert_eq!(empty.status.code(), Some(2));
    let bad = maxconst(&["compute", "--domain", "sphere:1", "--h", "0.25"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn verify_passes_on_cube_and_fails_on_bad_report() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    let o = maxconst(&["verify", "--domain", PI_CUBE, "--h", PI_OVER_8, "--out", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&good).unwrap()).unwrap();
    assert_eq!(v["verification"]["pass"], Value::Bool(true));

    // Swap the tangential constant above the normal one.
    v["constants"]["cmt"] = serde_json::json!(10.0);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let o = maxconst(&["verify", "--report", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["verification"]["pass"], Value::Bool(false));
}

#[test]
fn verify_l_shape_notes_skipped_checks() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("l.json");
    std::fs::write(
        &file,
        r#"[{"origin":[0,0,0],"sides":[1,1,1]},
            {"origin":[1,0,0],"sides":[1,1,1]},
            {"origin":[0,1,0],"sides":[1,1,1]}]"#,
    )
    .unwrap();
    let domain = format!("union:{}", file.display());
    let o = maxconst(&["verify", "--domain", &domain, "--h", "0.25"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let skipped = v["verification"]["chain"]["skipped"].as_array().unwrap();
    assert!(skipped.iter().any(|s| s["name"] == "cp <= diam/pi"));
    assert!(v["verification"]["lower_bounds"]["pass"].as_bool().unwrap());
}

#[test]
fn sweep_writes_csv_with_orders() {
    let o = maxconst(&[
        "sweep",
        "--domain",
        "box:1,1,1",
        "--h-list",
        "0.25,0.125",
        "--aspects",
        "1,2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "domain");
    assert!(headers.iter().any(|h| h == "order_lambda1"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[2][0], "box:2,1,1");
    let col = headers.iter().position(|h| h == "order_lambda1").unwrap();
    assert!(rows[0][col].is_empty());
    let order: f64 = rows[1][col].parse().unwrap();
    assert!(order > 1.8, "order {order}");
    assert!(rows.iter().all(|r| &r[headers.iter().position(|h| h == "chain_pass").unwrap()] == "true"));
}

#[test]
fn spectrum_lists_requested_eigenvalues() {
    let o = maxconst(&["spectrum", "--domain", "box:1,1,1", "--h", "0.5", "--operator", "ln", "--k", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let ev: Vec<f64> = v["eigenvalues"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(ev, vec![8.0, 8.0, 8.0]);
}

#[test]
fn check_ops_reports_exactness() {
    let o = maxconst(&["check-ops", "--domain", "box:1,1,1", "--h", "0.25"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["pass"], Value::Bool(true));
    assert_eq!(v["duality_2d"]["exact"], Value::Bool(true));
    let o = maxconst(&["check-ops", "--domain", "rect:1,2", "--h", "0.25"]);
    assert_eq!(o.status.code(), Some(0));
}
