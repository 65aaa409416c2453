use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const C5: &str = "5 5\n0 1\n1 2\n2 3\n3 4\n4 0\n";

fn pfp(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pfp")).args(args).output().expect("binary runs");
    (out.status.success(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn report(args: &[&str]) -> Value {
    let (ok, stdout, stderr) = pfp(args);
    assert!(ok, "pfp {args:?} failed: {stderr}");
    serde_json::from_str(&stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn chain_gap_on_c5() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "c5.txt", C5);
    let r = report(&["chain", "gap", "--graph", &g]);
    let sigma = r["result"]["sigma"].as_f64().unwrap();
    assert!((sigma - (1.0 - (2.0 * std::f64::consts::PI / 5.0).cos())).abs() < 1e-9);
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config"]["graph"], g.as_str());
    assert_eq!(r["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn mean_walk_weights() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "c5.txt", C5);
    let r = report(&["rgm", "meanwalk", "--graph", &g, "--q", "2", "--j", "1", "--k", "2"]);
    let w = &r["result"]["weights"];
    assert_eq!(w["0"].as_f64(), Some(0.5));
    assert_eq!(w["2"].as_f64(), Some(0.5));
    assert_eq!(w.as_object().unwrap().len(), 2);
}

#[test]
fn dihedral_iteration_reaches_the_origin() {
    for action in ["d3-euclidean", "d3-hyperbolic"] {
        let r = report(&["fp", "iterate", "--action", action, "--start", "0.3,0.2", "--tol", "1e-14"]);
        assert_eq!(r["result"]["converged"], true);
        let y: Vec<f64> = serde_json::from_value(r["result"]["fixed_point"].clone()).unwrap();
        assert!(y[0].hypot(y[1]) < 1e-6);
    }
}

#[test]
fn reports_do_not_depend_on_workers() {
    let dir = TempDir::new().unwrap();
    let pts: String = (0..25).map(|i| format!("{},{}\n", i % 5, i / 5)).collect();
    let p = write(&dir, "grid.csv", &pts);
    let run = |w: &str| {
        let out = dir.path().join(format!("r{w}.json"));
        let (ok, _, err) = pfp(&[
            "embed",
            "snowflake",
            "--points",
            &p,
            "--samples",
            "50",
            "--seed",
            "4",
            "--workers",
            w,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(ok, "{err}");
        let r: Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
        serde_json::to_string(&(&r["result"], &r["violations"])).unwrap()
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn graph_generation_round_trips() {
    let dir = TempDir::new().unwrap();
    let r = report(&["graph", "gen", "--n", "20", "--d", "3", "--seed", "2"]);
    assert_eq!(r["result"]["edges"], 30);
    let g = write(&dir, "g.txt", r["result"]["edge_list"].as_str().unwrap());
    let girth = report(&["graph", "girth", "--graph", &g]);
    assert_eq!(girth["result"]["girth"], r["result"]["girth"]);
    let dd = report(&["graph", "distdist", "--graph", &g, "--q", "2"]);
    let total: f64 = dd["result"]["weights"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn random_group_commands() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "c5.txt", C5);
    let lab = report(&["rgm", "label", "--graph", &g, "--k", "2", "--j", "2", "--seed", "1"]);
    let l = write(&dir, "lab.json", &lab["result"].to_string());
    let walk = report(&["rgm", "walk", "--graph", &g, "--labeling", &l, "--q", "2"]);
    assert!((walk["result"]["total"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let rel = report(&["rgm", "relators", "--graph", &g, "--labeling", &l, "--path", "0,1,0"]);
    assert_eq!(rel["result"]["relators"].as_array().unwrap().len(), 1);
    assert_eq!(rel["result"]["path_word"], "e");
    let az = report(&["rgm", "azuma", "--d", "3", "--k", "2", "--j", "1", "--q", "2", "--n", "10"]);
    let tau = az["result"]["terms"][1]["tau"].as_f64().unwrap();
    assert!((tau - 4.0 / 15.0).abs() < 1e-15);
    let eff = report(&["rgm", "effsim", "--graph", &g, "--labeling", &l, "--q", "0"]);
    assert!(eff["result"]["worst_ratio_low"].is_null());
}

#[test]
fn failed_checks_are_data() {
    // The iteration budget is too small: the run completes and records it.
    let r = report(&["fp", "iterate", "--start", "1,0", "--tol", "1e-14", "--max-iter", "2"]);
    assert_eq!(r["result"]["converged"], false);
    assert_eq!(r["violations"].as_array().unwrap().len(), 1);
}

#[test]
fn bad_inputs_fail_with_messages() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "c5.txt", C5);
    let (ok, _, err) = pfp(&["fp", "transfer", "--graph", &g, "--j", "1"]);
    assert!(!ok && err.contains("even"));
    let (ok, _, err) = pfp(&["chain", "gap"]);
    assert!(!ok && err.contains("--graph"));
    let bad = write(&dir, "bad.txt", "3 1\n0 7\n");
    let (ok, _, _) = pfp(&["graph", "girth", "--graph", &bad]);
    assert!(!ok);
    let (ok, _, _) = pfp(&["rgm", "walk", "--graph", &g, "--q", "3"]);
    assert!(!ok);
}

#[test]
fn embedding_and_theta_reports() {
    let dir = TempDir::new().unwrap();
    let pts: String = (0..16).map(|i| format!("{},{}\n", i % 4, i / 4)).collect();
    let p = write(&dir, "grid.csv", &pts);
    let csv = dir.path().join("pairs.csv");
    let r = report(&["embed", "distortion", "--points", &p, "--samples", "100", "--csv", csv.to_str().unwrap()]);
    assert_eq!(r["result"]["cases_violations"], 0);
    assert!(r["result"]["distortion"]["distortion"].as_f64().unwrap().is_finite());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 16 * 15 / 2);
    let d = report(&["embed", "decompose", "--points", &p, "--scale", "2", "--samples", "500"]);
    assert_eq!(d["result"]["bounded"], true);
    let t = report(&["embed", "theta", "--sigma", "0.01", "--p", "2"]);
    let theta = t["result"]["theta"]["theta"].as_f64().unwrap();
    assert!(theta > 0.0 && theta < 1.0);
    let line: String = (0..20).map(|i| format!("{i}\n")).collect();
    let l = write(&dir, "line.csv", &line);
    let n =
        report(&["embed", "decompose", "--points", &l, "--scheme", "intervals", "--scale", "8", "--samples", "400"]);
    assert_eq!(n["result"]["passed"], true);
}

#[test]
fn barycenter_and_poincare() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "pts.csv", "0,0\n2,0\n0,2\n");
    let r = report(&["barycenter", "solve", "--points", &p, "--p", "2", "--tol", "1e-12"]);
    let c: Vec<f64> = serde_json::from_value(r["result"]["center"].clone()).unwrap();
    assert!((c[0] - 2.0 / 3.0).abs() < 1e-9 && (c[1] - 2.0 / 3.0).abs() < 1e-9);
    let gr = report(&["barycenter", "growth", "--points", &p, "--samples", "500"]);
    assert_eq!(gr["violations"].as_array().unwrap().len(), 0);
    let g = write(&dir, "c5.txt", C5);
    let e = report(&["poincare", "estimate", "--graph", &g, "--p", "2", "--restarts", "2"]);
    let lambda = e["result"]["estimate"]["lambda"].as_f64().unwrap();
    assert!((lambda - 1.2030019100150915).abs() < 1e-6);
    let m = report(&["poincare", "matousek", "--graph", &g, "--q", "3", "--restarts", "2"]);
    assert_eq!(m["violations"].as_array().unwrap().len(), 0);
    let space = r#"{"kind":"hyperbolic"}"#;
    let h = write(&dir, "disk.csv", "0.1,0.2\n-0.3,0.1\n");
    let r = report(&["barycenter", "solve", "--points", &h, "--space", space]);
    assert!(r["result"]["converged"].as_bool().unwrap());
    assert!(Path::new(&h).exists());
}
