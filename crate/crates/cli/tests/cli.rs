use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mslab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mslab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn error_line(o: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn bounds_reproduces_hopf_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["bounds", "--map", "hopf3", "--domain", "ball", "--n", "3"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(tmp.path());
    let root = ((25.0 + 725f64.sqrt()) / 2.0).sqrt();
    let r_star = r["results"]["R_star"].as_f64().unwrap();
    assert!((r_star - root).abs() < 1e-3, "{r_star}");
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "bounds");
    // Every default is echoed.
    for key in ["map", "domain", "n", "level", "samples", "seed", "r_max", "points", "out", "plot"] {
        assert!(!r["config"][key].is_null(), "{key} missing from the echoed config");
    }
    let csv = std::fs::read_to_string(tmp.path().join("bounds.csv")).unwrap();
    assert!(csv.starts_with("R,U,L\n"));
    assert_eq!(csv.lines().count(), 202);
    assert!(tmp.path().join("plot.svg").exists());
}

#[test]
fn invariant_reports_hopf_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["invariant", "--map", "hopf3", "--kind", "hopf", "--level", "3"], tmp.path());
    assert!(o.status.success());
    let r = report(tmp.path());
    assert_eq!(r["results"]["hopf_invariant"], 1);
    assert!((r["results"]["raw"].as_f64().unwrap() - 1.0).abs() <= 0.2);
}

#[test]
fn invariant_infers_degree_for_circle_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["invariant", "--map", "zpow:-2"], tmp.path());
    assert!(o.status.success());
    let r = report(tmp.path());
    assert_eq!(r["results"]["degree"], -2);
    assert_eq!(r["config"]["kind"], "degree");
}

#[test]
fn mass_check_zsquare_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["mass-check", "--fixture", "zsquare", "--level", "4"], tmp.path());
    assert!(o.status.success());
    let res = &report(tmp.path())["results"];
    let three_pi = 3.0 * std::f64::consts::PI;
    for key in ["direct", "boundary"] {
        let v = res[key].as_f64().unwrap();
        assert!((v - three_pi).abs() / three_pi <= 0.02, "{key} = {v}");
    }
    assert!(res["gap"].as_f64().unwrap() <= 0.02);
    assert_eq!(res["pass"], true);
}

#[test]
fn mass_check_of_non_minimal_graph_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["mass-check", "--fixture", "cubic", "--level", "3"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_line(&o)["error"], "check_failed");
    // Artifacts are written before the failure is reported.
    assert_eq!(report(tmp.path())["results"]["pass"], false);
}

#[test]
fn usage_errors_exit_two_with_one_json_line() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["bounds", "--map", "nope"][..],
        &["bounds", "--map", "hopf3", "--n", "2"],
        &["bounds", "--map", "hopf3", "--domain", "annulus"],
        &["bounds", "--level", "x"],
        &["density", "--fixture", "sphere"],
        &["cone-scan", "--theta-max", "2.0"],
        &["invariant", "--map", "hopf3", "--kind", "degree"],
        &["frobnicate"],
    ] {
        let o = mslab(args, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let e = error_line(&o);
        assert_eq!(e["exit_code"], 2);
        assert!(e["message"].as_str().is_some_and(|m| !m.is_empty()));
        assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1, "{args:?}");
    }
}

#[test]
fn config_file_is_layered_under_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "fixture = \"flat\"\nlevel = 2\ntolerance = 0.05\n").unwrap();
    let out = tmp.path().join("out");
    let o = mslab(&["mass-check", "--config", cfg.to_str().unwrap(), "--level", "3"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = &report(&out)["config"];
    assert_eq!(c["fixture"], "flat");
    assert_eq!(c["level"], 3);
    assert_eq!(c["tolerance"], 0.05);

    std::fs::write(&cfg, "fixtures = \"flat\"\n").unwrap();
    let o = mslab(&["mass-check", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constant_data_has_no_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["bounds", "--map", "const:3:3"], tmp.path());
    assert!(o.status.success());
    let r = report(tmp.path());
    assert!(r["results"]["R_star"].is_null());
    assert_eq!(r["results"]["model"]["regime"], "degenerate");
}

#[test]
fn no_plot_suppresses_the_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["density", "--level", "3", "--no-plot"], tmp.path());
    assert!(o.status.success());
    assert!(!tmp.path().join("plot.svg").exists());
    assert_eq!(report(tmp.path())["config"]["plot"], false);
    let csv = std::fs::read_to_string(tmp.path().join("density.csv")).unwrap();
    assert!(csv.starts_with("d,theta,mass\n"));
}

#[test]
fn solve_writes_trace_and_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["solve", "--shells", "2", "--level", "1", "--r", "0.5"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = &report(tmp.path())["results"];
    assert_eq!(res["solve"]["converged"], true);
    assert_eq!(res["certificate"]["mass_within_upper"], true);
    let trace = std::fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,energy,gradient_norm,step\n"));
    let energies: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(tmp.path().join("solution.json").exists());
}

#[test]
fn iteration_cap_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(
        &["solve", "--shells", "2", "--level", "1", "--r", "0.5", "--max-iterations", "1"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(report(tmp.path())["results"]["solve"]["converged"], false);
}

#[test]
fn continue_and_cone_scan_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("c");
    let o = mslab(&["continue", "--shells", "2", "--level", "1", "--schedule", "0.1,0.2"], &a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(a.join("continuation.csv")).unwrap();
    assert!(csv.starts_with("R,converged,iterations,mass,upper_exact,upper,lower,lipschitz,final_gradient_norm,flags\n"));
    assert_eq!(csv.lines().count(), 3);

    let b = tmp.path().join("s");
    let o = mslab(&["cone-scan", "--points", "6"], &b);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(b.join("cone_scan.csv")).unwrap();
    assert!(csv.starts_with("theta,r_domain,r_range,mode,scaled\n"));
    let t = report(&b)["results"]["theta_star_refined"].as_f64().unwrap();
    assert!(t > 0.0 && t < std::f64::consts::FRAC_PI_2);
}

#[test]
fn reach_of_ellipsoid_is_near_a_quarter() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["reach", "--map", "ellipsoid"], tmp.path());
    assert!(o.status.success());
    let reach = report(tmp.path())["results"]["reach"].as_f64().unwrap();
    assert!((reach - 0.25).abs() / 0.25 < 0.1, "{reach}");
}

#[test]
fn resolution_failures_exit_four() {
    // A level-0 sphere is too coarse for a Hopf fibre to close up.
    let tmp = tempfile::tempdir().unwrap();
    let o = mslab(&["invariant", "--map", "hopf3", "--level", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_line(&o)["error"], "resolution");
}
