use std::path::PathBuf;
use std::process::{Command, Output};

use valfun_core::report::Report;

fn battery(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/battery").join(format!("{}.json", name))
}

fn valfun(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_valfun")).args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Report {
    assert!(out.status.code().is_some(), "killed by signal");
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({}): {}", e, String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn analyze_bilinear_vertex() {
    let p = battery("bilinear_box");
    let out = valfun(&["analyze", "--problem", p.to_str().unwrap(), "--xbar", "0.5", "--json", "-"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    assert_eq!(r.schema, "valfun-sens/1");
    let valfun_core::report::Body::Analyze(a) = r.body else { panic!("wrong body") };
    let m = &a.minimizers[0];
    // the lower bound -y <= 1 is the strongly active constraint
    assert_eq!(m.partition.as_ref().unwrap().nu, vec![1]);
    assert!(m.licq.holds);
}

#[test]
fn infeasible_parameter_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("infeasible.json");
    std::fs::write(&p, r#"{"name":"inf","n":1,"m":1,"f":"y1","g":["y1 - x1","-y1"],"y_box":[[-5,5]]}"#).unwrap();
    let out = valfun(&["analyze", "--problem", p.to_str().unwrap(), "--xbar", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("S(x)=∅"));
}

#[test]
fn json_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out.json");
    let p = battery("pull_to_cut");
    let out = valfun(&["hessian", "--problem", p.to_str().unwrap(), "--point", "binding", "--json", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("theorem"));
    let text = std::fs::read_to_string(&target).unwrap();
    let r: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(r.to_json(), text);
}

#[test]
fn lp_lhs_hint_gives_zero_and_verifies() {
    let p = battery("lp_interval");
    let p = p.to_str().unwrap();
    let out = valfun(&["hessian", "--problem", p, "--point", "interior", "--case", "lp-lhs", "--json", "-"]);
    assert_eq!(out.status.code(), Some(0));
    let valfun_core::report::Body::Hessian(h) = json_of(&out).body else { panic!() };
    assert_eq!(h.result.singleton_value(0.0), Some(vec![0.0]));
    let out = valfun(&["verify", "--problem", p, "--point", "interior", "--case", "lp-lhs"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn verify_collapses_on_quadratics() {
    for (name, point) in [("sq_fit", "interior"), ("tracked_quadratic", "interior"), ("pull_to_cut", "binding")] {
        let p = battery(name);
        let out = valfun(&["verify", "--problem", p.to_str().unwrap(), "--point", point, "--json", "-"]);
        assert_eq!(out.status.code(), Some(0), "{}", name);
        let valfun_core::report::Body::Verify(v) = json_of(&out).body else { panic!() };
        let c = v.checks.iter().find(|c| c.name == "equality-collapse").expect("collapse check ran");
        assert_eq!(c.status, valfun_core::report::CheckStatus::Pass, "{}: {}", name, c.detail);
    }
}

#[test]
fn missing_xstar_is_a_usage_error() {
    let p = battery("lp_interval");
    let out = valfun(&["hessian", "--problem", p.to_str().unwrap(), "--xbar", "0.5", "--xund", "-1"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x*"));
}

#[test]
fn bad_arguments_are_usage_errors() {
    let p = battery("lp_interval");
    let p = p.to_str().unwrap();
    for args in [
        vec!["hessian", "--problem", p, "--point", "nowhere"],
        vec!["analyze", "--problem", p, "--xbar", "1,2"],
        vec!["analyze", "--problem", p, "--xbar", "abc"],
        vec!["analyze", "--problem", p, "--xbar", "0.5", "--flavor", "Q"],
        vec!["analyze", "--problem", "/nonexistent.json", "--xbar", "0"],
        vec!["hessian", "--problem", p, "--point", "interior", "--case", "magic"],
        vec!["frobnicate"],
    ] {
        assert_eq!(valfun(&args).status.code(), Some(64), "{:?}", args);
    }
}

#[test]
fn empty_estimate_exits_1_with_diagnostic() {
    let p = battery("bilinear_box");
    let out = valfun(&["hessian", "--problem", p.to_str().unwrap(), "--point", "kink", "--json", "-"]);
    assert_eq!(out.status.code(), Some(1));
    let valfun_core::report::Body::Hessian(h) = json_of(&out).body else { panic!() };
    assert!(h.result.pieces.is_empty());
    assert!(h.diagnostic.is_some());
}

#[test]
fn report_covers_every_point_in_order() {
    let p = battery("box_projection_2d");
    let out = valfun(&["report", "--problem", p.to_str().unwrap(), "--json", "-"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rs: Vec<Report> = serde_json::from_slice(&out.stdout).unwrap();
    let labels: Vec<(String, String)> = rs.iter().map(|r| (r.point.clone().unwrap(), r.command.clone())).collect();
    let mut expected = Vec::new();
    for point in ["corner", "face"] {
        for c in ["analyze", "first-order", "hessian", "verify"] {
            expected.push((point.to_string(), c.to_string()));
        }
    }
    assert_eq!(labels, expected);
}

#[test]
fn c_flavor_and_tolerances_are_accepted() {
    let p = battery("max_square");
    let out = valfun(&[
        "hessian", "--problem", p.to_str().unwrap(), "--point", "degenerate", "--flavor", "C", "--tol-act", "1e-6", "--tol-kkt", "1e-7",
        "--json", "-",
    ]);
    let r = json_of(&out);
    assert_eq!(r.tolerances.act, 1e-6);
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
}
