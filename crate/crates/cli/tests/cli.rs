use std::process::{Command, Output};

use laguerre_kernels::heat::heat_kernel;
use laguerre_kernels::poisson::subordination_multiplier;
use laguerre_kernels::special::{ln_phi0, SemigroupParams};
use laguerre_kernels::tabulated::fmt17;

fn laguerre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laguerre")).args(args).output().expect("binary runs")
}

fn table(out: &Output) -> Vec<Vec<String>> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn single_point_grid_reproduces_library_value() {
    let out = laguerre(&["kernel", "--set", "grid_points=1", "--set", "grid_lo=0.7", "--set", "times=0.3", "--set", "alpha=1.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = table(&out);
    assert_eq!(rows.len(), 1);
    let p = SemigroupParams::new(1.5, 0.0, 0.5).unwrap();
    assert_eq!(rows[0][3], fmt17(heat_kernel(&p, 0.3, 0.7, 0.7).unwrap()));
    assert_eq!(rows[0][10], "true");
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(laguerre(&["kernel", "--set", "bogus=1"]).status.code(), Some(2));
    assert_eq!(laguerre(&["kernel", "--set", "alpha=-3"]).status.code(), Some(2));
    assert_eq!(laguerre(&["kernel", "--config", "/nonexistent/config.txt"]).status.code(), Some(2));
}

#[test]
fn inadmissible_datum_exits_4() {
    let out = laguerre(&["converge", "--set", "datum=exp_square", "--set", "xs=1"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not admissible"));
}

#[test]
fn output_is_deterministic() {
    let dir = std::env::temp_dir();
    let a = dir.join(format!("laguerre-det-a-{}.csv", std::process::id()));
    let b = dir.join(format!("laguerre-det-b-{}.csv", std::process::id()));
    for path in [&a, &b] {
        let out = laguerre(&[
            "transfer",
            "--set",
            "samples=2",
            "--set",
            "systems=psi",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let _ = (std::fs::remove_file(&a), std::fs::remove_file(&b));
    assert!(!x.is_empty());
    assert_eq!(x, y);
    assert!(String::from_utf8_lossy(&x).contains("# seed=7\n"));
}

#[test]
fn weights_report_has_expected_sections() {
    let out = laguerre(&["weights", "--set", "sweep=false", "--set", "weight_nodes=60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["config", "rows", "fitted", "pass", "membership", "stability"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["rows"].as_array().unwrap().len(), 60);
    for key in ["y", "w", "W", "V", "V_eps", "v1", "v2", "v", "v_phi_w"] {
        assert!(v["rows"][0].get(key).is_some(), "missing row key {key}");
    }
    assert_eq!(v["membership"]["w_in_Dp"]["member"], serde_json::Value::Bool(true));
}

#[test]
fn collapsed_weight_lifts_to_unit() {
    let out = laguerre(&["weights", "--set", "sweep=false", "--set", "weight=collapsed", "--set", "mu=1", "--set", "weight_nodes=60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for row in v["rows"].as_array().unwrap() {
        let f = |k: &str| row[k].as_f64().unwrap();
        let y = f("y");
        assert!((f("W") - 1.0).abs() < 1e-12);
        assert!((f("V") - 1.0).abs() < 1e-12);
        assert!((f("V_eps") - 1.0).abs() < 1e-12);
        // (1+y)^{-2pν} e^{-py²/2} with p = 2, ν = 1/2
        let v1 = (-2.0 * y.ln_1p() - y * y).exp();
        assert!((f("v1") / v1 - 1.0).abs() < 1e-12, "y={y}");
    }
}

#[test]
fn decaying_weight_is_inadmissible() {
    let out = laguerre(&["weights", "--set", "sweep=false", "--set", "weight=decaying", "--set", "weight_nodes=60"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn ground_state_error_is_multiplier_defect() {
    let out = laguerre(&["converge", "--set", "xs=0.5,1.5", "--set", "t_seq=0.005,0.0025"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lambda0 = SemigroupParams::new(0.0, 0.0, 0.5).unwrap().eigenvalue(0);
    let rows = table(&out);
    assert_eq!(rows.len(), 4);
    for r in rows {
        let (x, t, err): (f64, f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap(), r[4].parse().unwrap());
        let expected = (1.0 - subordination_multiplier(0.5, t, lambda0).unwrap()) * ln_phi0(0.0, x).exp();
        assert!((err - expected).abs() < 1e-6, "x={x} t={t}: {err} vs {expected}");
    }
}

#[test]
fn base_system_relation_rows_are_exact() {
    let out = laguerre(&["transfer", "--set", "samples=3", "--set", "systems=base_phi"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = table(&out);
    let relation: Vec<_> = rows.iter().filter(|r| r[0] == "relation").collect();
    assert_eq!(relation.len(), 3);
    for r in relation {
        assert_eq!(r[7].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn config_file_is_layered_under_overrides() {
    let path = std::env::temp_dir().join(format!("laguerre-cfg-{}.txt", std::process::id()));
    std::fs::write(&path, "# small grid\ngrid_points = 2\ntimes = 0.5\nalpha = 1\n").unwrap();
    let out = laguerre(&["kernel", "--config", path.to_str().unwrap(), "--set", "alpha=0.5"]);
    let _ = std::fs::remove_file(&path);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("# alpha=0.5\n"));
    assert_eq!(table(&out).len(), 4);
}
