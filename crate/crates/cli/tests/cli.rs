use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn predprey(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_predprey"));
    cmd.env_clear().current_dir(dir).args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(csv_path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records()
        .map(|row| row.unwrap()[idx].parse().unwrap())
        .collect()
}

const FAST: [(&str, &str); 2] = [
    ("PREDPREY_MODEL_N_CELLS", "100"),
    ("PREDPREY_SIMULATION_T_FINAL", "8.0"),
];

#[test]
fn equilibrium_summary_matches_reference_values() {
    let d = tempfile::tempdir().unwrap();
    let o = predprey(d.path(), &["equilibrium", "--out", "eq"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("zeta = (1.170"), "{}", stdout(&o));
    let s = json(&d.path().join("eq/equilibrium.json"));
    assert!((s["zeta"][0].as_f64().unwrap() - 1.170221).abs() < 1e-5);
    assert!((s["lambda"][1].as_f64().unwrap() - 1.02022).abs() < 1e-4);
    assert!(s["identity_residual"].as_f64().unwrap() < 1e-10);
    let x1 = column(&d.path().join("eq/equilibrium.csv"), "x1_star");
    assert_eq!(x1.len(), 401);
    assert!((x1[0] - 33.8112).abs() < 1e-3);
    assert!(d.path().join("eq/config.toml").exists());
}

#[test]
fn infeasible_setpoint_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = predprey(
        d.path(),
        &["equilibrium"],
        &[("PREDPREY_EQUILIBRIUM_U_STAR", "1.5")],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasible setpoint"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_sections_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.toml"), "[model]\nn_cels = 10\n").unwrap();
    let o = predprey(d.path(), &["--config", "bad.toml", "config"], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = predprey(d.path(), &["config"], &[("PREDPREY_NOPE_X", "1")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let d = tempfile::tempdir().unwrap();
    let o = predprey(d.path(), &["--config", "absent.toml", "config"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn control_a_keeps_dilution_positive_only_from_fq() {
    let d = tempfile::tempdir().unwrap();
    let o = predprey(d.path(), &["simulate", "--out", "fq"], &FAST);
    assert!(o.status.success(), "{}", stderr(&o));
    let u = column(&d.path().join("fq/trajectory.csv"), "u");
    assert!(u.iter().all(|v| *v > 0.0));

    let mut env = FAST.to_vec();
    env.push(("PREDPREY_SIMULATION_IC", "\"sq\""));
    let o = predprey(d.path(), &["simulate", "--out", "sq"], &env);
    assert!(o.status.success(), "{}", stderr(&o));
    let u = column(&d.path().join("sq/trajectory.csv"), "u");
    assert!(u.iter().any(|v| *v < 0.0));
}

#[test]
fn open_loop_conserves_v0_for_flat_profiles() {
    let d = tempfile::tempdir().unwrap();
    let mut env = FAST.to_vec();
    env.push(("PREDPREY_CONTROLLER_KIND", "open_loop"));
    // age-independent multipliers leave the profile shape at equilibrium
    env.push(("PREDPREY_SIMULATION_IC", "custom"));
    env.push((
        "PREDPREY_SIMULATION_MULTIPLIERS",
        "[[0.8, 0.0], [-0.6, 0.0]]",
    ));
    let o = predprey(d.path(), &["simulate"], &env);
    assert!(o.status.success(), "{}", stderr(&o));
    let v0 = column(&d.path().join("out/trajectory.csv"), "V0");
    let spread = v0.iter().fold(0.0f64, |m, v| m.max((v - v0[0]).abs()));
    assert!(spread < 1e-3 * v0[0], "spread {spread}");
    // no Lyapunov functional for the open loop
    assert!(column(&d.path().join("out/trajectory.csv"), "V1")[0].is_nan());
}

#[test]
fn runs_are_byte_for_byte_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let mut env = FAST.to_vec();
    env.push(("PREDPREY_CONTROLLER_KIND", "b"));
    for out in ["r1", "r2"] {
        let o = predprey(d.path(), &["simulate", "--out", out], &env);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(d.path().join("r1/trajectory.csv")).unwrap();
    let b = fs::read(d.path().join("r2/trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn solver_both_reports_a_small_discrepancy() {
    let d = tempfile::tempdir().unwrap();
    let mut env = FAST.to_vec();
    env.push(("PREDPREY_SIMULATION_SOLVER", "both"));
    env.push(("PREDPREY_SIMULATION_PROFILES_EVERY", "1000"));
    let o = predprey(d.path(), &["simulate", "--plot"], &env);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&d.path().join("out/summary.json"));
    assert_eq!(s["runs"].as_array().unwrap().len(), 2);
    assert!(s["cross_validation"].as_f64().unwrap() < 0.05);
    for f in [
        "trajectory_transformed.csv",
        "profiles_t0.csv",
        "eta.svg",
        "u_transformed.svg",
    ] {
        assert!(d.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn effective_config_roundtrips() {
    let d = tempfile::tempdir().unwrap();
    let o = predprey(d.path(), &["config"], &[("PREDPREY_CONTROLLER_EPS", "0.3")]);
    assert!(o.status.success());
    let first = stdout(&o);
    assert!(first.contains("eps = 0.3"), "{first}");
    fs::write(d.path().join("eff.toml"), &first).unwrap();
    let o = predprey(d.path(), &["--config", "eff.toml", "config"], &[]);
    assert_eq!(stdout(&o), first);
}

#[test]
fn roa_for_control_b_uses_the_phi_bound_and_depends_on_eps() {
    let d = tempfile::tempdir().unwrap();
    let mut c_star = Vec::new();
    for (out, eps) in [("e1", "0.005"), ("e2", "0.015")] {
        let o = predprey(
            d.path(),
            &["roa", "--out", out],
            &[
                ("PREDPREY_MODEL_N_CELLS", "100"),
                ("PREDPREY_CONTROLLER_KIND", "b"),
                ("PREDPREY_CONTROLLER_EPS", eps),
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("c* = "));
        let s = json(&d.path().join(out).join("roa.json"));
        assert_eq!(s["mode"], "Dbar");
        assert_eq!(s["scan_violations"], 0);
        c_star.push(s["c_star"].as_f64().unwrap());
        let pieces = fs::read_to_string(d.path().join(out).join("roa.csv")).unwrap();
        assert!(pieces.contains("phi_bound"));
    }
    let a = fs::read(d.path().join("e1/levelset.csv")).unwrap();
    let b = fs::read(d.path().join("e2/levelset.csv")).unwrap();
    assert_ne!(a, b);
    assert!(c_star.iter().all(|c| *c > 0.0));
}

#[test]
fn roa_rejects_laws_without_a_certificate() {
    let d = tempfile::tempdir().unwrap();
    let o = predprey(
        d.path(),
        &["roa"],
        &[("PREDPREY_CONTROLLER_KIND", "open_loop")],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_rejects_gains_below_the_constraint() {
    let d = tempfile::tempdir().unwrap();
    let o = predprey(
        d.path(),
        &["verify"],
        &[("PREDPREY_CONTROLLER_BETA", "0.01")],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0.0417"), "{}", stderr(&o));
}

#[test]
fn verify_on_a_coarse_grid_flags_resolution() {
    let d = tempfile::tempdir().unwrap();
    let o = predprey(
        d.path(),
        &["verify"],
        &[
            ("PREDPREY_MODEL_N_CELLS", "25"),
            ("PREDPREY_VERIFY_N_CELLS", "25"),
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("resolution too low"), "{text}");
    assert_eq!(
        text.lines().filter(|l| l.starts_with("criterion")).count(),
        13
    );
    let v = json(&d.path().join("out/verify.json"));
    assert_eq!(v.as_array().unwrap().len(), 13);
}

#[test]
fn sweep_writes_one_directory_per_combination() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("sweep.toml"),
        "[model]\nn_cells = 100\n[simulation]\nt_final = 4.0\n[lyapunov]\nenabled = false\n\
         [sweep]\neps = [0.2, 0.3]\nic = [\"fq\", \"sq\"]\n",
    )
    .unwrap();
    let o = predprey(d.path(), &["--config", "sweep.toml", "sweep"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("4 runs, 0 failed"), "{}", stdout(&o));
    for k in 0..4 {
        assert!(d
            .path()
            .join(format!("out/run_{k:03}/trajectory.csv"))
            .exists());
    }
    let status = {
        let mut r = csv::Reader::from_path(d.path().join("out/sweep.csv")).unwrap();
        r.records()
            .map(|x| x.unwrap()[5].to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(status, vec!["ok"; 4]);
}
