use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::Value;
use sps_cli::config::{parse_config, Config};

fn sps(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sps"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPS_CONFIG")
        .output()
        .expect("sps runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn hbt_bytes_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    for (w, out) in [("1", "a"), ("3", "b")] {
        let o = sps(&["simulate", "hbt", "--out", out, "--seed", "9", "--n-pulses", "200000", "--workers", w], dir.path());
        assert!(o.status.success());
    }
    for f in ["ch0.csv", "ch1.csv"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)), "{f}");
    }
    let text = String::from_utf8(read(dir.path().join("a/ch0.csv"))).unwrap();
    assert!(text.starts_with("channel,t_ps\n0,"));
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, out) in [("1", "a"), ("2", "b")] {
        assert!(sps(&["simulate", "hbt", "--out", out, "--seed", seed, "--n-pulses", "100000"], dir.path()).status.success());
    }
    assert_ne!(read(dir.path().join("a/ch0.csv")), read(dir.path().join("b/ch0.csv")));
}

#[test]
fn mismatched_delay_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"hom": {"interferometer": {"mz_delay_ps": 4000}}}"#).unwrap();
    let o = sps(&["--config", "c.json", "simulate", "hom", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delay"));
}

#[test]
fn env_config_is_used_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"cavity": {"q": 760}}"#).unwrap();
    let run = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_sps"))
            .args(args)
            .current_dir(dir.path())
            .env("SPS_CONFIG", "c.json")
            .output()
            .unwrap();
        stdout_json(&o)["purcell_factor"].as_f64().unwrap()
    };
    let from_config = run(&["calc", "purcell"]);
    let from_flag = run(&["calc", "purcell", "--q", "380"]);
    assert!((from_config - 2.0 * from_flag).abs() < 1e-9);
}

#[test]
fn calc_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = stdout_json(&sps(&["calc", "purcell", "--q", "380", "--v", "0.66"], dir.path()));
    assert_eq!(format!("{:.2}", p["purcell_factor"].as_f64().unwrap()), "43.75");
    let b = stdout_json(&sps(&["calc", "beta", "--tau-c", "650", "--tau-uc", "2826"], dir.path()));
    assert_eq!(format!("{:.3}", b["beta"].as_f64().unwrap()), "0.770");
    let c = stdout_json(&sps(&["calc", "budget"], dir.path()));
    assert_eq!(format!("{:.4}", c["total"]["eta"].as_f64().unwrap()), "0.0827");
    let t = sps(&["calc", "budget", "--format", "table", "--with-detector"], dir.path());
    assert!(String::from_utf8_lossy(&t.stdout).contains("detector quantum efficiency"));
    let bad = sps(&["calc", "purcell", "--q", "-1"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn purcell_map_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = sps(&["calc", "purcell-map", "--step-nm", "50", "--out", "maps/map.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(dir.path().join("maps/map.csv"))).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x_nm,y_nm,purcell"));
    assert_eq!(lines.count(), 13 * 13);
    let v = sps(&["verify", "maps/map.csv.manifest.json"], dir.path());
    assert!(v.status.success());
}

#[test]
fn analysis_pipeline_verify_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(sps(&["simulate", "hbt", "--out", "hbt", "--n-pulses", "400000"], d).status.success());
    let o = sps(&["analyze", "g2", "hbt", "--out", "g2"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&read(d.join("g2/report.json"))).unwrap();
    assert!(report["result"]["fit"]["g2_0"]["value"].is_number());
    assert!(report["result"]["fit"]["fit"]["params"].is_array());
    assert_eq!(report["provenance"]["inputs"].as_array().unwrap().len(), 2);
    let hist = String::from_utf8(read(d.join("g2/histogram.csv"))).unwrap();
    assert!(hist.starts_with("bin_center_ps,counts\n"));

    assert!(sps(&["verify", "g2/manifest.json"], d).status.success());
    let r = sps(&["reproduce", "g2/manifest.json", "--out", "g2again"], d);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));
    assert_eq!(read(d.join("g2/report.json")), read(d.join("g2again/report.json")));

    // tamper with an output
    std::fs::write(d.join("g2/histogram.csv"), "bin_center_ps,counts\n").unwrap();
    let v = sps(&["verify", "g2/manifest.json"], d);
    assert_eq!(v.status.code(), Some(4));
}

#[test]
fn hom_and_sweep_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for pol in ["parallel", "orthogonal"] {
        let o = sps(&["simulate", "hom", "--out", pol, "--pol", pol, "--n-pulses", "300000"], d);
        assert!(o.status.success());
    }
    let o = sps(&["analyze", "hom", "parallel", "orthogonal", "--out", "hom"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&read(d.join("hom/report.json"))).unwrap();
    for key in ["visibility_raw", "fit"] {
        assert!(!report["result"][key].is_null(), "{key}");
    }
    for key in ["v", "tau2_ps", "vbar"] {
        assert!(report["result"]["fit"][key]["sigma"].is_number(), "{key}");
    }
    let o = sps(&["analyze", "sweep", "parallel", "orthogonal", "--out", "sweep", "--windows-ps", "100,500,2500"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(read(d.join("sweep/sweep.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().last().unwrap().starts_with("2500,"));
}

#[test]
fn lifetime_saturation_polarization_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(sps(&["simulate", "hbt", "--out", "hbt", "--n-pulses", "400000"], d).status.success());
    let o = sps(&["analyze", "lifetime", "hbt/ch0.csv", "--out", "life"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let sat: String = std::iter::once("power_nw,counts_per_s".to_string())
        .chain([50.0f64, 100.0, 200.0, 400.0, 800.0, 1600.0].iter().map(|&p| format!("{p},{}", 2e4 * (1.0 - (-p / 540.0).exp()))))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(d.join("sat.csv"), sat).unwrap();
    let o = sps(&["analyze", "saturation", "sat.csv", "--out", "sat"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&read(d.join("sat/report.json"))).unwrap();
    assert!((r["result"]["p_sat"]["value"].as_f64().unwrap() - 540.0).abs() < 1e-3);

    let scan: String = std::iter::once("angle_deg,counts_per_s".to_string())
        .chain((0..18).map(|k| {
            let a = 10.0 * k as f64;
            let floor = 100.0 * 0.04 / 1.96;
            format!("{a},{}", floor + (100.0 - floor) * (a - 20.0f64).to_radians().cos().powi(2))
        }))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(d.join("scan.csv"), scan).unwrap();
    let o = sps(&["analyze", "polarization", "scan.csv", "--out", "pol"], d);
    assert!(o.status.success());
    let r: Value = serde_json::from_slice(&read(d.join("pol/report.json"))).unwrap();
    assert!((r["result"]["rho"].as_f64().unwrap() - 0.96).abs() < 1e-9);

    std::fs::write(d.join("junk.csv"), "angle_deg,counts_per_s\n0,abc\n").unwrap();
    let o = sps(&["analyze", "polarization", "junk.csv", "--out", "junk"], d);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_duration_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(sps(&["simulate", "hbt", "--out", "hbt", "--n-pulses", "100000"], d).status.success());
    std::fs::remove_file(d.join("hbt/manifest.json")).unwrap();
    let o = sps(&["analyze", "g2", "hbt", "--out", "g2"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--duration-ps"));
}

// Out-of-invariant values with the field path the error must name.
const BAD_FIELDS: &[(&str, f64)] = &[
    ("emitter.tau1_ps", -1.0),
    ("emitter.tau2_ps", 5000.0),
    ("emitter.p_multi", 1.0),
    ("emitter.branch_fast", 1.5),
    ("detector.efficiency", 1.2),
    ("detector.dark_rate_hz", -3.0),
    ("detector.irf_sigma_ps", -1.0),
    ("hbt.pulse_train.rep_rate_hz", 0.0),
    ("hbt.pulse_train.n_pulses", 0.0),
    ("hbt.target_g2", 0.7),
    ("hom.pulse_train.double_pulse_delay_ps", 30000.0),
    ("hom.interferometer.v_wavepacket", 1.01),
    ("hom.interferometer.splitter_ratio", -0.1),
    ("cavity.q", 0.0),
    ("cavity.v_norm", -0.66),
    ("geometry.spatial_mismatch", 2.0),
    ("geometry.detuning_nm", -1.0),
    ("g2.bin_width_ps", 0.0),
    ("g2.n_side_peaks", 0.0),
    ("hom_analysis.tau1_ps", 0.0),
    ("hom_analysis.spacing_ps", -5000.0),
    ("lifetime.bin_width_ps", -16.0),
    ("spatial.drop_factor", 0.5),
    ("spatial.step_nm", 0.0),
    ("budget.stages[1].transmission", 1.5),
    ("budget.stages[0].rel_sigma", -0.1),
];

fn pointer_of(path: &str) -> String {
    path.replace(['.', '['], "/").replace(']', "").split('/').fold(String::new(), |acc, s| acc + "/" + s)
}

fn number_leaves(v: &Value, path: String, out: &mut Vec<String>) {
    match v {
        Value::Number(_) => out.push(path),
        Value::Object(m) => {
            for (k, x) in m {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                number_leaves(x, p, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                number_leaves(x, format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

fn defaults() -> Value {
    serde_json::to_value(Config::default()).unwrap()
}

proptest! {
    #[test]
    fn out_of_range_values_name_their_field(idx in 0..BAD_FIELDS.len(), scale in 1.0f64..10.0) {
        let (path, bad) = BAD_FIELDS[idx];
        let mut doc = defaults();
        // scale pushes further out of range, except where the value is 0
        let value = if !(0.0..=1.0).contains(&bad) { bad * scale } else { bad };
        let slot = doc.pointer_mut(&pointer_of(path)).unwrap();
        *slot = if slot.is_u64() || slot.is_i64() {
            if value < 0.0 { Value::from(value as i64) } else { Value::from(value as u64) }
        } else {
            Value::from(value)
        };
        let err = parse_config(&doc.to_string()).unwrap_err();
        prop_assert_eq!(err.exit_code(), 2);
        prop_assert!(err.to_string().contains(path), "{} not in {}", path, err);
    }

    #[test]
    fn wrong_types_name_their_field(pick in any::<prop::sample::Index>(), as_array in any::<bool>()) {
        let mut doc = defaults();
        let mut leaves = Vec::new();
        number_leaves(&doc, String::new(), &mut leaves);
        let path = pick.get(&leaves).clone();
        *doc.pointer_mut(&pointer_of(&path)).unwrap() = if as_array { Value::Array(vec![]) } else { Value::from("x") };
        let err = parse_config(&doc.to_string()).unwrap_err();
        prop_assert_eq!(err.exit_code(), 2);
        prop_assert!(err.to_string().contains(&path), "{} not in {}", path, err);
    }

    #[test]
    fn unknown_keys_are_rejected(section in prop::sample::select(vec!["emitter", "detector", "hbt", "hom", "cavity", "g2", "spatial"]), key in "[a-z]{3,8}_zz") {
        let mut doc = defaults();
        doc[section].as_object_mut().unwrap().insert(key.clone(), Value::from(1));
        let err = parse_config(&doc.to_string()).unwrap_err();
        prop_assert!(err.to_string().contains(section), "{}", err);
        prop_assert!(err.to_string().contains(&key), "{}", err);
    }
}
