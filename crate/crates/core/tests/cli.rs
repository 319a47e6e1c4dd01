use std::fs;
use std::path::Path;

use nvmag::cli::main_with_args;
use nvmag::stream::{SampleStream, Unit};
use serde_json::Value;

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["nvmag"];
    v.extend_from_slice(args);
    main_with_args(v)
}

fn run_in(dir: &Path, cmd: &str, config: Option<&str>, extra: &[&str]) -> i32 {
    let out = dir.join("out");
    let out = out.to_str().unwrap().to_string();
    let mut args = vec![cmd.to_string(), "--out".into(), out];
    if let Some(text) = config {
        let p = dir.join("cfg.json");
        fs::write(&p, text).unwrap();
        args.push("--config".into());
        args.push(p.to_str().unwrap().into());
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    run(&refs)
}

fn report(dir: &Path, name: &str) -> Value {
    let text = fs::read_to_string(dir.join("out").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["bogus"]), 1);
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["fit-bias", "--seed", "notanumber"]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn schema_and_io_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), "fit-bias", Some(r#"{"no_such_key": 1}"#), &[]), 1);
    assert_eq!(run_in(d.path(), "fit-bias", Some("{ not json"), &[]), 1);
    assert_eq!(run_in(d.path(), "sensitivity", Some(r#"{"budget": {"bandwidth": -1.0}}"#), &[]), 1);
    let missing = d.path().join("missing.json");
    let cfg = format!(r#"{{"input": {:?}}}"#, missing.to_str().unwrap());
    assert_eq!(run_in(d.path(), "fit-bias", Some(&cfg), &[]), 1);
    // demod without an input stream
    assert_eq!(run_in(d.path(), "demod", None, &[]), 1);
}

#[test]
fn malformed_stream_exits_one() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.nvms");
    fs::write(&bad, b"definitely not a stream").unwrap();
    let cfg = format!(r#"{{"signal": {:?}, "slopes": {{"slopes": [4e-8, 4e-8, 5e-8, 4e-8]}}}}"#, bad.to_str().unwrap());
    assert_eq!(run_in(d.path(), "demod", Some(&cfg), &[]), 1);
}

#[test]
fn degenerate_operating_point_exits_two() {
    let d = tempfile::tempdir().unwrap();
    // zero field: every line is stationary in B, so the fit Jacobian is singular
    let cfg = r#"{"initial_guess": {"bias_field": [0.0, 0.0, 0.0], "zfs_d": 2.87e9, "strain_mz": [0.0, 0.0, 0.0, 0.0]}}"#;
    assert_eq!(run_in(d.path(), "fit-bias", Some(cfg), &[]), 2);
}

#[test]
fn fit_bias_recovers_demo_field() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), "fit-bias", None, &[]), 0);
    let r = report(d.path(), "fit_bias.json");
    let b: Vec<f64> = r["result"]["fit"]["params"]["bias_field"].as_array().unwrap().iter().map(|v| f(v) * 1e3).collect();
    for (got, want) in b.iter().zip([3.54, 1.73, 6.95]) {
        assert!((got - want).abs() < 0.01, "{b:?}");
    }
    assert_eq!(r["command"], "fit-bias");
    let manifest = report(d.path(), "manifest.json");
    assert!(manifest.to_string().contains("bias_params.json"));
}

#[test]
fn fit_bias_accepts_bare_array_input() {
    let d = tempfile::tempdir().unwrap();
    let lines = d.path().join("lines.json");
    let demo = nvmag::calibration::DEMO_LINE_CENTERS;
    fs::write(&lines, serde_json::to_string(&demo).unwrap()).unwrap();
    let cfg = format!(r#"{{"input": {:?}}}"#, lines.to_str().unwrap());
    assert_eq!(run_in(d.path(), "fit-bias", Some(&cfg), &[]), 0);
}

#[test]
fn linearize_is_close_to_linear_regime() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), "linearize", None, &[]), 0);
    let r = report(d.path(), "linearize.json");
    let dev = f(&r["result"]["max_deviation_from_linear_regime"]);
    // frozen: the ~8 mT bias bends the matrix well away from pure ±n̂ rows
    assert!((dev - 0.1892).abs() < 1e-3, "{dev}");
}

#[test]
fn sensitivity_report_in_expected_range() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), "sensitivity", None, &[]), 0);
    let r = report(d.path(), "sensitivity.json");
    for e in r["result"]["eta"].as_array().unwrap() {
        let pt = f(e) * 1e12;
        assert!((15.0..22.0).contains(&pt), "{pt}");
    }
}

#[test]
fn walsh_gains_about_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), "walsh", Some(r#"{"trials": 4000}"#), &["--seed", "3"]), 0);
    let r = report(d.path(), "walsh.json");
    assert_eq!(r["seed"], 3);
    for x in r["result"]["monte_carlo"]["snr_ratio"].as_array().unwrap() {
        assert!((f(x) - 2.0).abs() < 0.15, "{x}");
    }
}

#[test]
fn synth_demod_reconstruct_chain() {
    let d = tempfile::tempdir().unwrap();
    let synth_cfg = r#"{"synth": {"duration": 1.5, "start_time": -1.0}}"#;
    assert_eq!(run_in(d.path(), "synth", Some(synth_cfg), &["--seed", "5"]), 0);
    let sig = SampleStream::load(&d.path().join("out/signal.nvms")).unwrap();
    assert_eq!(sig.unit, Unit::Volts);
    assert!(sig.len() > 100_000);

    let stage = d.path().join("stage");
    fs::rename(d.path().join("out"), &stage).unwrap();
    let cfg = format!(
        r#"{{"signal": {:?}, "reference": {:?}, "slopes": {{"slopes": [3.95e-8, 4.2e-8, 5.34e-8, 4.16e-8]}}, "analysis_start": 0.0}}"#,
        stage.join("signal.nvms").to_str().unwrap(),
        stage.join("reference.nvms").to_str().unwrap()
    );
    assert_eq!(run_in(d.path(), "demod", Some(&cfg), &[]), 0);
    let out = d.path().join("out");
    let names = ["lambda_minus", "chi_minus", "phi_plus", "kappa_plus"];
    let shifts: Vec<_> = names.iter().map(|n| out.join(format!("shift_{n}.nvms"))).collect();
    for s in &shifts {
        let st = SampleStream::load(s).unwrap();
        assert_eq!(st.unit, Unit::Hertz);
        assert!(st.samples.iter().all(|v| v.is_finite()));
    }

    let stage2 = d.path().join("shifts");
    fs::rename(&out, &stage2).unwrap();
    let paths: Vec<String> = names.iter().map(|n| format!("{:?}", stage2.join(format!("shift_{n}.nvms")).to_str().unwrap())).collect();
    let cfg = format!(r#"{{"shifts": [{}]}}"#, paths.join(","));
    assert_eq!(run_in(d.path(), "reconstruct", Some(&cfg), &[]), 0);
    let bx = SampleStream::load(&d.path().join("out/field_x.nvms")).unwrap();
    assert_eq!(bx.unit, Unit::Tesla);
    // default coils are tens of nT; nothing near the bias scale should leak through
    assert!(bx.samples.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn resolved_config_reproduces_run() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run_in(d.path(), "walsh", Some(r#"{"trials": 500}"#), &["--seed", "11"]), 0);
    let first = fs::read(d.path().join("out/walsh.json")).unwrap();
    let resolved = fs::read_to_string(d.path().join("out/config.json")).unwrap();
    fs::remove_dir_all(d.path().join("out")).unwrap();
    assert_eq!(run_in(d.path(), "walsh", Some(&resolved), &[]), 0);
    assert_eq!(first, fs::read(d.path().join("out/walsh.json")).unwrap());
}
