use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracpass_cli::{validate_report, RunConfig, RunReport};
use serde_json::{json, Value};

fn minimal() -> Value {
    json!({
        "grid": {"dim": 1, "half_width": 8.0, "points_per_axis": 512},
        "params": {"s": 0.25, "q": 0.5, "eps": 0.01},
        "h": {"family": "gaussian_bump", "amplitude": 200.0, "center": [0.0], "width": 3.0},
        "sobolev": {"s_hat": 8.4946},
        "bubble": {"c_ns": 2.1892}
    })
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn fracpass(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fracpass"));
    cmd.args(args).env_remove("FRACPASS_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run(command: &str, cfg: &Value, extra: &[&str]) -> (i32, String, PathBuf, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), cfg);
    let out = dir.path().join("out");
    let mut args = vec![command, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = fracpass(&args, &[]);
    let stderr = String::from_utf8_lossy(&o.stderr).into_owned();
    (o.status.code().unwrap(), stderr, out, dir)
}

fn load_report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn minimal_config_gets_defaults_and_round_trips() {
    let cfg = RunConfig::from_json_str(&minimal().to_string()).unwrap();
    assert_eq!(cfg.solve.max_iters, 2000);
    assert_eq!(cfg.verify.inequalities.samples, 100_000);
    assert_eq!(cfg.appendix.r_list, vec![4.0, 8.0, 16.0, 32.0]);
    assert_eq!(cfg.concentration.n_max, 4);
    assert!(cfg.cutoff.is_none() && cfg.bubble.xi.is_none());
    let back = RunConfig::from_json_str(&cfg.to_json_string()).unwrap();
    assert_eq!(back, cfg);

    let mut full = minimal();
    full["cutoff"] = json!({"r": 7.0, "x0": [0.5]});
    full["bubble"] = json!({"mu": 0.2, "xi": [0.5], "c_ns": 2.0});
    full["appendix"] = json!({"s": 0.75, "dim": 2, "r_list": [2.0, 4.0, 8.0], "resolution": 16});
    let cfg = RunConfig::from_json_str(&full.to_string()).unwrap();
    assert_eq!(RunConfig::from_json_str(&cfg.to_json_string()).unwrap(), cfg);
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("out");
    let o = fracpass(
        &["verify", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));
}

#[test]
fn invalid_q_exits_2_with_field_path() {
    let mut cfg = minimal();
    cfg["params"]["q"] = json!(1.5);
    let (code, stderr, out, _d) = run("solve-min", &cfg, &[]);
    assert_eq!(code, 2);
    assert!(stderr.contains("params.q"), "{stderr}");
    assert!(!out.join("report.json").exists());
}

#[test]
fn short_appendix_radius_list_exits_2() {
    let mut cfg = minimal();
    cfg["appendix"] = json!({"s": 0.75, "dim": 2, "r_list": [4.0]});
    let (code, stderr, _, _d) = run("appendix", &cfg, &[]);
    assert_eq!(code, 2);
    assert!(stderr.contains("appendix.r_list"), "{stderr}");
}

#[test]
fn other_input_errors_exit_2() {
    let mut cfg = minimal();
    cfg["params"]["s"] = json!(0.75);
    let (code, stderr, _, _d) = run("verify", &cfg, &[]);
    assert_eq!(code, 2);
    assert!(stderr.contains("params.s") && stderr.contains("N > 2s"), "{stderr}");

    let mut cfg = minimal();
    cfg["solve"] = json!({"max_iter": 10});
    let (code, stderr, _, _d) = run("verify", &cfg, &[]);
    assert_eq!(code, 2);
    assert!(stderr.contains("solve") && stderr.contains("max_iter"), "{stderr}");

    let (code, _, _, _d) = run("verify", &json!([1, 2]), &[]);
    assert_eq!(code, 2);
    let (code, _, _, _d) = run("frobnicate", &minimal(), &[]);
    assert_eq!(code, 2);

    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &minimal());
    let o = fracpass(
        &["appendix", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        &[("FRACPASS_THREADS", "many")],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_report_is_schema_valid_and_passes() {
    let (code, _, out, _d) = run("verify", &minimal(), &["--threads", "2"]);
    assert_eq!(code, 0);
    let doc = load_report(&out);
    validate_report(&doc).unwrap();
    let rep: RunReport = serde_json::from_value(doc).unwrap();
    assert_eq!(rep.command, "verify");
    assert_eq!(rep.artifact_version, env!("CARGO_PKG_VERSION"));
    assert_eq!(rep.config, RunConfig::from_json_str(&minimal().to_string()).unwrap());
    let lemmas = rep.outputs["lemma_reports"].as_array().unwrap();
    assert_eq!(lemmas.len(), 10);
    assert!(lemmas.iter().all(|l| l["violations"] == 0));
    assert!(rep.checks.iter().all(|c| c.pass));

    let mut broken = load_report(&out);
    broken["checks"][0]["pass"] = json!(false);
    assert!(validate_report(&broken).is_err());
    let mut broken = load_report(&out);
    broken.as_object_mut().unwrap().remove("wall_clock_s");
    assert!(validate_report(&broken).is_err());
}

#[test]
fn csv_report_is_flat_key_value() {
    let mut cfg = minimal();
    cfg["appendix"] = json!({"s": 0.75, "dim": 2, "r_list": [4.0, 8.0, 16.0], "resolution": 24});
    let (code, _, out, _d) = run("appendix", &cfg, &["--format", "csv"]);
    assert!(code == 0 || code == 4);
    let text = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("key,value"));
    assert!(text.lines().any(|l| l.starts_with("outputs.appendix.slope,")));
    assert!(text.lines().any(|l| l == "command,appendix"));
}

#[test]
fn failed_check_exits_4() {
    let mut cfg = minimal();
    cfg["appendix"] = json!({"s": 0.75, "dim": 2, "r_list": [4.0, 8.0, 16.0], "resolution": 24, "tolerance": 1e-9});
    let (code, stderr, out, _d) = run("appendix", &cfg, &[]);
    assert_eq!(code, 4, "{stderr}");
    let doc = load_report(&out);
    validate_report(&doc).unwrap();
    assert_eq!(doc["exit_code"], 4);
}

#[test]
fn non_convergence_exits_3() {
    let mut cfg = minimal();
    cfg["solve"] = json!({"max_iters": 1});
    let (code, _, out, _d) = run("solve-min", &cfg, &[]);
    assert_eq!(code, 3);
    let doc = load_report(&out);
    validate_report(&doc).unwrap();
    assert_eq!(doc["outputs"]["local_min"]["converged"], false);
}

#[test]
fn solve_mp_runs_solve_min_first_or_reuses_an_artifact() {
    let (code, stderr, out, _d) = run("solve-mp", &minimal(), &[]);
    assert_eq!(code, 0, "{stderr}");
    let doc = load_report(&out);
    validate_report(&doc).unwrap();
    assert_eq!(doc["outputs"]["u_eps_source"], "solve-min");
    assert!(doc["outputs"]["local_min"]["energy"].as_f64().unwrap() < 0.0);
    let e = doc["outputs"]["mountain_pass"]["energy"].as_f64().unwrap();
    assert!(e > 0.0);
    for f in ["u_eps.field", "v.field", "u_tilde.field"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let u = out.join("u_eps.field");
    let (code, _, out2, _d2) = run("solve-mp", &minimal(), &["--u-eps", u.to_str().unwrap()]);
    assert_eq!(code, 0);
    let doc2 = load_report(&out2);
    assert!(doc2["outputs"].get("local_min").is_none());
    assert_eq!(doc2["outputs"]["mountain_pass"]["energy"].as_f64().unwrap(), e);
}

#[test]
fn identical_runs_give_identical_numbers() {
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wall_clock_s");
        v
    };
    let (c1, _, o1, _d1) = run("solve-min", &minimal(), &["--threads", "1"]);
    let (c2, _, o2, _d2) = run("solve-min", &minimal(), &["--threads", "3"]);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(strip(load_report(&o1)), strip(load_report(&o2)));
    assert_eq!(
        std::fs::read(o1.join("u_eps.field")).unwrap(),
        std::fs::read(o2.join("u_eps.field")).unwrap()
    );
}

mod round_trip {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn parse_of_serialized_config_is_identity(
            s in 0.05f64..0.49,
            q in 0.01f64..0.99,
            eps in 1e-6f64..1.0,
            amp in 0.1f64..500.0,
            width in 0.1f64..5.0,
            mu in 0.01f64..2.0,
            log_m in 3u32..12,
            seed in any::<u64>(),
            c_ns in proptest::option::of(0.1f64..5.0),
        ) {
            let v = json!({
                "grid": {"dim": 1, "half_width": 8.0, "points_per_axis": 1usize << log_m},
                "params": {"s": s, "q": q, "eps": eps},
                "h": {"family": "compact_bump", "amplitude": amp, "center": [0.25], "width": width},
                "bubble": {"mu": mu, "c_ns": c_ns},
                "solve": {"seed": seed},
            });
            let cfg = RunConfig::from_json_str(&v.to_string()).unwrap();
            prop_assert_eq!(RunConfig::from_json_str(&cfg.to_json_string()).unwrap(), cfg);
        }

        #[test]
        fn q_outside_unit_interval_is_rejected(q in prop_oneof![-5.0f64..=0.0, 1.0f64..5.0]) {
            let mut v = minimal();
            v["params"]["q"] = json!(q);
            let err = RunConfig::from_json_str(&v.to_string()).unwrap_err();
            prop_assert!(err.to_string().starts_with("params.q"));
            prop_assert_eq!(err.exit_code(), 2);
        }
    }
}
