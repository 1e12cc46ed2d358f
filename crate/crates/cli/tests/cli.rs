use std::path::Path;
use std::process::{Command, Output};

use cointoss::io::parse_csv;
use serde_json::Value;

fn cointoss(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cointoss")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn error_of(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).expect("stderr is one JSON object")
}

#[test]
fn uniform_spectrum_is_linear() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"measure": {"kind": "constant", "params": {"p": 0.5}},
            "spectrum": {"q": {"min": -2, "max": 2, "step": 0.5}, "horizon": 200}}"#,
    );
    let o = cointoss(&["spectrum", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = parse_csv(&std::fs::read_to_string(dir.path().join("tau.csv")).unwrap()).unwrap();
    assert_eq!(t.header, ["q", "tau", "slope_left", "slope_right", "source_n"]);
    let qs = t.column("q").unwrap();
    let taus = t.column("tau").unwrap();
    assert_eq!(qs.len(), 9);
    for (q, tau) in qs.iter().zip(&taus) {
        assert!((tau.unwrap() - (1.0 - q.unwrap())).abs() < 1e-12);
    }
}

#[test]
fn manifest_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"seed": 9, "measure": {"kind": "periodic", "params": {"values": [0.2, 0.6]}},
            "sample": {"depth": 500, "trials": 200}}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(cointoss(&["sample", "--config", &cfg], &a).status.success());
    let manifest = a.join("manifest.json");
    let o = cointoss(&["sample", "--config", manifest.to_str().unwrap()], &b);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "sample.json", "histogram.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = read_json(&manifest);
    assert_eq!(m["command"], "sample");
    assert_eq!(m["spectrum"]["window_start"], 5000);
    assert!(m["sample"]["sampler"].is_object());
    // a manifest is bound to its command
    let o = cointoss(&["coarse", "--config", manifest.to_str().unwrap()], &b);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"seed": 1, "measure": {"kind": "constant", "params": {"p": 0.3}}, "sample": {"depth": 200, "trials": 50}}"#,
    );
    assert!(cointoss(&["sample", "--config", &cfg, "--seed", "2"], dir.path()).status.success());
    assert_eq!(read_json(&dir.path().join("manifest.json"))["seed"], 2);
    assert_eq!(read_json(&dir.path().join("sample.json"))["seed"], 2);
}

#[test]
fn toml_config_and_cylinder_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        r#"
[measure]
kind = "periodic"
params = { values = [0.25, 0.5] }
"#,
    );
    let o = cointoss(&["measure", "eval", "--cylinder", "011", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("eval.json"));
    let expect = (0.25f64 * 0.5 * 0.75).log2();
    assert!((v["log2_measure"].as_f64().unwrap() - expect).abs() < 1e-14);
    assert_eq!(v["depth"], 3);
}

#[test]
fn coarse_counts_are_binomial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"measure": {"kind": "constant", "params": {"p": 0.25}}, "coarse": {"depth": 10}}"#,
    );
    assert!(cointoss(&["coarse", "--config", &cfg], dir.path()).status.success());
    let text = std::fs::read_to_string(dir.path().join("coarse.csv")).unwrap();
    let t = parse_csv(&text).unwrap();
    assert_eq!(t.header, ["alpha_low", "alpha_high", "count", "f_value", "spill_count"]);
    let counts: Vec<u64> = t.column("count").unwrap().iter().map(|c| c.unwrap() as u64).filter(|&c| c > 0).collect();
    assert_eq!(counts, [1, 10, 45, 120, 210, 252, 210, 120, 45, 10, 1]);
}

#[test]
fn fit_transition_writes_certificate() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cointoss(&["fit-transition"], dir.path()).status.success());
    let v = read_json(&dir.path().join("transition.json"));
    let lambdas: Vec<f64> = v["perturbation"]["lambdas"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(lambdas.len(), 3);
    assert!(lambdas.iter().all(|&l| l > 0.0));
    assert!((lambdas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(v["realized"]["kind"], "low-discrepancy");
}

#[test]
fn dense_example_detects_all_kinks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"dense": {"qs": [2, 3, 1.5, 1.75, 4, 5], "tracking": null}}"#);
    let o = cointoss(&["dense", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("dense.json"));
    assert_eq!(v["build"]["combos"].as_array().unwrap().len(), 4);
    let mut qs: Vec<f64> = v["kinks"].as_array().unwrap().iter().map(|k| k["q"].as_f64().unwrap()).collect();
    qs.sort_by(f64::total_cmp);
    let want = [1.5, 1.75, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(qs.len(), want.len(), "{qs:?}");
    for (a, b) in qs.iter().zip(want) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!(v["tracking"].is_null());
}

#[test]
fn kinks_from_transition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"kinks": {"source": "transition", "threshold": 5e-4}}"#);
    assert!(cointoss(&["kinks", "--config", &cfg], dir.path()).status.success());
    let v = read_json(&dir.path().join("kinks.json"));
    let qs: Vec<f64> = v["kinks"].as_array().unwrap().iter().map(|k| k["q"].as_f64().unwrap()).collect();
    assert_eq!(qs.len(), 2);
    assert!((qs[0] - 2.0).abs() < 1e-9 && (qs[1] - 3.0).abs() < 1e-9);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cointoss(&["spectrum"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let e = error_of(&o);
    assert_eq!(e["exit_code"], 1);
    assert!(e["message"].as_str().unwrap().contains("measure"));

    let typo = write(dir.path(), "t.json", r#"{"measure": {"kind": "constant", "params": {"p": 0.5}}, "spectrm": {}}"#);
    assert_eq!(cointoss(&["spectrum", "--config", &typo], dir.path()).status.code(), Some(1));

    let bad_p = write(dir.path(), "p.json", r#"{"measure": {"kind": "constant", "params": {"p": 1.5}}}"#);
    assert_eq!(cointoss(&["spectrum", "--config", &bad_p], dir.path()).status.code(), Some(1));

    let not_nested = write(dir.path(), "n.json", r#"{"dense": {"qs": [2, 3, 1.5, 2.5]}}"#);
    assert_eq!(cointoss(&["dense", "--config", &not_nested], dir.path()).status.code(), Some(1));

    assert_eq!(cointoss(&["gibbs", "--format", "csv"], dir.path()).status.code(), Some(1));
}

#[test]
fn construction_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // p2 = 1/2 leaves no room for the matching weight
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"transition": {"base": {"terms": [[0.5, 0.2], [0.5, 0.5]]}, "q1": 1.5, "q2": 2.5}}"#,
    );
    let o = cointoss(&["fit-transition", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_of(&o)["exit_code"], 2);

    let p5 = write(dir.path(), "p5.json", r#"{"transition": {"p5": 0.3}}"#);
    let o = cointoss(&["fit-transition", "--config", &p5], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn plot_renders_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"measure": {"kind": "constant", "params": {"p": 0.3}},
            "spectrum": {"q": {"min": -3, "max": 3, "step": 0.1}, "horizon": 100},
            "legendre": {"alpha": {"min": 0.4, "max": 1.8, "step": 0.02}}}"#,
    );
    assert!(cointoss(&["legendre", "--config", &cfg], dir.path()).status.success());
    let csv = dir.path().join("legendre.csv");
    let o = cointoss(
        &["plot", "--input", csv.to_str().unwrap(), "--y", "tau_star", "--name", "f.svg", "--title", "f(alpha)"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(dir.path().join("f.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert!(svg.contains("f(alpha)"));
}

#[test]
fn json_format_switches_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"measure": {"kind": "constant", "params": {"p": 0.4}}, "spectrum": {"q": {"min": 0, "max": 1, "step": 0.5}, "horizon": 10}}"#,
    );
    assert!(cointoss(&["spectrum", "--config", &cfg, "--format", "json"], dir.path()).status.success());
    let v = read_json(&dir.path().join("tau.json"));
    assert_eq!(v["points"].as_array().unwrap().len(), 3);
    assert!(!dir.path().join("tau.csv").exists());
}
