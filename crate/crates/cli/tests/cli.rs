use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn multifrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multifrag"))
        .args(args)
        .env_remove("MULTIFRAG_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr holds one JSON error")
}

/// `(header, rows)` of a CSV without quoted fields.
fn csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn spectral_table_of_binary_halving() {
    let spec = model("spec_a.json");
    let text = stdout(&multifrag(&["spectral", "--spec", spec.to_str().unwrap(), "--theta-grid", "0:2:0.5"]));
    let (header, rows) = csv(&text);
    let (kind, theta, phi) = (column(&header, "kind"), column(&header, "theta"), column(&header, "phi"));
    let zero = rows.iter().find(|r| r[kind] == "grid" && r[theta].parse::<f64>().unwrap() == 0.0).unwrap();
    assert!(zero[phi].parse::<f64>().unwrap().abs() < 1e-10);

    // bisection on 1 − 2^{−θ} = (θ+1) 2^{−θ} ln 2
    let h = |t: f64| 1.0 - 2f64.powf(-t) - (t + 1.0) * 2f64.powf(-t) * 2f64.ln();
    let (mut lo, mut hi) = (0.1, 10.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let critical = rows.iter().find(|r| r[kind] == "theta_bar").unwrap();
    assert!((critical[theta].parse::<f64>().unwrap() - lo).abs() < 1e-3);
}

#[test]
fn tagged_position_has_mean_t_ln2() {
    let spec = model("spec_b.json");
    let text = stdout(&multifrag(&[
        "tagged", "--spec", spec.to_str().unwrap(), "--t", "1", "--replicas", "10000", "--seed", "42",
    ]));
    let (header, rows) = csv(&text);
    let s: Vec<f64> = rows.iter().map(|r| r[column(&header, "s")].parse().unwrap()).collect();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert_eq!(s.len(), 10_000);
    assert!((mean - 2f64.ln()).abs() < 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = model("spec_c.json");
    let spec = spec.to_str().unwrap();
    for cmd in ["simulate", "partition", "tagged", "martingale", "limits", "ldcount", "report"] {
        let mut outputs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "4")] {
            let out = dir.path().join(format!("{cmd}{run}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_multifrag"))
                .args([cmd, "--spec", spec, "--replicas", "40", "--t-grid", "1:3:1", "--out", out.to_str().unwrap()])
                .env("MULTIFRAG_SEED", "7")
                .env("RAYON_NUM_THREADS", threads)
                .status()
                .unwrap();
            assert!(status.success(), "{cmd}");
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert!(!outputs[0].is_empty(), "{cmd}");
        assert_eq!(outputs[0], outputs[1], "{cmd}");
    }
}

#[test]
fn seed_flag_and_environment_agree() {
    let spec = model("spec_c.json");
    let spec = spec.to_str().unwrap();
    let flag = stdout(&multifrag(&["simulate", "--spec", spec, "--replicas", "3", "--seed", "99"]));
    let env = Command::new(env!("CARGO_BIN_EXE_multifrag"))
        .args(["simulate", "--spec", spec, "--replicas", "3"])
        .env("MULTIFRAG_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(flag, stdout(&env));
    let other = stdout(&multifrag(&["simulate", "--spec", spec, "--replicas", "3", "--seed", "100"]));
    assert_ne!(flag, other);
}

#[test]
fn snapshot_rows_conserve_mass() {
    let spec = model("spec_c.json");
    let text = stdout(&multifrag(&[
        "simulate", "--spec", spec.to_str().unwrap(), "--replicas", "5", "--seed", "1", "--t-grid", "0.5:2:0.5",
        "--mass-floor", "0",
    ]));
    let (header, rows) = csv(&text);
    assert_eq!(header, ["replica", "time", "fragment_id", "mass", "type", "frozen"]);
    let mut totals = std::collections::BTreeMap::<(String, String), f64>::new();
    for r in &rows {
        *totals.entry((r[0].clone(), r[1].clone())).or_default() += r[3].parse::<f64>().unwrap();
    }
    assert_eq!(totals.len(), 20);
    assert!(totals.values().all(|m| (m - 1.0).abs() < 1e-9));
}

#[test]
fn json_output_parses() {
    let spec = model("spec_c.json");
    let out = stdout(&multifrag(&[
        "martingale", "--spec", spec.to_str().unwrap(), "--seed", "5", "--replicas", "10", "--format", "json",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 20);
    assert_eq!(v["summary"].as_array().unwrap().len(), 2);
}

#[test]
fn errors_carry_exit_codes_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let spec_a = model("spec_a.json");
    let spec_a = spec_a.to_str().unwrap();

    let out = multifrag(&["simulate", "--spec", spec_a]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");

    let missing = write("missing.json", r#"{ "types": 1, "erosion": [0], "conservative": true }"#);
    let out = multifrag(&["validate", "--spec", &missing]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["field"], "dislocation");

    let typezero = write(
        "zero.json",
        r#"{ "types": 1, "erosion": [0], "conservative": true,
             "dislocation": { "1": [ { "rate": 1, "fragments": [[0.5, 0]] } ] } }"#,
    );
    let out = multifrag(&["validate", "--spec", &typezero]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["violations"].as_array().unwrap().len(), 1);

    let stiff = write(
        "stiff.json",
        r#"{ "types": 1, "erosion": [0], "conservative": true,
             "dislocation": { "1": [ { "rate": 1e6, "fragments": [[0.5, 1], [0.5, 1]] } ] } }"#,
    );
    let out = multifrag(&["spectral", "--spec", &stiff, "--theta", "1"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"], "numeric");

    let out = multifrag(&["simulate", "--spec", spec_a, "--seed", "1", "--t", "30", "--max-fragments", "1000"]);
    assert_eq!(out.status.code(), Some(5));

    let out = multifrag(&["spectral", "--spec", spec_a, "--theta=-1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = multifrag(&["simulate", "--spec", spec_a, "--seed", "1", "--replicas", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_files_round_trip() {
    for name in ["spec_a.json", "spec_b.json", "spec_c.json"] {
        let spec = multifrag::specfile::read_spec_file(&model(name)).unwrap();
        let text = multifrag::specfile::spec_to_json(&spec);
        assert_eq!(multifrag::specfile::parse_spec_str(&text).unwrap(), spec);
    }
    let specs = [
        multifrag::measures::examples::spec_a(),
        multifrag::measures::examples::spec_b(),
        multifrag::measures::examples::spec_c(),
    ];
    for (name, spec) in ["spec_a.json", "spec_b.json", "spec_c.json"].iter().zip(specs) {
        assert_eq!(multifrag::specfile::read_spec_file(&model(name)).unwrap(), spec);
    }
}
