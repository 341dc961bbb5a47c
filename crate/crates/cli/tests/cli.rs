use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn maxentos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxentos")).args(args).env_remove("MAXENTOS_THREADS").output().expect("binary runs")
}

fn run_on(cmd: &str, input: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--input", input.to_str().unwrap()];
    args.extend_from_slice(extra);
    maxentos(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_input(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

/// Value printed after `label = ` on a report line.
fn value_of(text: &str, label: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(&format!("{label} = "))).unwrap_or_else(|| panic!("no {label} in {text}"));
    let v = line.split(" = ").nth(1).unwrap().split_whitespace().next().unwrap();
    match v {
        "-inf" => f64::NEG_INFINITY,
        "+inf" => f64::INFINITY,
        v => v.parse().unwrap(),
    }
}

#[test]
fn validate_exit_codes() {
    let ok = run_on("validate", &data("exponential_3.json"), &[]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(value_of(&stdout(&ok), "J(F)").is_finite());
    assert!(stderr(&ok).contains("config: "));

    let dir = tempfile::tempdir().unwrap();
    let reversed = write_input(&dir, "rev.json", r#"{"margins":[{"family":"exponential","rate":1.0},{"family":"exponential","rate":2.0}]}"#);
    let o = run_on("validate", &reversed, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violated") && stdout(&o).contains("at t = "));

    let o = run_on("validate", &data("uniform_uniform.json"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("j_infinite"));
}

#[test]
fn usage_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write_input(&dir, "broken.json", "{ not json");
    assert_eq!(run_on("validate", &broken, &[]).status.code(), Some(2));
    let unknown = write_input(&dir, "unknown.json", r#"{"margins":[{"family":"cauchy"}]}"#);
    assert_eq!(run_on("entropy", &unknown, &[]).status.code(), Some(2));
    let bad = write_input(&dir, "bad.json", r#"{"margins":[{"family":"exponential","rate":-1.0}]}"#);
    assert_eq!(run_on("validate", &bad, &[]).status.code(), Some(2));
    assert_eq!(run_on("validate", &dir.path().join("missing.json"), &[]).status.code(), Some(2));
    assert_eq!(maxentos(&["validate"]).status.code(), Some(2));
    assert_eq!(maxentos(&["explode"]).status.code(), Some(2));
    assert_eq!(run_on("sample", &data("beta_2.json"), &["--n", "0"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_maxentos")).args(["validate", "--input", data("beta_2.json").to_str().unwrap()]).env("MAXENTOS_THREADS", "many").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn entropy_values() {
    let o = run_on("entropy", &data("beta_2.json"), &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!((value_of(&text, "H(F_F)") - (-(2f64.ln()) - 0.5)).abs() < 5e-6);
    assert!((value_of(&text, "H(C_F)") + 1.0).abs() < 1e-9);
    assert!((value_of(&text, "J(F)") - value_of(&text, "J(delta^F)")).abs() < 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let unit = write_input(&dir, "unit.json", r#"{"margins":[{"family":"uniform","a":0.0,"b":1.0}]}"#);
    let o = run_on("entropy", &unit, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(value_of(&stdout(&o), "H(F_F)").abs() < 1e-12);

    let o = run_on("entropy", &data("uniform_uniform.json"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(value_of(&stdout(&o), "H(F_F)"), f64::NEG_INFINITY);

    let o = run_on("entropy", &data("independence_2.json"), &["--multidiagonal"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(value_of(&stdout(&o), "H(C_delta)").abs() < 1e-6);
}

#[test]
fn entropy_json_output_embeds_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.json");
    let o = run_on("entropy", &data("exponential_3.json"), &["--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["config"]["command"], "entropy");
    assert_eq!(doc["config"]["seed"], 0);
    assert!(doc["result"]["h_joint"].is_number());
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let head = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (head, rows)
}

#[test]
fn sample_is_reproducible_sorted_and_documented() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("exponential_3.json");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = run_on("sample", &input, &["--n", "5", "--seed", "11", "--output", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let (head, rows) = parse_csv(&String::from_utf8(ta).unwrap());
    assert_eq!(head, ["x1", "x2", "x3"]);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.windows(2).all(|w| w[0] <= w[1])));

    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    let digest = hex::encode(Sha256::digest(std::fs::read(&input).unwrap()));
    assert_eq!(meta["input_sha256"], digest);
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["config"]["n"], 5);

    let other = maxentos(&["sample", "--input", input.to_str().unwrap(), "--n", "5", "--seed", "12"]);
    assert_ne!(stdout(&other).into_bytes(), std::fs::read(&a).unwrap());
}

#[test]
fn sampled_first_column_follows_first_marginal() {
    let o = run_on("sample", &data("exponential_3.json"), &["--n", "10000", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = parse_csv(&stdout(&o));
    let mut col: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    col.sort_by(f64::total_cmp);
    let n = col.len() as f64;
    let ks = col
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let p = 1.0 - (-3.0 * x).exp();
            (p - k as f64 / n).max((k + 1) as f64 / n - p)
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.63 / n.sqrt(), "ks = {ks}");
}

#[test]
fn sample_refuses_degenerate_input() {
    let o = run_on("sample", &data("uniform_uniform.json"), &["--n", "5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run_on("sample", &data("uniform_uniform.json"), &["--n", "5", "--allow-infinite-entropy"]);
    assert_eq!(o.status.code(), Some(1), "uniform-uniform is outside F_d^0, so the flag does not apply");
    let o = run_on("sample", &data("independence_2.json"), &["--n", "50", "--multidiagonal"]);
    assert_eq!(o.status.code(), Some(0));
    let (head, rows) = parse_csv(&stdout(&o));
    assert_eq!(head, ["u1", "u2"]);
    assert!(rows.iter().flatten().all(|&u| (0.0..=1.0).contains(&u)));
}

#[test]
fn density_grid() {
    let o = run_on("density", &data("beta_2.json"), &["--grid", "11", "--lo", "0", "--hi", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let (head, rows) = parse_csv(&stdout(&o));
    assert_eq!(head, ["x1", "x2", "density"]);
    assert_eq!(rows.len(), 121);
    let at = |a: f64, b: f64| rows.iter().find(|r| (r[0] - a).abs() < 1e-12 && (r[1] - b).abs() < 1e-12).unwrap()[2];
    assert!((at(0.5, 0.8) - 1.5625).abs() < 1e-12);
    assert_eq!(at(0.8, 0.5), 0.0);
    assert!(rows.iter().filter(|r| r[0] > r[1]).all(|r| r[2] == 0.0));

    let o = run_on("density", &data("independence_2.json"), &["--multidiagonal", "--grid", "5", "--lo", "0.1", "--hi", "0.9"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = parse_csv(&stdout(&o));
    assert!(rows.iter().all(|r| (r[2] - 1.0).abs() < 1e-12));

    assert_eq!(run_on("density", &data("uniform_uniform.json"), &["--grid", "4"]).status.code(), Some(1));
    assert_eq!(run_on("density", &data("beta_2.json"), &["--grid", "1"]).status.code(), Some(2));
}

#[test]
fn verify_exponential_example_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run_on("verify", &data("exponential_3.json"), &["--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("overall: PASS"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let checks = doc["report"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["passed"] == true));
    assert!(checks.iter().all(|c| c.get("expected").is_some() && c.get("observed").is_some() && c.get("tolerance").is_some()));
    assert_eq!(doc["report"]["mc_settings"]["n"], 200_000);
    assert_eq!(doc["config"]["budget"]["ks_seeds"], serde_json::json!([0, 1, 2]));
}

#[test]
fn verify_failures_and_overrides() {
    let o = run_on("verify", &data("uniform_uniform.json"), &["--n", "1000", "--grid", "32"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[SKIP] normalization_quadrature"));
    let o = run_on("verify", &data("exponential_2.json"), &["--n", "2000", "--grid", "64", "--tolerance", "no_such=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_on("verify", &data("exponential_2.json"), &["--n", "2000", "--grid", "64", "--tolerance", "normalization_quadrature=1e-300"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[FAIL] normalization_quadrature"));
    let o = run_on("verify", &data("independence_2.json"), &["--multidiagonal", "--n", "2000", "--grid", "64"]);
    assert!(stdout(&o).contains("verification report: d = 2"), "{}", stdout(&o));
}
