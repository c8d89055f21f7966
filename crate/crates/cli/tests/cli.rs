//! End-to-end checks of the command-line interface and its exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_efsim"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("efsim-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL_CONFIG: &str = r#"{
    "objective": {"synth": {"kind": "logistic", "rows": 60, "dim": 8, "clients": 3, "noise_std": 0.3, "lambda": 0.1, "seed": 5}},
    "method": {
        "variant": "ef21",
        "compressor": {"kind": "top_k", "k": 1}
    },
    "stepsize": {"mode": "theory_times", "multiplier": 8.0},
    "budget": 400,
    "tol": 1e-6,
    "record_every": 1,
    "seed": 3
}"#;

#[test]
fn run_subcommand_writes_outputs() {
    let dir = temp_dir("run");
    let config = dir.join("run.json");
    std::fs::write(&config, SMALL_CONFIG).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--output"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("method=ef21"), "{stdout}");
    let written = stdout
        .lines()
        .find(|l| l.starts_with("run: wrote "))
        .expect("an output line")
        .trim_start_matches("run: wrote ")
        .to_string();
    let sub = PathBuf::from(written);
    assert!(sub.join("run.csv").is_file());
    assert!(sub.join("run.json").is_file());
    let csv = std::fs::read_to_string(sub.join("run.csv")).unwrap();
    assert!(csv.starts_with("t,f,grad_norm_sq,G_t,bits_up_cum,bits_down_cum,epochs_cum,lyapunov"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn overrides_are_applied_and_unknown_keys_exit_2() {
    let dir = temp_dir("set");
    let config = dir.join("run.json");
    std::fs::write(&config, SMALL_CONFIG).unwrap();

    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--set", "method.compressor.k=2", "--seed", "9"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("compressor=top_k(k=2)"), "{stdout}");

    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--set", "method.compresor.k=2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn divergence_exits_3() {
    let dir = temp_dir("div");
    let config = dir.join("run.json");
    let text = SMALL_CONFIG
        .replace(r#""kind": "logistic""#, r#""kind": "least_squares""#)
        .replace(
            r#"{"mode": "theory_times", "multiplier": 8.0}"#,
            r#"{"mode": "fixed", "gamma": 1e12}"#,
        );
    std::fs::write(&config, text).unwrap();
    let out = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn tune_reports_a_best_multiplier() {
    let dir = temp_dir("tune");
    let config = dir.join("run.json");
    std::fs::write(&config, SMALL_CONFIG).unwrap();
    let out = bin()
        .args(["tune", "--config"])
        .arg(&config)
        .args(["--multipliers", "2,8"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("tune: best_multiplier="), "{stdout}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn inspect_data_prints_shape_and_shards() {
    let dir = temp_dir("inspect");
    let file = dir.join("tiny.libsvm");
    std::fs::write(&file, "1 1:0.5 3:-2\n-1 2:1\n1 1:1\n").unwrap();
    let out = bin()
        .args(["inspect-data"])
        .arg(&file)
        .args(["--clients", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("rows: 3"), "{stdout}");
    assert!(stdout.contains("dim: 3"), "{stdout}");
    assert!(stdout.contains("label -1: 1"), "{stdout}");
    assert!(stdout.contains("label 1: 2"), "{stdout}");
    assert!(stdout.contains("sizes [1, 1, 1]"), "{stdout}");

    // malformed data is a config-style failure
    std::fs::write(&file, "1 3:1 2:1\n").unwrap();
    let out = bin().args(["inspect-data"]).arg(&file).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

/// End to end on a benchmark-shaped dataset file: 8120 rows, 112 features,
/// labels in {1, 2}, split over 20 clients, top-k at one percent of the
/// dimension, lambda 0.1, run to the 1e-7 stopping rule with a tuned
/// multiplier.
#[test]
fn file_backed_logistic_run_converges() {
    let dir = temp_dir("file");
    let file = dir.join("shaped.libsvm");
    // deterministic synthetic rows in LibSVM text form
    let mut text = String::new();
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    for _ in 0..8120 {
        let mut score = 0.0f64;
        let mut row = String::new();
        for j in 1..=112usize {
            let r = next();
            if r % 8 == 0 {
                let v = ((r >> 8) % 1000) as f64 / 500.0 - 1.0;
                score += if j % 2 == 0 { v } else { -v };
                row.push_str(&format!(" {j}:{v}"));
            }
        }
        let label = if score >= 0.0 { 2 } else { 1 };
        text.push_str(&format!("{label}{row}\n"));
    }
    std::fs::write(&file, text).unwrap();

    let config = dir.join("run.json");
    std::fs::write(
        &config,
        format!(
            r#"{{
        "objective": {{"file": {{"path": {file:?}, "kind": {{"logistic": {{"lambda": 0.1}}}}, "clients": 20}}}},
        "method": {{
            "variant": "ef21",
            "compressor": {{"kind": "top_k", "k_fraction": 0.01}}
        }},
        "stepsize": {{"mode": "theory_times", "multiplier": 32.0}},
        "budget": 20000,
        "tol": 1e-7,
        "record_every": 100,
        "seed": 7
    }}"#
        ),
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--output"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("status=Converged"), "{stdout}");
    let written = stdout
        .lines()
        .find(|l| l.starts_with("run: wrote "))
        .unwrap()
        .trim_start_matches("run: wrote ")
        .to_string();
    let csv = std::fs::read_to_string(PathBuf::from(written).join("run.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let grad: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!(grad <= 1e-7, "final grad_norm_sq {grad}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_passes_and_exits_0() {
    let out = bin().arg("verify").output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("verify: PASS contraction"), "{stdout}");
    assert!(stdout.contains("verify: PASS gradients"), "{stdout}");
    assert!(stdout.contains("verify: PASS reduction-matrix"), "{stdout}");
    assert!(stdout.contains("verify: PASS lyapunov"), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn usage_errors_exit_2() {
    let out = bin().arg("run").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["run", "--config", "/nonexistent/path.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
