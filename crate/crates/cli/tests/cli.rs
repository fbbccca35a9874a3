//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hierfault"))
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let counts: Vec<String> = [
        "A10", "A11", "A12", "A20", "A21", "A30", "A31", "A40", "A41", "A50", "A51", "A60",
        "A61", "A70",
    ]
    .iter()
    .map(|n| format!("\"{}\": 12", n))
    .collect();
    let config = format!(
        r#"{{
            "generator": {{ "counts": {{ {} }} }},
            "scenarios": ["A12"],
            "betas": [10.0],
            "seeds": [0, 1],
            "learning_rates": [0.01],
            "train": {{ "epochs": 6, "hidden": [12, 6] }},
            "master_seed": 7
        }}"#,
        counts.join(", ")
    );
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    path
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Results CSV contents with the wall-time column blanked.
fn results_modulo_wall(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            if fields.len() == 9 && fields[8] != "wall_ms" {
                fields[8] = "_";
            }
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let output = bin().arg("frobnicate").output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("Usage") || stderr.contains("usage"), "{}", stderr);
}

#[test]
fn generate_writes_dataset_and_respects_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    let out_c = dir.path().join("c.csv");

    assert_success(
        &bin()
            .args(["generate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_a)
            .args(["--seed", "1"])
            .output()
            .unwrap(),
    );
    assert_success(
        &bin()
            .args(["generate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_b)
            .args(["--seed", "1"])
            .output()
            .unwrap(),
    );
    assert_success(
        &bin()
            .args(["generate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_c)
            .args(["--seed", "2"])
            .output()
            .unwrap(),
    );
    let a = std::fs::read(&out_a).unwrap();
    assert_eq!(a, std::fs::read(&out_b).unwrap());
    assert_ne!(a, std::fs::read(&out_c).unwrap());
    // Header + 14 * 12 rows.
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 14 * 12);
}

#[test]
fn env_seed_is_used_unless_flag_given() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_env = dir.path().join("env.csv");
    let out_flag = dir.path().join("flag.csv");
    let out_plain = dir.path().join("plain.csv");

    assert_success(
        &bin()
            .env("HIERFAULT_SEED", "5")
            .args(["generate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_env)
            .output()
            .unwrap(),
    );
    // The flag beats the environment.
    assert_success(
        &bin()
            .env("HIERFAULT_SEED", "5")
            .args(["generate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_flag)
            .args(["--seed", "7"])
            .output()
            .unwrap(),
    );
    // No flag, no env: config master seed (7).
    assert_success(
        &bin()
            .env_remove("HIERFAULT_SEED")
            .args(["generate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_plain)
            .output()
            .unwrap(),
    );
    let env_bytes = std::fs::read(&out_env).unwrap();
    let flag_bytes = std::fs::read(&out_flag).unwrap();
    let plain_bytes = std::fs::read(&out_plain).unwrap();
    assert_ne!(env_bytes, flag_bytes);
    assert_eq!(flag_bytes, plain_bytes);
}

#[test]
fn sweep_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");

    for out in [&out1, &out2] {
        assert_success(
            &bin()
                .args(["sweep", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(out)
                .output()
                .unwrap(),
        );
    }
    let results1 = out1.join("results.csv");
    let results2 = out2.join("results.csv");
    assert_eq!(
        results_modulo_wall(&results1),
        results_modulo_wall(&results2)
    );

    // Resuming over a complete run leaves the file byte-identical,
    // original wall times included.
    let before = std::fs::read(&results1).unwrap();
    assert_success(
        &bin()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out1)
            .output()
            .unwrap(),
    );
    assert_eq!(before, std::fs::read(&results1).unwrap());
}

#[test]
fn report_renders_svg_from_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("run");
    assert_success(
        &bin()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    assert_success(
        &bin()
            .args(["report", "--results"])
            .arg(&out)
            .output()
            .unwrap(),
    );
    let report = out.join("report");
    assert!(report.join("boxplot_data.csv").exists());
    let svg = std::fs::read_to_string(report.join("A12.svg")).unwrap();
    assert!(svg.starts_with("<?xml"));
    assert!(svg.contains("<svg"));
}

#[test]
fn train_score_calibrate_evaluate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    let scores = dir.path().join("scores.csv");

    assert_success(
        &bin()
            .args(["generate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&data)
            .output()
            .unwrap(),
    );
    assert_success(
        &bin()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&model)
            .args(["--variant", "hier", "--beta", "10", "--epochs", "5"])
            .output()
            .unwrap(),
    );
    assert_success(
        &bin()
            .args(["score", "--config"])
            .arg(&config)
            .arg("--model")
            .arg(&model)
            .arg("--data")
            .arg(&data)
            .args(["--method", "msp", "--variant", "hier", "--beta", "10"])
            .arg("--out")
            .arg(&scores)
            .output()
            .unwrap(),
    );
    let text = std::fs::read_to_string(&scores).unwrap();
    assert_eq!(text.lines().count(), 1 + 14 * 12);
    assert!(text.lines().nth(1).unwrap().starts_with("r00000,msp,hier,10,"));

    let calibrate = bin()
        .args(["calibrate", "--scores"])
        .arg(&scores)
        .args(["--alpha", "0.05"])
        .output()
        .unwrap();
    assert_success(&calibrate);
    let stdout = String::from_utf8_lossy(&calibrate.stdout);
    assert!(stdout.contains("msp,hier,10,"), "{}", stdout);

    // The dump has no novel rows, so evaluate prints just the header.
    let evaluate = bin()
        .args(["evaluate", "--scores"])
        .arg(&scores)
        .output()
        .unwrap();
    assert_success(&evaluate);
    let stdout = String::from_utf8_lossy(&evaluate.stdout);
    assert!(stdout.starts_with("method,variant,beta,auroc"));
}

#[test]
fn evaluate_computes_auroc_from_sweep_dump() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("run");
    assert_success(
        &bin()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    let scores_dir = out.join("scores/A12");
    let dump = scores_dir
        .read_dir()
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .expect("at least one score dump");
    let evaluate = bin().args(["evaluate", "--scores"]).arg(&dump).output().unwrap();
    assert_success(&evaluate);
    let stdout = String::from_utf8_lossy(&evaluate.stdout);
    // Three detectors scored in each dump; AUROC values parse to [0, 1].
    let mut rows = 0;
    for line in stdout.lines().skip(1) {
        let auroc: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&auroc));
        rows += 1;
    }
    assert_eq!(rows, 3);
}

#[test]
fn missing_config_file_fails_with_json_error() {
    let output = bin()
        .args(["sweep", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().next().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(line).unwrap();
    assert!(parsed["error"].is_string());
}
