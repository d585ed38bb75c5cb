use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seeds = [1, 2]

[model]
variant = "lstm"
hidden_dim = 8

[train]
seq_len = 16
n_iterations = 30
batch_size = 8
learning_rate = 0.003

[synthetic]
n_basins = 3
n_days = 300
"#;

fn runoff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_runoff"))
        .args(args)
        .env_remove("RUNOFF_DATA_ROOT")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes `body` as a config file and generates its dataset into `dir/data`.
fn generated(dir: &Path, body: &str) -> PathBuf {
    let cfg = dir.join("input.toml");
    fs::write(&cfg, body).unwrap();
    let data = dir.join("data");
    let out = runoff(&["generate-synthetic", "--config", p(&cfg), "--out", p(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data.join("config.toml")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn generate_is_reproducible_and_guarded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = generated(a.path(), SMALL);
    generated(b.path(), SMALL);
    assert_eq!(tree(&a.path().join("data")), tree(&b.path().join("data")));

    let again = runoff(&["generate-synthetic", "--config", p(&a.path().join("input.toml")), "--out", p(&a.path().join("data"))]);
    assert_eq!(code(&again), 2);
    assert!(stderr(&again).contains("--force"));

    let m = manifest(&a.path().join("data"));
    assert_eq!(m["command"], "generate-synthetic");
    assert!(m["artifacts"].as_array().unwrap().len() >= 4);
    assert!(cfg_a.exists());

    let other = runoff(&[
        "generate-synthetic",
        "--config",
        p(&a.path().join("input.toml")),
        "--out",
        p(&a.path().join("other")),
        "--seed",
        "7",
    ]);
    assert_eq!(code(&other), 0);
    assert_ne!(tree(&a.path().join("data")), tree(&a.path().join("other")));
}

#[test]
fn generate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[synthetic]\nn_days = 0\n").unwrap();
    assert_eq!(code(&runoff(&["generate-synthetic", "--config", p(&cfg), "--out", p(&dir.path().join("d"))])), 2);

    fs::write(&cfg, "[synthetic]\nn_dayz = 10\n").unwrap();
    let out = runoff(&["generate-synthetic", "--config", p(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_dayz"));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    fs::write(&cfg, SMALL).unwrap();
    let out = runoff(&["generate-synthetic", "--config", p(&cfg), "--out", p(&blocker.join("sub"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    assert_eq!(code(&runoff(&["generate-synthetic", "--config", p(&dir.path().join("missing.toml"))])), 3);
    assert_eq!(code(&runoff(&["no-such-command"])), 2);
    assert_eq!(code(&runoff(&["--help"])), 0);
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generated(dir.path(), SMALL);
    let runs = dir.path().join("data/runs");

    let out = runoff(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for s in [1, 2] {
        assert!(runs.join(format!("lstm_seed{s}.ckpt")).exists());
        let loss = fs::read_to_string(runs.join(format!("lstm_seed{s}_loss.csv"))).unwrap();
        assert!(loss.starts_with("iteration,loss\n"));
    }
    let m = manifest(&runs);
    assert_eq!(m["seeds"], serde_json::json!([1, 2]));

    let refused = runoff(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&refused), 2);
    let before = fs::read(runs.join("lstm_seed1.ckpt")).unwrap();
    assert_eq!(code(&runoff(&["train", "--config", p(&cfg), "--force"])), 0);
    assert_eq!(manifest(&runs)["config_sha256"], m["config_sha256"]);
    assert_eq!(fs::read(runs.join("lstm_seed1.ckpt")).unwrap(), before);

    let out = runoff(&["evaluate", "--config", p(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("lstm (2 members)"), "{stdout}");
    assert!(stdout.contains("NSE"));
    let eval = runs.join("evaluation");
    for f in ["summary.txt", "summary.csv", "manifest.json", "report_lstm_seed1.csv", "cdf_nse_lstm_seed2.csv"] {
        assert!(eval.join(f).exists(), "{f}");
    }

    let single = runoff(&[
        "evaluate",
        "--config",
        p(&cfg),
        "--checkpoint",
        p(&runs.join("lstm_seed1.ckpt")),
        "--out",
        p(&dir.path().join("one")),
    ]);
    assert_eq!(code(&single), 0, "{}", stderr(&single));
    assert!(String::from_utf8_lossy(&single.stdout).contains("degenerate"));
    let csv = fs::read_to_string(dir.path().join("one/summary.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",true,"));
}

#[test]
fn identical_training_runs_match_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generated(dir.path(), SMALL);
    let out = dir.path().join("a");
    assert_eq!(code(&runoff(&["train", "--config", p(&cfg), "--out", p(&out), "--seed", "3"])), 0);
    let first = tree(&out);
    assert_eq!(code(&runoff(&["train", "--config", p(&cfg), "--out", p(&out), "--seed", "3", "--force"])), 0);
    assert_eq!(tree(&out), first);
}

#[test]
fn replay_oracle_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generated(dir.path(), SMALL);
    let out = runoff(&["evaluate", "--config", p(&cfg), "--replay-oracle", "--out", p(&dir.path().join("oracle"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("oracle/summary.csv")).unwrap();
    let nse = csv.lines().find(|l| l.starts_with("nse,")).unwrap();
    let mean: f64 = nse.split(',').nth(1).unwrap().parse().unwrap();
    assert!((mean - 1.0).abs() < 1e-12, "{nse}");
    assert!(!String::from_utf8_lossy(&out.stdout).contains("-0.0000"));
}

#[test]
fn divergence_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("learning_rate = 0.003", "learning_rate = 1e300\nclip_norm = 1e300");
    let cfg = generated(dir.path(), &body);
    let out = runoff(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn dimension_mismatch_names_input_dim() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}noisy_product = \"noisy\"\n");
    let cfg = generated(dir.path(), &body);
    let text = fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("\"noisy\""));
    let clean = dir.path().join("data/clean.toml");
    fs::write(&clean, text.replace("products = [\"synthetic\", \"noisy\"]", "products = [\"synthetic\"]")).unwrap();

    assert_eq!(code(&runoff(&["train", "--config", p(&clean), "--seed", "1"])), 0);
    let out = runoff(&["evaluate", "--config", p(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("input_dim"), "{}", stderr(&out));
}

#[test]
fn modified_transformer_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("variant = \"lstm\"\nhidden_dim = 8", "variant = \"transformer_modified\"\nd_model = 8\nn_heads = 2\nn_layers = 1\nd_ff = 16");
    let cfg = generated(dir.path(), &body);
    let out = runoff(&["train", "--config", p(&cfg), "--seed", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("data/runs/transformer_modified_seed4.ckpt").exists());
}

#[test]
fn gradcheck_exit_codes() {
    let ok = runoff(&["gradcheck"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("checks passed"));

    let bad = runoff(&["gradcheck", "--inject-fault", "tanh"]);
    assert_eq!(code(&bad), 5);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));

    let unknown = runoff(&["gradcheck", "--inject-fault", "cosh"]);
    assert_eq!(code(&unknown), 2);
    assert!(stderr(&unknown).contains("layer_norm"));
}
