//! End-to-end tests of the `prefbench` binary: exit codes, deterministic
//! artifacts, config-file overrides, and environment handling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prefbench"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("prefbench-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn gen_small(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let out = dir.join(name);
    let output = run(&[
        "gen", "--mode", "soups", "--users", "4", "--triples", "120", "--tau", "0.1", "--dim",
        "6", "--dup-frac", "0", "--seed", seed, "--out", out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    out
}

#[test]
fn gen_is_byte_deterministic_and_writes_sidecar_and_manifest() {
    let dir = tmp_dir("determinism");
    let a = gen_small(&dir, "a.jsonl", "7");
    let b = gen_small(&dir, "b.jsonl", "7");
    let c = gen_small(&dir, "c.jsonl", "8");
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());
    assert_ne!(bytes_a, std::fs::read(&c).unwrap());
    assert!(dir.join("a.profiles.jsonl").exists());
    let manifest = std::fs::read_to_string(dir.join("a.jsonl.manifest.json")).unwrap();
    assert!(manifest.contains("\"command\":\"gen\""));
    assert!(manifest.contains("\"seed\":7"));
}

#[test]
fn usage_errors_exit_with_code_one() {
    // five personas cannot form opposed pairs
    let dir = tmp_dir("usage");
    let out = dir.join("d.jsonl");
    let output = run(&[
        "gen", "--mode", "soups", "--users", "5", "--seed", "1", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("opposed pairs"), "{stderr}");
    assert!(!out.exists(), "failed run left partial output");

    let output = run(&["gen", "--mode", "nonsense", "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));

    // unknown flags are usage errors too
    let output = run(&["gen", "--bogus-flag"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_code_two() {
    let dir = tmp_dir("data-errors");
    let output = run(&["profile", "--data", dir.join("missing.jsonl").to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));

    let garbled = dir.join("garbled.jsonl");
    std::fs::write(&garbled, "{\"format_version\":1}\n{broken\n").unwrap();
    let output = run(&["profile", "--data", garbled.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn numeric_failures_exit_with_code_three() {
    let dir = tmp_dir("numeric");
    let data = gen_small(&dir, "d.jsonl", "3");
    let ckpt = dir.join("v.ckpt");
    // the variational objective's KL term overflows under an absurd rate
    let output = run(&[
        "train", "--method", "vpl", "--data", data.to_str().unwrap(), "--out",
        ckpt.to_str().unwrap(), "--lr", "1e8", "--epochs", "2",
    ]);
    assert_eq!(output.status.code(), Some(3), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(!ckpt.exists());
}

#[test]
fn train_eval_round_trip_with_reports() {
    let dir = tmp_dir("train-eval");
    let data = gen_small(&dir, "d.jsonl", "5");
    let ckpt = dir.join("individual.ckpt");
    let output = run(&[
        "train", "--method", "individual", "--data", data.to_str().unwrap(), "--out",
        ckpt.to_str().unwrap(), "--epochs", "30", "--seed", "2",
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let report = dir.join("eval.json");
    let csv = dir.join("eval.csv");
    let eval = |path: &Path, csv: &Path| {
        run(&[
            "eval", "--ckpt", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
            "--per-user", "--seed", "4", "--out", path.to_str().unwrap(), "--csv",
            csv.to_str().unwrap(),
        ])
    };
    let output = eval(&report, &csv);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("individual"), "{stdout}");
    assert!(stdout.contains("u00"), "per-user table missing: {stdout}");

    // identical reruns produce identical report bytes
    let report2 = dir.join("eval2.json");
    let csv2 = dir.join("eval2.csv");
    let output = eval(&report2, &csv2);
    assert!(output.status.success());
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&report2).unwrap());
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&csv2).unwrap());

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("method,user,n,correct,accuracy\n"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tmp_dir("config");
    let config = dir.join("exp.json");
    std::fs::write(&config, r#"{"mode":"soups","users":4,"triples":60,"dim":6,"tau":0.0,"dup_frac":0.0,"seed":9}"#).unwrap();

    // config alone
    let out1 = dir.join("from-config.jsonl");
    let output = run(&["gen", "--config", config.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("(240 records, 4 users)"), "{stdout}");

    // flag wins over config
    let out2 = dir.join("flag-wins.jsonl");
    let output = run(&[
        "gen", "--config", config.to_str().unwrap(), "--users", "6", "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("(360 records, 6 users)"), "{stdout}");
}

#[test]
fn out_dir_env_redirects_relative_outputs() {
    let dir = tmp_dir("env-outdir");
    let output = bin()
        .args(["gen", "--mode", "soups", "--users", "4", "--triples", "30", "--dim", "4", "--seed", "1", "--out", "nested/out.jsonl"])
        .env("PREFBENCH_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(dir.join("nested/out.jsonl").exists());
}

#[test]
fn sweep_workers_agree_with_serial() {
    let dir = tmp_dir("sweep");
    let data = gen_small(&dir, "d.jsonl", "6");
    let serial = dir.join("serial.csv");
    let pooled = dir.join("pooled.csv");
    for (out, workers) in [(&serial, "1"), (&pooled, "3")] {
        let output = run(&[
            "sweep", "--data", data.to_str().unwrap(), "--methods", "vanilla,individual",
            "--sizes", "100,300", "--epochs", "25", "--seed", "3", "--workers", workers,
            "--out", out.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    }
    assert_eq!(std::fs::read(&serial).unwrap(), std::fs::read(&pooled).unwrap());
}

#[test]
fn adapt_and_tax_produce_reports() {
    let dir = tmp_dir("adapt-tax");
    // personalllm data large enough for small budgets
    let data = dir.join("p.jsonl");
    let output = run(&[
        "gen", "--mode", "personalllm", "--users", "8", "--triples", "120", "--dim", "6",
        "--tau", "0", "--seed", "12", "--out", data.to_str().unwrap(),
    ]);
    assert!(output.status.success());

    let adapt_out = dir.join("adapt.json");
    let output = run(&[
        "adapt", "--data", data.to_str().unwrap(), "--methods", "similar,finetune",
        "--budgets", "10,25", "--n-test", "40", "--epochs", "25", "--seed", "2", "--out",
        adapt_out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(&adapt_out).unwrap();
    assert!(text.contains("\"upper_bound\""), "{text}");

    // tax: probes from a tldr family, user data from the soups set
    let tldr = dir.join("t.jsonl");
    let output = run(&[
        "gen", "--mode", "tldr", "--users", "4", "--triples", "200", "--dim", "6", "--seed",
        "13", "--out", tldr.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let soups = gen_small(&dir, "s.jsonl", "14");
    let tax_out = dir.join("tax.json");
    let output = run(&[
        "tax", "--probe-profiles", dir.join("t.profiles.jsonl").to_str().unwrap(),
        "--user-data", soups.to_str().unwrap(), "--user", "u00", "--probes", "80",
        "--margin", "0.3", "--epochs", "10", "--seed", "3", "--out", tax_out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(&tax_out).unwrap();
    assert!(text.contains("\"probe_delta\""), "{text}");
}

#[test]
fn export_embeddings_writes_csv() {
    let dir = tmp_dir("export");
    let data = gen_small(&dir, "d.jsonl", "9");
    let out = dir.join("emb.csv");
    let output = run(&[
        "export-embeddings", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("user_id,triple_id,label,y0"));
    // one row per record
    assert_eq!(text.lines().count() - 1, 480);
}
