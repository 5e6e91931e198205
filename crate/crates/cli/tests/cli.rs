//! Exit-code and output contracts of the `rsvqa` binary.

use std::path::Path;
use std::process::{Command, Output};

fn rsvqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsvqa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn write_config(dir: &Path, epochs: usize) -> std::path::PathBuf {
    let path = dir.join("config.txt");
    std::fs::write(
        &path,
        format!(
            "learning_rate=0.001\nbatch_size=16\nepochs={epochs}\nmargin=1\nmode=contrastive\n\
             seed=42\nnegative_scheme=reverse\nmax_question_len=20\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in [
        vec!["--help"],
        vec!["synth", "--help"],
        vec!["augment", "--help"],
        vec!["train", "--help"],
        vec!["evaluate", "--help"],
        vec!["report", "--help"],
        vec!["checkpoint", "--help"],
        vec!["checkpoint", "inspect", "--help"],
    ] {
        let out = rsvqa(&sub);
        assert_eq!(code(&out), 0, "{sub:?} help failed: {out:?}");
        assert!(!out.stdout.is_empty(), "{sub:?} printed no help");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = rsvqa(&["synth", "--nonsense"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn empty_pivots_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    let synth = rsvqa(&["synth", "--out", out_dir.to_str().unwrap(), "--images", "10", "--seed", "1"]);
    assert_eq!(code(&synth), 0, "{synth:?}");
    let out = rsvqa(&[
        "augment",
        "--input",
        out_dir.join("corpus.json").to_str().unwrap(),
        "--output",
        out_dir.join("aug.json").to_str().unwrap(),
        "--pivots",
        "",
    ]);
    assert_eq!(code(&out), 1, "{out:?}");
}

#[test]
fn unreachable_endpoint_exits_3_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    assert_eq!(
        code(&rsvqa(&["synth", "--out", out_dir.to_str().unwrap(), "--images", "10", "--seed", "1"])),
        0
    );
    // Grab a port with nothing listening on it.
    let endpoint = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://127.0.0.1:{}", listener.local_addr().unwrap().port())
    };
    let out = rsvqa(&[
        "augment",
        "--input",
        out_dir.join("corpus.json").to_str().unwrap(),
        "--output",
        out_dir.join("aug.json").to_str().unwrap(),
        "--translator",
        "http",
        "--endpoint",
        &endpoint,
        "--retries",
        "1",
        "--timeout",
        "2",
    ]);
    assert_eq!(code(&out), 3, "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&endpoint), "stderr should name the endpoint: {stderr}");
}

#[test]
fn mt_endpoint_env_var_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    assert_eq!(
        code(&rsvqa(&["synth", "--out", out_dir.to_str().unwrap(), "--images", "10", "--seed", "1"])),
        0
    );
    let env_endpoint = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://127.0.0.1:{}", listener.local_addr().unwrap().port())
    };
    // The flag points at a different (also dead) endpoint; the error must
    // name the one from the environment.
    let out = Command::new(env!("CARGO_BIN_EXE_rsvqa"))
        .env("MT_ENDPOINT", &env_endpoint)
        .args([
            "augment",
            "--input",
            out_dir.join("corpus.json").to_str().unwrap(),
            "--output",
            out_dir.join("aug.json").to_str().unwrap(),
            "--translator",
            "http",
            "--endpoint",
            "http://127.0.0.1:1",
            "--retries",
            "1",
            "--timeout",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&env_endpoint), "{stderr}");
}

#[test]
fn missing_config_key_exits_1_and_lists_it() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    assert_eq!(
        code(&rsvqa(&["synth", "--out", out_dir.to_str().unwrap(), "--images", "10", "--seed", "1"])),
        0
    );
    let config = dir.path().join("config.txt");
    std::fs::write(&config, "learning_rate=0.001\nbatch_size=8\n").unwrap();
    let out = rsvqa(&[
        "train",
        "--data",
        out_dir.join("corpus.json").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("model.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    for key in ["epochs", "margin", "mode", "seed"] {
        assert!(stderr.contains(key), "stderr should list missing key {key}: {stderr}");
    }
}

#[test]
fn mock_augment_is_deterministic_and_writes_drop_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    assert_eq!(
        code(&rsvqa(&["synth", "--out", out_dir.to_str().unwrap(), "--images", "12", "--seed", "3"])),
        0
    );
    let input = out_dir.join("corpus.json");
    for output in ["a.json", "b.json"] {
        let out = rsvqa(&[
            "augment",
            "--input",
            input.to_str().unwrap(),
            "--output",
            out_dir.join(output).to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{out:?}");
    }
    let a = std::fs::read(out_dir.join("a.json")).unwrap();
    let b = std::fs::read(out_dir.join("b.json")).unwrap();
    assert_eq!(a, b);
    let drops: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("a.drops.json")).unwrap())
            .unwrap();
    assert_eq!(drops.as_array().unwrap().len(), 3);
    assert_eq!(drops[0]["pivot"], "zh");
}

#[test]
fn train_smoke_run_finishes_quickly() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    assert_eq!(
        code(&rsvqa(&["synth", "--out", out_dir.to_str().unwrap(), "--images", "12", "--seed", "5"])),
        0
    );
    let config = write_config(dir.path(), 2);
    let model = dir.path().join("model.json");
    let out = rsvqa(&[
        "train",
        "--data",
        out_dir.join("corpus_paraphrased.json").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(model.exists());
    let history = dir.path().join("model.history.csv");
    let csv = std::fs::read_to_string(&history).unwrap();
    assert!(csv.starts_with("epoch,total,ce_a,ce_p,triplet,val_oa\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(
        started.elapsed().as_secs() < 60,
        "smoke run took {:?}",
        started.elapsed()
    );
}

#[test]
fn evaluate_then_report_renders_reference_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    assert_eq!(
        code(&rsvqa(&["synth", "--out", out_dir.to_str().unwrap(), "--images", "12", "--seed", "9"])),
        0
    );
    let config = write_config(dir.path(), 2);
    let model = dir.path().join("model.json");
    assert_eq!(
        code(&rsvqa(&[
            "train",
            "--data",
            out_dir.join("corpus_paraphrased.json").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ])),
        0
    );
    let mut report_paths = Vec::new();
    for (setting, filter) in [
        ("original->original", "originals_only"),
        ("original->augmented", "all"),
        ("augmented->augmented", "all"),
    ] {
        let path = dir.path().join(format!("{}.json", setting.replace("->", "_")));
        let out = rsvqa(&[
            "evaluate",
            "--checkpoint",
            model.to_str().unwrap(),
            "--data",
            out_dir.join("corpus_paraphrased.json").to_str().unwrap(),
            "--split",
            "test",
            "--filter",
            filter,
            "--setting",
            setting,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{out:?}");
        report_paths.push(path);
    }
    let md_path = dir.path().join("table.md");
    let csv_path = dir.path().join("table.csv");
    let charts = dir.path().join("charts");
    let out = rsvqa(&[
        "report",
        report_paths[0].to_str().unwrap(),
        report_paths[1].to_str().unwrap(),
        report_paths[2].to_str().unwrap(),
        "--out-md",
        md_path.to_str().unwrap(),
        "--out-csv",
        csv_path.to_str().unwrap(),
        "--charts-dir",
        charts.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let md = std::fs::read_to_string(&md_path).unwrap();
    let rows: Vec<&str> = md.lines().skip(2).map(|l| l.split('|').nth(1).unwrap().trim()).collect();
    assert_eq!(rows, vec!["Presence", "Count", "Comparison", "Rural/Urban", "AA", "OA"]);
    assert!(md.lines().next().unwrap().contains("original->original"));
    assert!(charts.join("original_to_original.png").exists());
    assert!(charts.join("augmented_to_augmented.png").exists());
}

#[test]
fn checkpoint_inspect_prints_every_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    assert_eq!(
        code(&rsvqa(&["synth", "--out", out_dir.to_str().unwrap(), "--images", "10", "--seed", "2"])),
        0
    );
    let config = write_config(dir.path(), 1);
    let model = dir.path().join("model.json");
    assert_eq!(
        code(&rsvqa(&[
            "train",
            "--data",
            out_dir.join("corpus.json").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--mode",
            "baseline",
            "--out",
            model.to_str().unwrap(),
        ])),
        0
    );
    let out = rsvqa(&["checkpoint", "inspect", "--file", model.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    for key in [
        "conv1.weight",
        "conv2.weight",
        "conv3.weight",
        "img_proj.weight",
        "embed.weight",
        "rnn.w_x",
        "rnn.w_h",
        "fuse.w_v",
        "fuse.w_t",
        "classifier.weight",
        "classifier.bias",
    ] {
        assert!(stdout.contains(key), "inspect output missing {key}: {stdout}");
    }
    assert!(stdout.contains("total parameters:"));
}
