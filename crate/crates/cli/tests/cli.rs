//! End-to-end command tests driving the compiled binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn traceformer(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traceformer"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        stdout(output),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Tiny corpus config shared by the pipeline tests.
fn small_synth_args(out: &str, seed: &str) -> Vec<String> {
    ["synth", "--out", out, "--seed", seed, "--n-traces", "80"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[test]
fn synth_is_deterministic_and_reingestable() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let args = small_synth_args("a", "5");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = traceformer(&args, root);
    assert_success(&out);
    assert!(stdout(&out).contains("length mean"));

    let args_b = small_synth_args("b", "5");
    let args_b: Vec<&str> = args_b.iter().map(String::as_str).collect();
    assert_success(&traceformer(&args_b, root));

    // same seed → byte-identical files
    for file in ["log.csv", "ontology.json"] {
        let a = fs::read(root.join("a").join(file)).unwrap();
        let b = fs::read(root.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between same-seed runs");
    }

    // stats on the emitted log re-ingest cleanly and match the synth printout
    let stats = traceformer(&["stats", "--log", "a/log.csv", "--out", "a"], root);
    assert_success(&stats);
    let stats_text = stdout(&stats);
    let synth_text = stdout(&out);
    for line in stats_text.lines() {
        assert!(
            synth_text.contains(line),
            "stats line '{line}' not in synth output"
        );
    }
}

#[test]
fn stats_missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = traceformer(&["stats", "--log", "nope.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_empty_log_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "case,activity,idx\n").unwrap();
    let out = traceformer(&["stats", "--log", "empty.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no events"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = traceformer(&["train"], dir.path()); // missing --log
    assert_eq!(out.status.code(), Some(1));

    let out = traceformer(&["no-such-command"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    // bad pe mode comes from config validation
    fs::write(dir.path().join("log.csv"), "case,activity,idx\nc1,a,1\n").unwrap();
    let out = traceformer(&["train", "--log", "log.csv", "--pe", "bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn encode_graph_writes_canonical_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // two-node graph: one activity, one type
    fs::write(
        root.join("tiny.json"),
        r#"{"nodes":[{"name":"a","kind":"activity"},{"name":"t","kind":"type"}],
            "edges":[["a","t"]]}"#,
    )
    .unwrap();

    let out = traceformer(
        &[
            "encode-graph",
            "--ontology",
            "tiny.json",
            "--k",
            "1",
            "--out",
            "g",
        ],
        root,
    );
    assert_success(&out);
    let csv = fs::read_to_string(root.join("g/embeddings.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "node,kind,c1");
    assert_eq!(lines.len(), 3); // header + one row per node

    // values are ±1/√2 with the first node positive (sign canonicalization)
    let value = |line: &str| line.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    assert!((value(lines[1]) - inv_sqrt2).abs() < 1e-3);
    assert!((value(lines[2]) + inv_sqrt2).abs() < 1e-3);

    // re-running yields the identical file
    let out2 = traceformer(
        &[
            "encode-graph",
            "--ontology",
            "tiny.json",
            "--k",
            "1",
            "--out",
            "g2",
        ],
        root,
    );
    assert_success(&out2);
    assert_eq!(
        fs::read(root.join("g/embeddings.csv")).unwrap(),
        fs::read(root.join("g2/embeddings.csv")).unwrap()
    );
}

#[test]
fn encode_graph_disconnected_exits_two_and_lists_components() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("broken.json"),
        r#"{"nodes":[{"name":"a","kind":"activity"},{"name":"t","kind":"type"},
                     {"name":"lost","kind":"activity"}],
            "edges":[["a","t"]]}"#,
    )
    .unwrap();
    let out = traceformer(&["encode-graph", "--ontology", "broken.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("disconnected"));
    assert!(stderr.contains("lost"));
}

#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let args = small_synth_args("data", "11");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_success(&traceformer(&args, root));

    // fast config for the smoke run
    fs::write(
        root.join("fast.json"),
        r#"{"d_model": 16, "hidden": 16, "heads": 2, "layers": 1,
            "epochs": 2, "batch_size": 16, "n_fits": 1, "spe_k": 4, "seed": 3}"#,
    )
    .unwrap();

    let out = traceformer(
        &[
            "train",
            "--log",
            "data/log.csv",
            "--ontology",
            "data/ontology.json",
            "--pe",
            "spe",
            "--config",
            "fast.json",
            "--out",
            "run",
        ],
        root,
    );
    assert_success(&out);

    // emitted files
    assert!(root.join("run/metrics_fit0.json").exists());
    assert!(root.join("run/aggregate.csv").exists());
    assert!(root.join("run/results.csv").exists());
    assert!(root.join("run/checkpoint/params.json").exists());
    assert!(root.join("run/checkpoint/spe_embeddings.csv").exists());

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("run/metrics_fit0.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["fit"], 0);
    assert!(metrics["acc@1"].as_f64().unwrap() <= metrics["acc@3"].as_f64().unwrap());

    // aggregate has a header plus exactly one (method, size) row
    let aggregate = fs::read_to_string(root.join("run/aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 2);
    assert!(aggregate.lines().nth(1).unwrap().starts_with("spe,16"));

    // evaluating the checkpoint on the same log works and is monotone in k
    let eval = traceformer(
        &[
            "eval",
            "--checkpoint",
            "run/checkpoint",
            "--log",
            "data/log.csv",
            "--out",
            "evald",
        ],
        root,
    );
    assert_success(&eval);
    let csv = fs::read_to_string(root.join("evald/eval.csv")).unwrap();
    let accs: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(accs.len(), 3);
    assert!(accs[0] <= accs[1] && accs[1] <= accs[2]);

    // missing checkpoint is an I/O (data) error
    let eval = traceformer(
        &["eval", "--checkpoint", "missing", "--log", "data/log.csv"],
        root,
    );
    assert_eq!(eval.status.code(), Some(2));
}

#[test]
fn train_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let args = small_synth_args("data", "13");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_success(&traceformer(&args, root));

    fs::write(
        root.join("fast.json"),
        r#"{"d_model": 8, "hidden": 8, "heads": 2, "layers": 1,
            "epochs": 2, "batch_size": 16, "n_fits": 2, "seed": 17}"#,
    )
    .unwrap();

    for out_dir in ["r1", "r2"] {
        let out = traceformer(
            &[
                "train",
                "--log",
                "data/log.csv",
                "--config",
                "fast.json",
                "--out",
                out_dir,
            ],
            root,
        );
        assert_success(&out);
    }
    for file in [
        "metrics_fit0.json",
        "metrics_fit1.json",
        "aggregate.csv",
        "results.csv",
        "checkpoint/params.json",
    ] {
        let a = fs::read(root.join("r1").join(file)).unwrap();
        let b = fs::read(root.join("r2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn tune_emits_reusable_best_config() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let args = small_synth_args("data", "19");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_success(&traceformer(&args, root));

    fs::write(
        root.join("fast.json"),
        r#"{"epochs": 1, "batch_size": 32, "patience": 1}"#,
    )
    .unwrap();

    let out = traceformer(
        &[
            "tune",
            "--log",
            "data/log.csv",
            "--budget",
            "2",
            "--config",
            "fast.json",
            "--seed",
            "23",
            "--out",
            "tuned",
        ],
        root,
    );
    assert_success(&out);

    let trials = fs::read_to_string(root.join("tuned/trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 3); // header + 2 trials
    assert!(trials.starts_with("trial,emb,hidden,heads,layers,dropout,gamma,lr,spe_k"));

    // the emitted best config must be loadable by train
    fs::write(root.join("retrain.json"), {
        // shrink the tuned config for a 1-epoch smoke run
        let mut best: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(root.join("tuned/best_config.json")).unwrap())
                .unwrap();
        best["epochs"] = 1.into();
        best["n_fits"] = 1.into();
        serde_json::to_string(&best).unwrap()
    })
    .unwrap();
    let retrain = traceformer(
        &[
            "train",
            "--log",
            "data/log.csv",
            "--config",
            "retrain.json",
            "--out",
            "retrained",
        ],
        root,
    );
    assert_success(&retrain);

    // budget < 1 is a usage error
    let out = traceformer(&["tune", "--log", "data/log.csv", "--budget", "0"], root);
    assert_eq!(out.status.code(), Some(1));
}
