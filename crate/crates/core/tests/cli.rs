//! End-to-end checks of the batch CLI: subcommand wiring, output files,
//! idempotence, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dataless_intent::manifest::file_sha256;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dataless-intent"))
}

fn example_data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples/data")
        .join(name)
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_ok(args: &[&str]) -> Output {
    let output = binary().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn classify_args<'a>(out_dir: &'a str, components: &'a str) -> Vec<String> {
    [
        "classify",
        "--schema",
        example_data("snips_schema.jsonl").to_str().unwrap(),
        "--dataset",
        example_data("snips_dataset.jsonl").to_str().unwrap(),
        "--conllu",
        example_data("snips_utterances.conllu").to_str().unwrap(),
        "--paraphrases",
        example_data("snips_paraphrases.jsonl").to_str().unwrap(),
        "--provider",
        "test",
        "--dim",
        "64",
        "--seed",
        "7",
        "--components",
        components,
        "--out-dir",
        out_dir,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn classify_twice_produces_identical_digests() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let args: Vec<String> = classify_args(dir.path().to_str().unwrap(), "EPMO");
        let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        run_ok(&args);
    }
    let a = file_sha256(&dir_a.path().join("predictions.jsonl")).unwrap();
    let b = file_sha256(&dir_b.path().join("predictions.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn evaluate_scores_the_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("schema.jsonl");
    std::fs::write(
        &schema,
        concat!(
            "{\"label\": \"A\", \"description\": \"user wants a\", \"entities\": []}\n",
            "{\"label\": \"B\", \"description\": \"user wants b\", \"entities\": []}\n",
            "{\"label\": \"C\", \"description\": \"user wants c\", \"entities\": []}\n",
        ),
    )
    .unwrap();
    let predictions = dir.path().join("predictions.jsonl");
    let rows = [
        ("1", "A", "A", 1),
        ("2", "A", "B", 2),
        ("3", "B", "B", 1),
        ("4", "B", "B", 1),
        ("5", "C", "C", 1),
        ("6", "C", "A", 3),
    ];
    let body: String = rows
        .iter()
        .map(|(id, gold, predicted, rank)| {
            format!(
                "{{\"id\": \"{id}\", \"gold\": \"{gold}\", \"predicted\": \"{predicted}\", \"rank_of_gold\": {rank}, \"gated_mask\": false}}\n"
            )
        })
        .collect();
    std::fs::write(&predictions, body).unwrap();

    let output = run_ok(&[
        "evaluate",
        "--schema",
        schema.to_str().unwrap(),
        "--predictions",
        predictions.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("accuracy 0.6667"), "stdout: {stdout}");
    assert!(stdout.contains("macro-F1 0.6556"), "stdout: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("evaluation.json")).unwrap())
            .unwrap();
    assert!((report["macro_f1"].as_f64().unwrap() - 0.6556).abs() < 1e-4);
}

#[test]
fn ablate_emits_exactly_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "ablate",
        "--schema",
        example_data("snips_schema.jsonl").to_str().unwrap(),
        "--dataset",
        example_data("snips_dataset.jsonl").to_str().unwrap(),
        "--conllu",
        example_data("snips_utterances.conllu").to_str().unwrap(),
        "--paraphrases",
        example_data("snips_paraphrases.jsonl").to_str().unwrap(),
        "--provider",
        "test",
        "--dim",
        "64",
        "--seed",
        "7",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "setup,E,P,M,O,dataset,accuracy,macro_f1,mean"
    );
    assert_eq!(lines.count(), 10);

    // One fixture utterance has no maskable relation, so the mask-only
    // row degrades to the zero vector and is recorded as a failure with
    // empty score fields. Every other row parses back and satisfies
    // mean = (accuracy + macro) / 2 at the printed precision.
    let mut scored_rows = 0;
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 9);
        if fields[0] == "M" {
            assert_eq!(&fields[6..9], &["", "", ""], "mask-only row should fail");
            continue;
        }
        let accuracy: f64 = fields[6].parse().unwrap();
        let macro_f1: f64 = fields[7].parse().unwrap();
        let mean: f64 = fields[8].parse().unwrap();
        assert!((mean - (accuracy + macro_f1) / 2.0).abs() <= 0.01);
        scored_rows += 1;
    }
    assert_eq!(scored_rows, 9);

    let markdown = std::fs::read_to_string(dir.path().join("ablation.md")).unwrap();
    assert_eq!(markdown.lines().filter(|l| l.contains('|')).count(), 12);
    assert!(markdown.contains("n/a"));
    assert!(!dir.path().join("predictions_M.jsonl").exists());
    assert!(dir.path().join("predictions_EPMO.jsonl").exists());
}

#[test]
fn mask_subcommand_matches_expected_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_ok(&[
        "mask",
        "--conllu",
        fixture("masking_50.conllu").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("masked 40/50"), "stdout: {stdout}");
    assert!(stdout.contains("coverage 0.8000"), "stdout: {stdout}");

    let got = std::fs::read_to_string(dir.path().join("masked.jsonl")).unwrap();
    let expected = std::fs::read_to_string(fixture("masking_50_expected.jsonl")).unwrap();
    let parse = |body: &str| -> Vec<(String, Option<String>, bool)> {
        let mut rows: Vec<(String, Option<String>, bool)> = body
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                (
                    v["id"].as_str().unwrap().to_string(),
                    v["masked"].as_str().map(str::to_string),
                    v["was_masked"].as_bool().unwrap(),
                )
            })
            .collect();
        rows.sort();
        rows
    };
    assert_eq!(parse(&got), parse(&expected));
}

#[test]
fn validate_reports_description_stats() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_ok(&[
        "validate",
        "--schema",
        example_data("snips_schema.jsonl").to_str().unwrap(),
        "--dataset",
        example_data("snips_dataset.jsonl").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mean added tokens"), "stdout: {stdout}");
    assert!(stdout.contains("dataset: 21 utterances"), "stdout: {stdout}");
    assert!(dir.path().join("validation.json").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn stats_subcommand_reports_similarity_and_topk() {
    let dir = tempfile::tempdir().unwrap();
    let classify: Vec<String> = classify_args(dir.path().to_str().unwrap(), "E");
    let classify: Vec<&str> = classify.iter().map(|s| s.as_str()).collect();
    run_ok(&classify);

    let output = run_ok(&[
        "stats",
        "--schema",
        example_data("snips_schema.jsonl").to_str().unwrap(),
        "--dataset",
        example_data("snips_dataset.jsonl").to_str().unwrap(),
        "--provider",
        "test",
        "--dim",
        "64",
        "--seed",
        "7",
        "--predictions",
        dir.path().join("predictions.jsonl").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("s_in"), "stdout: {stdout}");
    assert!(stdout.contains("top-1"), "stdout: {stdout}");
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stats.json")).unwrap())
            .unwrap();
    assert!(stats["similarity"]["s_in"].is_number());
    assert_eq!(stats["similarity"]["approximate"], false);
}

#[test]
fn embed_then_offline_classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.jsonl");
    run_ok(&[
        "embed",
        "--schema",
        example_data("snips_schema.jsonl").to_str().unwrap(),
        "--dataset",
        example_data("snips_dataset.jsonl").to_str().unwrap(),
        "--conllu",
        example_data("snips_utterances.conllu").to_str().unwrap(),
        "--paraphrases",
        example_data("snips_paraphrases.jsonl").to_str().unwrap(),
        "--provider",
        "test",
        "--dim",
        "64",
        "--seed",
        "7",
        "--embed-cache",
        cache.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(cache.exists());

    // Fully offline classify against the populated cache; the model id
    // is the one the test embedder derives from its parameters.
    let offline_dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "classify",
        "--schema",
        example_data("snips_schema.jsonl").to_str().unwrap(),
        "--dataset",
        example_data("snips_dataset.jsonl").to_str().unwrap(),
        "--conllu",
        example_data("snips_utterances.conllu").to_str().unwrap(),
        "--paraphrases",
        example_data("snips_paraphrases.jsonl").to_str().unwrap(),
        "--provider",
        "file",
        "--model",
        "hashed-bow-d64-s7",
        "--embed-cache",
        cache.to_str().unwrap(),
        "--components",
        "EPMO",
        "--out-dir",
        offline_dir.path().to_str().unwrap(),
    ]);

    // The offline run matches a live test-provider run byte for byte.
    let live_dir = tempfile::tempdir().unwrap();
    let live: Vec<String> = classify_args(live_dir.path().to_str().unwrap(), "EPMO");
    let live: Vec<&str> = live.iter().map(|s| s.as_str()).collect();
    run_ok(&live);
    assert_eq!(
        file_sha256(&offline_dir.path().join("predictions.jsonl")).unwrap(),
        file_sha256(&live_dir.path().join("predictions.jsonl")).unwrap()
    );
}

#[test]
fn exit_codes_classify_errors() {
    // Unknown label in the dataset: input error, exit 1.
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("schema.jsonl");
    std::fs::write(
        &schema,
        concat!(
            "{\"label\": \"A\", \"description\": \"user wants a\", \"entities\": []}\n",
            "{\"label\": \"B\", \"description\": \"user wants b\", \"entities\": []}\n",
        ),
    )
    .unwrap();
    let dataset = dir.path().join("dataset.jsonl");
    std::fs::write(
        &dataset,
        "{\"id\": \"x\", \"text\": \"hello\", \"label\": \"Missing\"}\n",
    )
    .unwrap();
    let output = binary()
        .args([
            "classify",
            "--schema",
            schema.to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--provider",
            "test",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("Missing"), "stderr: {stderr}");

    // Missing cache entries without a live provider: also an input error.
    let output = binary()
        .args([
            "classify",
            "--schema",
            example_data("snips_schema.jsonl").to_str().unwrap(),
            "--dataset",
            example_data("snips_dataset.jsonl").to_str().unwrap(),
            "--provider",
            "file",
            "--model",
            "nonexistent-model",
            "--embed-cache",
            dir.path().join("empty-cache.jsonl").to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));

    // Unreachable HTTP endpoint: provider error, exit 2.
    let output = binary()
        .args([
            "embed",
            "--schema",
            example_data("snips_schema.jsonl").to_str().unwrap(),
            "--dataset",
            example_data("snips_dataset.jsonl").to_str().unwrap(),
            "--provider",
            "http",
            "--endpoint",
            "http://127.0.0.1:9",
            "--model",
            "some-model",
            "--max-retries",
            "0",
            "--timeout-secs",
            "1",
            "--embed-cache",
            dir.path().join("http-cache.jsonl").to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn inputs_are_never_mutated() {
    let dir = tempfile::tempdir().unwrap();
    let before: Vec<String> = [
        "snips_schema.jsonl",
        "snips_dataset.jsonl",
        "snips_utterances.conllu",
        "snips_paraphrases.jsonl",
    ]
    .iter()
    .map(|n| file_sha256(&example_data(n)).unwrap())
    .collect();
    let args: Vec<String> = classify_args(dir.path().to_str().unwrap(), "EPMO");
    let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    run_ok(&args);
    let after: Vec<String> = [
        "snips_schema.jsonl",
        "snips_dataset.jsonl",
        "snips_utterances.conllu",
        "snips_paraphrases.jsonl",
    ]
    .iter()
    .map(|n| file_sha256(&example_data(n)).unwrap())
    .collect();
    assert_eq!(before, after);
}
