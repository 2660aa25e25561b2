//! End-to-end tests driving the compiled binary: command output, file
//! artifacts, exit codes, and byte reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use unlearn_core::neighborset::{QAPair, SetKind};
use unlearn_lab::clients::{FixtureStore, FIXTURES_ENV};
use unlearn_lab::evallog::EvalRecord;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unlearn-lab"))
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let output = bin().args(args).current_dir(dir).output().expect("spawn binary");
    assert!(
        output.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn qa(id: &str, entity: &str, question: &str, answer: &str, kind: SetKind) -> QAPair {
    QAPair {
        id: id.to_string(),
        entity: entity.to_string(),
        question: question.to_string(),
        answer: answer.to_string(),
        aliases: Vec::new(),
        set_kind: kind,
        cluster_id: None,
        category: None,
        paraphrase_of: None,
    }
}

fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).unwrap());
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

fn forget_set() -> Vec<QAPair> {
    vec![
        qa("f0", "Ada Lovelace", "When was Ada Lovelace born?", "1815", SetKind::Forget),
        qa("f1", "Alan Turing", "When was Alan Turing born?", "1912", SetKind::Forget),
        qa("f2", "Grace Hopper", "When was Grace Hopper born?", "1906", SetKind::Forget),
    ]
}

#[test]
fn sim_prints_the_normalized_similarity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(
        &["sim", "--a", "When was {X} born?", "--b", "When was {X} born?"],
        dir.path(),
    );
    assert_eq!(stdout_of(&out).trim(), "1.0000");

    let out = run_ok(&["sim", "--a", "abc", "--b", "abd"], dir.path());
    assert_eq!(stdout_of(&out).trim(), "0.6667");
}

#[test]
fn rud_prints_the_percent_drop() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&["rud", "--before", "0.770", "--after", "0.375"], dir.path());
    assert_eq!(stdout_of(&out).trim(), "-51.30");

    let out = run_ok(&["rud", "--before", "0.712", "--after", "0.411"], dir.path());
    assert_eq!(stdout_of(&out).trim(), "-42.28");

    let out = run_ok(&["rud", "--before", "0.5", "--after", "0.5"], dir.path());
    assert_eq!(stdout_of(&out).trim(), "0.00");
}

#[test]
fn rud_rejects_zero_baseline_with_domain_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["rud", "--before", "0", "--after", "0.5"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flags_exit_with_usage_code() {
    let out = bin().args(["sim", "--nope", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_with_usage_code_and_lists_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "sede = 1\n[thresholds]\ntheta_hgih = 0.9\n").unwrap();
    let out = bin()
        .args(["--config", config.to_str().unwrap(), "sim", "--a", "x", "--b", "x"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sede"), "{stderr}");
    assert!(stderr.contains("theta_hgih"), "{stderr}");
}

#[test]
fn mask_text_uses_the_rule_masker() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(
        &["mask", "--text", "When was J. K. Rowling born?"],
        dir.path(),
    );
    assert_eq!(stdout_of(&out).trim(), "When was {X} born?");
}

#[test]
fn mask_dataset_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    write_jsonl(&dir.path().join("forget.jsonl"), &forget_set());
    run_ok(
        &["mask", "--input", "forget.jsonl", "--output", "masked.jsonl"],
        dir.path(),
    );
    let lines: Vec<String> = fs::read_to_string(dir.path().join("masked.jsonl"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("When was {X} born?"));
}

#[test]
fn cluster_then_synset_then_validate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write_jsonl(&dir.path().join("forget.jsonl"), &forget_set());
    write_jsonl(
        &dir.path().join("domain.jsonl"),
        &[qa(
            "d0",
            "Mary Shelley",
            "Summarize the major public controversies surrounding Mary Shelley throughout an eventful recent history.",
            "none",
            SetKind::DomainNeighbor,
        )],
    );
    fs::write(
        dir.path().join("candidates.txt"),
        "Nelson Mandela\nMarie Curie\nKatherine Johnson\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("answers.json"),
        serde_json::json!([
            {"template": "When was {X} born?", "entity": "Nelson Mandela", "answer": "July 18, 1918"},
            {"template": "When was {X} born?", "entity": "Marie Curie", "answer": "November 7, 1867"},
            {"template": "When was {X} born?", "entity": "Katherine Johnson", "answer": "August 26, 1918"},
        ])
        .to_string(),
    )
    .unwrap();

    let out = run_ok(
        &["cluster", "--input", "forget.jsonl", "--output", "clusters.json"],
        dir.path(),
    );
    assert!(stdout_of(&out).contains("1 clusters"));
    let clusters: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("clusters.json")).unwrap())
            .unwrap();
    assert_eq!(clusters.as_array().unwrap().len(), 1);
    assert_eq!(clusters[0]["template"]["masked"], "When was {X} born?");

    let synset = [
        "build-synset",
        "--forget",
        "forget.jsonl",
        "--candidates",
        "candidates.txt",
        "--neighbors",
        "domain.jsonl",
        "--answers",
        "answers.json",
        "--output",
        "synset.jsonl",
    ];
    run_ok(&synset, dir.path());
    let pairs: Vec<QAPair> = fs::read_to_string(dir.path().join("synset.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(pairs.len(), 3);
    assert!(pairs.iter().all(|p| p.set_kind == SetKind::SynSimilarNeighbor));
    assert!(pairs.iter().all(|p| p.cluster_id == Some(0)));
    assert!(pairs.iter().any(|p| p.question == "When was Nelson Mandela born?"));

    // byte reproducibility: re-running produces identical output
    let first = fs::read(dir.path().join("synset.jsonl")).unwrap();
    run_ok(&synset, dir.path());
    let second = fs::read(dir.path().join("synset.jsonl")).unwrap();
    assert_eq!(first, second);

    run_ok(
        &[
            "validate-sets",
            "--forget",
            "forget.jsonl",
            "--neighbors",
            "domain.jsonl",
            "--output",
            "report.json",
        ],
        dir.path(),
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["checked_pairs"], 3);
}

#[test]
fn build_synset_probe_filters_through_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    write_jsonl(&dir.path().join("forget.jsonl"), &forget_set());
    fs::write(dir.path().join("candidates.txt"), "Nelson Mandela\nMarie Curie\n").unwrap();
    fs::write(
        dir.path().join("answers.json"),
        serde_json::json!([
            {"template": "When was {X} born?", "entity": "Nelson Mandela", "answer": "July 18, 1918"},
            {"template": "When was {X} born?", "entity": "Marie Curie", "answer": "November 7, 1867"},
        ])
        .to_string(),
    )
    .unwrap();

    // the probe model recalls Mandela but not Curie
    let fixtures = dir.path().join("fixtures");
    let store = FixtureStore::open(&fixtures);
    store
        .record(
            "generate",
            &serde_json::json!({"prompt": "When was Nelson Mandela born?", "max_tokens": 64}),
            &serde_json::json!({"text": "July 18, 1918"}),
        )
        .unwrap();
    store
        .record(
            "generate",
            &serde_json::json!({"prompt": "When was Marie Curie born?", "max_tokens": 64}),
            &serde_json::json!({"text": "I am not sure."}),
        )
        .unwrap();

    let out = run_ok(
        &[
            "build-synset",
            "--forget",
            "forget.jsonl",
            "--candidates",
            "candidates.txt",
            "--answers",
            "answers.json",
            "--output",
            "synset.jsonl",
            "--pairs-per-cluster",
            "2",
            "--probe",
            "port",
            "--fixtures",
            "fixtures",
        ],
        dir.path(),
    );
    assert!(stdout_of(&out).contains("probe kept 1 and dropped 1"));
    let pairs: Vec<QAPair> = fs::read_to_string(dir.path().join("synset.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].entity, "Nelson Mandela");
}

#[test]
fn mask_via_llm_fixtures_and_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    let store = FixtureStore::open(&fixtures);

    // record the masking round trip for the strict-replay port
    let input = serde_json::to_string(&vec![serde_json::json!({"question": "Who wrote It?"})])
        .unwrap();
    let prompt = unlearn_lab::clients::MASKING_PROMPT.replace("{Input}", &input);
    store
        .record(
            "generate",
            &serde_json::json!({"prompt": prompt, "max_tokens": 256}),
            &serde_json::json!({"text": "[{\"question\": \"Who wrote It?\", \"masked_question\": \"Who wrote {X}?\"}]"}),
        )
        .unwrap();

    let out = bin()
        .args(["mask", "--text", "Who wrote It?", "--masker", "llm"])
        .env(FIXTURES_ENV, fixtures.to_str().unwrap())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "Who wrote {X}?");

    // strict replay: an unrecorded question is a hard error
    let out = bin()
        .args(["mask", "--text", "Who wrote Dracula?", "--masker", "llm"])
        .env(FIXTURES_ENV, fixtures.to_str().unwrap())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no recorded fixture"));
}

#[test]
fn evaluate_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = vec![
        qa("f0", "A", "q f0", "alpha beta", SetKind::Forget),
        qa("s0", "B", "q s0", "gamma", SetKind::SynSimilarNeighbor),
        qa("d0", "C", "q d0", "delta", SetKind::DomainNeighbor),
    ];
    write_jsonl(&dir.path().join("dataset.jsonl"), &dataset);

    let log = |id: &str, tag: &str, generation: &str, prob: f64, emb: Vec<f64>, entail: bool| {
        EvalRecord {
            id: id.to_string(),
            model_tag: tag.to_string(),
            generation: generation.to_string(),
            token_probs: vec![prob, prob],
            embedding: Some(emb),
            nli_label: Some(if entail {
                unlearn_core::ports::NliLabel::Entailment
            } else {
                unlearn_core::ports::NliLabel::Contradiction
            }),
        }
    };
    write_jsonl(
        &dir.path().join("before.jsonl"),
        &[
            log("f0", "orig", "alpha beta", 0.9, vec![1.0, 0.0], true),
            log("s0", "orig", "gamma", 0.85, vec![1.0, 0.0], true),
            log("d0", "orig", "delta", 0.8, vec![1.0, 0.0], true),
        ],
    );
    write_jsonl(
        &dir.path().join("after.jsonl"),
        &[
            log("f0", "unlearned", "no idea", 0.1, vec![0.0, 1.0], false),
            log("s0", "unlearned", "gamma maybe", 0.4, vec![0.8, 0.2], true),
            log("d0", "unlearned", "delta", 0.75, vec![1.0, 0.0], true),
        ],
    );

    let out = run_ok(
        &[
            "evaluate",
            "--dataset",
            "dataset.jsonl",
            "--before",
            "before.jsonl",
            "--after",
            "after.jsonl",
            "--output",
            "report.json",
            "--csv",
            "report.csv",
        ],
        dir.path(),
    );
    let stdout = stdout_of(&out);
    assert!(stdout.contains("model_utility"), "{stdout}");
    assert!(stdout.contains("forget_efficacy"), "{stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert!(report["forget_efficacy"].as_f64().unwrap() > 0.5);
    assert!(report["rud"]["syn_similar_neighbor"].as_f64().unwrap() < 0.0);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("set_kind,count,"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn toy_run_writes_all_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "toy-run",
        "--method",
        "GA",
        "--reg",
        "none",
        "--seed",
        "0",
        "--out-dir",
        "run",
        "--svg",
    ];
    let out = run_ok(&args, dir.path());
    let stdout = stdout_of(&out);
    assert!(stdout.contains("stopped in the efficacy band"), "{stdout}");

    for artifact in ["dataset.jsonl", "trace.jsonl", "trace.csv", "summary.json", "gradient_norms.svg"] {
        assert!(
            dir.path().join("run").join(artifact).exists(),
            "missing {artifact}"
        );
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/summary.json")).unwrap())
            .unwrap();
    let rud_syn = summary["rud"]["syn_similar_neighbor"].as_f64().unwrap();
    let rud_dom = summary["rud"]["domain_neighbor"].as_f64().unwrap();
    assert!(rud_syn < rud_dom, "syn {rud_syn} vs dom {rud_dom}");
    let fe = summary["forget_efficacy"].as_f64().unwrap();
    assert!((0.65..=0.75).contains(&fe));

    let first = fs::read(dir.path().join("run/trace.jsonl")).unwrap();
    run_ok(&args, dir.path());
    let second = fs::read(dir.path().join("run/trace.jsonl")).unwrap();
    assert_eq!(first, second, "same seed must reproduce the trace byte-for-byte");
}

#[test]
fn report_command_rebuilds_artifacts_from_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &["toy-run", "--method", "IDK", "--out-dir", "run"],
        dir.path(),
    );
    run_ok(
        &["report", "--trace", "run/trace.jsonl", "--out-dir", "rebuilt"],
        dir.path(),
    );
    assert!(dir.path().join("rebuilt/trace.csv").exists());
    let svg = fs::read_to_string(dir.path().join("rebuilt/gradient_norms.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn workdir_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("space");
    fs::create_dir_all(&sub).unwrap();
    write_jsonl(&sub.join("forget.jsonl"), &forget_set());
    run_ok(
        &[
            "--workdir",
            "space",
            "mask",
            "--input",
            "forget.jsonl",
            "--output",
            "masked.jsonl",
        ],
        dir.path(),
    );
    assert!(sub.join("masked.jsonl").exists());
}
