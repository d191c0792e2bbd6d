use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sea_core::corpus::{DatasetSplit, PaperRecord, RawReview, ReviewSection};
use sea_core::io::{read_json, read_jsonl, write_json, write_jsonl};
use sea_core::prompt_kit::SftTriplet;

fn sea(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sea"))
        .args(args)
        .env_remove("SEA_CONFIG")
        .env_remove("SEA_SEED")
        .env_remove("SEA_PARALLEL")
        .env_remove("SEA_ENDPOINT")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn review(i: usize, rating: u8) -> RawReview {
    RawReview {
        reviewer_id: format!("r{i}"),
        sections: BTreeMap::from([
            (ReviewSection::Summary, format!("The submission {i} studies a problem.")),
            (ReviewSection::Weaknesses, "The evaluation is thin.".to_string()),
        ]),
        rating,
        confidence: 3,
        soundness: None,
        presentation: None,
        contribution: None,
    }
}

/// `n` papers whose mean ratings cycle through 1..=10.
fn corpus(n: usize) -> Vec<PaperRecord> {
    (0..n)
        .map(|i| PaperRecord {
            paper_id: format!("p{i:03}"),
            venue: "test".into(),
            year: 2024,
            title: format!("Paper {i}"),
            body: format!("We present method number {i} and evaluate it on two benchmarks."),
            decision: None,
            meta_review: None,
            reviews: vec![review(0, (i % 10 + 1) as u8), review(1, (i % 10 + 1) as u8)],
        })
        .collect()
}

fn write_corpus(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("records.jsonl");
    write_jsonl(&path, &corpus(n)).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&sea(&["--help"])), 0);
    assert_eq!(code(&sea(&["--version"])), 0);
    assert_eq!(code(&sea(&["split", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&sea(&["no-such-command"])), 1);
    assert_eq!(code(&sea(&["split", "--ratio", "0.5"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("split.json");
    let missing = sea(&["split", "--records", "/nonexistent/records.jsonl", "--out", s(&out)]);
    assert_eq!(code(&missing), 1);
    let records = write_corpus(dir.path(), 10);
    assert_eq!(code(&sea(&["split", "--records", s(&records)])), 1, "missing --out");
    assert_eq!(
        code(&sea(&[
            "split",
            "--records",
            s(&records),
            "--ratio",
            "1.5",
            "--out",
            s(&out)
        ])),
        1
    );
}

#[test]
fn generation_without_endpoint_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let records = write_corpus(dir.path(), 3);
    let out = dir.path().join("gen.jsonl");
    let run = sea(&["generate", "--records", s(&records), "--out", s(&out)]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("endpoint"));
}

#[test]
fn unreachable_endpoint_is_a_pipeline_error() {
    let dir = tempfile::tempdir().unwrap();
    let records = write_corpus(dir.path(), 3);
    let config = dir.path().join("sea.conf");
    fs::write(
        &config,
        "endpoint = local\nendpoint.local.base_url = http://127.0.0.1:9\nendpoint.local.model = m\n\
         endpoint.local.retry_limit = 0\nendpoint.local.timeout = 2\n",
    )
    .unwrap();
    let out = dir.path().join("gen.jsonl");
    let run = sea(&[
        "--config",
        s(&config),
        "generate",
        "--records",
        s(&records),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 2, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(!out.exists());
}

#[test]
fn split_of_one_hundred_records_is_ninety_ten() {
    let dir = tempfile::tempdir().unwrap();
    let records = write_corpus(dir.path(), 100);
    let out = dir.path().join("split.json");
    assert_eq!(
        code(&sea(&[
            "--seed",
            "3",
            "split",
            "--records",
            s(&records),
            "--out",
            s(&out)
        ])),
        0
    );
    let split: DatasetSplit = read_json(&out).unwrap();
    assert_eq!((split.train_ids.len(), split.test_ids.len()), (90, 10));
    let again = dir.path().join("again.json");
    sea(&["--seed", "3", "split", "--records", s(&records), "--out", s(&again)]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn distillation_samples_a_fifth_of_the_train_papers() {
    let dir = tempfile::tempdir().unwrap();
    let records = write_corpus(dir.path(), 100);
    let split = dir.path().join("split.json");
    let ids: Vec<String> = corpus(100).into_iter().map(|r| r.paper_id).collect();
    write_json(
        &split,
        &DatasetSplit {
            seed: 0,
            ratio: 0.9,
            train_ids: ids,
            test_ids: Vec::new(),
        },
    )
    .unwrap();
    let out = dir.path().join("sft.jsonl");
    let run = sea(&[
        "--mock",
        "build-sft",
        "standardize",
        "--records",
        s(&records),
        "--split",
        s(&split),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let triplets: Vec<SftTriplet> = read_jsonl(&out).unwrap();
    assert_eq!(triplets.len(), 20);
    assert!(triplets.iter().all(|t| t.input.contains("Reviewer 1:")));
    let rejections = fs::read_to_string(dir.path().join("sft.jsonl.rejections.jsonl")).unwrap();
    assert!(rejections.trim().is_empty());
}
