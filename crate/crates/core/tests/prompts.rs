use std::fs;
use std::path::PathBuf;

use sea_core::corpus::{ingest, VenueProfiles};
use sea_core::format_contract::Section;
use sea_core::prompt_kit::{
    build_evaluate_sft, build_standardize_sft, sample_for_distillation, DistillationItem, EvaluationItem, PromptKit,
    TRUNCATION_MARKER,
};
use sea_core::PaperRecord;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn records() -> Vec<PaperRecord> {
    let profiles = VenueProfiles::builtin();
    ingest(&fixtures().join("three_papers.jsonl"), profiles.get("iclr-24").unwrap())
        .unwrap()
        .records
}

/// Compares against a checked-in file; `SEA_BLESS=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = fixtures().join(name);
    if std::env::var_os("SEA_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "{name} drifted");
}

#[test]
fn standardize_prompt_golden() {
    let records = records();
    let prompt = PromptKit::builtin()
        .render_standardize(&records[0].reviews[..2])
        .unwrap();
    check_golden("standardize_prompt.golden.txt", &prompt);
}

#[test]
fn evaluate_prompt_golden_and_truncation() {
    let kit = PromptKit::builtin();
    let body = &records()[1].body;
    let prompt = kit.render_evaluate(body).unwrap();
    assert!(prompt.truncated.is_none());
    check_golden("evaluate_prompt.golden.txt", &prompt.text);

    let budget = body.split_whitespace().count() - 1;
    let cut = kit.clone().with_context_budget(budget).render_evaluate(body).unwrap();
    assert!(cut.text.contains(TRUNCATION_MARKER));
    let fits = kit.with_context_budget(budget + 1).render_evaluate(body).unwrap();
    assert!(!fits.text.contains(TRUNCATION_MARKER));
}

#[test]
fn sft_builders_reject_invalid_teacher_output() {
    let kit = PromptKit::builtin();
    let records = records();
    let golden = fs::read_to_string(fixtures().join("golden_standardized.txt")).unwrap();
    let broken = golden.replace("**Questions:**", "Questions:");
    let items: Vec<DistillationItem> = records
        .iter()
        .zip([&golden, &broken, &golden])
        .map(|(record, out)| DistillationItem {
            record,
            teacher_output: out,
        })
        .collect();
    let built = build_standardize_sft(&kit, &items);
    assert_eq!(built.triplets.len(), 2);
    assert_eq!(built.rejections.len(), 1);
    assert_eq!(built.rejections[0].paper_id, records[1].paper_id);
    assert_eq!(built.rejections[0].missing_sections, vec![Section::Questions]);
    assert!(built
        .triplets
        .iter()
        .all(|t| t.instruction == built.triplets[0].instruction));

    let eval_items: Vec<EvaluationItem> = records
        .iter()
        .map(|r| EvaluationItem {
            paper_id: &r.paper_id,
            paper_body: &r.body,
            standardized_review: &golden,
        })
        .collect();
    let eval = build_evaluate_sft(&kit, &eval_items);
    assert_eq!(eval.triplets.len(), 3);
    assert!(eval.rejections.is_empty());
}

#[test]
fn distillation_fraction() {
    let ids: Vec<String> = (0..100).map(|i| format!("p{i}")).collect();
    let picked = sample_for_distillation(&ids, 0.2, 5).unwrap();
    assert_eq!(picked.len(), 20);
    assert_eq!(picked, sample_for_distillation(&ids, 0.2, 5).unwrap());
    assert_eq!(sample_for_distillation(&ids[..2], 0.2, 5).unwrap().len(), 1);
}
