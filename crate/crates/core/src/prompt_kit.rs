//! Instruction templates, prompt rendering, and SFT dataset assembly.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::corpus::{PaperRecord, RawReview};
use crate::format_contract::{self, ScoreAspect, Section};
use crate::text::truncate_head;

/// Paper bodies longer than this many whitespace tokens are cut.
pub const DEFAULT_CONTEXT_BUDGET: usize = 24_000;

pub const TRUNCATION_MARKER: &str = "\n\n[... remainder of the paper truncated ...]";

const STANDARDIZE: &str = include_str!("../templates/standardize.txt");
const EVALUATE: &str = include_str!("../templates/evaluate.txt");
const SELF_CORRECT: &str = include_str!("../templates/self_correct.txt");

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap());

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template `{template}` needs a value for `{{{{{name}}}}}`")]
    Unbound { template: TemplateId, name: String },
    #[error("template `{template}` is missing its `{{{{{name}}}}}` placeholder")]
    MissingPlaceholder { template: TemplateId, name: &'static str },
    #[error("no reviews to render")]
    NoReviews,
    #[error("paper body is empty")]
    EmptyBody,
    #[error("mismatch score must be finite, got {0}")]
    NonFiniteScore(f64),
    #[error("fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Standardize,
    Evaluate,
    SelfCorrect,
}

impl TemplateId {
    fn file_name(self) -> &'static str {
        match self {
            TemplateId::Standardize => "standardize.txt",
            TemplateId::Evaluate => "evaluate.txt",
            TemplateId::SelfCorrect => "self_correct.txt",
        }
    }

    /// The placeholder each template must expose.
    fn input_placeholder(self) -> &'static str {
        match self {
            TemplateId::Standardize => "reviews",
            TemplateId::Evaluate => "paper_content",
            TemplateId::SelfCorrect => "score",
        }
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TemplateId::Standardize => "standardize",
            TemplateId::Evaluate => "evaluate",
            TemplateId::SelfCorrect => "self_correct",
        })
    }
}

/// Plain text with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl InstructionTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Result<Self, PromptError> {
        let template = InstructionTemplate { id, body: body.into() };
        let name = id.input_placeholder();
        if !template.placeholders().contains(name) {
            return Err(PromptError::MissingPlaceholder { template: id, name });
        }
        Ok(template)
    }

    pub fn placeholders(&self) -> HashSet<&str> {
        PLACEHOLDER
            .captures_iter(&self.body)
            .map(|c| c.get(1).map_or("", |m| m.as_str()))
            .collect()
    }

    /// Substitutes every placeholder in one pass; bound values are never
    /// re-scanned, so text containing `{{...}}` is inserted literally.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        for name in self.placeholders() {
            if !bindings.iter().any(|(k, _)| *k == name) {
                return Err(PromptError::Unbound {
                    template: self.id,
                    name: name.to_string(),
                });
            }
        }
        Ok(PLACEHOLDER
            .replace_all(&self.body, |caps: &Captures| {
                let name = &caps[1];
                bindings
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| v.to_string())
                    .unwrap_or_default()
            })
            .into_owned())
    }

    /// The instruction alone: every placeholder bound to the empty string.
    pub fn instruction(&self) -> String {
        PLACEHOLDER.replace_all(&self.body, "").trim_end().to_string()
    }
}

/// A rendered evaluation prompt and whether the paper body was cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub truncated: Option<TruncationNote>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationNote {
    pub kept_tokens: usize,
    pub total_tokens: usize,
}

#[derive(Debug, Clone)]
pub struct PromptKit {
    pub standardize: InstructionTemplate,
    pub evaluate: InstructionTemplate,
    pub self_correct: InstructionTemplate,
    pub context_budget: usize,
}

impl Default for PromptKit {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptKit {
    pub fn builtin() -> Self {
        PromptKit {
            standardize: InstructionTemplate::new(TemplateId::Standardize, STANDARDIZE).expect("builtin template"),
            evaluate: InstructionTemplate::new(TemplateId::Evaluate, EVALUATE).expect("builtin template"),
            self_correct: InstructionTemplate::new(TemplateId::SelfCorrect, SELF_CORRECT).expect("builtin template"),
            context_budget: DEFAULT_CONTEXT_BUDGET,
        }
    }

    /// Builtin templates, each replaced by `<dir>/<name>.txt` when that file exists.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut kit = Self::builtin();
        for slot in [&mut kit.standardize, &mut kit.evaluate, &mut kit.self_correct] {
            let path = dir.join(slot.id.file_name());
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|source| PromptError::Io { path, source })?;
                *slot = InstructionTemplate::new(slot.id, body)?;
            }
        }
        Ok(kit)
    }

    pub fn with_context_budget(mut self, budget: usize) -> Self {
        self.context_budget = budget;
        self
    }

    pub fn render_standardize(&self, reviews: &[RawReview]) -> Result<String, PromptError> {
        let block = serialize_reviews(reviews)?;
        self.standardize.render(&[("reviews", &block)])
    }

    /// Like [`Self::render_standardize`], adding the area chair's decision and
    /// meta-review after the reviews when the record carries them.
    pub fn render_standardize_record(&self, record: &PaperRecord) -> Result<String, PromptError> {
        let block = serialize_record_reviews(record)?;
        self.standardize.render(&[("reviews", &block)])
    }

    pub fn render_evaluate(&self, paper_body: &str) -> Result<RenderedPrompt, PromptError> {
        if paper_body.trim().is_empty() {
            return Err(PromptError::EmptyBody);
        }
        let cut = truncate_head(paper_body, self.context_budget);
        let (content, truncated) = if cut.was_truncated() {
            log::warn!(
                "paper body truncated from {} to {} tokens",
                cut.total_tokens,
                cut.kept_tokens
            );
            (
                format!("{}{}", cut.text, TRUNCATION_MARKER),
                Some(TruncationNote {
                    kept_tokens: cut.kept_tokens,
                    total_tokens: cut.total_tokens,
                }),
            )
        } else {
            (paper_body.to_string(), None)
        };
        let text = self.evaluate.render(&[("paper_content", &content)])?;
        Ok(RenderedPrompt { text, truncated })
    }

    /// Evaluation prompt followed by the correction paragraph carrying the
    /// previous review's mismatch score (two decimals).
    pub fn render_self_correct(&self, paper_body: &str, prev_score: f64) -> Result<RenderedPrompt, PromptError> {
        if !prev_score.is_finite() {
            return Err(PromptError::NonFiniteScore(prev_score));
        }
        let mut rendered = self.render_evaluate(paper_body)?;
        let paragraph = self.self_correct.render(&[("score", &format_score(prev_score))])?;
        rendered.text.push_str(&paragraph);
        Ok(rendered)
    }
}

/// Two-decimal rendering without a negative zero.
pub fn format_score(score: f64) -> String {
    let rounded = (score * 100.0).round() / 100.0;
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded:.2}")
}

fn write_review(out: &mut String, index: usize, review: &RawReview) {
    out.push_str(&format!("Reviewer {index}:\n"));
    for (section, text) in &review.sections {
        out.push_str(&format!("{}: {}\n", section.title(), text.trim()));
    }
    for (aspect, value) in [
        (ScoreAspect::Soundness, review.soundness),
        (ScoreAspect::Presentation, review.presentation),
        (ScoreAspect::Contribution, review.contribution),
    ] {
        if let Some(v) = value {
            out.push_str(&format!("{}: {v}\n", aspect.section().title()));
        }
    }
    out.push_str(&format!("Rating: {}\n", review.rating));
    out.push_str(&format!("Confidence: {}\n", review.confidence));
}

/// Numbered, section-labeled review block in input order.
pub fn serialize_reviews(reviews: &[RawReview]) -> Result<String, PromptError> {
    if reviews.is_empty() {
        return Err(PromptError::NoReviews);
    }
    let mut out = String::new();
    for (i, review) in reviews.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_review(&mut out, i + 1, review);
    }
    Ok(out.trim_end().to_string())
}

pub fn serialize_record_reviews(record: &PaperRecord) -> Result<String, PromptError> {
    let mut out = serialize_reviews(&record.reviews)?;
    if let Some(decision) = record.decision {
        out.push_str(&format!("\n\nDecision: {decision}"));
    }
    if let Some(meta) = &record.meta_review {
        out.push_str(&format!("\nMeta-review: {}", meta.trim()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftTriplet {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub paper_id: String,
    pub missing_sections: Vec<Section>,
    pub malformed_scores: Vec<ScoreAspect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SftBuild {
    pub triplets: Vec<SftTriplet>,
    pub rejections: Vec<Rejection>,
}

fn admit(build: &mut SftBuild, paper_id: &str, instruction: &str, input: String, output: &str) {
    if input.trim().is_empty() {
        build.rejections.push(Rejection {
            paper_id: paper_id.to_string(),
            missing_sections: Vec::new(),
            malformed_scores: Vec::new(),
            note: Some("empty input".to_string()),
        });
        return;
    }
    let report = format_contract::validate(output);
    if report.is_valid {
        build.triplets.push(SftTriplet {
            instruction: instruction.to_string(),
            input,
            output: output.to_string(),
        });
    } else {
        build.rejections.push(Rejection {
            paper_id: paper_id.to_string(),
            missing_sections: report.missing_sections,
            malformed_scores: report.malformed_scores,
            note: None,
        });
    }
}

/// A sampled paper with the teacher model's consolidated review.
#[derive(Debug, Clone, Copy)]
pub struct DistillationItem<'a> {
    pub record: &'a PaperRecord,
    pub teacher_output: &'a str,
}

/// Standardization dataset: instruction = standardize instruction, input =
/// the paper's serialized reviews, output = the teacher review. Teacher
/// outputs that fail the format contract are rejected, not repaired.
pub fn build_standardize_sft(kit: &PromptKit, items: &[DistillationItem<'_>]) -> SftBuild {
    let instruction = kit.standardize.instruction();
    let mut build = SftBuild::default();
    for item in items {
        let input = serialize_record_reviews(item.record).unwrap_or_default();
        admit(
            &mut build,
            &item.record.paper_id,
            &instruction,
            input,
            item.teacher_output,
        );
    }
    build
}

/// A paper paired with its standardized review.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationItem<'a> {
    pub paper_id: &'a str,
    pub paper_body: &'a str,
    pub standardized_review: &'a str,
}

/// Evaluation dataset: instruction = evaluate instruction, input = paper
/// body, output = standardized review.
pub fn build_evaluate_sft(kit: &PromptKit, items: &[EvaluationItem<'_>]) -> SftBuild {
    let instruction = kit.evaluate.instruction();
    let mut build = SftBuild::default();
    for item in items {
        admit(
            &mut build,
            item.paper_id,
            &instruction,
            item.paper_body.to_string(),
            item.standardized_review,
        );
    }
    build
}

/// Seeded sample of ⌈fraction · n⌉ ids, returned in input order.
pub fn sample_for_distillation(ids: &[String], fraction: f64, seed: u64) -> Result<Vec<String>, PromptError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PromptError::BadFraction(fraction));
    }
    // The epsilon keeps 0.2 * 100 = 20.000000000000004 from rounding up to 21.
    let count = ((fraction * ids.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen: Vec<usize> = order.into_iter().take(count.min(ids.len())).collect();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| ids[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::corpus::ReviewSection;

    fn review(id: &str, summary: &str, rating: u8) -> RawReview {
        RawReview {
            reviewer_id: id.into(),
            sections: BTreeMap::from([
                (ReviewSection::Summary, summary.into()),
                (ReviewSection::Weaknesses, "Needs more baselines.".into()),
            ]),
            rating,
            confidence: 4,
            soundness: Some(3),
            presentation: None,
            contribution: Some(2),
        }
    }

    #[test]
    fn standardize_orders_reviewers() {
        let kit = PromptKit::builtin();
        let reviews = vec![
            review("a", "first", 6),
            review("b", "second", 5),
            review("c", "third", 8),
        ];
        let prompt = kit.render_standardize(&reviews).unwrap();
        let p1 = prompt.find("Reviewer 1:").unwrap();
        let p2 = prompt.find("Reviewer 2:").unwrap();
        let p3 = prompt.find("Reviewer 3:").unwrap();
        assert!(p1 < p2 && p2 < p3);
        assert!(prompt[p1..p2].contains("first"));
        assert!(prompt.contains("Soundness: 3\n"));
        assert!(!prompt.contains("{{"));
    }

    #[test]
    fn standardize_single_and_empty() {
        let kit = PromptKit::builtin();
        let prompt = kit.render_standardize(&[review("a", "only", 4)]).unwrap();
        assert!(prompt.contains("Reviewer 1:") && !prompt.contains("Reviewer 2:"));
        assert!(matches!(kit.render_standardize(&[]), Err(PromptError::NoReviews)));
    }

    #[test]
    fn evaluate_substitution_length() {
        let kit = PromptKit::builtin();
        let body: String = (0..100).map(|i| format!("w{i} ")).collect();
        let prompt = kit.render_evaluate(&body).unwrap();
        let bare = kit.evaluate.render(&[("paper_content", "")]).unwrap();
        assert_eq!(prompt.text.len(), bare.len() + body.len());
        assert!(prompt.truncated.is_none());
    }

    #[test]
    fn evaluate_budget_boundary() {
        let kit = PromptKit::builtin().with_context_budget(50);
        let exact: String = vec!["tok"; 50].join(" ");
        let prompt = kit.render_evaluate(&exact).unwrap();
        assert!(!prompt.text.contains(TRUNCATION_MARKER));
        let over: String = vec!["tok"; 51].join(" ");
        let prompt = kit.render_evaluate(&over).unwrap();
        assert!(prompt.text.contains(TRUNCATION_MARKER));
        assert_eq!(
            prompt.truncated,
            Some(TruncationNote {
                kept_tokens: 50,
                total_tokens: 51
            })
        );
        assert!(matches!(kit.render_evaluate("  "), Err(PromptError::EmptyBody)));
    }

    #[test]
    fn self_correct_score_formatting() {
        let kit = PromptKit::builtin();
        let p = kit.render_self_correct("body", 0.73).unwrap();
        assert!(p.text.contains("mismatch score of 0.73"));
        let p = kit.render_self_correct("body", 0.0).unwrap();
        assert!(p.text.contains("mismatch score of 0.00"));
        let p = kit.render_self_correct("body", -0.001).unwrap();
        assert!(p.text.contains("mismatch score of 0.00"));
        let p = kit.render_self_correct("body", -1.256).unwrap();
        assert!(p.text.contains("mismatch score of -1.26"));
        assert!(kit.render_self_correct("body", f64::NAN).is_err());
        assert!(p.text.starts_with(&kit.render_evaluate("body").unwrap().text));
    }

    #[test]
    fn literal_braces_in_body_survive() {
        let kit = PromptKit::builtin();
        let p = kit.render_evaluate("We set {{score}} = $\\frac{1}{2}$").unwrap();
        assert!(p.text.ends_with("We set {{score}} = $\\frac{1}{2}$\n"));
    }

    #[test]
    fn template_needs_its_placeholder() {
        assert!(InstructionTemplate::new(TemplateId::Evaluate, "no slot").is_err());
        let t = InstructionTemplate::new(TemplateId::Evaluate, "{{paper_content}} {{extra}}").unwrap();
        assert!(matches!(
            t.render(&[("paper_content", "x")]),
            Err(PromptError::Unbound { .. })
        ));
    }

    #[test]
    fn instruction_drops_input_slot() {
        let kit = PromptKit::builtin();
        assert!(kit.evaluate.instruction().ends_with("The paper is as follows:"));
        assert!(kit.standardize.instruction().ends_with("- Reasons: reasons content"));
    }

    #[test]
    fn distillation_sample_sizes() {
        let ids: Vec<String> = (0..100).map(|i| format!("p{i}")).collect();
        let a = sample_for_distillation(&ids, 0.2, 11).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a, sample_for_distillation(&ids, 0.2, 11).unwrap());
        assert_ne!(a, sample_for_distillation(&ids, 0.2, 12).unwrap());
        assert_eq!(sample_for_distillation(&ids, 1.0, 1).unwrap(), ids);
        assert_eq!(sample_for_distillation(&ids[..2], 0.2, 1).unwrap().len(), 1);
        assert!(sample_for_distillation(&ids, 0.0, 1).is_err());
    }
}
