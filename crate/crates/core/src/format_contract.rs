//! The nine-section review format shared by standardized and generated reviews.
//!
//! A conforming review carries nine bold headers at line start, in this order:
//!
//! ```text
//! **Summary:**
//! **Strengths:**
//! **Weaknesses:**
//! **Questions:**
//! **Soundness:**
//! **Presentation:**
//! **Contribution:**
//! **Rating:**
//! **Paper Decision:**
//! ```
//!
//! Score slots hold an integer followed by its criterion label (`3 good`,
//! `8 accept, good paper`). The decision block holds `- Decision: Accept` or
//! `- Decision: Reject` and a `- Reasons: ...` line. Matching is case-sensitive
//! on headers and anchored to the start of the line.

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::corpus::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    Summary,
    Strengths,
    Weaknesses,
    Questions,
    Soundness,
    Presentation,
    Contribution,
    Rating,
    PaperDecision,
}

impl Section {
    pub const ORDER: [Section; 9] = [
        Section::Summary,
        Section::Strengths,
        Section::Weaknesses,
        Section::Questions,
        Section::Soundness,
        Section::Presentation,
        Section::Contribution,
        Section::Rating,
        Section::PaperDecision,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Section::Summary => "Summary",
            Section::Strengths => "Strengths",
            Section::Weaknesses => "Weaknesses",
            Section::Questions => "Questions",
            Section::Soundness => "Soundness",
            Section::Presentation => "Presentation",
            Section::Contribution => "Contribution",
            Section::Rating => "Rating",
            Section::PaperDecision => "Paper Decision",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Section::Summary => "**Summary:**",
            Section::Strengths => "**Strengths:**",
            Section::Weaknesses => "**Weaknesses:**",
            Section::Questions => "**Questions:**",
            Section::Soundness => "**Soundness:**",
            Section::Presentation => "**Presentation:**",
            Section::Contribution => "**Contribution:**",
            Section::Rating => "**Rating:**",
            Section::PaperDecision => "**Paper Decision:**",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreAspect {
    Soundness,
    Presentation,
    Contribution,
    Rating,
}

const ASPECT_LABELS: [&str; 4] = ["poor", "fair", "good", "excellent"];

const RATING_LABELS: [&str; 10] = [
    "strong reject",
    "reject, significant issues present",
    "reject, not good enough",
    "possibly reject, but has redeeming facets",
    "marginally below the acceptance threshold",
    "marginally above the acceptance threshold",
    "accept, but needs minor improvements",
    "accept, good paper",
    "strong accept, excellent work",
    "strong accept, should be highlighted at the conference",
];

impl ScoreAspect {
    pub const ALL: [ScoreAspect; 4] = [
        ScoreAspect::Soundness,
        ScoreAspect::Presentation,
        ScoreAspect::Contribution,
        ScoreAspect::Rating,
    ];

    pub fn section(self) -> Section {
        match self {
            ScoreAspect::Soundness => Section::Soundness,
            ScoreAspect::Presentation => Section::Presentation,
            ScoreAspect::Contribution => Section::Contribution,
            ScoreAspect::Rating => Section::Rating,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreAspect::Soundness => "soundness",
            ScoreAspect::Presentation => "presentation",
            ScoreAspect::Contribution => "contribution",
            ScoreAspect::Rating => "rating",
        }
    }

    pub fn max(self) -> u8 {
        match self {
            ScoreAspect::Rating => 10,
            _ => 4,
        }
    }

    /// Canonical criterion label for `value`, or `None` when out of range.
    pub fn label(self, value: u8) -> Option<&'static str> {
        if value == 0 || value > self.max() {
            return None;
        }
        let idx = usize::from(value - 1);
        Some(match self {
            ScoreAspect::Rating => RATING_LABELS[idx],
            _ => ASPECT_LABELS[idx],
        })
    }
}

impl fmt::Display for ScoreAspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectScore {
    pub value: u8,
    pub label: String,
}

impl AspectScore {
    pub fn new(aspect: ScoreAspect, value: u8) -> Option<Self> {
        aspect.label(value).map(|label| AspectScore {
            value,
            label: label.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredReview {
    pub summary: String,
    pub strengths: Vec<String>,
    pub weaknesses: Vec<String>,
    pub questions: Vec<String>,
    pub soundness: AspectScore,
    pub presentation: AspectScore,
    pub contribution: AspectScore,
    pub rating: AspectScore,
    pub decision: Decision,
    pub reasons: String,
}

impl StructuredReview {
    pub fn score(&self, aspect: ScoreAspect) -> &AspectScore {
        match aspect {
            ScoreAspect::Soundness => &self.soundness,
            ScoreAspect::Presentation => &self.presentation,
            ScoreAspect::Contribution => &self.contribution,
            ScoreAspect::Rating => &self.rating,
        }
    }

    /// Renders the canonical text form. Always revalidates.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let push_block = |out: &mut String, section: Section, body: &str| {
            out.push_str(section.header());
            out.push('\n');
            out.push_str(body);
            out.push_str("\n\n");
        };
        push_block(&mut out, Section::Summary, &self.summary);
        push_block(&mut out, Section::Strengths, &bullets(&self.strengths));
        push_block(&mut out, Section::Weaknesses, &bullets(&self.weaknesses));
        push_block(&mut out, Section::Questions, &bullets(&self.questions));
        for aspect in ScoreAspect::ALL {
            let score = self.score(aspect);
            push_block(&mut out, aspect.section(), &format!("{} {}", score.value, score.label));
        }
        out.push_str(Section::PaperDecision.header());
        out.push('\n');
        out.push_str(&format!("- Decision: {}\n", self.decision));
        out.push_str(&format!("- Reasons: {}\n", self.reasons));
        out
    }

    /// The free-text parts joined into one passage, for overlap metrics.
    pub fn textual_content(&self) -> String {
        let mut parts = vec![self.summary.as_str()];
        parts.extend(self.strengths.iter().map(String::as_str));
        parts.extend(self.weaknesses.iter().map(String::as_str));
        parts.extend(self.questions.iter().map(String::as_str));
        parts.push(self.reasons.as_str());
        parts.join("\n")
    }
}

fn bullets(items: &[String]) -> String {
    items
        .iter()
        .map(|item| format!("- {item}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Outcome of [`validate`]. `is_valid` holds exactly when both failure lists
/// are empty; label conflicts are recorded but do not invalidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatReport {
    pub is_valid: bool,
    pub missing_sections: Vec<Section>,
    pub malformed_scores: Vec<ScoreAspect>,
    pub label_conflicts: Vec<ScoreAspect>,
    pub raw_text: String,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ContractError {
    #[error("review text does not follow the format (missing: {missing:?}, malformed: {malformed:?})", missing = .0.missing_sections, malformed = .0.malformed_scores)]
    Invalid(Box<FormatReport>),
    #[error("no texts given")]
    EmptyInput,
}

static SCORE_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d+)(?:\s*[:.\-–]\s*|\s+|$)(.*)$").unwrap());

enum ScoreSlot {
    Valid { value: u8, conflict: bool },
    Malformed,
}

fn normalize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn read_score(aspect: ScoreAspect, content: &str) -> ScoreSlot {
    let Some(first) = content.lines().map(str::trim).find(|l| !l.is_empty()) else {
        return ScoreSlot::Malformed;
    };
    let first = first.trim_matches('*').trim();
    let Some(caps) = SCORE_LINE.captures(first) else {
        return ScoreSlot::Malformed;
    };
    let Some(value) = caps[1].parse::<u8>().ok().filter(|v| aspect.label(*v).is_some()) else {
        return ScoreSlot::Malformed;
    };
    let given = normalize_label(&caps[2]);
    let canonical = normalize_label(aspect.label(value).unwrap_or_default());
    ScoreSlot::Valid {
        value,
        conflict: !given.is_empty() && given != canonical,
    }
}

struct DecisionBlock {
    decision: Decision,
    reasons: String,
}

fn strip_list_marker(line: &str) -> &str {
    line.trim_start().strip_prefix('-').unwrap_or(line).trim_start()
}

fn read_decision(content: &str) -> Option<DecisionBlock> {
    let lines: Vec<&str> = content.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let decision_idx = lines
        .iter()
        .position(|l| strip_list_marker(l).starts_with("Decision:"))?;
    let raw = strip_list_marker(lines[decision_idx])["Decision:".len()..]
        .trim()
        .trim_end_matches(['.', '*'])
        .trim();
    let decision = match raw.to_ascii_lowercase().as_str() {
        "accept" => Decision::Accept,
        "reject" => Decision::Reject,
        _ => return None,
    };
    let reasons_idx = lines
        .iter()
        .position(|l| strip_list_marker(l).starts_with("Reasons:"))?;
    let mut reasons = vec![strip_list_marker(lines[reasons_idx])["Reasons:".len()..].trim()];
    reasons.extend(lines[reasons_idx + 1..].iter().copied());
    let reasons = reasons
        .into_iter()
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    if reasons.is_empty() {
        return None;
    }
    Some(DecisionBlock { decision, reasons })
}

fn read_bullets(content: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    for line in content.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix('-') {
            items.push(rest.trim().to_string());
        } else if let Some(last) = items.last_mut() {
            last.push('\n');
            last.push_str(line);
        } else {
            items.push(line.to_string());
        }
    }
    items.retain(|item| !item.is_empty());
    items
}

/// Header positions and the text under each located header.
struct Located {
    contents: Vec<(Section, String)>,
    missing: Vec<Section>,
}

fn locate(text: &str) -> Located {
    let lines: Vec<&str> = text.lines().collect();
    let mut found: Vec<(Section, usize)> = Vec::new();
    let mut missing = Vec::new();
    let mut cursor = 0usize;
    for section in Section::ORDER {
        match (cursor..lines.len()).find(|i| lines[*i].starts_with(section.header())) {
            Some(idx) => {
                found.push((section, idx));
                cursor = idx + 1;
            }
            None => missing.push(section),
        }
    }
    let contents = found
        .iter()
        .enumerate()
        .map(|(k, (section, start))| {
            let end = found.get(k + 1).map_or(lines.len(), |(_, next)| *next);
            let mut body = vec![lines[*start][section.header().len()..].trim()];
            body.extend(lines[start + 1..end].iter().copied());
            (*section, body.join("\n").trim().to_string())
        })
        .collect();
    Located { contents, missing }
}

struct Checked {
    report: FormatReport,
    review: Option<StructuredReview>,
}

fn check(text: &str) -> Checked {
    let located = locate(text);
    let mut missing = located.missing;
    let mut malformed = Vec::new();
    let mut conflicts = Vec::new();

    let mut summary = None;
    let mut lists: [Option<Vec<String>>; 3] = [None, None, None];
    let mut scores: [Option<AspectScore>; 4] = [None, None, None, None];
    let mut decision = None;

    for (section, content) in &located.contents {
        match section {
            Section::Summary => {
                if content.is_empty() {
                    missing.push(*section);
                } else {
                    summary = Some(content.clone());
                }
            }
            Section::Strengths | Section::Weaknesses | Section::Questions => {
                let items = read_bullets(content);
                if items.is_empty() {
                    missing.push(*section);
                } else {
                    let slot = match section {
                        Section::Strengths => 0,
                        Section::Weaknesses => 1,
                        _ => 2,
                    };
                    lists[slot] = Some(items);
                }
            }
            Section::Soundness | Section::Presentation | Section::Contribution | Section::Rating => {
                let (slot, aspect) = match section {
                    Section::Soundness => (0, ScoreAspect::Soundness),
                    Section::Presentation => (1, ScoreAspect::Presentation),
                    Section::Contribution => (2, ScoreAspect::Contribution),
                    _ => (3, ScoreAspect::Rating),
                };
                match read_score(aspect, content) {
                    ScoreSlot::Valid { value, conflict } => {
                        if conflict {
                            conflicts.push(aspect);
                        }
                        scores[slot] = AspectScore::new(aspect, value);
                    }
                    ScoreSlot::Malformed => malformed.push(aspect),
                }
            }
            Section::PaperDecision => match read_decision(content) {
                Some(block) => decision = Some(block),
                None => missing.push(*section),
            },
        }
    }
    missing.sort();
    malformed.sort();

    let is_valid = missing.is_empty() && malformed.is_empty();
    let review = if is_valid {
        let [strengths, weaknesses, questions] = lists;
        let [soundness, presentation, contribution, rating] = scores;
        let block = decision.expect("valid review has a decision block");
        Some(StructuredReview {
            summary: summary.expect("valid review has a summary"),
            strengths: strengths.expect("checked"),
            weaknesses: weaknesses.expect("checked"),
            questions: questions.expect("checked"),
            soundness: soundness.expect("checked"),
            presentation: presentation.expect("checked"),
            contribution: contribution.expect("checked"),
            rating: rating.expect("checked"),
            decision: block.decision,
            reasons: block.reasons,
        })
    } else {
        None
    };
    Checked {
        report: FormatReport {
            is_valid,
            missing_sections: missing,
            malformed_scores: malformed,
            label_conflicts: conflicts,
            raw_text: text.to_string(),
        },
        review,
    }
}

pub fn validate(text: &str) -> FormatReport {
    check(text).report
}

/// Parses a conforming review. When a score's free-text label disagrees with
/// its integer, the integer is kept and the label replaced by the canonical one.
pub fn parse(text: &str) -> Result<StructuredReview, ContractError> {
    parse_checked(text).map(|(review, _)| review)
}

/// Like [`parse`], also returning the report so callers can count label conflicts.
pub fn parse_checked(text: &str) -> Result<(StructuredReview, FormatReport), ContractError> {
    let checked = check(text);
    match checked.review {
        Some(review) => Ok((review, checked.report)),
        None => Err(ContractError::Invalid(Box::new(checked.report))),
    }
}

/// Fraction of `texts` that validate.
pub fn compliance_rate<S: AsRef<str>>(texts: &[S]) -> Result<f64, ContractError> {
    if texts.is_empty() {
        return Err(ContractError::EmptyInput);
    }
    let valid = texts.iter().filter(|t| validate(t.as_ref()).is_valid).count();
    Ok(valid as f64 / texts.len() as f64)
}

/// Per-aspect integer scores, each present only when its slot parsed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSlots {
    pub soundness: Option<u8>,
    pub presentation: Option<u8>,
    pub contribution: Option<u8>,
    pub rating: Option<u8>,
}

impl ScoreSlots {
    pub fn get(&self, aspect: ScoreAspect) -> Option<u8> {
        match aspect {
            ScoreAspect::Soundness => self.soundness,
            ScoreAspect::Presentation => self.presentation,
            ScoreAspect::Contribution => self.contribution,
            ScoreAspect::Rating => self.rating,
        }
    }

    fn set(&mut self, aspect: ScoreAspect, value: Option<u8>) {
        match aspect {
            ScoreAspect::Soundness => self.soundness = value,
            ScoreAspect::Presentation => self.presentation = value,
            ScoreAspect::Contribution => self.contribution = value,
            ScoreAspect::Rating => self.rating = value,
        }
    }
}

impl From<&StructuredReview> for ScoreSlots {
    fn from(review: &StructuredReview) -> Self {
        ScoreSlots {
            soundness: Some(review.soundness.value),
            presentation: Some(review.presentation.value),
            contribution: Some(review.contribution.value),
            rating: Some(review.rating.value),
        }
    }
}

/// Reads each score slot independently of the rest of the format, so a
/// review with prose in one slot still contributes its other scores.
pub fn extract_scores(text: &str) -> ScoreSlots {
    let lines: Vec<&str> = text.lines().collect();
    let mut slots = ScoreSlots::default();
    for aspect in ScoreAspect::ALL {
        let header = aspect.section().header();
        let Some(start) = lines.iter().position(|l| l.starts_with(header)) else {
            continue;
        };
        let end = (start + 1..lines.len())
            .find(|i| lines[*i].starts_with("**"))
            .unwrap_or(lines.len());
        let mut body = vec![&lines[start][header.len()..]];
        body.extend(&lines[start + 1..end]);
        if let ScoreSlot::Valid { value, .. } = read_score(aspect, &body.join("\n")) {
            slots.set(aspect, Some(value));
        }
    }
    slots
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "\
**Summary:**
The paper proposes a method for things.

**Strengths:**
- Clear writing.
- Strong baselines,
  with careful ablations.

**Weaknesses:**
- Limited datasets.

**Questions:**
- How does it scale?

**Soundness:**
3 good

**Presentation:**
4 excellent

**Contribution:**
2 fair

**Rating:**
8 accept, good paper

**Paper Decision:**
- Decision: Accept
- Reasons: Solid and well presented.
";

    #[test]
    fn golden_validates_and_parses() {
        let report = validate(GOLDEN);
        assert!(report.is_valid, "{report:?}");
        let review = parse(GOLDEN).unwrap();
        assert_eq!(review.strengths.len(), 2);
        assert_eq!(review.strengths[1], "Strong baselines,\nwith careful ablations.");
        assert_eq!(review.rating.value, 8);
        assert_eq!(review.contribution.label, "fair");
        assert_eq!(review.decision, Decision::Accept);
    }

    #[test]
    fn deleting_questions_header() {
        let text = GOLDEN.replace("**Questions:**\n", "");
        let report = validate(&text);
        assert!(!report.is_valid);
        assert_eq!(report.missing_sections, vec![Section::Questions]);
    }

    #[test]
    fn out_of_range_rating() {
        let text = GOLDEN.replace("8 accept, good paper", "11");
        let report = validate(&text);
        assert_eq!(report.malformed_scores, vec![ScoreAspect::Rating]);
        assert!(matches!(parse(&text), Err(ContractError::Invalid(_))));
    }

    #[test]
    fn inline_scores() {
        let text = GOLDEN
            .replace("**Rating:**\n8", "**Rating:** 8")
            .replace("**Soundness:**\n3 good", "**Soundness:** 3 good");
        let review = parse(&text).unwrap();
        assert_eq!(review.rating.value, 8);
        assert_eq!(review.rating.label, "accept, good paper");
        assert_eq!(review.soundness.value, 3);
    }

    #[test]
    fn integer_wins_over_label() {
        let text = GOLDEN.replace("3 good", "4 good");
        let (review, report) = parse_checked(&text).unwrap();
        assert_eq!(review.soundness.value, 4);
        assert_eq!(review.soundness.label, "excellent");
        assert_eq!(report.label_conflicts, vec![ScoreAspect::Soundness]);
    }

    #[test]
    fn prose_score_is_malformed() {
        let text = GOLDEN.replace("3 good", "The methodology seems sound overall.");
        let report = validate(&text);
        assert_eq!(report.malformed_scores, vec![ScoreAspect::Soundness]);
        let slots = extract_scores(&text);
        assert_eq!(slots.soundness, None);
        assert_eq!(slots.rating, Some(8));
    }

    #[test]
    fn decision_must_be_concrete() {
        let text = GOLDEN.replace("Decision: Accept", "Decision: Accept/Reject");
        assert_eq!(validate(&text).missing_sections, vec![Section::PaperDecision]);
    }

    #[test]
    fn out_of_order_headers_are_reported() {
        let text = GOLDEN
            .replace("**Strengths:**", "**TMP**")
            .replace("**Weaknesses:**", "**Strengths:**")
            .replace("**TMP**", "**Weaknesses:**");
        assert!(!validate(&text).is_valid);
    }

    #[test]
    fn canonical_text_round_trips() {
        let review = parse(GOLDEN).unwrap();
        let again = parse(&review.to_text()).unwrap();
        assert_eq!(review, again);
    }

    #[test]
    fn compliance_counts() {
        let bad = GOLDEN.replace("**Rating:**", "Rating:");
        let texts = vec![GOLDEN.to_string(), GOLDEN.to_string(), GOLDEN.to_string(), bad];
        assert_eq!(compliance_rate(&texts).unwrap(), 0.75);
        assert!(compliance_rate::<&str>(&[]).is_err());
    }

    #[test]
    fn label_tables() {
        assert_eq!(ScoreAspect::Rating.label(1), Some("strong reject"));
        assert_eq!(
            ScoreAspect::Rating.label(10),
            Some("strong accept, should be highlighted at the conference")
        );
        assert_eq!(ScoreAspect::Presentation.label(3), Some("good"));
        assert_eq!(ScoreAspect::Presentation.label(5), None);
        assert_eq!(ScoreAspect::Rating.label(0), None);
    }
}
