//! Review-corpus ingestion, statistics, and deterministic splits.
//!
//! Raw dumps arrive as one JSON paper per line. Venue-specific review section
//! titles are folded onto five canonical sections by a [`VenueProfile`]; any
//! title the profile does not know lands in [`ReviewSection::Other`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::text::TokenCounter;

const BUILTIN_VENUES: &str = include_str!("../config/venues.json");

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unknown venue profile `{0}`")]
    UnknownVenue(String),
    #[error("invalid venue profile table: {0}")]
    BadProfiles(String),
    #[error("corpus is empty")]
    Empty,
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("paper `{0}` has no reviews to stratify on")]
    NoRatings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewSection {
    Summary,
    Strengths,
    Weaknesses,
    Questions,
    Other,
}

impl ReviewSection {
    pub const ALL: [ReviewSection; 5] = [
        ReviewSection::Summary,
        ReviewSection::Strengths,
        ReviewSection::Weaknesses,
        ReviewSection::Questions,
        ReviewSection::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReviewSection::Summary => "summary",
            ReviewSection::Strengths => "strengths",
            ReviewSection::Weaknesses => "weaknesses",
            ReviewSection::Questions => "questions",
            ReviewSection::Other => "other",
        }
    }

    /// Capitalized form used when reviews are written into prompts.
    pub fn title(self) -> &'static str {
        match self {
            ReviewSection::Summary => "Summary",
            ReviewSection::Strengths => "Strengths",
            ReviewSection::Weaknesses => "Weaknesses",
            ReviewSection::Questions => "Questions",
            ReviewSection::Other => "Other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    /// Reads "Accept", "accept (poster)", "Reject" and similar venue spellings.
    pub fn parse_loose(raw: &str) -> Option<Decision> {
        let lower = raw.trim().to_ascii_lowercase();
        if lower.starts_with("accept") {
            Some(Decision::Accept)
        } else if lower.starts_with("reject") {
            Some(Decision::Reject)
        } else {
            None
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Accept => f.write_str("Accept"),
            Decision::Reject => f.write_str("Reject"),
        }
    }
}

/// One reviewer's report. Section keys are already canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReview {
    pub reviewer_id: String,
    pub sections: BTreeMap<ReviewSection, String>,
    pub rating: u8,
    pub confidence: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soundness: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution: Option<u8>,
}

impl RawReview {
    pub fn section(&self, section: ReviewSection) -> Option<&str> {
        self.sections.get(&section).map(String::as_str)
    }

    /// All section texts joined by blank lines, in canonical section order.
    pub fn full_text(&self) -> String {
        self.sections
            .values()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub venue: String,
    pub year: i32,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_review: Option<String>,
    pub reviews: Vec<RawReview>,
}

impl PaperRecord {
    pub fn mean_rating(&self) -> Option<f64> {
        if self.reviews.is_empty() {
            return None;
        }
        let sum: f64 = self.reviews.iter().map(|r| f64::from(r.rating)).sum();
        Some(sum / self.reviews.len() as f64)
    }
}

/// Raw section title → canonical section table for one venue.
#[derive(Debug, Clone)]
pub struct VenueProfile {
    name: String,
    aliases: HashMap<String, ReviewSection>,
}

impl VenueProfile {
    /// Profile that only knows the canonical section names.
    pub fn canonical() -> Self {
        VenueProfile {
            name: "canonical".to_string(),
            aliases: HashMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn resolve(&self, raw_title: &str) -> ReviewSection {
        let key = normalize_title(raw_title);
        if let Some(section) = self.aliases.get(&key) {
            return *section;
        }
        ReviewSection::ALL
            .into_iter()
            .find(|s| s.name() == key)
            .unwrap_or(ReviewSection::Other)
    }
}

fn normalize_title(raw: &str) -> String {
    raw.trim()
        .trim_end_matches(':')
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// The set of venue profiles, loaded from a JSON table of the form
/// `{"venue": {"summary": ["raw title", ...], ...}}`.
#[derive(Debug, Clone)]
pub struct VenueProfiles {
    profiles: BTreeMap<String, VenueProfile>,
}

impl VenueProfiles {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_VENUES).expect("builtin venue table is valid")
    }

    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        let table: BTreeMap<String, BTreeMap<ReviewSection, Vec<String>>> =
            serde_json::from_str(json).map_err(|e| CorpusError::BadProfiles(e.to_string()))?;
        let profiles = table
            .into_iter()
            .map(|(name, sections)| {
                let aliases = sections
                    .into_iter()
                    .flat_map(|(section, titles)| titles.into_iter().map(move |t| (normalize_title(&t), section)))
                    .collect();
                (name.clone(), VenueProfile { name, aliases })
            })
            .collect();
        Ok(VenueProfiles { profiles })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn get(&self, venue: &str) -> Result<&VenueProfile, CorpusError> {
        self.profiles
            .get(&venue.to_ascii_lowercase())
            .ok_or_else(|| CorpusError::UnknownVenue(venue.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}

#[derive(Deserialize)]
struct RawLine {
    paper_id: String,
    venue: String,
    year: i32,
    title: String,
    body: String,
    #[serde(default)]
    decision: Option<String>,
    #[serde(default)]
    meta_review: Option<String>,
    reviews: Vec<RawReviewLine>,
}

#[derive(Deserialize)]
struct RawReviewLine {
    reviewer_id: String,
    #[serde(default)]
    sections: BTreeMap<String, String>,
    #[serde(default)]
    rating: Option<Value>,
    confidence: Value,
    #[serde(default)]
    soundness: Option<Value>,
    #[serde(default)]
    presentation: Option<Value>,
    #[serde(default)]
    contribution: Option<Value>,
}

/// Accepts `6`, `6.0`, or venue strings such as `"6: marginally above ..."`.
fn score_value(value: &Value) -> Option<i64> {
    match value {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
        Value::String(s) => {
            let digits: String = s.trim().chars().take_while(|c| c.is_ascii_digit()).collect();
            digits.parse().ok()
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    pub line: usize,
    pub paper_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub records: Vec<PaperRecord>,
    pub warnings: Vec<IngestWarning>,
}

impl IngestOutcome {
    pub fn skipped(&self) -> usize {
        self.warnings.len()
    }
}

pub fn ingest(path: &Path, profile: &VenueProfile) -> Result<IngestOutcome, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(BufReader::new(file), profile).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn ingest_reader<R: BufRead>(reader: R, profile: &VenueProfile) -> Result<IngestOutcome, CorpusError> {
    let mut outcome = IngestOutcome::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        match normalize_record(raw, profile, line_no)? {
            Normalized::Record(record) => {
                if !seen.insert(record.paper_id.clone()) {
                    return Err(CorpusError::Malformed {
                        line: line_no,
                        message: format!("duplicate paper_id `{}`", record.paper_id),
                    });
                }
                outcome.records.push(record);
            }
            Normalized::Skipped(warning) => {
                log::warn!(
                    "line {}: skipping `{}`: {}",
                    warning.line,
                    warning.paper_id,
                    warning.reason
                );
                outcome.warnings.push(warning);
            }
        }
    }
    Ok(outcome)
}

enum Normalized {
    Record(PaperRecord),
    Skipped(IngestWarning),
}

fn normalize_record(raw: RawLine, profile: &VenueProfile, line: usize) -> Result<Normalized, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line, message };
    if raw.body.trim().is_empty() {
        return Err(malformed(format!("paper `{}` has an empty body", raw.paper_id)));
    }
    let decision = match raw.decision.as_deref() {
        None => None,
        Some(text) => {
            Some(Decision::parse_loose(text).ok_or_else(|| malformed(format!("unrecognized decision `{text}`")))?)
        }
    };

    let mut reviews = Vec::with_capacity(raw.reviews.len());
    for review in raw.reviews {
        let Some(rating_value) = review.rating.as_ref() else {
            return Ok(Normalized::Skipped(IngestWarning {
                line,
                paper_id: raw.paper_id,
                reason: format!("review `{}` has no rating", review.reviewer_id),
            }));
        };
        let bounded = |name: &str, value: &Value, lo: i64, hi: i64| {
            score_value(value)
                .filter(|v| (lo..=hi).contains(v))
                .map(|v| v as u8)
                .ok_or_else(|| {
                    malformed(format!(
                        "review `{}`: {name} {value} is not an integer in [{lo}, {hi}]",
                        review.reviewer_id
                    ))
                })
        };
        let rating = bounded("rating", rating_value, 1, 10)?;
        let confidence = bounded("confidence", &review.confidence, 1, 5)?;
        let aspect = |name: &str, value: &Option<Value>| -> Result<Option<u8>, CorpusError> {
            match value {
                None => Ok(None),
                Some(v) => bounded(name, v, 1, 4).map(Some),
            }
        };
        let soundness = aspect("soundness", &review.soundness)?;
        let presentation = aspect("presentation", &review.presentation)?;
        let contribution = aspect("contribution", &review.contribution)?;

        let mut sections: BTreeMap<ReviewSection, String> = BTreeMap::new();
        for (title, text) in review.sections {
            let text = text.trim();
            if text.is_empty() {
                continue;
            }
            sections
                .entry(profile.resolve(&title))
                .and_modify(|existing| {
                    existing.push_str("\n\n");
                    existing.push_str(text);
                })
                .or_insert_with(|| text.to_string());
        }
        reviews.push(RawReview {
            reviewer_id: review.reviewer_id,
            sections,
            rating,
            confidence,
            soundness,
            presentation,
            contribution,
        });
    }

    Ok(Normalized::Record(PaperRecord {
        paper_id: raw.paper_id,
        venue: raw.venue,
        year: raw.year,
        title: raw.title,
        body: raw.body,
        decision,
        meta_review: raw.meta_review.filter(|m| !m.trim().is_empty()),
        reviews,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub paper_count: usize,
    pub review_count: usize,
    pub mean_tokens_per_paper: f64,
    pub mean_tokens_per_review: f64,
    /// `None` when no record carries a decision.
    pub accept_fraction: Option<f64>,
}

pub fn stats(records: &[PaperRecord], tokenizer: &dyn TokenCounter) -> Result<CorpusStats, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::Empty);
    }
    let paper_tokens: usize = records.iter().map(|r| tokenizer.count(&r.body)).sum();
    let mut review_count = 0usize;
    let mut review_tokens = 0usize;
    for review in records.iter().flat_map(|r| &r.reviews) {
        review_count += 1;
        review_tokens += review.sections.values().map(|t| tokenizer.count(t)).sum::<usize>();
    }
    let decided: Vec<Decision> = records.iter().filter_map(|r| r.decision).collect();
    let accepted = decided.iter().filter(|d| **d == Decision::Accept).count();
    Ok(CorpusStats {
        paper_count: records.len(),
        review_count,
        mean_tokens_per_paper: paper_tokens as f64 / records.len() as f64,
        mean_tokens_per_review: if review_count == 0 {
            0.0
        } else {
            review_tokens as f64 / review_count as f64
        },
        accept_fraction: (!decided.is_empty()).then(|| accepted as f64 / decided.len() as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub ratio: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Number of train items drawn from a stratum of `n`.
///
/// A lone record goes to train. Any larger stratum keeps at least one record
/// on each side so every rating level is represented in both partitions.
fn train_quota(n: usize, ratio: f64) -> usize {
    match n {
        0 => 0,
        1 => 1,
        _ => ((ratio * n as f64).round() as usize).clamp(1, n - 1),
    }
}

fn check_ratio(ratio: f64) -> Result<(), CorpusError> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(CorpusError::BadRatio(ratio))
    }
}

/// Rating-stratified train/test split.
///
/// Papers are bucketed by the rounded mean of their review ratings; each bucket
/// is shuffled with a seeded ChaCha stream (buckets visited in ascending rating
/// order) and split by [`train_quota`]. Output ids keep corpus order.
pub fn stratified_split(records: &[PaperRecord], ratio: f64, seed: u64) -> Result<DatasetSplit, CorpusError> {
    check_ratio(ratio)?;
    let mut buckets: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (idx, record) in records.iter().enumerate() {
        let mean = record
            .mean_rating()
            .ok_or_else(|| CorpusError::NoRatings(record.paper_id.clone()))?;
        buckets.entry(mean.round() as i64).or_default().push(idx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; records.len()];
    for members in buckets.values_mut() {
        members.sort_by(|a, b| records[*a].paper_id.cmp(&records[*b].paper_id));
        members.shuffle(&mut rng);
        for idx in &members[..train_quota(members.len(), ratio)] {
            in_train[*idx] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = records.iter().zip(in_train).partition(|(_, is_train)| *is_train);
    Ok(DatasetSplit {
        seed,
        ratio,
        train_ids: train.into_iter().map(|(r, _)| r.paper_id.clone()).collect(),
        test_ids: test.into_iter().map(|(r, _)| r.paper_id.clone()).collect(),
    })
}

/// Unstratified seeded split of an id list, used for the train/validation
/// partition of the mismatch regressor. Returns `(first, second)` where
/// `first` holds the `ratio` share; order follows the input.
pub fn holdout_split(ids: &[String], ratio: f64, seed: u64) -> Result<(Vec<String>, Vec<String>), CorpusError> {
    check_ratio(ratio)?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let quota = train_quota(ids.len(), ratio);
    let mut chosen = vec![false; ids.len()];
    for idx in &order[..quota] {
        chosen[*idx] = true;
    }
    let (first, second): (Vec<_>, Vec<_>) = ids.iter().cloned().zip(chosen).partition(|(_, c)| *c);
    Ok((
        first.into_iter().map(|(id, _)| id).collect(),
        second.into_iter().map(|(id, _)| id).collect(),
    ))
}

/// Looks records up by id, preserving the order of `ids`. Unknown ids are
/// returned as the error value.
pub fn select<'a>(records: &'a [PaperRecord], ids: &[String]) -> Result<Vec<&'a PaperRecord>, String> {
    let index: HashMap<&str, &PaperRecord> = records.iter().map(|r| (r.paper_id.as_str(), r)).collect();
    ids.iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| id.clone()))
        .collect()
}
