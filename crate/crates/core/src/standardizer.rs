//! Integrating a paper's reviews into one standardized review with a
//! teacher model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{PaperRecord, RawReview};
use crate::format_contract::{ScoreAspect, Section, StructuredReview};
use crate::llm_gateway::{Gateway, GenerationConfig};
use crate::metrics::{lcs_overlap, ngram_overlap, tokenize, OverlapShares};
use crate::parallel::map_ordered;
use crate::prompt_kit::PromptKit;
use crate::reviewer::{complete_validated, GenerationError, DEFAULT_MAX_ATTEMPTS};

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub review: StructuredReview,
    pub raw_text: String,
    pub attempts: u32,
}

/// One line of the standardized output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedRecord {
    pub paper_id: String,
    pub review_text: String,
    pub attempts: u32,
}

/// One line of the failure report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeFailure {
    pub paper_id: String,
    pub missing_sections: Vec<Section>,
    pub malformed_scores: Vec<ScoreAspect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StandardizeFailure {
    fn new(paper_id: &str, err: &GenerationError) -> Self {
        match err.report() {
            Some(report) => StandardizeFailure {
                paper_id: paper_id.to_string(),
                missing_sections: report.missing_sections.clone(),
                malformed_scores: report.malformed_scores.clone(),
                error: None,
            },
            None => StandardizeFailure {
                paper_id: paper_id.to_string(),
                missing_sections: Vec::new(),
                malformed_scores: Vec::new(),
                error: Some(err.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StandardizeOutcome {
    pub outputs: BTreeMap<String, Standardized>,
    pub failures: Vec<StandardizeFailure>,
}

impl StandardizeOutcome {
    pub fn records(&self) -> Vec<StandardizedRecord> {
        self.outputs
            .iter()
            .map(|(id, s)| StandardizedRecord {
                paper_id: id.clone(),
                review_text: s.raw_text.clone(),
                attempts: s.attempts,
            })
            .collect()
    }
}

#[derive(Clone)]
pub struct Standardizer {
    gateway: Gateway,
    prompts: PromptKit,
    config: GenerationConfig,
    max_attempts: u32,
}

impl Standardizer {
    pub fn new(gateway: Gateway, prompts: PromptKit, config: GenerationConfig) -> Self {
        Standardizer {
            gateway,
            prompts,
            config,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Self {
        self.max_attempts = max_attempts;
        self
    }

    /// Standardizes a bare list of reviews, in their stored order.
    pub fn standardize_one(&self, reviews: &[RawReview]) -> Result<Standardized, GenerationError> {
        if reviews.is_empty() {
            return Err(GenerationError::Precondition("no reviews to standardize".into()));
        }
        let prompt = self.prompts.render_standardize(reviews)?;
        self.run(&prompt)
    }

    /// Like [`Standardizer::standardize_one`], but the prompt also carries the
    /// paper's decision and meta-review when known.
    pub fn standardize_record(&self, record: &PaperRecord) -> Result<Standardized, GenerationError> {
        if record.reviews.is_empty() {
            return Err(GenerationError::Precondition(format!(
                "paper {} has no reviews",
                record.paper_id
            )));
        }
        let prompt = self.prompts.render_standardize_record(record)?;
        self.run(&prompt)
    }

    fn run(&self, prompt: &str) -> Result<Standardized, GenerationError> {
        let v = complete_validated(&self.gateway, &self.config, prompt, self.max_attempts)?;
        Ok(Standardized {
            review: v.review,
            raw_text: v.raw_text,
            attempts: v.attempts,
        })
    }

    /// Standardizes every paper concurrently under the gateway bound. A failed
    /// paper lands in `failures` without affecting the others.
    pub fn standardize_corpus(&self, records: &[&PaperRecord]) -> StandardizeOutcome {
        let results = map_ordered(records, self.gateway.max_in_flight(), |r| self.standardize_record(r));
        let mut outcome = StandardizeOutcome::default();
        let mut failures = BTreeMap::new();
        for (record, result) in records.iter().zip(results) {
            match result {
                Ok(s) => {
                    outcome.outputs.insert(record.paper_id.clone(), s);
                }
                Err(e) => {
                    log::warn!("standardizing {} failed: {e}", record.paper_id);
                    failures.insert(record.paper_id.clone(), StandardizeFailure::new(&record.paper_id, &e));
                }
            }
        }
        outcome.failures = failures.into_values().collect();
        outcome
    }
}

/// Content overlap between two standardized reviews for ROUGE-1, ROUGE-2 and
/// ROUGE-L, over their free-text sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentOverlap {
    pub rouge1: OverlapShares,
    pub rouge2: OverlapShares,
    pub rouge_l: OverlapShares,
}

pub fn content_overlap(reference: &StructuredReview, candidate: &StructuredReview) -> ContentOverlap {
    let r = tokenize(&reference.textual_content());
    let c = tokenize(&candidate.textual_content());
    ContentOverlap {
        rouge1: ngram_overlap(&c, &r, 1).into(),
        rouge2: ngram_overlap(&c, &r, 2).into(),
        rouge_l: lcs_overlap(&c, &r).into(),
    }
}
