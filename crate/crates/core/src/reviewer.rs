//! Review generation for a paper through an evaluation endpoint.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::PaperRecord;
use crate::format_contract::{self, FormatReport, StructuredReview};
use crate::llm_gateway::{Gateway, GatewayError, GenerationConfig};
use crate::parallel::map_ordered;
use crate::prompt_kit::{PromptError, PromptKit};
use crate::text::{TokenCounter, WhitespaceTokenizer};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("{0}")]
    Precondition(String),
    #[error("no valid output after {attempts} attempts (missing: {missing:?}, malformed: {malformed:?})",
        missing = .report.missing_sections, malformed = .report.malformed_scores)]
    Exhausted { attempts: u32, report: Box<FormatReport> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl GenerationError {
    /// The last format report, when the failure was a format failure.
    pub fn report(&self) -> Option<&FormatReport> {
        match self {
            GenerationError::Exhausted { report, .. } => Some(report),
            _ => None,
        }
    }
}

/// A validated completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub review: StructuredReview,
    pub raw_text: String,
    pub attempts: u32,
}

/// Calls the gateway until the output passes the format contract, at most
/// `max_attempts` times. Empty completions count as invalid attempts;
/// transport and rejection errors end the loop at once.
pub fn complete_validated(
    gateway: &Gateway,
    config: &GenerationConfig,
    prompt: &str,
    max_attempts: u32,
) -> Result<Validated, GenerationError> {
    if max_attempts == 0 {
        return Err(GenerationError::Precondition("max_attempts must be at least 1".into()));
    }
    if prompt.trim().is_empty() {
        return Err(GenerationError::Precondition("prompt is empty".into()));
    }
    let mut last = None;
    for attempt in 1..=max_attempts {
        let text = match gateway.complete(config, prompt) {
            Ok(text) => text,
            Err(GatewayError::EmptyResponse) => String::new(),
            Err(e) => return Err(e.into()),
        };
        match format_contract::parse_checked(&text) {
            Ok((review, _)) => {
                return Ok(Validated {
                    review,
                    raw_text: text,
                    attempts: attempt,
                })
            }
            Err(format_contract::ContractError::Invalid(report)) => {
                log::debug!(
                    "attempt {attempt} invalid: missing {:?}, malformed {:?}",
                    report.missing_sections,
                    report.malformed_scores
                );
                last = Some(report);
            }
            Err(format_contract::ContractError::EmptyInput) => {
                last = Some(Box::new(format_contract::validate(&text)));
            }
        }
    }
    Err(GenerationError::Exhausted {
        attempts: max_attempts,
        report: last.unwrap_or_else(|| Box::new(format_contract::validate(""))),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedReview {
    pub review: StructuredReview,
    pub raw_text: String,
    pub attempts: u32,
    pub token_count: usize,
}

/// Something that turns a full prompt into a validated review.
pub trait ReviewGenerator: Sync {
    fn generate(&self, prompt: &str) -> Result<GeneratedReview, GenerationError>;
}

#[derive(Clone)]
pub struct Reviewer {
    gateway: Gateway,
    prompts: PromptKit,
    config: GenerationConfig,
    max_attempts: u32,
    tokenizer: Arc<dyn TokenCounter>,
}

impl Reviewer {
    pub fn new(gateway: Gateway, prompts: PromptKit, config: GenerationConfig) -> Self {
        Reviewer {
            gateway,
            prompts,
            config,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            tokenizer: Arc::new(WhitespaceTokenizer),
        }
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Self {
        self.max_attempts = max_attempts;
        self
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn TokenCounter>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn prompts(&self) -> &PromptKit {
        &self.prompts
    }

    pub fn model_tag(&self) -> &str {
        &self.gateway.profile().name
    }

    pub fn generate_review(&self, paper_body: &str) -> Result<GeneratedReview, GenerationError> {
        if paper_body.trim().is_empty() {
            return Err(GenerationError::Precondition("paper body is empty".into()));
        }
        let rendered = self.prompts.render_evaluate(paper_body)?;
        if let Some(note) = &rendered.truncated {
            log::info!("paper body truncated to fit the context budget: {note:?}");
        }
        self.generate_with_prompt(&rendered.text)
    }

    pub fn generate_with_prompt(&self, prompt: &str) -> Result<GeneratedReview, GenerationError> {
        let v = complete_validated(&self.gateway, &self.config, prompt, self.max_attempts)?;
        Ok(GeneratedReview {
            token_count: self.tokenizer.count(&v.raw_text),
            review: v.review,
            raw_text: v.raw_text,
            attempts: v.attempts,
        })
    }

    /// Reviews every paper, fanning out up to the gateway's in-flight bound.
    /// Results are in input order.
    pub fn generate_batch(&self, papers: &[&PaperRecord]) -> Vec<(String, Result<GeneratedReview, GenerationError>)> {
        map_ordered(papers, self.gateway.max_in_flight(), |p| {
            (p.paper_id.clone(), self.generate_review(&p.body))
        })
    }
}

impl ReviewGenerator for Reviewer {
    fn generate(&self, prompt: &str) -> Result<GeneratedReview, GenerationError> {
        self.generate_with_prompt(prompt)
    }
}

/// One line of a batch output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub paper_id: String,
    pub model_tag: String,
    pub review_text: String,
    pub attempts: u32,
    pub token_count: usize,
}

impl ReviewRecord {
    pub fn new(paper_id: &str, model_tag: &str, review: &GeneratedReview) -> Self {
        ReviewRecord {
            paper_id: paper_id.to_string(),
            model_tag: model_tag.to_string(),
            review_text: review.raw_text.clone(),
            attempts: review.attempts,
            token_count: review.token_count,
        }
    }
}
