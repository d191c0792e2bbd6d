use serde::{Deserialize, Serialize};

use super::{MismatchError, MismatchModel};
use crate::llm_gateway::{Embedder, EmbeddingVector};
use crate::prompt_kit::PromptKit;
use crate::reviewer::{GeneratedReview, ReviewGenerator};

pub const DEFAULT_MAX_TRIALS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u32,
    /// Signed predicted mismatch; `None` when the trial failed.
    pub score: Option<f64>,
    pub accepted: bool,
    pub selected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of a trial log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLogLine {
    pub paper_id: String,
    pub trial: u32,
    pub score: Option<f64>,
    pub accepted: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCorrectOutcome {
    pub review: GeneratedReview,
    pub score: f64,
    pub trial: u32,
    pub log: Vec<TrialRecord>,
}

impl SelfCorrectOutcome {
    pub fn log_lines(&self, paper_id: &str) -> Vec<TrialLogLine> {
        self.log
            .iter()
            .map(|t| TrialLogLine {
                paper_id: paper_id.to_string(),
                trial: t.trial,
                score: t.score,
                accepted: t.accepted,
                selected: t.selected,
            })
            .collect()
    }
}

/// Regenerates a review until its predicted mismatch magnitude is at most
/// `theta`, feeding the last score back into the prompt. Makes at most
/// `max_trials` generator calls; if none is accepted, the trial with the
/// smallest |score| wins. Failed trials are logged and skipped.
#[allow(clippy::too_many_arguments)]
pub fn self_correct(
    paper_body: &str,
    paper_embedding: &EmbeddingVector,
    prompts: &PromptKit,
    generator: &dyn ReviewGenerator,
    embedder: &dyn Embedder,
    model: &MismatchModel,
    theta: f64,
    max_trials: u32,
) -> Result<SelfCorrectOutcome, MismatchError> {
    if max_trials == 0 {
        return Err(MismatchError::InvalidInput("max_trials must be at least 1".into()));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(MismatchError::InvalidInput(
            "theta must be a non-negative number".into(),
        ));
    }
    if paper_embedding.dim() != model.embed_dim() {
        return Err(MismatchError::DimMismatch {
            expected: model.embed_dim(),
            got: paper_embedding.dim(),
        });
    }
    let mut log = Vec::new();
    let mut best: Option<(usize, GeneratedReview, f64)> = None;
    let mut last_score: Option<f64> = None;
    for trial in 1..=max_trials {
        let attempt = (|| -> Result<(GeneratedReview, f64), MismatchError> {
            let prompt = match last_score {
                None => prompts.render_evaluate(paper_body),
                Some(prev) => prompts.render_self_correct(paper_body, prev),
            }
            .map_err(|e| MismatchError::InvalidInput(e.to_string()))?;
            let review = generator.generate(&prompt.text)?;
            let embedding = embedder.embed(std::slice::from_ref(&review.raw_text))?;
            let score = model.predict(paper_embedding, &embedding[0])?;
            Ok((review, score))
        })();
        match attempt {
            Ok((review, score)) => {
                let accepted = score.abs() <= theta;
                log.push(TrialRecord {
                    trial,
                    score: Some(score),
                    accepted,
                    selected: false,
                    error: None,
                });
                last_score = Some(score);
                if best.as_ref().is_none_or(|(_, _, s)| score.abs() < s.abs()) {
                    best = Some((log.len() - 1, review, score));
                }
                if accepted {
                    break;
                }
            }
            Err(e @ MismatchError::InvalidInput(_)) => return Err(e),
            Err(e) => {
                log::warn!("self-correction trial {trial} failed: {e}");
                log.push(TrialRecord {
                    trial,
                    score: None,
                    accepted: false,
                    selected: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (index, review, score) = best.ok_or(MismatchError::AllTrialsFailed(max_trials))?;
    log[index].selected = true;
    Ok(SelfCorrectOutcome {
        review,
        score,
        trial: log[index].trial,
        log,
    })
}
