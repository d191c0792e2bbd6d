//! Scoring generated reviews against references: text overlap, score MSE,
//! decision metrics, and the tabular report.

mod report;
mod text;

pub use report::{build_report, render_table, MetricsReport, ReportRow};
pub use text::{
    bleu, bleu_tokens, lcs_len, lcs_overlap, ngram_overlap, rouge_l, rouge_n, tokenize, OverlapCounts, RougeScore,
    BLEU_MAX_ORDER,
};

use serde::{Deserialize, Serialize};

use crate::corpus::{Decision, RawReview};
use crate::format_contract::{ScoreAspect, ScoreSlots};
use crate::llm_gateway::{Embedder, GatewayError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{what}: {left} items on one side, {right} on the other")]
    Misaligned {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("nothing to score: {0}")]
    Empty(&'static str),
    #[error("paper has reviews but their confidences sum to zero")]
    ZeroConfidence,
    #[error(transparent)]
    Embedding(#[from] GatewayError),
}

fn check_aligned(what: &'static str, left: usize, right: usize) -> Result<(), MetricsError> {
    if left != right {
        return Err(MetricsError::Misaligned { what, left, right });
    }
    Ok(())
}

/// Per-review text overlap scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextScore {
    pub bleu: f64,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub token_count: usize,
    /// Embedding cosine similarity between candidate and reference; a
    /// stand-in for learned similarity scorers, not BERTScore itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_similarity: Option<f64>,
}

pub fn score_text(candidate: &str, reference: &str, token_count: usize) -> TextScore {
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    TextScore {
        bleu: bleu_tokens(&cand, &refs),
        rouge1: ngram_overlap(&cand, &refs, 1).score(),
        rouge2: ngram_overlap(&cand, &refs, 2).score(),
        rouge_l: lcs_overlap(&cand, &refs).score(),
        token_count,
        semantic_similarity: None,
    }
}

/// Fills `semantic_similarity` with the cosine between each candidate and
/// its reference.
pub fn attach_similarity(
    scores: &mut [TextScore],
    candidates: &[String],
    references: &[String],
    embedder: &dyn Embedder,
) -> Result<(), MetricsError> {
    check_aligned("scores vs candidates", scores.len(), candidates.len())?;
    check_aligned("candidates vs references", candidates.len(), references.len())?;
    if scores.is_empty() {
        return Ok(());
    }
    let cand = embedder.embed(candidates)?;
    let refs = embedder.embed(references)?;
    for ((score, c), r) in scores.iter_mut().zip(&cand).zip(&refs) {
        score.semantic_similarity = Some(c.cosine(r));
    }
    Ok(())
}

/// All human reviews of a paper as one reference passage.
pub fn concat_reference<S: AsRef<str>>(reviews: &[S]) -> String {
    reviews
        .iter()
        .map(|r| r.as_ref().trim())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Confidence-weighted reference scores of one paper. An aspect is absent
/// when no review carries it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub soundness: Option<f64>,
    pub presentation: Option<f64>,
    pub contribution: Option<f64>,
    pub rating: Option<f64>,
}

impl ReferenceScores {
    pub fn get(&self, aspect: ScoreAspect) -> Option<f64> {
        match aspect {
            ScoreAspect::Soundness => self.soundness,
            ScoreAspect::Presentation => self.presentation,
            ScoreAspect::Contribution => self.contribution,
            ScoreAspect::Rating => self.rating,
        }
    }
}

pub fn weighted_reference_scores(reviews: &[RawReview]) -> Result<ReferenceScores, MetricsError> {
    if reviews.is_empty() {
        return Err(MetricsError::Empty("paper has no reviews"));
    }
    let weighted = |value: fn(&RawReview) -> Option<u8>| -> Result<Option<f64>, MetricsError> {
        let mut num = 0.0;
        let mut den = 0.0;
        for r in reviews {
            if let Some(v) = value(r) {
                num += f64::from(r.confidence) * f64::from(v);
                den += f64::from(r.confidence);
            }
        }
        if reviews.iter().all(|r| value(r).is_none()) {
            return Ok(None);
        }
        if den == 0.0 {
            return Err(MetricsError::ZeroConfidence);
        }
        Ok(Some(num / den))
    };
    Ok(ReferenceScores {
        soundness: weighted(|r| r.soundness)?,
        presentation: weighted(|r| r.presentation)?,
        contribution: weighted(|r| r.contribution)?,
        rating: weighted(|r| Some(r.rating))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectMse {
    pub aspect: ScoreAspect,
    /// `None` when no generated score parsed for this aspect.
    pub mse: Option<f64>,
    /// Items with a reference value.
    pub total: usize,
    /// Of those, items whose generated score also parsed.
    pub included: usize,
}

impl AspectMse {
    pub fn valid_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.included as f64 / self.total as f64
        }
    }
}

/// Squared error between parsed and reference scores, per aspect. Items
/// whose reference lacks an aspect do not count towards that aspect at all;
/// items whose generated score is missing lower the valid fraction.
pub fn score_mse(generated: &[ScoreSlots], references: &[ReferenceScores]) -> Result<Vec<AspectMse>, MetricsError> {
    check_aligned("generated vs reference scores", generated.len(), references.len())?;
    Ok(ScoreAspect::ALL
        .iter()
        .filter_map(|&aspect| {
            let mut total = 0;
            let mut sq = Vec::new();
            for (g, r) in generated.iter().zip(references) {
                let Some(reference) = r.get(aspect) else { continue };
                total += 1;
                if let Some(value) = g.get(aspect) {
                    sq.push((f64::from(value) - reference).powi(2));
                }
            }
            (total > 0).then(|| AspectMse {
                aspect,
                mse: (!sq.is_empty()).then(|| sq.iter().sum::<f64>() / sq.len() as f64),
                total,
                included: sq.len(),
            })
        })
        .collect())
}

/// Accept/reject agreement with Accept as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Pairs where both sides had a decision.
    pub support: usize,
    /// Mean embedding cosine between generated reasons and meta-reviews.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_similarity: Option<f64>,
}

pub fn decision_metrics(
    predicted: &[Option<Decision>],
    actual: &[Option<Decision>],
) -> Result<DecisionReport, MetricsError> {
    check_aligned("predicted vs actual decisions", predicted.len(), actual.len())?;
    let (mut tp, mut fp, mut fn_, mut correct, mut support) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (p, a) in predicted.iter().zip(actual) {
        let (Some(p), Some(a)) = (p, a) else { continue };
        support += 1;
        if p == a {
            correct += 1;
        }
        match (p, a) {
            (Decision::Accept, Decision::Accept) => tp += 1,
            (Decision::Accept, Decision::Reject) => fp += 1,
            (Decision::Reject, Decision::Accept) => fn_ += 1,
            (Decision::Reject, Decision::Reject) => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(DecisionReport {
        accuracy: ratio(correct, support),
        precision,
        recall,
        f1: RougeScore::from_parts(recall, precision).f1,
        support,
        reason_similarity: None,
    })
}

/// Mean cosine between each generated reason and the matching meta-review,
/// over pairs where both exist. `None` if there are no such pairs.
pub fn reason_similarity(
    reasons: &[Option<String>],
    meta_reviews: &[Option<String>],
    embedder: &dyn Embedder,
) -> Result<Option<f64>, MetricsError> {
    check_aligned("reasons vs meta-reviews", reasons.len(), meta_reviews.len())?;
    let (left, right): (Vec<String>, Vec<String>) = reasons
        .iter()
        .zip(meta_reviews)
        .filter_map(|(r, m)| match (r, m) {
            (Some(r), Some(m)) if !r.trim().is_empty() && !m.trim().is_empty() => Some((r.clone(), m.clone())),
            _ => None,
        })
        .unzip();
    if left.is_empty() {
        return Ok(None);
    }
    let a = embedder.embed(&left)?;
    let b = embedder.embed(&right)?;
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| x.cosine(y)).sum();
    Ok(Some(sum / left.len() as f64))
}

/// Share of the combined n-gram (or LCS) mass a candidate holds in common
/// with a reference, and the shares exclusive to each side. The three
/// shares add up to one whenever either side is non-empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapShares {
    pub overlap: f64,
    pub reference_exclusive: f64,
    pub candidate_exclusive: f64,
    pub recall: f64,
    pub precision: f64,
}

impl From<OverlapCounts> for OverlapShares {
    fn from(c: OverlapCounts) -> Self {
        let union = c.reference_total + c.candidate_total - c.overlap;
        let share = |n: usize| if union == 0 { 0.0 } else { n as f64 / union as f64 };
        let score = c.score();
        OverlapShares {
            overlap: share(c.overlap),
            reference_exclusive: share(c.reference_total - c.overlap),
            candidate_exclusive: share(c.candidate_total - c.overlap),
            recall: score.recall,
            precision: score.precision,
        }
    }
}
