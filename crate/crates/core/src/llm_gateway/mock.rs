//! Deterministic stand-ins for model endpoints.
//!
//! - [`ScriptedChat`] returns fixed replies per call, optionally keyed on a
//!   marker substring of the prompt so concurrent callers stay reproducible.
//! - [`TemplateFiller`] writes a conforming nine-section review whose content
//!   and scores are a pure function of the prompt.
//! - [`HashEmbedder`] maps text to a seeded pseudo-random unit vector.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, ChatRequest, EmbeddingBackend};
use crate::corpus::Decision;
use crate::format_contract::{AspectScore, ScoreAspect, StructuredReview};

/// First eight bytes of SHA-256 over `salt || text`.
pub fn stable_hash(salt: u64, text: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(salt.to_le_bytes());
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Text(String),
    Transient(String),
    Fatal(String),
}

impl Reply {
    pub fn text(s: impl Into<String>) -> Self {
        Reply::Text(s.into())
    }

    pub fn transient(s: impl Into<String>) -> Self {
        Reply::Transient(s.into())
    }

    pub fn fatal(s: impl Into<String>) -> Self {
        Reply::Fatal(s.into())
    }
}

/// Replies in script order; once a script runs out its last entry repeats.
///
/// Keyed scripts apply to prompts containing the key and keep their own call
/// counters, so the reply a paper receives does not depend on thread timing.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    default: Vec<Reply>,
    keyed: Vec<(String, Vec<Reply>)>,
    counters: Mutex<HashMap<Option<usize>, usize>>,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedChat {
    pub fn new(default: Vec<Reply>) -> Self {
        ScriptedChat {
            default,
            ..Default::default()
        }
    }

    /// Prompts containing `marker` draw from `replies` instead of the default script.
    pub fn on(mut self, marker: impl Into<String>, replies: Vec<Reply>) -> Self {
        self.keyed.push((marker.into(), replies));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every prompt received, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn next(&self, prompt: &str) -> Reply {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(prompt.to_string());
        let key = self
            .keyed
            .iter()
            .position(|(marker, _)| prompt.contains(marker.as_str()));
        let script = match key {
            Some(k) => &self.keyed[k].1,
            None => &self.default,
        };
        let mut counters = self.counters.lock().unwrap_or_else(|e| e.into_inner());
        let n = counters.entry(key).or_insert(0);
        let idx = (*n).min(script.len().saturating_sub(1));
        *n += 1;
        script.get(idx).cloned().unwrap_or_else(|| Reply::fatal("empty script"))
    }
}

impl ChatBackend for ScriptedChat {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        match self.next(request.prompt) {
            Reply::Text(t) => Ok(t),
            Reply::Transient(m) => Err(BackendError::Transient(m)),
            Reply::Fatal(m) => Err(BackendError::Fatal(m)),
        }
    }
}

/// Wraps a backend and records the peak number of concurrent calls.
#[derive(Debug)]
pub struct InstrumentedChat<B> {
    inner: B,
    hold: Duration,
    active: AtomicUsize,
    peak: AtomicUsize,
}

impl<B> InstrumentedChat<B> {
    /// `hold` keeps each call open for a while so overlaps become visible.
    pub fn new(inner: B, hold: Duration) -> Self {
        InstrumentedChat {
            inner,
            hold,
            active: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn max_concurrent(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for InstrumentedChat<B> {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(self.hold);
        let out = self.inner.chat(request);
        self.active.fetch_sub(1, Ordering::SeqCst);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReviewScores {
    pub soundness: u8,
    pub presentation: u8,
    pub contribution: u8,
    pub rating: u8,
}

/// Emits syntactically valid nine-section reviews built from the prompt's words.
#[derive(Debug, Clone, Default)]
pub struct TemplateFiller {
    scores: Option<ReviewScores>,
}

const PAPER_ANCHOR: &str = "The paper is as follows:";
const REVIEWS_ANCHOR: &str = "Reviewer 1:";
const CORRECTION_ANCHOR: &str = "\n\nNote: the review you previously";

impl TemplateFiller {
    /// Scores derived from the prompt hash.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_scores(scores: ReviewScores) -> Self {
        TemplateFiller { scores: Some(scores) }
    }

    /// The review text this mock returns for `prompt`.
    pub fn review_for(&self, prompt: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(0x5eed, prompt));
        let source = source_text(prompt);
        let mut words: Vec<&str> = source
            .split_whitespace()
            .filter(|w| w.chars().any(char::is_alphanumeric))
            .collect();
        if words.is_empty() {
            words.push("paper");
        }
        let phrase = |rng: &mut ChaCha8Rng, n: usize| -> String {
            (0..n)
                .map(|_| *words.choose(rng).unwrap_or(&"paper"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let summary_len = words.len().clamp(1, 40);
        let summary = format!("The paper studies {}.", words[..summary_len].join(" "));
        let list = |rng: &mut ChaCha8Rng, lead: &str| -> Vec<String> {
            let n = rng.random_range(2..=3);
            (0..n).map(|_| format!("{lead} {}.", phrase(rng, 10))).collect()
        };
        let strengths = list(&mut rng, "The work offers");
        let weaknesses = list(&mut rng, "The analysis lacks");
        let questions = list(&mut rng, "Could the authors clarify");
        let scores = self.scores.unwrap_or_else(|| ReviewScores {
            soundness: rng.random_range(1..=4),
            presentation: rng.random_range(1..=4),
            contribution: rng.random_range(1..=4),
            rating: rng.random_range(1..=10),
        });
        let decision = if scores.rating >= 6 {
            Decision::Accept
        } else {
            Decision::Reject
        };
        let score = |aspect: ScoreAspect, value: u8| {
            AspectScore::new(aspect, value.clamp(1, aspect.max())).expect("clamped into range")
        };
        StructuredReview {
            summary,
            strengths,
            weaknesses,
            questions,
            soundness: score(ScoreAspect::Soundness, scores.soundness),
            presentation: score(ScoreAspect::Presentation, scores.presentation),
            contribution: score(ScoreAspect::Contribution, scores.contribution),
            rating: score(ScoreAspect::Rating, scores.rating),
            decision,
            reasons: format!("The decision weighs {}.", phrase(&mut rng, 12)),
        }
        .to_text()
    }
}

/// The part of a prompt that carries the paper or the reviews.
fn source_text(prompt: &str) -> &str {
    let body = prompt.split(CORRECTION_ANCHOR).next().unwrap_or(prompt);
    if let Some(idx) = body.rfind(PAPER_ANCHOR) {
        &body[idx + PAPER_ANCHOR.len()..]
    } else if let Some(idx) = body.find(REVIEWS_ANCHOR) {
        &body[idx..]
    } else {
        body
    }
}

impl ChatBackend for TemplateFiller {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        Ok(self.review_for(request.prompt))
    }
}

/// Text → seeded Gaussian direction normalized to unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim, seed }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(self.seed, text));
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format_contract;
    use crate::llm_gateway::GenerationConfig;

    fn ask(backend: &dyn ChatBackend, prompt: &str) -> Result<String, BackendError> {
        let config = GenerationConfig::default();
        backend.chat(&ChatRequest {
            model: "m",
            prompt,
            config: &config,
        })
    }

    #[test]
    fn keyed_scripts_have_own_counters() {
        let chat = ScriptedChat::new(vec![Reply::text("d1"), Reply::text("d2")])
            .on("PAPER-B", vec![Reply::text("b1"), Reply::text("b2")]);
        assert_eq!(ask(&chat, "about PAPER-B").unwrap(), "b1");
        assert_eq!(ask(&chat, "other").unwrap(), "d1");
        assert_eq!(ask(&chat, "other").unwrap(), "d2");
        assert_eq!(ask(&chat, "other").unwrap(), "d2");
        assert_eq!(ask(&chat, "PAPER-B again").unwrap(), "b2");
        assert_eq!(chat.calls(), 5);
    }

    #[test]
    fn template_filler_conforms_and_is_pure() {
        let filler = TemplateFiller::new();
        let prompt = "Review this. The paper is as follows: We study sparse attention for long documents.";
        let a = ask(&filler, prompt).unwrap();
        assert_eq!(a, ask(&filler, prompt).unwrap());
        assert!(format_contract::validate(&a).is_valid, "{a}");
        assert!(a.contains("sparse attention"));
        let b = ask(&filler, "The paper is as follows: something else entirely").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn template_filler_fixed_scores() {
        let filler = TemplateFiller::with_scores(ReviewScores {
            soundness: 3,
            presentation: 2,
            contribution: 4,
            rating: 8,
        });
        let review = format_contract::parse(&filler.review_for("anything")).unwrap();
        assert_eq!(review.rating.value, 8);
        assert_eq!(review.presentation.label, "fair");
        assert_eq!(review.decision, Decision::Accept);
    }

    #[test]
    fn hash_embedder_properties() {
        let e = HashEmbedder::new(32, 9);
        let a = e.vector("same text");
        assert_eq!(a, e.vector("same text"));
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            let len = rng.random_range(1..20);
            let s: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
            if seen.insert(s.clone()) {
                let v = e.vector(&s);
                assert_ne!(v, e.vector(&format!("{s}!")));
            }
        }
        assert_ne!(HashEmbedder::new(32, 10).vector("same text"), a);
    }
}
