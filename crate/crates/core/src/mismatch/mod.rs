//! Review/paper mismatch scoring: ground-truth scores from reviewer ratings,
//! a bilinear regressor over embeddings, and the loops built on it.

mod checkpoint;
mod self_correct;

pub use checkpoint::{load_checkpoint, save_checkpoint, sidecar_path, CHECKPOINT_FORMAT};
pub use self_correct::{self_correct, SelfCorrectOutcome, TrialLogLine, TrialRecord, DEFAULT_MAX_TRIALS};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::PaperRecord;
use crate::llm_gateway::{EmbeddingVector, GatewayError};
use crate::reviewer::GenerationError;

#[derive(Debug, thiserror::Error)]
pub enum MismatchError {
    #[error("{0}")]
    InvalidInput(String),
    #[error("embedding has dimension {got}, model expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("confidences sum to zero")]
    ZeroConfidence,
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("all {0} trials failed")]
    AllTrialsFailed(u32),
    #[error(transparent)]
    Embedding(#[from] GatewayError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// Rating of review `index` minus the confidence-weighted mean rating of
/// all reviews of the paper.
pub fn true_mismatch(ratings: &[f64], confidences: &[f64], index: usize) -> Result<f64, MismatchError> {
    if ratings.is_empty() || ratings.len() != confidences.len() {
        return Err(MismatchError::InvalidInput(format!(
            "{} ratings and {} confidences",
            ratings.len(),
            confidences.len()
        )));
    }
    if index >= ratings.len() {
        return Err(MismatchError::InvalidInput(format!(
            "index {index} out of range for {} reviews",
            ratings.len()
        )));
    }
    if confidences.iter().any(|c| *c < 0.0 || !c.is_finite()) || ratings.iter().any(|r| !r.is_finite()) {
        return Err(MismatchError::InvalidInput(
            "ratings and confidences must be finite, confidences non-negative".into(),
        ));
    }
    let total: f64 = confidences.iter().sum();
    if total == 0.0 {
        return Err(MismatchError::ZeroConfidence);
    }
    let weighted: f64 = ratings.iter().zip(confidences).map(|(s, c)| s * c).sum::<f64>() / total;
    Ok(ratings[index] - weighted)
}

/// Ground-truth mismatch of every review of a paper, in review order.
pub fn paper_targets(record: &PaperRecord) -> Result<Vec<f64>, MismatchError> {
    let ratings: Vec<f64> = record.reviews.iter().map(|r| f64::from(r.rating)).collect();
    let confidences: Vec<f64> = record.reviews.iter().map(|r| f64::from(r.confidence)).collect();
    (0..ratings.len())
        .map(|i| true_mismatch(&ratings, &confidences, i))
        .collect()
}

/// Bilinear regressor. `w_q` and `w_k` are `proj_dim × embed_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchModel {
    embed_dim: usize,
    proj_dim: usize,
    w_q: Vec<f64>,
    w_k: Vec<f64>,
    w: f64,
    b: f64,
}

impl MismatchModel {
    pub fn new(
        embed_dim: usize,
        proj_dim: usize,
        w_q: Vec<f64>,
        w_k: Vec<f64>,
        w: f64,
        b: f64,
    ) -> Result<Self, MismatchError> {
        if embed_dim == 0 || proj_dim == 0 {
            return Err(MismatchError::InvalidInput("dimensions must be positive".into()));
        }
        let size = embed_dim * proj_dim;
        if w_q.len() != size || w_k.len() != size {
            return Err(MismatchError::InvalidInput(format!(
                "matrices must hold {proj_dim}×{embed_dim} = {size} entries, got {} and {}",
                w_q.len(),
                w_k.len()
            )));
        }
        if !w.is_finite() || !b.is_finite() || w_q.iter().chain(&w_k).any(|x| !x.is_finite()) {
            return Err(MismatchError::InvalidInput("model parameters must be finite".into()));
        }
        Ok(MismatchModel {
            embed_dim,
            proj_dim,
            w_q,
            w_k,
            w,
            b,
        })
    }

    /// Model whose projections are all zero; it predicts `b` everywhere.
    pub fn constant(embed_dim: usize, proj_dim: usize, b: f64) -> Result<Self, MismatchError> {
        let size = embed_dim * proj_dim;
        MismatchModel::new(embed_dim, proj_dim, vec![0.0; size], vec![0.0; size], 1.0, b)
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_dim
    }

    pub fn w_q(&self) -> &[f64] {
        &self.w_q
    }

    pub fn w_k(&self) -> &[f64] {
        &self.w_k
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    fn project(&self, m: &[f64], h: &[f64]) -> Vec<f64> {
        m.chunks_exact(self.embed_dim)
            .map(|row| row.iter().zip(h).map(|(a, x)| a * x).sum())
            .collect()
    }

    fn check(&self, h: &[f64]) -> Result<(), MismatchError> {
        if h.len() != self.embed_dim {
            return Err(MismatchError::DimMismatch {
                expected: self.embed_dim,
                got: h.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, h_p: &[f64], h_r: &[f64]) -> Forward {
        let q_p = self.project(&self.w_q, h_p);
        let k_p = self.project(&self.w_k, h_p);
        let q_r = self.project(&self.w_q, h_r);
        let k_r = self.project(&self.w_k, h_r);
        let s = dot(&q_p, &k_r) + dot(&q_r, &k_p);
        Forward { q_p, k_p, q_r, k_r, s }
    }

    pub fn predict_raw(&self, h_p: &[f64], h_r: &[f64]) -> Result<f64, MismatchError> {
        self.check(h_p)?;
        self.check(h_r)?;
        Ok(self.w * self.forward(h_p, h_r).s + self.b)
    }

    /// Estimated mismatch of review `h_r` against paper `h_p`. Symmetric in
    /// its two arguments.
    pub fn predict(&self, h_p: &EmbeddingVector, h_r: &EmbeddingVector) -> Result<f64, MismatchError> {
        self.predict_raw(h_p.values(), h_r.values())
    }
}

struct Forward {
    q_p: Vec<f64>,
    k_p: Vec<f64>,
    q_r: Vec<f64>,
    k_r: Vec<f64>,
    s: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchSample {
    pub paper_embedding: EmbeddingVector,
    pub review_embedding: EmbeddingVector,
    pub target: f64,
}

impl MismatchSample {
    pub fn new(
        paper_embedding: EmbeddingVector,
        review_embedding: EmbeddingVector,
        target: f64,
    ) -> Result<Self, MismatchError> {
        if paper_embedding.dim() != review_embedding.dim() {
            return Err(MismatchError::DimMismatch {
                expected: paper_embedding.dim(),
                got: review_embedding.dim(),
            });
        }
        if !target.is_finite() {
            return Err(MismatchError::InvalidInput("target must be finite".into()));
        }
        Ok(MismatchSample {
            paper_embedding,
            review_embedding,
            target,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub proj_dim: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            steps: 2000,
            proj_dim: 64,
            seed: 0,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MismatchError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MismatchError::InvalidInput("learning_rate must be positive".into()));
        }
        if self.steps == 0 || self.proj_dim == 0 {
            return Err(MismatchError::InvalidInput(
                "steps and proj_dim must be at least 1".into(),
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(MismatchError::InvalidInput("init_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Gradient of the mean squared error with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w: f64,
    pub b: f64,
}

fn check_samples(model: &MismatchModel, samples: &[MismatchSample]) -> Result<(), MismatchError> {
    if samples.is_empty() {
        return Err(MismatchError::InvalidInput("no samples".into()));
    }
    for s in samples {
        model.check(s.paper_embedding.values())?;
        model.check(s.review_embedding.values())?;
    }
    Ok(())
}

/// Mean squared error of `model` over `samples`.
pub fn mse(model: &MismatchModel, samples: &[MismatchSample]) -> Result<f64, MismatchError> {
    check_samples(model, samples)?;
    Ok(loss_unchecked(model, samples))
}

fn loss_unchecked(model: &MismatchModel, samples: &[MismatchSample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let f = model.forward(s.paper_embedding.values(), s.review_embedding.values());
            (model.w * f.s + model.b - s.target).powi(2)
        })
        .sum::<f64>()
        / samples.len() as f64
}

/// Mean squared error and its analytic gradient.
pub fn loss_and_gradients(
    model: &MismatchModel,
    samples: &[MismatchSample],
) -> Result<(f64, Gradients), MismatchError> {
    check_samples(model, samples)?;
    Ok(loss_and_gradients_unchecked(model, samples))
}

fn loss_and_gradients_unchecked(model: &MismatchModel, samples: &[MismatchSample]) -> (f64, Gradients) {
    let d = model.embed_dim;
    let n = samples.len() as f64;
    let mut grad = Gradients {
        w_q: vec![0.0; model.w_q.len()],
        w_k: vec![0.0; model.w_k.len()],
        w: 0.0,
        b: 0.0,
    };
    let mut loss = 0.0;
    for s in samples {
        let h_p = s.paper_embedding.values();
        let h_r = s.review_embedding.values();
        let f = model.forward(h_p, h_r);
        let err = model.w * f.s + model.b - s.target;
        loss += err * err;
        let g = 2.0 * err / n;
        grad.w += g * f.s;
        grad.b += g;
        let gw = g * model.w;
        for i in 0..model.proj_dim {
            let row = i * d;
            let (kr, kp, qp, qr) = (f.k_r[i], f.k_p[i], f.q_p[i], f.q_r[i]);
            for j in 0..d {
                grad.w_q[row + j] += gw * (kr * h_p[j] + kp * h_r[j]);
                grad.w_k[row + j] += gw * (qp * h_r[j] + qr * h_p[j]);
            }
        }
    }
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MismatchModel,
    /// Mean loss before each update; entry 0 is the loss at initialization.
    pub loss_trace: Vec<f64>,
    /// Mean loss after the last update.
    pub final_loss: f64,
}

/// Full-batch gradient descent. Projections start as seeded Gaussian noise
/// scaled by `init_scale`, `w` at 1 and `b` at the mean target.
pub fn train(samples: &[MismatchSample], config: &TrainConfig) -> Result<TrainOutcome, MismatchError> {
    config.validate()?;
    let embed_dim = samples
        .first()
        .map(|s| s.paper_embedding.dim())
        .ok_or_else(|| MismatchError::InvalidInput("no samples".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = embed_dim * config.proj_dim;
    let mut init = |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * config.init_scale
    };
    let w_q: Vec<f64> = (0..size).map(&mut init).collect();
    let w_k: Vec<f64> = (0..size).map(&mut init).collect();
    let mean_target = samples.iter().map(|s| s.target).sum::<f64>() / samples.len() as f64;
    let mut model = MismatchModel::new(embed_dim, config.proj_dim, w_q, w_k, 1.0, mean_target)?;
    check_samples(&model, samples)?;

    let lr = config.learning_rate;
    let mut loss_trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let (loss, grad) = loss_and_gradients_unchecked(&model, samples);
        if !loss.is_finite() {
            return Err(MismatchError::Diverged { step, loss });
        }
        loss_trace.push(loss);
        for (p, g) in model.w_q.iter_mut().zip(&grad.w_q) {
            *p -= lr * g;
        }
        for (p, g) in model.w_k.iter_mut().zip(&grad.w_k) {
            *p -= lr * g;
        }
        model.w -= lr * grad.w;
        model.b -= lr * grad.b;
    }
    let final_loss = loss_unchecked(&model, samples);
    if !final_loss.is_finite() || model.w_q.iter().chain(&model.w_k).any(|x| !x.is_finite()) {
        return Err(MismatchError::Diverged {
            step: config.steps,
            loss: final_loss,
        });
    }
    Ok(TrainOutcome {
        model,
        loss_trace,
        final_loss,
    })
}

/// Mean absolute prediction over a validation set.
pub fn compute_threshold(model: &MismatchModel, validation: &[MismatchSample]) -> Result<f64, MismatchError> {
    check_samples(model, validation)?;
    let sum: f64 = validation
        .iter()
        .map(|s| model.forward(s.paper_embedding.values(), s.review_embedding.values()))
        .map(|f| (model.w * f.s + model.b).abs())
        .sum();
    Ok(sum / validation.len() as f64)
}

/// Seeded uniformly random permutation of `0..n` with no fixed points.
pub fn derangement(n: usize, seed: u64) -> Result<Vec<usize>, MismatchError> {
    if n < 2 {
        return Err(MismatchError::InvalidInput(
            "a derangement needs at least 2 items".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, p)| i != *p) {
            return Ok(perm);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativePairResult {
    pub matched_mean: f64,
    pub shuffled_mean: f64,
    /// Paper `i` was paired with the review of paper `permutation[i]`.
    pub permutation: Vec<usize>,
}

/// Mean |prediction| for each paper with its own review versus with a review
/// of another paper.
pub fn negative_pair_eval(
    model: &MismatchModel,
    pairs: &[(EmbeddingVector, EmbeddingVector)],
    seed: u64,
) -> Result<NegativePairResult, MismatchError> {
    let permutation = derangement(pairs.len(), seed)?;
    let mut matched = 0.0;
    let mut shuffled = 0.0;
    for (i, (paper, review)) in pairs.iter().enumerate() {
        matched += model.predict(paper, review)?.abs();
        shuffled += model.predict(paper, &pairs[permutation[i]].1)?.abs();
    }
    let n = pairs.len() as f64;
    Ok(NegativePairResult {
        matched_mean: matched / n,
        shuffled_mean: shuffled / n,
        permutation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn identity2() -> MismatchModel {
        MismatchModel::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0], 1.0, 0.0).unwrap()
    }

    #[test]
    fn eq1_examples() {
        let full = [1.0; 4];
        assert_eq!(true_mismatch(&[2.0, 6.0, 6.0, 6.0], &full, 0).unwrap(), -3.0);
        assert_eq!(true_mismatch(&[7.0], &[3.0], 0).unwrap(), 0.0);
        let v = true_mismatch(&[4.0, 8.0], &[1.0, 2.0], 0).unwrap();
        assert!((v - (4.0 - 20.0 / 3.0)).abs() < 1e-12);
        assert!(matches!(
            true_mismatch(&[1.0, 2.0], &[0.0, 0.0], 0),
            Err(MismatchError::ZeroConfidence)
        ));
        assert!(true_mismatch(&[1.0, 2.0], &[1.0], 0).is_err());
        assert!(true_mismatch(&[1.0], &[1.0], 1).is_err());
    }

    #[test]
    fn hand_model() {
        let m = identity2();
        assert_eq!(m.predict(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(m.predict(&ev(&[1.0, 1.0]), &ev(&[1.0, 1.0])).unwrap(), 4.0);
        let zero = MismatchModel::constant(2, 3, 0.7).unwrap();
        assert_eq!(zero.predict(&ev(&[5.0, -1.0]), &ev(&[2.0, 2.0])).unwrap(), 0.7);
        assert!(matches!(
            m.predict(&ev(&[1.0]), &ev(&[1.0, 0.0])),
            Err(MismatchError::DimMismatch { .. })
        ));
    }

    #[test]
    fn exact_fit_single_sample() {
        let sample = MismatchSample::new(ev(&[0.3, -0.2]), ev(&[0.1, 0.9]), 1.5).unwrap();
        let config = TrainConfig {
            init_scale: 0.0,
            steps: 3,
            proj_dim: 2,
            ..TrainConfig::default()
        };
        let out = train(&[sample], &config).unwrap();
        assert_eq!(out.loss_trace[0], 0.0);
        assert_eq!(out.final_loss, 0.0);
    }

    #[test]
    fn divergence_names_step() {
        let samples: Vec<_> = (0..4)
            .map(|i| MismatchSample::new(ev(&[10.0 + i as f64, 3.0]), ev(&[-4.0, 9.0]), 100.0 * i as f64).unwrap())
            .collect();
        let config = TrainConfig {
            learning_rate: 10.0,
            init_scale: 1.0,
            proj_dim: 2,
            steps: 500,
            seed: 1,
        };
        assert!(matches!(train(&samples, &config), Err(MismatchError::Diverged { .. })));
    }

    #[test]
    fn threshold_mean_abs() {
        let m = MismatchModel::new(1, 1, vec![1.0], vec![1.0], 1.0, 0.0).unwrap();
        // predict = 2 * h_p * h_r for this model
        let s = |p: f64, r: f64| MismatchSample::new(ev(&[p]), ev(&[r]), 0.0).unwrap();
        assert!((compute_threshold(&m, &[s(0.1, 1.0), s(-0.2, 1.0)]).unwrap() - 0.3).abs() < 1e-12);
        assert!((compute_threshold(&m, &[s(0.25, 1.0)]).unwrap() - 0.5).abs() < 1e-12);
        assert!(compute_threshold(&m, &[]).is_err());
    }

    #[test]
    fn derangements() {
        assert_eq!(derangement(2, 9).unwrap(), vec![1, 0]);
        for seed in 0..20 {
            let p = derangement(7, seed).unwrap();
            assert!(p.iter().enumerate().all(|(i, x)| i != *x));
            let mut sorted = p.clone();
            sorted.sort();
            assert_eq!(sorted, (0..7).collect::<Vec<_>>());
            assert_eq!(p, derangement(7, seed).unwrap());
        }
        assert!(derangement(1, 0).is_err());
    }

    #[test]
    fn constant_model_negative_pairs() {
        let m = MismatchModel::constant(2, 2, -0.4).unwrap();
        let pairs = vec![
            (ev(&[1.0, 0.0]), ev(&[0.0, 1.0])),
            (ev(&[0.5, 0.5]), ev(&[1.0, 1.0])),
            (ev(&[2.0, 0.0]), ev(&[0.0, 3.0])),
        ];
        let r = negative_pair_eval(&m, &pairs, 3).unwrap();
        assert_eq!(r.matched_mean, r.shuffled_mean);
    }
}
