use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sea_core::llm_gateway::mock::HashEmbedder;
use sea_core::llm_gateway::{Embedder, EmbeddingVector, GatewayError};
use sea_core::mismatch::*;
use sea_core::reviewer::{GeneratedReview, GenerationError, ReviewGenerator};
use sea_core::PromptKit;

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

fn ev(v: Vec<f64>) -> EmbeddingVector {
    EmbeddingVector::new(v).unwrap()
}

fn random_model(rng: &mut ChaCha8Rng, d: usize, p: usize) -> MismatchModel {
    let w_q = gaussian(rng, d * p, 0.5);
    let w_k = gaussian(rng, d * p, 0.5);
    let w = rng.random_range(-2.0..2.0);
    let b = rng.random_range(-1.0..1.0);
    MismatchModel::new(d, p, w_q, w_k, w, b).unwrap()
}

fn with_params(m: &MismatchModel, w_q: Vec<f64>, w_k: Vec<f64>, w: f64, b: f64) -> MismatchModel {
    MismatchModel::new(m.embed_dim(), m.proj_dim(), w_q, w_k, w, b).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, 8, 4);
        let samples: Vec<_> = (0..6)
            .map(|_| {
                let p = ev(gaussian(&mut rng, 8, 1.0));
                let r = ev(gaussian(&mut rng, 8, 1.0));
                MismatchSample::new(p, r, rng.random_range(-3.0..3.0)).unwrap()
            })
            .collect();
        let (_, grad) = loss_and_gradients(&model, &samples).unwrap();
        let numeric = |plus: MismatchModel, minus: MismatchModel| {
            (mse(&plus, &samples).unwrap() - mse(&minus, &samples).unwrap()) / (2.0 * eps)
        };
        let mut check = |analytic: f64, num: f64| {
            let rel = (analytic - num).abs() / analytic.abs().max(num.abs()).max(1e-6);
            worst = worst.max(rel);
        };
        for i in 0..model.w_q().len() {
            let mut a = model.w_q().to_vec();
            let mut b = model.w_q().to_vec();
            a[i] += eps;
            b[i] -= eps;
            let n = numeric(
                with_params(&model, a, model.w_k().to_vec(), model.w(), model.b()),
                with_params(&model, b, model.w_k().to_vec(), model.w(), model.b()),
            );
            check(grad.w_q[i], n);
            let mut a = model.w_k().to_vec();
            let mut b = model.w_k().to_vec();
            a[i] += eps;
            b[i] -= eps;
            let n = numeric(
                with_params(&model, model.w_q().to_vec(), a, model.w(), model.b()),
                with_params(&model, model.w_q().to_vec(), b, model.w(), model.b()),
            );
            check(grad.w_k[i], n);
        }
        let (q, k) = (model.w_q().to_vec(), model.w_k().to_vec());
        let n = numeric(
            with_params(&model, q.clone(), k.clone(), model.w() + eps, model.b()),
            with_params(&model, q.clone(), k.clone(), model.w() - eps, model.b()),
        );
        check(grad.w, n);
        let n = numeric(
            with_params(&model, q.clone(), k.clone(), model.w(), model.b() + eps),
            with_params(&model, q, k, model.w(), model.b() - eps),
        );
        check(grad.b, n);
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

/// Hash-mock vectors rescaled to unit variance per component.
fn hash_vec(emb: &HashEmbedder, text: &str) -> EmbeddingVector {
    let scale = (emb_dim(emb) as f64).sqrt();
    ev(emb.vector(text).into_iter().map(|x| x * scale).collect())
}

fn emb_dim(emb: &HashEmbedder) -> usize {
    emb.vector("probe").len()
}

#[test]
fn recovers_planted_model() {
    let emb = HashEmbedder::new(8, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let planted = MismatchModel::new(8, 4, gaussian(&mut rng, 32, 0.5), gaussian(&mut rng, 32, 0.5), 1.0, 0.1).unwrap();
    let samples: Vec<_> = (0..64)
        .map(|i| {
            let p = hash_vec(&emb, &format!("paper {i}"));
            let r = hash_vec(&emb, &format!("review {i}"));
            let t = planted.predict(&p, &r).unwrap();
            MismatchSample::new(p, r, t).unwrap()
        })
        .collect();
    let config = TrainConfig {
        learning_rate: 0.01,
        steps: 5000,
        proj_dim: 4,
        seed: 11,
        init_scale: 0.2,
    };
    let out = train(&samples, &config).unwrap();
    assert!(out.final_loss < 1e-4, "final loss {}", out.final_loss);
    assert_eq!(out.loss_trace.len(), 5000);
    let again = train(&samples, &config).unwrap();
    assert_eq!(again.model, out.model);
    assert_eq!(again.loss_trace, out.loss_trace);
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn shuffled_pairs_score_higher() {
    let d = 8;
    for seed in 0..3u64 {
        let emb = HashEmbedder::new(d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let scale = (d as f64).sqrt();
        let papers: Vec<Vec<f64>> = (0..50).map(|i| emb.vector(&format!("paper {i}"))).collect();
        let reviews: Vec<Vec<f64>> = papers
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let e = emb.vector(&format!("review {i}"));
                unit(p.iter().zip(&e).map(|(a, b)| a + 0.2 * b).collect())
            })
            .collect();
        let v = |x: &Vec<f64>| ev(x.iter().map(|y| y * scale).collect());
        let mut samples = Vec::new();
        for i in 0..35 {
            samples.push(MismatchSample::new(v(&papers[i]), v(&reviews[i]), noise.sample(&mut rng)).unwrap());
            let j = (i + 1 + rng.random_range(0..34)) % 35;
            samples.push(MismatchSample::new(v(&papers[i]), v(&reviews[j]), 1.0 + noise.sample(&mut rng)).unwrap());
        }
        let config = TrainConfig {
            learning_rate: 0.05,
            steps: 2000,
            proj_dim: d,
            seed,
            init_scale: 0.1,
        };
        let model = train(&samples, &config).unwrap().model;
        let held: Vec<_> = (35..50).map(|i| (v(&papers[i]), v(&reviews[i]))).collect();
        let r = negative_pair_eval(&model, &held, seed).unwrap();
        assert!(r.shuffled_mean > r.matched_mean, "{r:?}");
        assert_eq!(r, negative_pair_eval(&model, &held, seed).unwrap());
    }
}

fn ratings_and_confidences() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|m| {
        (
            prop::collection::vec(1u8..=10, m).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(1u8..=5, m).prop_map(|v| v.into_iter().map(f64::from).collect()),
        )
    })
}

proptest! {
    #[test]
    fn eq1_centering((s, c) in ratings_and_confidences()) {
        let total: f64 = (0..s.len()).map(|i| c[i] * true_mismatch(&s, &c, i).unwrap()).sum();
        prop_assert!(total.abs() < 1e-9);
    }

    #[test]
    fn eq1_shift_invariance((s, c) in ratings_and_confidences(), delta in -5.0f64..5.0) {
        let shifted: Vec<f64> = s.iter().map(|x| x + delta).collect();
        for i in 0..s.len() {
            let a = true_mismatch(&s, &c, i).unwrap();
            let b = true_mismatch(&shifted, &c, i).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn exchange_symmetry(seed in any::<u64>(), d in 1usize..6, p in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, d, p);
        let a = ev(gaussian(&mut rng, d, 1.0));
        let b = ev(gaussian(&mut rng, d, 1.0));
        prop_assert_eq!(m.predict(&a, &b).unwrap(), m.predict(&b, &a).unwrap());
    }
}

/// Returns the golden review with a `[score X]` tag per call, from a fixed
/// list of scores.
struct ScriptedScores {
    scores: Vec<Option<f64>>,
    calls: AtomicUsize,
}

impl ReviewGenerator for ScriptedScores {
    fn generate(&self, _prompt: &str) -> Result<GeneratedReview, GenerationError> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        let Some(score) = self.scores[i.min(self.scores.len() - 1)] else {
            return Err(GenerationError::Precondition("scripted failure".into()));
        };
        let mut review = sea_core::format_contract::parse(include_str!("fixtures/golden_generated.txt")).unwrap();
        review.reasons = format!("[score {score}]");
        let raw_text = review.to_text();
        Ok(GeneratedReview {
            token_count: raw_text.split_whitespace().count(),
            review,
            raw_text,
            attempts: 1,
        })
    }
}

/// Maps a review tagged `[score s]` to `(s/2, 0)`; with the identity model
/// and paper `(1, 0)` the prediction is exactly `s`.
struct PinnedEmbedder;

impl Embedder for PinnedEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        texts
            .iter()
            .map(|t| {
                let tag = t.split("[score ").nth(1).and_then(|r| r.split(']').next()).unwrap();
                EmbeddingVector::new(vec![tag.parse::<f64>().unwrap() / 2.0, 0.0])
            })
            .collect()
    }
}

fn run_scripted(scores: Vec<Option<f64>>, theta: f64) -> (SelfCorrectOutcome, usize) {
    let model = MismatchModel::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0], 1.0, 0.0).unwrap();
    let generator = ScriptedScores {
        scores,
        calls: AtomicUsize::new(0),
    };
    let out = self_correct(
        "A paper body.",
        &ev(vec![1.0, 0.0]),
        &PromptKit::builtin(),
        &generator,
        &PinnedEmbedder,
        &model,
        theta,
        DEFAULT_MAX_TRIALS,
    )
    .unwrap();
    (out, generator.calls.load(Ordering::SeqCst))
}

#[test]
fn self_correct_policy() {
    let theta = 0.4;
    let (out, calls) = run_scripted(vec![Some(theta - 0.1)], theta);
    assert_eq!((out.trial, calls, out.log.len()), (1, 1, 1));

    let (out, calls) = run_scripted(vec![Some(theta + 0.5), Some(theta + 0.3), Some(theta - 0.1)], theta);
    assert_eq!((out.trial, calls), (3, 3));
    assert!(out.log[2].accepted && out.log[2].selected);

    let mut scores: Vec<Option<f64>> = (0..10).map(|i| Some(theta + 1.0 + i as f64 * 0.1)).collect();
    scores[6] = Some(-(theta + 0.05));
    let (out, calls) = run_scripted(scores, theta);
    assert_eq!((out.trial, calls, out.log.len()), (7, 10, 10));
    assert_eq!(out.log.iter().filter(|t| t.selected).count(), 1);
}

#[test]
fn self_correct_skips_failed_trials() {
    let theta = 0.1;
    let (out, calls) = run_scripted(vec![None, Some(0.9), None, Some(-0.5), None], theta);
    assert_eq!(calls, 10);
    assert_eq!(out.trial, 4);
    assert_eq!(out.log.iter().filter(|t| t.score.is_none()).count(), 8);
}
