//! Shared inputs for the benchmarks.

use sea_core::llm_gateway::mock::HashEmbedder;
use sea_core::{EmbeddingVector, MismatchSample};

/// Deterministic pseudo-prose of `words` tokens.
pub fn prose(seed: u64, words: usize) -> String {
    const VOCAB: [&str; 16] = [
        "model",
        "training",
        "results",
        "baseline",
        "the",
        "we",
        "propose",
        "method",
        "data",
        "evaluation",
        "novel",
        "approach",
        "experiments",
        "show",
        "improves",
        "task",
    ];
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..words)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            VOCAB[(state >> 60) as usize]
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `n` paper/review pairs embedded with the hash embedder, targets in [-1, 1).
pub fn samples(n: usize, dim: usize) -> Vec<MismatchSample> {
    let embedder = HashEmbedder::new(dim, 7);
    (0..n)
        .map(|i| {
            let p = EmbeddingVector::new(embedder.vector(&format!("paper {i}"))).unwrap();
            let r = EmbeddingVector::new(embedder.vector(&format!("review {i}"))).unwrap();
            let target = (i % 20) as f64 / 10.0 - 1.0;
            MismatchSample::new(p, r, target).unwrap()
        })
        .collect()
}
