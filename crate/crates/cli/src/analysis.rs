use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use sea_core::corpus::{self, DatasetSplit, PaperRecord};
use sea_core::llm_gateway::Embedder;
use sea_core::mismatch::{
    self, load_checkpoint, save_checkpoint, self_correct as correct, TrialLogLine, DEFAULT_MAX_TRIALS,
};
use sea_core::parallel::map_ordered;
use sea_core::reviewer::ReviewRecord;
use sea_core::{MismatchSample, Reviewer, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::context::{all_failed, read_json, read_jsonl, select_subset, sibling, write_json, write_jsonl, Settings};
use crate::{CliError, Subset};

#[derive(Debug, Args)]
pub struct HoldoutArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Share of train papers used for fitting; the rest is validation.
    #[arg(long, default_value_t = 0.8)]
    pub holdout: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: HoldoutArgs,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub proj_dim: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub data: HoldoutArgs,
    /// Checkpoint from `sea train-mismatch`.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelfCorrectArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,
    #[arg(long)]
    pub model: PathBuf,
    /// Output of `sea threshold`.
    #[arg(long)]
    pub theta: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_TRIALS)]
    pub max_trials: u32,
    /// Defaults to `<endpoint>-sc`.
    #[arg(long)]
    pub model_tag: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub theta: f64,
    pub pairs: usize,
}

/// Fitting and validation papers of the train split.
fn holdout<'a>(
    settings: &Settings,
    records: &'a [PaperRecord],
    args: &HoldoutArgs,
) -> Result<(Vec<&'a PaperRecord>, Vec<&'a PaperRecord>), CliError> {
    let split: DatasetSplit = read_json(&args.split)?;
    let (fit, validation) =
        corpus::holdout_split(&split.train_ids, args.holdout, settings.seed).map_err(CliError::input)?;
    let pick = |ids: &[String]| {
        corpus::select(records, ids).map_err(|id| CliError::input(format!("split names unknown paper `{id}`")))
    };
    Ok((pick(&fit)?, pick(&validation)?))
}

/// One sample per non-empty review, targeted at its rating minus the
/// confidence-weighted paper mean.
fn build_samples(papers: &[&PaperRecord], embedder: &dyn Embedder) -> Result<Vec<MismatchSample>, CliError> {
    let mut texts = Vec::new();
    let mut layout = Vec::new();
    for paper in papers {
        let targets = match mismatch::paper_targets(paper) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("{}: skipped, {e}", paper.paper_id);
                continue;
            }
        };
        let reviews: Vec<(String, f64)> = paper
            .reviews
            .iter()
            .zip(targets)
            .map(|(r, t)| (r.full_text(), t))
            .filter(|(text, _)| !text.trim().is_empty())
            .collect();
        if reviews.is_empty() || paper.body.trim().is_empty() {
            continue;
        }
        let paper_idx = texts.len();
        texts.push(paper.body.clone());
        for (text, target) in reviews {
            layout.push((paper_idx, texts.len(), target));
            texts.push(text);
        }
    }
    if layout.is_empty() {
        return Err(CliError::input("no paper/review pairs to embed"));
    }
    let vectors = embedder.embed(&texts).map_err(CliError::pipeline)?;
    layout
        .into_iter()
        .map(|(p, r, target)| {
            MismatchSample::new(vectors[p].clone(), vectors[r].clone(), target).map_err(CliError::pipeline)
        })
        .collect()
}

pub fn train(settings: &Settings, args: TrainArgs) -> Result<(), CliError> {
    let out = settings.out()?;
    let records: Vec<PaperRecord> = read_jsonl(&args.data.records)?;
    let (fit, _) = holdout(settings, &records, &args.data)?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
        steps: args.steps.unwrap_or(defaults.steps),
        proj_dim: args.proj_dim.unwrap_or(defaults.proj_dim),
        seed: settings.seed,
        init_scale: args.init_scale.unwrap_or(defaults.init_scale),
    };
    config.validate().map_err(CliError::input)?;
    let gateway = settings.embed_gateway()?;
    let samples = build_samples(&fit, &gateway)?;
    let outcome = mismatch::train(&samples, &config).map_err(CliError::pipeline)?;
    save_checkpoint(out, &outcome.model, &config).map_err(CliError::input)?;
    let mut trace = String::new();
    for loss in &outcome.loss_trace {
        let _ = writeln!(trace, "{loss}");
    }
    let loss_path = sibling(out, ".loss.txt");
    fs::write(&loss_path, trace).map_err(|e| CliError::input(format!("{}: {e}", loss_path.display())))?;
    println!("{} samples, final loss {:.6}", samples.len(), outcome.final_loss);
    Ok(())
}

pub fn threshold(settings: &Settings, args: ThresholdArgs) -> Result<(), CliError> {
    let out = settings.out()?;
    let records: Vec<PaperRecord> = read_jsonl(&args.data.records)?;
    let (_, validation) = holdout(settings, &records, &args.data)?;
    let model = load_checkpoint(&args.model).map_err(CliError::input)?;
    let gateway = settings.embed_gateway()?;
    let samples = build_samples(&validation, &gateway)?;
    let theta = mismatch::compute_threshold(&model, &samples).map_err(CliError::pipeline)?;
    write_json(
        out,
        &ThresholdFile {
            theta,
            pairs: samples.len(),
        },
    )?;
    println!("theta {theta:.6} over {} pairs", samples.len());
    Ok(())
}

fn read_theta(path: &Path) -> Result<f64, CliError> {
    let file: ThresholdFile = read_json(path)?;
    if !(file.theta >= 0.0 && file.theta.is_finite()) {
        return Err(CliError::input(format!(
            "{}: theta must be a non-negative number",
            path.display()
        )));
    }
    Ok(file.theta)
}

pub fn self_correct(settings: &Settings, args: SelfCorrectArgs) -> Result<(), CliError> {
    let out = settings.out()?;
    let records: Vec<PaperRecord> = read_jsonl(&args.records)?;
    let selected = select_subset(&records, args.split.as_deref(), args.subset)?;
    let model = load_checkpoint(&args.model).map_err(CliError::input)?;
    let theta = read_theta(&args.theta)?;
    let kit = settings.prompts()?;
    let reviewer = Reviewer::new(settings.chat_gateway()?, kit.clone(), settings.generation_config()?)
        .with_tokenizer(settings.tokenizer()?);
    let embedder = settings.embed_gateway()?;
    let tag = args.model_tag.unwrap_or_else(|| format!("{}-sc", reviewer.model_tag()));
    let results = map_ordered(&selected, settings.parallel, |paper| {
        let embedding = embedder
            .embed(std::slice::from_ref(&paper.body))
            .map_err(|e| e.to_string())?
            .remove(0);
        correct(
            &paper.body,
            &embedding,
            &kit,
            &reviewer,
            &embedder,
            &model,
            theta,
            args.max_trials,
        )
        .map_err(|e| e.to_string())
    });
    let mut lines = Vec::new();
    let mut log: Vec<TrialLogLine> = Vec::new();
    let mut failures = Vec::new();
    for (paper, result) in selected.iter().zip(results) {
        match result {
            Ok(outcome) => {
                log.extend(outcome.log_lines(&paper.paper_id));
                lines.push(ReviewRecord::new(&paper.paper_id, &tag, &outcome.review));
            }
            Err(e) => {
                log::warn!("{}: self-correction failed: {e}", paper.paper_id);
                failures.push(crate::generation::Failure {
                    paper_id: paper.paper_id.clone(),
                    error: e,
                });
            }
        }
    }
    if lines.is_empty() && !failures.is_empty() {
        return Err(all_failed("papers", failures.len(), &failures[0].error));
    }
    write_jsonl(out, &lines)?;
    write_jsonl(&sibling(out, ".trials.jsonl"), &log)?;
    write_jsonl(&sibling(out, ".failures.jsonl"), &failures)?;
    println!("{} reviews, {} failed", lines.len(), failures.len());
    Ok(())
}
