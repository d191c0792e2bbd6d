use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use sea_core::corpus::{self, DatasetSplit, PaperRecord, VenueProfiles};
use sea_core::parallel::map_ordered;
use sea_core::prompt_kit::{self, DistillationItem, EvaluationItem, Rejection, SftBuild};
use sea_core::standardizer::StandardizedRecord;
use sea_core::text::WhitespaceTokenizer;

use crate::context::{all_failed, read_json, read_jsonl, select_subset, sibling, write_json, write_jsonl, Settings};
use crate::{CliError, Subset};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw review dump, one paper per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Venue profile used to map section titles.
    #[arg(long)]
    pub venue: String,
    /// JSON table of venue profiles replacing the built-in one.
    #[arg(long)]
    pub venues: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Train share.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
}

#[derive(Debug, Subcommand)]
pub enum SftKind {
    /// Teacher-distilled standardization triplets from a sample of train papers.
    Standardize {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Share of train papers sent to the teacher.
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
    },
    /// Paper → standardized review triplets for every train paper.
    Evaluate {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Output of `sea standardize`.
        #[arg(long)]
        standardized: PathBuf,
    },
}

pub fn ingest(settings: &Settings, args: IngestArgs) -> Result<(), CliError> {
    let out = settings.out()?;
    let profiles = match &args.venues {
        Some(path) => VenueProfiles::load(path).map_err(CliError::input)?,
        None => VenueProfiles::builtin(),
    };
    let profile = profiles.get(&args.venue).map_err(CliError::input)?;
    let outcome = corpus::ingest(&args.input, profile).map_err(CliError::input)?;
    for w in &outcome.warnings {
        log::warn!("line {} ({}): skipped, {}", w.line, w.paper_id, w.reason);
    }
    let stats = corpus::stats(&outcome.records, &WhitespaceTokenizer).map_err(CliError::input)?;
    write_jsonl(out, &outcome.records)?;
    println!(
        "{} papers, {} reviews, {} skipped",
        stats.paper_count,
        stats.review_count,
        outcome.skipped()
    );
    println!(
        "mean tokens: {:.1} per paper, {:.1} per review",
        stats.mean_tokens_per_paper, stats.mean_tokens_per_review
    );
    match stats.accept_fraction {
        Some(f) => println!("accepted: {:.1}%", f * 100.0),
        None => println!("accepted: N/A"),
    }
    Ok(())
}

pub fn split(settings: &Settings, args: SplitArgs) -> Result<(), CliError> {
    let out = settings.out()?;
    let records: Vec<PaperRecord> = read_jsonl(&args.records)?;
    let split = corpus::stratified_split(&records, args.ratio, settings.seed).map_err(CliError::input)?;
    write_json(out, &split)?;
    println!("{} train, {} test", split.train_ids.len(), split.test_ids.len());
    Ok(())
}

pub fn build_sft(settings: &Settings, kind: SftKind) -> Result<(), CliError> {
    let out = settings.out()?;
    let build = match kind {
        SftKind::Standardize {
            records,
            split,
            fraction,
        } => distill(settings, &records, &split, fraction)?,
        SftKind::Evaluate {
            records,
            split,
            standardized,
        } => evaluation_set(settings, &records, &split, &standardized)?,
    };
    write_jsonl(out, &build.triplets)?;
    write_jsonl(&sibling(out, ".rejections.jsonl"), &build.rejections)?;
    println!("{} triplets, {} rejected", build.triplets.len(), build.rejections.len());
    Ok(())
}

fn distill(settings: &Settings, records: &Path, split: &Path, fraction: f64) -> Result<SftBuild, CliError> {
    let records: Vec<PaperRecord> = read_jsonl(records)?;
    let train = select_subset(&records, Some(split), Subset::Train)?;
    let ids: Vec<String> = train.iter().map(|r| r.paper_id.clone()).collect();
    let sampled = prompt_kit::sample_for_distillation(&ids, fraction, settings.seed).map_err(CliError::input)?;
    let sampled = corpus::select(&records, &sampled).map_err(|id| CliError::input(format!("unknown paper `{id}`")))?;
    let kit = settings.prompts()?;
    let gateway = settings.chat_gateway()?;
    let config = settings.generation_config()?;
    let outputs = map_ordered(&sampled, gateway.max_in_flight(), |record| {
        let prompt = kit.render_standardize_record(record).map_err(|e| e.to_string())?;
        gateway.complete(&config, &prompt).map_err(|e| e.to_string())
    });
    let mut items = Vec::new();
    let mut failed = Vec::new();
    for (record, output) in sampled.iter().zip(&outputs) {
        match output {
            Ok(text) => items.push(DistillationItem {
                record,
                teacher_output: text,
            }),
            Err(e) => {
                log::warn!("{}: teacher call failed: {e}", record.paper_id);
                failed.push(Rejection {
                    paper_id: record.paper_id.clone(),
                    missing_sections: Vec::new(),
                    malformed_scores: Vec::new(),
                    note: Some(e.clone()),
                });
            }
        }
    }
    if items.is_empty() && !failed.is_empty() {
        return Err(all_failed(
            "teacher calls",
            failed.len(),
            failed[0].note.as_deref().unwrap_or(""),
        ));
    }
    let mut build = prompt_kit::build_standardize_sft(&kit, &items);
    build.rejections.extend(failed);
    Ok(build)
}

fn evaluation_set(
    settings: &Settings,
    records: &Path,
    split: &Path,
    standardized: &Path,
) -> Result<SftBuild, CliError> {
    let records: Vec<PaperRecord> = read_jsonl(records)?;
    let split_ids: DatasetSplit = read_json(split)?;
    let train = corpus::select(&records, &split_ids.train_ids)
        .map_err(|id| CliError::input(format!("split names unknown paper `{id}`")))?;
    let standardized: Vec<StandardizedRecord> = read_jsonl(standardized)?;
    let by_id: HashMap<&str, &str> = standardized
        .iter()
        .map(|s| (s.paper_id.as_str(), s.review_text.as_str()))
        .collect();
    let kit = settings.prompts()?;
    let mut items = Vec::new();
    let mut missing = Vec::new();
    for record in train {
        match by_id.get(record.paper_id.as_str()) {
            Some(review) => items.push(EvaluationItem {
                paper_id: &record.paper_id,
                paper_body: &record.body,
                standardized_review: review,
            }),
            None => missing.push(Rejection {
                paper_id: record.paper_id.clone(),
                missing_sections: Vec::new(),
                malformed_scores: Vec::new(),
                note: Some("no standardized review".to_string()),
            }),
        }
    }
    let mut build = prompt_kit::build_evaluate_sft(&kit, &items);
    build.rejections.extend(missing);
    Ok(build)
}
