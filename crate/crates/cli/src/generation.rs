use std::path::PathBuf;

use clap::Args;
use sea_core::corpus::PaperRecord;
use sea_core::reviewer::ReviewRecord;
use sea_core::{Reviewer, Standardizer};
use serde::Serialize;

use crate::context::{all_failed, read_jsonl, select_subset, sibling, write_jsonl, Settings};
use crate::{CliError, Subset};

#[derive(Debug, Args)]
pub struct StandardizeArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Subset::Train)]
    pub subset: Subset,
    /// Format retries per paper.
    #[arg(long, default_value_t = sea_core::reviewer::DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: u32,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,
    /// Tag written with each review; defaults to the endpoint name.
    #[arg(long)]
    pub model_tag: Option<String>,
    #[arg(long, default_value_t = sea_core::reviewer::DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: u32,
}

/// A paper whose generation failed.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub paper_id: String,
    pub error: String,
}

pub fn standardize(settings: &Settings, args: StandardizeArgs) -> Result<(), CliError> {
    let out = settings.out()?;
    let records: Vec<PaperRecord> = read_jsonl(&args.records)?;
    let selected = select_subset(&records, args.split.as_deref(), args.subset)?;
    let standardizer = Standardizer::new(
        settings.chat_gateway()?,
        settings.prompts()?,
        settings.generation_config()?,
    )
    .with_max_attempts(args.max_attempts);
    let outcome = standardizer.standardize_corpus(&selected);
    for f in &outcome.failures {
        log::warn!("{}: standardization failed", f.paper_id);
    }
    if outcome.outputs.is_empty() && !outcome.failures.is_empty() {
        let first = &outcome.failures[0];
        return Err(all_failed("papers", outcome.failures.len(), format_args!("{first:?}")));
    }
    write_jsonl(out, &outcome.records())?;
    write_jsonl(&sibling(out, ".failures.jsonl"), &outcome.failures)?;
    println!(
        "{} standardized, {} failed",
        outcome.outputs.len(),
        outcome.failures.len()
    );
    Ok(())
}

pub fn generate(settings: &Settings, args: GenerateArgs) -> Result<(), CliError> {
    let out = settings.out()?;
    let records: Vec<PaperRecord> = read_jsonl(&args.records)?;
    let selected = select_subset(&records, args.split.as_deref(), args.subset)?;
    let reviewer = Reviewer::new(
        settings.chat_gateway()?,
        settings.prompts()?,
        settings.generation_config()?,
    )
    .with_max_attempts(args.max_attempts)
    .with_tokenizer(settings.tokenizer()?);
    let tag = args.model_tag.unwrap_or_else(|| reviewer.model_tag().to_string());
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (id, result) in reviewer.generate_batch(&selected) {
        match result {
            Ok(review) => lines.push(ReviewRecord::new(&id, &tag, &review)),
            Err(e) => {
                log::warn!("{id}: generation failed: {e}");
                failures.push(Failure {
                    paper_id: id,
                    error: e.to_string(),
                });
            }
        }
    }
    if lines.is_empty() && !failures.is_empty() {
        return Err(all_failed("papers", failures.len(), &failures[0].error));
    }
    write_jsonl(out, &lines)?;
    write_jsonl(&sibling(out, ".failures.jsonl"), &failures)?;
    println!("{} reviews, {} failed", lines.len(), failures.len());
    Ok(())
}
