use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use sea_core::corpus::PaperRecord;
use sea_core::format_contract::{self, ScoreSlots};
use sea_core::metrics::{self, build_report, render_table, MetricsReport, ReferenceScores, ReportRow};
use sea_core::reviewer::ReviewRecord;
use sea_core::{Decision, TextScore};
use serde::Serialize;

use crate::context::{read_jsonl, sibling, write_jsonl, Settings};
use crate::CliError;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Output of `sea generate` or `sea self-correct`.
    #[arg(long)]
    pub reviews: PathBuf,
    /// Dataset label; defaults to the venue of the first paper.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Also compute embedding similarities.
    #[arg(long)]
    pub similarity: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation row files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PaperScore<'a> {
    paper_id: &'a str,
    text: &'a TextScore,
    scores: ScoreSlots,
    reference: ReferenceScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    decision: Option<Decision>,
}

pub fn evaluate(settings: &Settings, args: EvaluateArgs) -> Result<(), CliError> {
    let out = settings.out()?;
    let records: Vec<PaperRecord> = read_jsonl(&args.records)?;
    let reviews: Vec<ReviewRecord> = read_jsonl(&args.reviews)?;
    if reviews.is_empty() {
        return Err(CliError::input(format!("{}: no reviews", args.reviews.display())));
    }
    let by_id: HashMap<&str, &PaperRecord> = records.iter().map(|r| (r.paper_id.as_str(), r)).collect();
    let papers = reviews
        .iter()
        .map(|r| {
            by_id
                .get(r.paper_id.as_str())
                .copied()
                .ok_or_else(|| CliError::input(format!("review for unknown paper `{}`", r.paper_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let parsed: Vec<_> = reviews
        .iter()
        .map(|r| format_contract::parse(&r.review_text).ok())
        .collect();
    let candidates: Vec<String> = reviews
        .iter()
        .zip(&parsed)
        .map(|(r, p)| match p {
            Some(review) => review.textual_content(),
            None => r.review_text.clone(),
        })
        .collect();
    let references: Vec<String> = papers
        .iter()
        .map(|p| metrics::concat_reference(&p.reviews.iter().map(|r| r.full_text()).collect::<Vec<_>>()))
        .collect();
    let mut text: Vec<TextScore> = candidates
        .iter()
        .zip(&references)
        .zip(&reviews)
        .map(|((c, r), rec)| metrics::score_text(c, r, rec.token_count))
        .collect();

    let slots: Vec<ScoreSlots> = reviews
        .iter()
        .map(|r| format_contract::extract_scores(&r.review_text))
        .collect();
    let refs: Vec<ReferenceScores> = papers
        .iter()
        .map(|p| metrics::weighted_reference_scores(&p.reviews).unwrap_or_default())
        .collect();
    let mse = metrics::score_mse(&slots, &refs).map_err(CliError::pipeline)?;

    let predicted: Vec<Option<Decision>> = parsed.iter().map(|p| p.as_ref().map(|r| r.decision)).collect();
    let actual: Vec<Option<Decision>> = papers.iter().map(|p| p.decision).collect();
    let mut decision = metrics::decision_metrics(&predicted, &actual).map_err(CliError::pipeline)?;

    if args.similarity {
        let embedder = settings.embed_gateway()?;
        let (cand, refr): (Vec<String>, Vec<String>) = candidates
            .iter()
            .zip(&references)
            .filter(|(c, r)| !c.trim().is_empty() && !r.trim().is_empty())
            .map(|(c, r)| (c.clone(), r.clone()))
            .unzip();
        if cand.len() == candidates.len() {
            metrics::attach_similarity(&mut text, &cand, &refr, &embedder).map_err(CliError::pipeline)?;
        } else {
            log::warn!("similarity skipped: some reviews or references are empty");
        }
        let reasons: Vec<Option<String>> = parsed.iter().map(|p| p.as_ref().map(|r| r.reasons.clone())).collect();
        let metas: Vec<Option<String>> = papers.iter().map(|p| p.meta_review.clone()).collect();
        decision.reason_similarity =
            metrics::reason_similarity(&reasons, &metas, &embedder).map_err(CliError::pipeline)?;
    }

    let dataset = args.dataset.unwrap_or_else(|| papers[0].venue.clone());
    let tag = &reviews[0].model_tag;
    let decision = (decision.support > 0).then_some(decision);
    let report = build_report(&dataset, tag, &text, Some(&mse), decision.as_ref()).map_err(CliError::pipeline)?;
    write_jsonl(out, &report.rows)?;
    let per_paper: Vec<PaperScore> = reviews
        .iter()
        .enumerate()
        .map(|(i, r)| PaperScore {
            paper_id: &r.paper_id,
            text: &text[i],
            scores: slots[i],
            reference: refs[i],
            decision: predicted[i],
        })
        .collect();
    write_jsonl(&sibling(out, ".papers.jsonl"), &per_paper)?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    Ok(())
}

pub fn report(settings: &Settings, args: ReportArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in &args.input {
        rows.extend(read_jsonl::<ReportRow>(path)?);
    }
    if rows.is_empty() {
        return Err(CliError::input("no report rows"));
    }
    let table = render_table(&MetricsReport::group(rows));
    if let Some(out) = &settings.out {
        fs::write(out, &table).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    }
    print!("{table}");
    Ok(())
}
