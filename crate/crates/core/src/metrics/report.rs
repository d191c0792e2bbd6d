use serde::{Deserialize, Serialize};

use super::{AspectMse, DecisionReport, MetricsError, TextScore};

/// One cell of the results table. `value` is `None` for metrics that could
/// not be computed (shown as "N/A").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model_tag: String,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub model_tag: String,
    pub rows: Vec<ReportRow>,
}

fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    fn push(&mut self, metric: &str, value: Option<f64>) {
        self.rows.push(ReportRow {
            dataset: self.dataset.clone(),
            model_tag: self.model_tag.clone(),
            metric: metric.to_string(),
            value: value.map(round2),
        });
    }

    pub fn value(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric).and_then(|r| r.value)
    }

    /// Regroups flat rows into per-(dataset, model) reports, keeping the
    /// order in which each pair first appears.
    pub fn group(rows: Vec<ReportRow>) -> Vec<MetricsReport> {
        let mut out: Vec<MetricsReport> = Vec::new();
        for row in rows {
            match out
                .iter_mut()
                .find(|r| r.dataset == row.dataset && r.model_tag == row.model_tag)
            {
                Some(report) => report.rows.push(row),
                None => out.push(MetricsReport {
                    dataset: row.dataset.clone(),
                    model_tag: row.model_tag.clone(),
                    rows: vec![row],
                }),
            }
        }
        out
    }
}

/// Dataset-level means. Overlap metrics and fractions are percentages;
/// everything is rounded to two decimals.
pub fn build_report(
    dataset: &str,
    model_tag: &str,
    text: &[TextScore],
    mse: Option<&[AspectMse]>,
    decision: Option<&DecisionReport>,
) -> Result<MetricsReport, MetricsError> {
    if text.is_empty() && mse.is_none() && decision.is_none() {
        return Err(MetricsError::Empty("no scores to report"));
    }
    let mut report = MetricsReport {
        dataset: dataset.to_string(),
        model_tag: model_tag.to_string(),
        rows: Vec::new(),
    };
    if !text.is_empty() {
        let pct = |f: fn(&TextScore) -> f64| mean(text.iter().map(f)).map(|m| m * 100.0);
        report.push("bleu", pct(|t| t.bleu));
        report.push("rouge1_recall", pct(|t| t.rouge1.recall));
        report.push("rouge2_recall", pct(|t| t.rouge2.recall));
        report.push("rougeL_recall", pct(|t| t.rouge_l.recall));
        report.push("rouge1_f1", pct(|t| t.rouge1.f1));
        report.push("rouge2_f1", pct(|t| t.rouge2.f1));
        report.push("rougeL_f1", pct(|t| t.rouge_l.f1));
        report.push(
            "similarity",
            mean(text.iter().filter_map(|t| t.semantic_similarity)).map(|m| m * 100.0),
        );
        report.push("tokens", mean(text.iter().map(|t| t.token_count as f64)));
    }
    for aspect in mse.unwrap_or_default() {
        report.push(&format!("mse_{}", aspect.aspect), aspect.mse);
        report.push(
            &format!("valid_{}", aspect.aspect),
            Some(aspect.valid_fraction() * 100.0),
        );
    }
    if let Some(d) = decision {
        report.push("decision_accuracy", Some(d.accuracy * 100.0));
        report.push("decision_precision", Some(d.precision * 100.0));
        report.push("decision_recall", Some(d.recall * 100.0));
        report.push("decision_f1", Some(d.f1 * 100.0));
        report.push("reason_similarity", d.reason_similarity.map(|s| s * 100.0));
    }
    Ok(report)
}

/// Aligned plain-text table, one line per report and one column per metric
/// seen in any report.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut metrics: Vec<&str> = Vec::new();
    for row in reports.iter().flat_map(|r| &r.rows) {
        if !metrics.contains(&row.metric.as_str()) {
            metrics.push(&row.metric);
        }
    }
    let mut grid: Vec<Vec<String>> = vec![["dataset", "model"]
        .into_iter()
        .chain(metrics.iter().copied())
        .map(str::to_string)
        .collect()];
    for report in reports {
        let mut line = vec![report.dataset.clone(), report.model_tag.clone()];
        for metric in &metrics {
            let cell = report
                .rows
                .iter()
                .find(|r| r.metric == *metric)
                .and_then(|r| r.value)
                .map_or_else(|| "N/A".to_string(), |v| format!("{v:.2}"));
            line.push(cell);
        }
        grid.push(line);
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &grid {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c < 2 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::score_text;
    use super::*;

    #[test]
    fn percent_rows_and_na() {
        let scores = vec![score_text("a b", "a b", 2), score_text("a", "b", 4)];
        let report = build_report("toy", "m", &scores, None, None).unwrap();
        assert_eq!(report.value("rouge1_recall"), Some(50.0));
        assert_eq!(report.value("tokens"), Some(3.0));
        assert_eq!(report.value("similarity"), None);
        let table = render_table(&[report]);
        assert!(table.contains("N/A"));
        assert_eq!(table.lines().count(), 2);
    }

    #[test]
    fn regrouping_round_trips() {
        let a = build_report("d1", "m1", &[score_text("x", "x", 1)], None, None).unwrap();
        let b = build_report("d1", "m2", &[score_text("x", "y", 1)], None, None).unwrap();
        let rows: Vec<ReportRow> = a.rows.iter().chain(&b.rows).cloned().collect();
        assert_eq!(MetricsReport::group(rows), vec![a, b]);
    }

    #[test]
    fn empty_is_error() {
        assert!(build_report("d", "m", &[], None, None).is_err());
    }
}
