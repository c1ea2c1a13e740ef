//! Audit report types and their markdown / JSON renderings.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::config::AuditConfig;
use crate::error::{Error, Result};
use crate::eval::{MeanStd, SizeProfile};
use crate::features::{write_jsonl_records, OutcomePmi, SalienceRecord, Side};
use crate::probe::Salience;
use crate::simdist::SimilarityTable;
use crate::splits::SplitStrategy;

/// A report section that either ran or was skipped for a stated reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Section<T> {
    Ok(T),
    Skipped(String),
}

impl<T> Section<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Section::Ok(v) => Some(v),
            Section::Skipped(_) => None,
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            Section::Ok(_) => None,
            Section::Skipped(r) => Some(r),
        }
    }
}

/// Accuracy over seeds for one split and one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub seeds: Vec<u64>,
    pub article: MeanStd,
    pub site: Option<MeanStd>,
    pub majority_article: MeanStd,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub split: SplitStrategy,
    pub probe: Section<AccuracyCell>,
    pub external: Section<AccuracyCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomLabelRow {
    pub split: SplitStrategy,
    pub probe: Section<AccuracyCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceSection {
    pub seed: u64,
    pub articles: usize,
    /// Probe weights; positive leans reliable.
    pub probe: Salience,
    /// PMI with the label; positive side is reliable.
    pub pmi: Vec<SalienceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessSection {
    /// `probe` or `external`.
    pub predictions: String,
    pub split: SplitStrategy,
    pub articles: usize,
    pub pmi: OutcomePmi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthAccuracy {
    pub month: String,
    pub n_articles: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub boundaries: (NaiveDate, NaiveDate),
    /// True when the boundaries came from date quantiles rather than the
    /// config.
    pub derived: bool,
    pub seed: u64,
    pub monthly: Vec<MonthAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDataset {
    pub name: String,
    pub n_articles: usize,
    pub article_accuracy: f64,
    pub site_accuracy: Option<f64>,
    pub majority_article: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    LeakageSuspected,
    SignalGeneralizes,
    WeakSignal,
    Inconclusive,
}

impl VerdictKind {
    pub fn label(&self) -> &'static str {
        match self {
            VerdictKind::LeakageSuspected => "LEAKAGE SUSPECTED",
            VerdictKind::SignalGeneralizes => "SIGNAL GENERALIZES",
            VerdictKind::WeakSignal => "NO STRONG PROBE SIGNAL",
            VerdictKind::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub label: String,
    pub evidence: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Automated,
    ManualReview,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub stage: String,
    pub title: String,
    pub status: CheckStatus,
    pub finding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub name: String,
    pub articles: usize,
    pub sites: usize,
    pub label_counts: [usize; 2],
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub largest_site_share: f64,
    pub label_granularity: String,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub decisions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub corpus: CorpusSummary,
    pub config: AuditConfig,
    pub verdict: Verdict,
    pub accuracy: Vec<AccuracyRow>,
    pub random_labels: Vec<RandomLabelRow>,
    pub salience: Section<SalienceSection>,
    pub similarity: Section<SimilarityTable>,
    pub error_tokens: Section<CorrectnessSection>,
    pub size_profile: Section<SizeProfile>,
    pub time: Section<TimeSection>,
    pub cross_dataset: Section<Vec<CrossDataset>>,
    pub checklist: Vec<ChecklistItem>,
    pub notices: Vec<String>,
    pub provenance: Provenance,
}

impl AuditReport {
    pub fn accuracy_row(&self, split: SplitStrategy) -> Option<&AccuracyRow> {
        self.accuracy.iter().find(|r| r.split == split)
    }

    pub fn random_label_row(&self, split: SplitStrategy) -> Option<&RandomLabelRow> {
        self.random_labels.iter().find(|r| r.split == split)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Markdown,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidParameter(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn render_report(report: &AuditReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => render_markdown(report),
    }
}

/// Writes `report.md`, `report.json` and the plot/table side files into
/// `dir`, returning the paths written.
pub fn write_report_files(report: &AuditReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put("report.md", render_report(report, ReportFormat::Markdown).into_bytes())?;
    put("report.json", render_report(report, ReportFormat::Json).into_bytes())?;
    if let Some(profile) = report.size_profile.ok() {
        let mut buf = Vec::new();
        profile.write_csv(&mut buf)?;
        put("size_profile.csv", buf)?;
    }
    if let Some(table) = report.similarity.ok() {
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        put("similarity.csv", buf)?;
        put("similarity.json", serde_json::to_vec_pretty(table)?)?;
    }
    if let Some(s) = report.salience.ok() {
        let mut buf = Vec::new();
        write_jsonl_records(&s.pmi, &mut buf)?;
        put("pmi.jsonl", buf)?;
    }
    Ok(written)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn cell(s: &Section<AccuracyCell>, pick: impl Fn(&AccuracyCell) -> Option<MeanStd>) -> String {
    match s {
        Section::Ok(c) => pick(c).map_or_else(|| "n/a".into(), |m| m.percent()),
        Section::Skipped(r) => format!("skipped: {r}"),
    }
}

fn skipped(out: &mut String, reason: &str) {
    let _ = writeln!(out, "_Skipped: {reason}_\n");
}

fn render_markdown(r: &AuditReport) -> String {
    let mut out = String::new();
    let c = &r.corpus;
    let _ = writeln!(out, "# Dataset audit: {}\n", c.name);
    let _ = writeln!(out, "**Verdict: {}**\n", r.verdict.label);
    let _ = writeln!(out, "{}\n", r.verdict.evidence);
    let _ = writeln!(
        out,
        "Accuracies are percentages, mean over {} seed(s) with the population std in parentheses.\n",
        r.provenance.seeds.len()
    );

    let _ = writeln!(out, "## Corpus\n");
    let _ = writeln!(out, "| articles | sites | unreliable | reliable | first date | last date |");
    let _ = writeln!(out, "|---:|---:|---:|---:|---|---|");
    let date = |d: Option<NaiveDate>| d.map_or_else(|| "-".into(), |d| d.to_string());
    let _ = writeln!(
        out,
        "| {} | {} | {} | {} | {} | {} |\n",
        c.articles,
        c.sites,
        c.label_counts[0],
        c.label_counts[1],
        date(c.first_date),
        date(c.last_date)
    );

    let _ = writeln!(out, "## Salient features\n");
    match &r.salience {
        Section::Ok(s) => {
            let _ = writeln!(
                out,
                "Probe trained on a balanced sample of {} articles (seed {}). Positive weights lean reliable.\n",
                s.articles, s.seed
            );
            let _ = writeln!(out, "| rank | reliable (weight) | unreliable (weight) | PMI reliable | PMI unreliable |");
            let _ = writeln!(out, "|---:|---|---|---|---|");
            let pos: Vec<&SalienceRecord> = s.pmi.iter().filter(|x| x.side == Side::Positive).collect();
            let neg: Vec<&SalienceRecord> = s.pmi.iter().filter(|x| x.side == Side::Negative).collect();
            let rows = s.probe.positive.len().max(s.probe.negative.len()).max(pos.len()).max(neg.len());
            for i in 0..rows {
                let w = |l: &[crate::features::WeightedToken]| {
                    l.get(i).map_or_else(String::new, |t| format!("{} ({:.3})", t.token, t.weight))
                };
                let p = |l: &[&SalienceRecord]| {
                    l.get(i).map_or_else(String::new, |t| format!("{} ({:.3})", t.token, t.weight))
                };
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    i + 1,
                    w(&s.probe.positive),
                    w(&s.probe.negative),
                    p(&pos),
                    p(&neg)
                );
            }
            out.push('\n');
        }
        Section::Skipped(reason) => skipped(&mut out, reason),
    }

    let _ = writeln!(out, "## Probe accuracy by split\n");
    let _ = writeln!(out, "| split | probe (article) | probe (site) | majority (article) | external (article) | external (site) |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for row in &r.accuracy {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            row.split,
            cell(&row.probe, |c| Some(c.article)),
            cell(&row.probe, |c| c.site),
            cell(&row.probe, |c| Some(c.majority_article)),
            cell(&row.external, |c| Some(c.article)),
            cell(&row.external, |c| c.site),
        );
    }
    out.push('\n');

    let _ = writeln!(out, "## Random-label probe\n");
    let _ = writeln!(out, "Site labels permuted before splitting; high accuracy means site identity can be memorized.\n");
    let _ = writeln!(out, "| split | probe (article) | probe (site) |");
    let _ = writeln!(out, "|---|---|---|");
    for row in &r.random_labels {
        let _ = writeln!(
            out,
            "| {} | {} | {} |",
            row.split,
            cell(&row.probe, |c| Some(c.article)),
            cell(&row.probe, |c| c.site)
        );
    }
    out.push('\n');

    let _ = writeln!(out, "## Similarity of evaluation sites to training sites\n");
    match &r.similarity {
        Section::Ok(t) => {
            let _ = writeln!(
                out,
                "Pooled over source splits; {} evaluation and {} training site entries passed the size filter.\n",
                t.eligible_eval_sites, t.eligible_train_sites
            );
            let _ = writeln!(out, "| distance | top sites | bottom sites | rank correlation |");
            let _ = writeln!(out, "|---|---:|---:|---:|");
            let opt = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.2}"));
            for row in &t.rows {
                let _ = writeln!(
                    out,
                    "| {} | {} (n={}) | {} (n={}) | {} |",
                    row.distance,
                    opt(row.top_mean),
                    row.top_count,
                    opt(row.bottom_mean),
                    row.bottom_count,
                    opt(row.rank_correlation)
                );
            }
            out.push('\n');
            for w in &t.warnings {
                let _ = writeln!(out, "- warning: {w}");
            }
            if !t.warnings.is_empty() {
                out.push('\n');
            }
        }
        Section::Skipped(reason) => skipped(&mut out, reason),
    }

    let _ = writeln!(out, "## Tokens associated with prediction errors\n");
    match &r.error_tokens {
        Section::Ok(e) => {
            let _ = writeln!(
                out,
                "PMI over {} pooled {}-split evaluation articles, using {} predictions.\n",
                e.articles, e.split, e.predictions
            );
            let _ = writeln!(out, "| rank | correct | incorrect |");
            let _ = writeln!(out, "|---:|---|---|");
            for i in 0..e.pmi.correct.len().max(e.pmi.incorrect.len()) {
                let w = |l: &[crate::features::WeightedToken]| {
                    l.get(i).map_or_else(String::new, |t| format!("{} ({:.3})", t.token, t.weight))
                };
                let _ = writeln!(out, "| {} | {} | {} |", i + 1, w(&e.pmi.correct), w(&e.pmi.incorrect));
            }
            out.push('\n');
        }
        Section::Skipped(reason) => skipped(&mut out, reason),
    }

    let _ = writeln!(out, "## Site size and accuracy\n");
    match &r.size_profile {
        Section::Ok(p) => {
            let acc = |v: Option<f64>| v.map_or_else(|| "-".into(), pct);
            let _ = writeln!(out, "| bucket | sites | correct | site accuracy |");
            let _ = writeln!(out, "|---|---:|---:|---:|");
            let _ = writeln!(
                out,
                "| < {} articles | {} | {} | {} |",
                p.threshold,
                p.below.sites,
                p.below.correct,
                acc(p.below.accuracy)
            );
            let _ = writeln!(
                out,
                "| >= {} articles | {} | {} | {} |\n",
                p.threshold,
                p.at_or_above.sites,
                p.at_or_above.correct,
                acc(p.at_or_above.accuracy)
            );
        }
        Section::Skipped(reason) => skipped(&mut out, reason),
    }

    let _ = writeln!(out, "## Accuracy by month\n");
    match &r.time {
        Section::Ok(t) => {
            let _ = writeln!(
                out,
                "Time split at {} / {} ({}), seed {}.\n",
                t.boundaries.0,
                t.boundaries.1,
                if t.derived { "derived from date quantiles" } else { "configured" },
                t.seed
            );
            let _ = writeln!(out, "| month | articles | accuracy |");
            let _ = writeln!(out, "|---|---:|---:|");
            for m in &t.monthly {
                let _ = writeln!(out, "| {} | {} | {} |", m.month, m.n_articles, pct(m.accuracy));
            }
            out.push('\n');
        }
        Section::Skipped(reason) => skipped(&mut out, reason),
    }

    let _ = writeln!(out, "## Other datasets\n");
    match &r.cross_dataset {
        Section::Ok(list) => {
            let _ = writeln!(out, "| dataset | articles | probe (article) | probe (site) | majority (article) |");
            let _ = writeln!(out, "|---|---:|---:|---:|---:|");
            for d in list {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    d.name,
                    d.n_articles,
                    pct(d.article_accuracy),
                    d.site_accuracy.map_or_else(|| "-".into(), pct),
                    pct(d.majority_article)
                );
            }
            out.push('\n');
        }
        Section::Skipped(reason) => skipped(&mut out, reason),
    }

    let _ = writeln!(out, "## Checklist\n");
    let mut stage = "";
    let mut number = 0;
    for item in &r.checklist {
        if item.stage != stage {
            stage = &item.stage;
            number = 0;
        }
        number += 1;
        let status = match item.status {
            CheckStatus::Automated => "automated",
            CheckStatus::ManualReview => "manual review",
            CheckStatus::NotApplicable => "not applicable",
        };
        let _ = writeln!(out, "### {} {}: {}\n", item.stage, number, item.title);
        let _ = writeln!(out, "Status: {status}. {}\n", item.finding);
    }

    if !r.notices.is_empty() {
        let _ = writeln!(out, "## Notices\n");
        for n in &r.notices {
            let _ = writeln!(out, "- {n}");
        }
        out.push('\n');
    }

    let _ = writeln!(out, "## Provenance\n");
    let p = &r.provenance;
    let seeds: Vec<String> = p.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "- {} {}", p.tool, p.version);
    let _ = writeln!(out, "- seeds: {}", seeds.join(", "));
    for d in &p.decisions {
        let _ = writeln!(out, "- {d}");
    }
    for line in &c.provenance {
        let _ = writeln!(out, "- corpus: {line}");
    }
    out
}
