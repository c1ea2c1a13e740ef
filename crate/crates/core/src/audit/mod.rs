//! The end-to-end audit: probe runs under every split, the random-label
//! probe, salience and error analyses, site similarity, and the checklist
//! report.

mod config;
mod report;
mod synth;

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

pub use config::{parse_date_pair, parse_ratios, parse_seeds, AuditConfig, CONFIG_KEYS};
pub use report::{
    render_report, write_report_files, AccuracyCell, AccuracyRow, AuditReport, CheckStatus, ChecklistItem,
    CorpusSummary, CorrectnessSection, CrossDataset, MonthAccuracy, Provenance, RandomLabelRow, ReportFormat,
    SalienceSection, Section, TimeSection, Verdict, VerdictKind,
};
pub use synth::{generate_synthetic_corpus, signature_token, SyntheticKind, SIGNAL_TOKEN};

use crate::corpus::{
    apply_site_labels, load_corpus, load_embeddings, subsample_balanced, Article, Corpus, Format, Label, SiteLabelMap,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, multi_seed_runs, size_accuracy_profile, EvalResult, MeanStd, RunConfig, SeedRun};
use crate::features::{pmi_by_correctness, pmi_by_label, pmi_records, VocabParams};
use crate::probe::{train_probe, LinearProbe, TrainParams};
use crate::simdist::{embedding_site_sets, projected_site_sets, similarity_table, RankedSite, SimilarityTable};
use crate::splits::{month_bucket, SplitStrategy};

/// External model predictions keyed by article id.
pub type Predictions = BTreeMap<String, Label>;

/// Everything an audit reads besides the config.
#[derive(Debug, Clone)]
pub struct AuditInputs {
    pub name: String,
    pub corpus: Corpus,
    /// Further corpora used only as out-of-dataset test sets.
    pub extra: Vec<(String, Corpus)>,
    pub predictions: Option<Predictions>,
    pub notices: Vec<String>,
}

impl AuditInputs {
    pub fn from_corpus(name: impl Into<String>, corpus: Corpus) -> Self {
        AuditInputs {
            name: name.into(),
            corpus,
            extra: Vec::new(),
            predictions: None,
            notices: Vec::new(),
        }
    }

    /// Loads the corpora, site labels, embeddings and predictions named in
    /// `config`.
    pub fn load(config: &AuditConfig) -> Result<Self> {
        let labels = config.site_labels.as_deref().map(SiteLabelMap::load).transpose()?;
        let mut notices = Vec::new();
        let mut corpora = Vec::new();
        for path in &config.corpus {
            let mut c = load_corpus(path, Format::from_path(path))?;
            if let Some(map) = &labels {
                let before = c.len();
                c = apply_site_labels(&c, map, true)?;
                if c.len() < before {
                    notices.push(format!(
                        "{}: dropped {} articles from sources without a site label",
                        path.display(),
                        before - c.len()
                    ));
                }
            }
            if !c.skipped_lines().is_empty() {
                notices.push(format!(
                    "{}: skipped {} malformed lines",
                    path.display(),
                    c.skipped_lines().len()
                ));
            }
            corpora.push((name_of(path), c));
        }
        let mut corpora = corpora.into_iter();
        let (name, mut corpus) = corpora.next().ok_or(Error::Empty("corpus list"))?;
        if let Some(path) = &config.embeddings {
            let before = corpus.len();
            corpus = corpus.with_embeddings(&load_embeddings(path)?)?;
            if corpus.len() < before {
                notices.push(format!(
                    "dropped {} articles without an embedding",
                    before - corpus.len()
                ));
            }
        }
        let predictions = config.predictions.as_deref().map(load_predictions).transpose()?;
        Ok(AuditInputs {
            name,
            corpus,
            extra: corpora.collect(),
            predictions,
            notices,
        })
    }
}

fn name_of(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Deserialize)]
struct PredictionLine {
    id: String,
    pred: Label,
}

/// Reads JSONL `{"id": ..., "pred": 0|1}` lines. Blank lines are skipped.
pub fn load_predictions(path: &Path) -> Result<Predictions> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Predictions::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(&line).map_err(|e| Error::Config {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.insert(p.id, p.pred);
    }
    if out.is_empty() {
        return Err(Error::NoValidRecords(path.display().to_string()));
    }
    Ok(out)
}

/// Loads every input named in `config` and audits it.
pub fn run_audit(config: &AuditConfig) -> Result<AuditReport> {
    config.validate()?;
    if config.corpus.is_empty() {
        return Err(Error::InvalidParameter("no corpus given".into()));
    }
    let inputs = AuditInputs::load(config).map_err(|e| e.at_stage("load"))?;
    audit_corpus(&inputs, config)
}

/// A failure that means "this analysis does not apply to this data" rather
/// than a broken run.
fn not_applicable(err: &Error) -> Option<String> {
    match err {
        Error::Seed { source, .. } | Error::Stage { source, .. } => not_applicable(source),
        Error::EmptySet(_)
        | Error::TooFew { .. }
        | Error::SingleLabel(_)
        | Error::MissingLabelClass(_)
        | Error::InconsistentSiteLabels(_) => {
            Some(format!("not applicable: {err}"))
        }
        _ => None,
    }
}

fn optional<T>(stage: &'static str, r: Result<T>) -> Result<Section<T>> {
    match r {
        Ok(v) => Ok(Section::Ok(v)),
        Err(e) => match not_applicable(&e) {
            Some(reason) => Ok(Section::Skipped(reason)),
            None => Err(e.at_stage(stage)),
        },
    }
}

fn cell(seeds: &[u64], results: &[EvalResult]) -> AccuracyCell {
    let article: Vec<f64> = results.iter().map(|r| r.article_accuracy).collect();
    let site: Vec<f64> = results.iter().filter_map(|r| r.site_accuracy).collect();
    let majority: Vec<f64> = results.iter().map(|r| r.majority_article).collect();
    AccuracyCell {
        seeds: seeds.to_vec(),
        article: MeanStd::of(&article).expect("at least one seed"),
        site: if site.len() == results.len() { MeanStd::of(&site) } else { None },
        majority_article: MeanStd::of(&majority).expect("at least one seed"),
        per_seed: article,
    }
}

fn probe_cell(seeds: &[u64], runs: &[SeedRun]) -> AccuracyCell {
    let results: Vec<EvalResult> = runs.iter().map(|r| r.result.clone()).collect();
    cell(seeds, &results)
}

/// Scores external predictions on the same evaluation articles the probe
/// saw, restricted to articles the predictions cover.
fn external_cell(
    seeds: &[u64],
    runs: &Section<Vec<SeedRun>>,
    predictions: Option<&Predictions>,
    notices: &mut Vec<String>,
    split: SplitStrategy,
) -> Result<Section<AccuracyCell>> {
    let Some(predictions) = predictions else {
        return Ok(Section::Skipped("no external predictions given".into()));
    };
    let runs = match runs {
        Section::Ok(r) => r,
        Section::Skipped(reason) => return Ok(Section::Skipped(reason.clone())),
    };
    let mut results = Vec::with_capacity(runs.len());
    let mut missing = 0usize;
    for run in runs {
        let (covered, preds): (Vec<Article>, Vec<Label>) = run
            .eval_articles
            .iter()
            .filter_map(|a| predictions.get(&a.id).map(|p| (a.clone(), *p)))
            .unzip();
        missing += run.eval_articles.len() - covered.len();
        if covered.is_empty() {
            return Ok(Section::Skipped(format!(
                "external predictions cover no {split}-split evaluation article"
            )));
        }
        results.push(evaluate(&covered, &preds)?);
    }
    if missing > 0 {
        notices.push(format!(
            "external predictions missing for {missing} {split}-split evaluation articles (summed over seeds); scored on the covered ones"
        ));
    }
    Ok(Section::Ok(cell(seeds, &results)))
}

/// Boundaries at the train and train+dev ratio quantiles of the sorted
/// publication dates.
pub fn derive_time_boundaries(articles: &[Article], ratios: [f64; 3]) -> Option<(NaiveDate, NaiveDate)> {
    let mut dates: Vec<NaiveDate> = articles.iter().filter_map(|a| a.published_at).collect();
    if dates.len() < 3 {
        return None;
    }
    dates.sort();
    let n = dates.len() as f64;
    let at = |q: f64| dates[((n * q).floor() as usize).min(dates.len() - 1)];
    let (d1, d2) = (at(ratios[0]), at(ratios[0] + ratios[1]));
    (d1 < d2).then_some((d1, d2))
}

fn monthly_accuracy(run: &SeedRun) -> Vec<MonthAccuracy> {
    let mut months: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for (a, p) in run.eval_articles.iter().zip(&run.predictions) {
        if let Some(d) = a.published_at {
            let e = months.entry(month_bucket(d)).or_default();
            e[0] += 1;
            e[1] += (a.label == *p) as usize;
        }
    }
    months
        .into_iter()
        .map(|(month, [n, correct])| MonthAccuracy {
            month,
            n_articles: n,
            accuracy: correct as f64 / n as f64,
        })
        .collect()
}

fn similarity(
    corpus: &Corpus,
    runs: &[SeedRun],
    config: &AuditConfig,
    notices: &mut Vec<String>,
) -> Result<Section<SimilarityTable>> {
    let use_embeddings = corpus.embedding_dim().is_some();
    if !use_embeddings && !config.tfidf_fallback {
        return Ok(Section::Skipped("no embeddings given".into()));
    }
    let min_count = config.min_site_count.max(2);
    if min_count != config.min_site_count {
        notices.push("similarity: raised min_site_count to 2, the minimum for MMD and CORAL".into());
    }
    let kinds = config.distance_kinds();
    let mut tables = Vec::with_capacity(runs.len());
    for run in runs {
        let train = corpus.select(run.split.train.iter());
        let represent = |articles: &[Article], probe: &LinearProbe| {
            if use_embeddings {
                embedding_site_sets(articles)
            } else {
                projected_site_sets(articles, probe, config.projection_dim)
            }
        };
        let eval_sets = represent(&run.eval_articles, &run.probe)?;
        let train_sets = represent(&train, &run.probe)?;
        let ranked: Vec<RankedSite> = eval_sets
            .into_iter()
            .map(|set| {
                let o = &run.result.per_site[&set.site];
                RankedSite {
                    accuracy: o.n_correct as f64 / o.n_articles as f64,
                    set,
                }
            })
            .collect();
        let table = similarity_table(&ranked, &train_sets, &kinds, min_count, config.top_sites)
            .map_err(|e| e.at_seed(run.seed))?;
        tables.push(table);
    }
    let pooled = SimilarityTable::pooled(&tables).expect("at least one seed");
    if pooled.per_site.is_empty() {
        return Ok(Section::Skipped(format!(
            "no evaluation site with at least {min_count} articles"
        )));
    }
    Ok(Section::Ok(pooled))
}

fn summarize_corpus(name: &str, corpus: &Corpus) -> CorpusSummary {
    let sizes = corpus.site_sizes();
    let largest = sizes.values().copied().max().unwrap_or(0);
    let dates: Vec<NaiveDate> = corpus.articles().iter().filter_map(|a| a.published_at).collect();
    let label_granularity = match corpus.site_labels() {
        Ok(_) => "every site carries a single label (site-level labels)".to_owned(),
        Err(_) => "some sites mix labels (article-level labels)".to_owned(),
    };
    CorpusSummary {
        name: name.to_owned(),
        articles: corpus.len(),
        sites: sizes.len(),
        label_counts: corpus.label_counts(),
        first_date: dates.iter().min().copied(),
        last_date: dates.iter().max().copied(),
        largest_site_share: largest as f64 / corpus.len().max(1) as f64,
        label_granularity,
        provenance: corpus.provenance().to_vec(),
    }
}

fn verdict(
    random: &AccuracyCell,
    source: &Section<Vec<SeedRun>>,
    source_cell: &Section<AccuracyCell>,
    config: &AuditConfig,
) -> Verdict {
    let make = |kind: VerdictKind, evidence: String| Verdict {
        kind,
        label: kind.label().to_owned(),
        evidence,
    };
    let margin = random.article.mean - random.majority_article.mean;
    let head = format!(
        "Random-split probe accuracy {} vs article majority baseline {} (margin {} points, threshold {}).",
        random.article.percent(),
        random.majority_article.percent(),
        pct(margin),
        pct(config.probe_margin)
    );
    let (Section::Ok(_), Section::Ok(src)) = (source, source_cell) else {
        let reason = source_cell.reason().unwrap_or("source split unavailable");
        return make(VerdictKind::Inconclusive, format!("{head} Source split {reason}."));
    };
    let drop = random.article.mean - src.article.mean;
    let tail = format!(
        "Source-split accuracy {} (drop {} points, threshold {}).",
        src.article.percent(),
        pct(drop),
        pct(config.drop_threshold)
    );
    let kind = if margin <= config.probe_margin {
        VerdictKind::WeakSignal
    } else if drop > config.drop_threshold {
        VerdictKind::LeakageSuspected
    } else {
        VerdictKind::SignalGeneralizes
    };
    make(kind, format!("{head} {tail}"))
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

struct ChecklistInputs<'a> {
    corpus: &'a CorpusSummary,
    verdict: &'a Verdict,
    random: &'a AccuracyCell,
    rows: &'a [AccuracyRow],
    salience: &'a Section<SalienceSection>,
    size: &'a Section<crate::eval::SizeProfile>,
    cross: &'a Section<Vec<CrossDataset>>,
}

fn checklist(x: ChecklistInputs<'_>) -> Vec<ChecklistItem> {
    let item = |stage: &str, title: &str, status: CheckStatus, finding: String| ChecklistItem {
        stage: stage.to_owned(),
        title: title.to_owned(),
        status,
        finding,
    };
    let c = x.corpus;
    let span = match (c.first_date, c.last_date) {
        (Some(a), Some(b)) => format!("dates span {a} to {b}"),
        _ => "no publication dates".to_owned(),
    };
    let gap = |split: SplitStrategy| -> String {
        let row = x.rows.iter().find(|r| r.split == split);
        match row.map(|r| &r.probe) {
            Some(Section::Ok(cell)) => format!(
                "{split}-split probe {} ({} points below random split)",
                cell.article.percent(),
                pct(x.random.article.mean - cell.article.mean)
            ),
            Some(Section::Skipped(r)) => format!("{split} split {r}"),
            None => format!("{split} split not run"),
        }
    };
    let salient = match x.salience {
        Section::Ok(s) => {
            let top = |l: &[crate::features::WeightedToken]| {
                l.iter().take(5).map(|t| t.token.as_str()).collect::<Vec<_>>().join(", ")
            };
            (
                CheckStatus::Automated,
                format!(
                    "Top probe features, reliable side: {}; unreliable side: {}. Review them for site names, boilerplate or dates.",
                    top(&s.probe.positive),
                    top(&s.probe.negative)
                ),
            )
        }
        Section::Skipped(r) => (CheckStatus::NotApplicable, format!("Salience skipped: {r}.")),
    };
    let size = match x.size {
        Section::Ok(p) => {
            let acc = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), pct);
            (
                CheckStatus::Automated,
                format!(
                    "Source-split site accuracy {} on sites with fewer than {} articles ({} sites) vs {} on larger ones ({} sites).",
                    acc(p.below.accuracy),
                    p.threshold,
                    p.below.sites,
                    acc(p.at_or_above.accuracy),
                    p.at_or_above.sites
                ),
            )
        }
        Section::Skipped(r) => (CheckStatus::NotApplicable, format!("Size profile skipped: {r}.")),
    };
    let cross = match x.cross {
        Section::Ok(list) => (
            CheckStatus::Automated,
            list.iter()
                .map(|d| format!("{}: probe accuracy {}", d.name, pct(d.article_accuracy)))
                .collect::<Vec<_>>()
                .join("; "),
        ),
        Section::Skipped(r) => (CheckStatus::NotApplicable, format!("{r}.")),
    };
    const COLLECT: &str = "Data collection";
    const BUILD: &str = "Dataset construction";
    const DESIGN: &str = "Experiment design";
    vec![
        item(
            COLLECT,
            "Prefer unbiased original sources",
            CheckStatus::ManualReview,
            "How articles were gathered cannot be inferred from the corpus; check that they come from the outlets themselves rather than fact-checking or search pipelines.".into(),
        ),
        item(
            COLLECT,
            "Diversify sources, topics and time",
            CheckStatus::ManualReview,
            format!(
                "{} sites; {}; the largest site holds {}% of articles.",
                c.sites,
                span,
                pct(c.largest_site_share)
            ),
        ),
        item(
            COLLECT,
            "Collect article-level labels",
            CheckStatus::ManualReview,
            format!("In this corpus {}.", c.label_granularity),
        ),
        item(BUILD, "Inspect the most salient words", salient.0, salient.1),
        item(
            BUILD,
            "Measure bias with a bag-of-words baseline",
            CheckStatus::Automated,
            format!("{}: {}", x.verdict.label, x.verdict.evidence),
        ),
        item(
            BUILD,
            "Ship source- and time-disjoint splits",
            CheckStatus::Automated,
            format!("{}; {}.", gap(SplitStrategy::Source), gap(SplitStrategy::Time)),
        ),
        item(
            DESIGN,
            "Debias models trained on biased data",
            CheckStatus::ManualReview,
            "Flagging only; no debiasing is applied.".into(),
        ),
        item(
            DESIGN,
            "Evaluate on unseen sources and dates",
            CheckStatus::Automated,
            format!(
                "Random-split probe {}; {}; {}.",
                x.random.article.percent(),
                gap(SplitStrategy::Source),
                gap(SplitStrategy::Time)
            ),
        ),
        item(DESIGN, "Evaluate on sources with few examples", size.0, size.1),
        item(DESIGN, "Test on several complementary datasets", cross.0, cross.1),
    ]
}

/// Runs the audit on already-loaded inputs.
pub fn audit_corpus(inputs: &AuditInputs, config: &AuditConfig) -> Result<AuditReport> {
    config.validate()?;
    let corpus = &inputs.corpus;
    let seeds = &config.seeds;
    let mut notices = inputs.notices.clone();
    let counts = corpus.label_counts();
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::SingleLabel(Label::BOTH[1 - missing].as_u8()).at_stage("corpus"));
    }

    let vocab = VocabParams {
        field: config.field,
        min_df: config.min_df,
        max_features: config.max_features,
    };
    let train = TrainParams {
        l2_weight: config.l2_weight,
        ..TrainParams::default()
    };
    let run_config = |strategy: SplitStrategy, permute_labels: bool| RunConfig {
        strategy,
        ratios: config.ratios,
        time_boundaries: None,
        vocab,
        train,
        permute_labels,
        ..RunConfig::default()
    };

    // Split × model accuracy.
    let random_runs =
        multi_seed_runs(corpus, &run_config(SplitStrategy::Random, false), seeds).map_err(|e| e.at_stage("random split"))?;
    let random_cell = probe_cell(seeds, &random_runs);
    let few_sources = corpus.sources().len() < 3;
    let source_runs = if few_sources {
        Section::Skipped("not applicable: <3 sources".into())
    } else {
        optional(
            "source split",
            multi_seed_runs(corpus, &run_config(SplitStrategy::Source, false), seeds),
        )?
    };
    let (boundaries, derived) = match config.time_boundaries {
        Some(b) => (Some(b), false),
        None => (derive_time_boundaries(corpus.articles(), config.ratios), true),
    };
    let time_runs = match boundaries {
        None if corpus.articles().iter().all(|a| a.published_at.is_none()) => {
            Section::Skipped("no publication dates".into())
        }
        None => Section::Skipped("publication dates too concentrated to derive time boundaries".into()),
        Some(b) => {
            let cfg = RunConfig {
                time_boundaries: Some(b),
                ..run_config(SplitStrategy::Time, false)
            };
            optional("time split", multi_seed_runs(corpus, &cfg, seeds))?
        }
    };
    let random_section = Section::Ok(random_runs);
    let mut accuracy = Vec::new();
    for (split, runs) in [
        (SplitStrategy::Random, &random_section),
        (SplitStrategy::Source, &source_runs),
        (SplitStrategy::Time, &time_runs),
    ] {
        let probe = match runs {
            Section::Ok(r) => Section::Ok(probe_cell(seeds, r)),
            Section::Skipped(reason) => Section::Skipped(reason.clone()),
        };
        let external = external_cell(seeds, runs, inputs.predictions.as_ref(), &mut notices, split)
            .map_err(|e| e.at_stage("external predictions"))?;
        accuracy.push(AccuracyRow { split, probe, external });
    }
    let Section::Ok(random_runs) = random_section else {
        unreachable!("random split always runs")
    };

    // Random-label probe.
    let mut random_labels = Vec::new();
    for split in [SplitStrategy::Random, SplitStrategy::Source] {
        let probe = if split == SplitStrategy::Source && few_sources {
            Section::Skipped("not applicable: <3 sources".into())
        } else {
            match optional(
                "random-label probe",
                multi_seed_runs(corpus, &run_config(split, true), seeds),
            )? {
                Section::Ok(runs) => Section::Ok(probe_cell(seeds, &runs)),
                Section::Skipped(r) => Section::Skipped(r),
            }
        };
        random_labels.push(RandomLabelRow { split, probe });
    }

    // Salient features on the balanced full corpus.
    let first_seed = seeds[0];
    let balanced = subsample_balanced(corpus, first_seed).map_err(|e| e.at_stage("salience"))?;
    let full_probe = train_probe(
        balanced.articles(),
        &vocab,
        &TrainParams {
            seed: first_seed,
            ..train
        },
    )
    .map_err(|e| e.at_stage("salience"))?;
    let k = config.top_k.min(full_probe.vocab.len());
    let salience = Section::Ok(SalienceSection {
        seed: first_seed,
        articles: balanced.len(),
        probe: full_probe.salient_features(k).map_err(|e| e.at_stage("salience"))?,
        pmi: pmi_records(
            &pmi_by_label(balanced.articles(), &full_probe.vocab).map_err(|e| e.at_stage("salience"))?,
            k,
        ),
    });

    // Tokens tied to errors, pooled over seeds.
    let (error_split, error_runs) = match &source_runs {
        Section::Ok(r) => (SplitStrategy::Source, r),
        Section::Skipped(_) => (SplitStrategy::Random, &random_runs),
    };
    let mut pooled_articles = Vec::new();
    let mut pooled_predictions = Vec::new();
    let mut prediction_source = "probe";
    if let Some(ext) = &inputs.predictions {
        for run in error_runs {
            for a in &run.eval_articles {
                if let Some(p) = ext.get(&a.id) {
                    pooled_articles.push(a.clone());
                    pooled_predictions.push(*p);
                }
            }
        }
        prediction_source = "external";
    }
    if pooled_articles.is_empty() {
        prediction_source = "probe";
        for run in error_runs {
            pooled_articles.extend(run.eval_articles.iter().cloned());
            pooled_predictions.extend(run.predictions.iter().copied());
        }
    }
    let error_tokens = match pmi_by_correctness(&pooled_articles, &pooled_predictions, &full_probe.vocab) {
        Ok(pmi) => Section::Ok(CorrectnessSection {
            predictions: prediction_source.to_owned(),
            split: error_split,
            articles: pooled_articles.len(),
            pmi: pmi.truncated(config.top_k),
        }),
        Err(e @ Error::DegenerateOutcome(_)) => Section::Skipped(e.to_string()),
        Err(e) => return Err(e.at_stage("error analysis")),
    };

    // Per-site size profile and similarity, both from source splits.
    let (size_profile, similarity_section) = match &source_runs {
        Section::Ok(runs) => {
            let profile = size_accuracy_profile(runs.iter().flat_map(|r| r.result.per_site.iter()), config.size_threshold);
            let sim = match similarity(corpus, runs, config, &mut notices) {
                Ok(s) => s,
                Err(e) => match not_applicable(&e) {
                    Some(reason) => Section::Skipped(reason),
                    None => return Err(e.at_stage("similarity")),
                },
            };
            (Section::Ok(profile), sim)
        }
        Section::Skipped(r) => (Section::Skipped(r.clone()), Section::Skipped(r.clone())),
    };
    if let Some(t) = similarity_section.ok() {
        notices.extend(t.warnings.iter().map(|w| format!("similarity: {w}")));
    }

    let time = match (&time_runs, boundaries) {
        (Section::Ok(runs), Some(b)) => Section::Ok(TimeSection {
            boundaries: b,
            derived,
            seed: runs[0].seed,
            monthly: monthly_accuracy(&runs[0]),
        }),
        (Section::Skipped(r), _) => Section::Skipped(r.clone()),
        (Section::Ok(_), None) => unreachable!("time runs need boundaries"),
    };

    let cross_dataset = if inputs.extra.is_empty() {
        Section::Skipped("only one dataset given".into())
    } else {
        let mut list = Vec::new();
        for (name, other) in &inputs.extra {
            let preds: Vec<Label> = full_probe.predict_articles(other.articles()).into_iter().map(|p| p.label).collect();
            let r = evaluate(other.articles(), &preds).map_err(|e| e.at_stage("cross-dataset"))?;
            list.push(CrossDataset {
                name: name.clone(),
                n_articles: r.n_articles,
                article_accuracy: r.article_accuracy,
                site_accuracy: r.site_accuracy,
                majority_article: r.majority_article,
            });
        }
        Section::Ok(list)
    };

    let source_cell = &accuracy[1].probe;
    let verdict = verdict(&random_cell, &source_runs, source_cell, config);
    let corpus_summary = summarize_corpus(&inputs.name, corpus);
    let checklist = checklist(ChecklistInputs {
        corpus: &corpus_summary,
        verdict: &verdict,
        random: &random_cell,
        rows: &accuracy,
        salience: &salience,
        size: &size_profile,
        cross: &cross_dataset,
    });

    let mut decisions = vec![
        "corpus balanced by label per seed, then each split set rebalanced".to_owned(),
        "site prediction = majority vote of article predictions, ties count as unreliable".to_owned(),
        "std is the population std over seeds".to_owned(),
        "similarity means pool every (site, split) pair".to_owned(),
        "PMI uses document presence with add-one smoothing on each cell of the token/outcome table".to_owned(),
    ];
    if derived && boundaries.is_some() {
        decisions.push("time boundaries derived from the train and train+dev date quantiles".to_owned());
    }
    if inputs.predictions.is_some() {
        decisions.push("external predictions scored on the probe's evaluation articles they cover".to_owned());
    }

    Ok(AuditReport {
        corpus: corpus_summary,
        config: config.clone(),
        verdict,
        accuracy,
        random_labels,
        salience,
        similarity: similarity_section,
        error_tokens,
        size_profile,
        time,
        cross_dataset,
        checklist,
        notices,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seeds: seeds.clone(),
            decisions,
        },
    })
}
