//! Accuracy at article and site level, majority baselines and multi-seed
//! aggregation.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{balanced_articles, label_counts, subsample_balanced, Article, Corpus, Label};
use crate::error::{Error, Result};
use crate::features::VocabParams;
use crate::probe::{train_probe, LinearProbe, TrainParams};
use crate::splits::{permute_site_labels, random_split, source_split, time_split, Split, SplitStrategy};

pub fn article_accuracy(predictions: &[Label], golds: &[Label]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs golds",
            left: predictions.len(),
            right: golds.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let correct = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Majority vote; a tie resolves to unreliable.
pub fn majority_vote(labels: impl IntoIterator<Item = Label>) -> Option<Label> {
    let mut counts = [0usize; 2];
    for l in labels {
        counts[l.index()] += 1;
    }
    match counts {
        [0, 0] => None,
        [u, r] => Some(Label::from_bool(r > u)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteOutcome {
    pub n_articles: usize,
    pub n_correct: usize,
    pub prediction: Label,
    pub gold: Label,
}

impl SiteOutcome {
    pub fn correct(&self) -> bool {
        self.prediction == self.gold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAggregation {
    pub per_site: BTreeMap<String, SiteOutcome>,
    pub site_accuracy: f64,
}

/// Aggregates `(source, prediction, gold)` triples per site by majority vote.
pub fn aggregate_site<'a, I>(records: I) -> Result<SiteAggregation>
where
    I: IntoIterator<Item = (&'a str, Label, Label)>,
{
    let mut groups: BTreeMap<String, (Vec<Label>, Vec<Label>)> = BTreeMap::new();
    for (site, pred, gold) in records {
        let g = groups.entry(site.to_owned()).or_default();
        g.0.push(pred);
        g.1.push(gold);
    }
    if groups.is_empty() {
        return Err(Error::Empty("site groups"));
    }
    let per_site: BTreeMap<String, SiteOutcome> = groups
        .into_iter()
        .map(|(site, (preds, golds))| {
            let n_correct = preds.iter().zip(&golds).filter(|(p, g)| p == g).count();
            let outcome = SiteOutcome {
                n_articles: preds.len(),
                n_correct,
                prediction: majority_vote(preds.iter().copied()).expect("non-empty group"),
                gold: majority_vote(golds.iter().copied()).expect("non-empty group"),
            };
            (site, outcome)
        })
        .collect();
    let correct = per_site.values().filter(|o| o.correct()).count();
    Ok(SiteAggregation {
        site_accuracy: correct as f64 / per_site.len() as f64,
        per_site,
    })
}

/// `(article-level, site-level)` majority-class accuracies.
pub fn majority_baselines(articles: &[Article]) -> Result<(f64, f64)> {
    if articles.is_empty() {
        return Err(Error::Empty("evaluation slice"));
    }
    let counts = label_counts(articles);
    let article = counts[0].max(counts[1]) as f64 / articles.len() as f64;
    let mut site_golds: BTreeMap<&str, Vec<Label>> = BTreeMap::new();
    for a in articles {
        site_golds.entry(a.source.as_str()).or_default().push(a.label);
    }
    let mut site_counts = [0usize; 2];
    for labels in site_golds.values() {
        site_counts[majority_vote(labels.iter().copied()).expect("non-empty").index()] += 1;
    }
    let site = site_counts[0].max(site_counts[1]) as f64 / site_golds.len() as f64;
    Ok((article, site))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n_articles: usize,
    pub article_accuracy: f64,
    pub site_accuracy: Option<f64>,
    pub per_site: BTreeMap<String, SiteOutcome>,
    pub majority_article: f64,
    pub majority_site: Option<f64>,
}

/// Scores `predictions` against the gold labels of `articles`.
pub fn evaluate(articles: &[Article], predictions: &[Label]) -> Result<EvalResult> {
    let golds: Vec<Label> = articles.iter().map(|a| a.label).collect();
    let article_accuracy = article_accuracy(predictions, &golds)?;
    let sites = aggregate_site(
        articles
            .iter()
            .zip(predictions)
            .map(|(a, p)| (a.source.as_str(), *p, a.label)),
    )?;
    let (majority_article, majority_site) = majority_baselines(articles)?;
    Ok(EvalResult {
        n_articles: articles.len(),
        article_accuracy,
        site_accuracy: Some(sites.site_accuracy),
        per_site: sites.per_site,
        majority_article,
        majority_site: Some(majority_site),
    })
}

/// Mean and population standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
            n: values.len(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// Percentages with two decimals and the std in parentheses, e.g.
    /// `70.40 (4.28)`. A single run omits the parenthesized part.
    pub fn percent(&self) -> String {
        if self.n > 1 {
            format!("{:.2} ({:.2})", 100.0 * self.mean, 100.0 * self.std)
        } else {
            format!("{:.2}", 100.0 * self.mean)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seeds: Vec<u64>,
    pub results: Vec<EvalResult>,
    pub article: MeanStd,
    pub site: Option<MeanStd>,
}

impl RunSummary {
    pub fn from_results(seeds: Vec<u64>, results: Vec<EvalResult>) -> Result<Self> {
        if seeds.is_empty() || seeds.len() != results.len() {
            return Err(Error::Empty("seeds"));
        }
        let article: Vec<f64> = results.iter().map(|r| r.article_accuracy).collect();
        let site: Vec<f64> = results.iter().filter_map(|r| r.site_accuracy).collect();
        Ok(RunSummary {
            article: MeanStd::of(&article).expect("non-empty"),
            site: if site.len() == results.len() { MeanStd::of(&site) } else { None },
            seeds,
            results,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSet {
    Dev,
    #[default]
    Test,
}

/// One split → train → evaluate recipe, run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: SplitStrategy,
    pub ratios: [f64; 3],
    pub time_boundaries: Option<(NaiveDate, NaiveDate)>,
    pub vocab: VocabParams,
    pub train: TrainParams,
    pub eval_set: EvalSet,
    /// Balance the corpus and then each split set by label.
    pub balance: bool,
    /// Permute site labels before splitting (random-label probe).
    pub permute_labels: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: SplitStrategy::Random,
            ratios: [0.8, 0.1, 0.1],
            time_boundaries: None,
            vocab: VocabParams::default(),
            train: TrainParams::default(),
            eval_set: EvalSet::Test,
            balance: true,
            permute_labels: false,
        }
    }
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub split: Split,
    pub probe: LinearProbe,
    pub eval_articles: Vec<Article>,
    pub predictions: Vec<Label>,
    pub result: EvalResult,
}

fn balance_if_possible(articles: Vec<Article>, seed: u64) -> Result<Vec<Article>> {
    let counts = label_counts(&articles);
    if counts[0] > 0 && counts[1] > 0 {
        balanced_articles(&articles, seed)
    } else {
        Ok(articles)
    }
}

pub fn run_once(corpus: &Corpus, config: &RunConfig, seed: u64) -> Result<SeedRun> {
    let mut working = corpus.clone();
    if config.permute_labels {
        working = permute_site_labels(&working, seed)?;
    }
    if config.balance {
        working = subsample_balanced(&working, seed)?;
    }
    let split = match config.strategy {
        SplitStrategy::Random => random_split(&working, config.ratios, seed)?,
        SplitStrategy::Source => source_split(&working, config.ratios, seed)?,
        SplitStrategy::Time => {
            let bounds = config
                .time_boundaries
                .ok_or_else(|| Error::InvalidParameter("time split needs boundaries".into()))?;
            time_split(&working, bounds)?
        }
    };
    let parts = split.articles(&working);
    let (mut train, mut eval) = match config.eval_set {
        EvalSet::Dev => (parts.train, parts.dev),
        EvalSet::Test => (parts.train, parts.test),
    };
    if eval.is_empty() {
        return Err(Error::EmptySet(match config.eval_set {
            EvalSet::Dev => "dev",
            EvalSet::Test => "test",
        }));
    }
    if config.balance {
        train = balance_if_possible(train, seed)?;
        eval = balance_if_possible(eval, seed)?;
    }
    let params = TrainParams { seed, ..config.train };
    let probe = train_probe(&train, &config.vocab, &params)?;
    let predictions: Vec<Label> = probe.predict_articles(&eval).into_iter().map(|p| p.label).collect();
    let result = evaluate(&eval, &predictions)?;
    Ok(SeedRun {
        seed,
        split,
        probe,
        eval_articles: eval,
        predictions,
        result,
    })
}

/// Runs [`run_once`] for each seed (concurrently) and joins in seed order.
pub fn multi_seed_runs(corpus: &Corpus, config: &RunConfig, seeds: &[u64]) -> Result<Vec<SeedRun>> {
    if seeds.is_empty() {
        return Err(Error::Empty("seeds"));
    }
    seeds
        .par_iter()
        .map(|&seed| run_once(corpus, config, seed).map_err(|e| e.at_seed(seed)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub fn multi_seed(corpus: &Corpus, config: &RunConfig, seeds: &[u64]) -> Result<RunSummary> {
    let runs = multi_seed_runs(corpus, config, seeds)?;
    RunSummary::from_results(seeds.to_vec(), runs.into_iter().map(|r| r.result).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizePoint {
    pub site: String,
    pub n_articles: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub sites: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

impl BucketSummary {
    fn of<'a>(points: impl Iterator<Item = &'a SizePoint>) -> Self {
        let (mut sites, mut correct) = (0, 0);
        for p in points {
            sites += 1;
            correct += p.correct as usize;
        }
        BucketSummary {
            sites,
            correct,
            accuracy: (sites > 0).then(|| correct as f64 / sites as f64),
        }
    }
}

/// Site-level correctness against site size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeProfile {
    pub threshold: usize,
    pub points: Vec<SizePoint>,
    /// Sites with fewer than `threshold` articles.
    pub below: BucketSummary,
    pub at_or_above: BucketSummary,
}

impl SizeProfile {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["site", "n", "correct"])?;
        for p in &self.points {
            w.write_record([p.site.as_str(), &p.n_articles.to_string(), if p.correct { "1" } else { "0" }])?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))
    }
}

/// Plot-ready `(site, size, correct)` points sorted by size, with accuracy
/// summaries below and at/above `threshold` articles.
pub fn size_accuracy_profile<'a, I>(per_site: I, threshold: usize) -> SizeProfile
where
    I: IntoIterator<Item = (&'a String, &'a SiteOutcome)>,
{
    let mut points: Vec<SizePoint> = per_site
        .into_iter()
        .map(|(site, o)| SizePoint {
            site: site.clone(),
            n_articles: o.n_articles,
            correct: o.correct(),
        })
        .collect();
    points.sort_by(|a, b| a.n_articles.cmp(&b.n_articles).then_with(|| a.site.cmp(&b.site)));
    SizeProfile {
        threshold,
        below: BucketSummary::of(points.iter().filter(|p| p.n_articles < threshold)),
        at_or_above: BucketSummary::of(points.iter().filter(|p| p.n_articles >= threshold)),
        points,
    }
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or the lengths differ.
pub fn rank_correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
