//! Train/dev/test partitioning and the site-label permutation probe.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{label_counts, Article, Corpus, Label};
use crate::error::{Error, Result};
use crate::seeded_rng;

const RANDOM_SPLIT_STREAM: u64 = 0x5071;
const SOURCE_SPLIT_STREAM: u64 = 0x5072;
const PERMUTE_STREAM: u64 = 0x9e47;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    Random,
    Source,
    Time,
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitStrategy::Random => "random",
            SplitStrategy::Source => "source",
            SplitStrategy::Time => "time",
        })
    }
}

impl std::str::FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random" => Ok(SplitStrategy::Random),
            "source" => Ok(SplitStrategy::Source),
            "time" => Ok(SplitStrategy::Time),
            other => Err(Error::InvalidParameter(format!("unknown split strategy {other:?}"))),
        }
    }
}

/// One value per partition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerSet<T> {
    pub train: T,
    pub dev: T,
    pub test: T,
}

impl<T> PerSet<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerSet<U> {
        PerSet {
            train: f(&self.train),
            dev: f(&self.dev),
            test: f(&self.test),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &T)> {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)].into_iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DateRange {
    pub first: NaiveDate,
    pub last: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMetadata {
    pub sites: PerSet<Vec<String>>,
    pub date_ranges: PerSet<Option<DateRange>>,
    /// `[unreliable, reliable]` counts.
    pub label_histograms: PerSet<[usize; 2]>,
    /// Articles left out of every set (e.g. undated articles in a time split).
    pub excluded: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub boundaries: Option<(NaiveDate, NaiveDate)>,
    /// Shuffled site order fed to the greedy source assignment.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub site_order: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub balancing_unit: Option<String>,
}

/// A partition of corpus ids into train/dev/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub strategy: SplitStrategy,
    pub seed: Option<u64>,
    pub ratios: Option<[f64; 3]>,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub metadata: SplitMetadata,
}

impl Split {
    pub fn sets(&self) -> PerSet<&[String]> {
        PerSet {
            train: &self.train,
            dev: &self.dev,
            test: &self.test,
        }
    }

    /// Articles of each set, in corpus order.
    pub fn articles(&self, corpus: &Corpus) -> PerSet<Vec<Article>> {
        PerSet {
            train: corpus.select(&self.train),
            dev: corpus.select(&self.dev),
            test: corpus.select(&self.test),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

fn check_ratios(ratios: [f64; 3]) -> Result<()> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidParameter(format!("ratios must be positive, got {ratios:?}")));
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadRatios(sum));
    }
    Ok(())
}

/// Set sizes: floor of each share, remainder to train then dev.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let mut sizes = ratios.map(|r| (n as f64 * r + 1e-9).floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut remainder = n.saturating_sub(assigned);
    let mut slot = 0;
    while remainder > 0 {
        sizes[slot % 2] += 1;
        remainder -= 1;
        slot += 1;
    }
    sizes
}

fn metadata_for(corpus: &Corpus, sets: &PerSet<Vec<String>>) -> SplitMetadata {
    let by_id: HashMap<&str, &Article> = corpus.articles().iter().map(|a| (a.id.as_str(), a)).collect();
    let collect = |ids: &Vec<String>| -> Vec<&Article> { ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect() };
    let sites = sets.map(|ids| {
        collect(ids)
            .iter()
            .map(|a| a.source.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    });
    let date_ranges = sets.map(|ids| {
        let dates: Vec<NaiveDate> = collect(ids).iter().filter_map(|a| a.published_at).collect();
        Some(DateRange {
            first: *dates.iter().min()?,
            last: *dates.iter().max()?,
        })
    });
    let label_histograms = sets.map(|ids| {
        let arts: Vec<Article> = collect(ids).into_iter().cloned().collect();
        label_counts(&arts)
    });
    SplitMetadata {
        sites,
        date_ranges,
        label_histograms,
        ..SplitMetadata::default()
    }
}

/// Orders each set's ids as they appear in the corpus.
fn in_corpus_order(corpus: &Corpus, assignment: &HashMap<&str, usize>) -> PerSet<Vec<String>> {
    let mut sets: [Vec<String>; 3] = Default::default();
    for a in corpus.articles() {
        if let Some(&k) = assignment.get(a.id.as_str()) {
            sets[k].push(a.id.clone());
        }
    }
    let [train, dev, test] = sets;
    PerSet { train, dev, test }
}

/// Seeded shuffle of all articles, then contiguous slices at the ratio
/// boundaries.
pub fn random_split(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<Split> {
    check_ratios(ratios)?;
    let n = corpus.len();
    if n < 3 {
        return Err(Error::TooFew {
            what: "articles",
            need: 3,
            have: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed, RANDOM_SPLIT_STREAM));
    let sizes = split_sizes(n, ratios);
    let mut assignment = HashMap::with_capacity(n);
    let mut cursor = 0;
    for (k, size) in sizes.iter().enumerate() {
        for &i in &order[cursor..cursor + size] {
            assignment.insert(corpus.articles()[i].id.as_str(), k);
        }
        cursor += size;
    }
    let sets = in_corpus_order(corpus, &assignment);
    let metadata = metadata_for(corpus, &sets);
    Ok(Split {
        strategy: SplitStrategy::Random,
        seed: Some(seed),
        ratios: Some(ratios),
        train: sets.train,
        dev: sets.dev,
        test: sets.test,
        metadata,
    })
}

/// Greedy site assignment: each site, in `order`, goes to the set whose
/// article share is furthest below its target ratio (ties, within 1e-12,
/// to the earlier set). Returns the set index per site.
pub fn greedy_site_assignment(order: &[(String, usize)], ratios: [f64; 3]) -> Vec<usize> {
    let total: usize = order.iter().map(|s| s.1).sum();
    let total = total.max(1) as f64;
    let mut counts = [0usize; 3];
    order
        .iter()
        .map(|(_, size)| {
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for k in 0..3 {
                let deficit = ratios[k] - counts[k] as f64 / total;
                // deficits equal up to rounding count as a tie
                if deficit > best_deficit + 1e-12 {
                    best = k;
                    best_deficit = deficit;
                }
            }
            counts[best] += size;
            best
        })
        .collect()
}

/// Splits by site so that no source appears in more than one set. Sites are
/// balanced by article count.
pub fn source_split(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<Split> {
    check_ratios(ratios)?;
    let sizes = corpus.site_sizes();
    if sizes.len() < 3 {
        return Err(Error::TooFew {
            what: "sources",
            need: 3,
            have: sizes.len(),
        });
    }
    let mut order: Vec<(String, usize)> = sizes.into_iter().collect();
    order.shuffle(&mut seeded_rng(seed, SOURCE_SPLIT_STREAM));
    let sets_of_sites = greedy_site_assignment(&order, ratios);
    let site_set: HashMap<&str, usize> = order
        .iter()
        .zip(&sets_of_sites)
        .map(|((site, _), &k)| (site.as_str(), k))
        .collect();
    let assignment: HashMap<&str, usize> = corpus
        .articles()
        .iter()
        .map(|a| (a.id.as_str(), site_set[a.source.as_str()]))
        .collect();
    let sets = in_corpus_order(corpus, &assignment);
    for (name, ids) in sets.iter() {
        if ids.is_empty() {
            return Err(Error::EmptySet(name));
        }
    }
    let mut metadata = metadata_for(corpus, &sets);
    metadata.site_order = Some(order.into_iter().map(|(s, _)| s).collect());
    metadata.balancing_unit = Some("articles".into());
    Ok(Split {
        strategy: SplitStrategy::Source,
        seed: Some(seed),
        ratios: Some(ratios),
        train: sets.train,
        dev: sets.dev,
        test: sets.test,
        metadata,
    })
}

/// train: before `first`; dev: `[first, second)`; test: on/after `second`.
/// Undated articles are excluded and listed in the metadata.
pub fn time_split(corpus: &Corpus, boundaries: (NaiveDate, NaiveDate)) -> Result<Split> {
    let (first, second) = boundaries;
    if first >= second {
        return Err(Error::InvalidParameter(format!(
            "time boundaries must be increasing: {first} >= {second}"
        )));
    }
    let mut assignment = HashMap::new();
    let mut excluded = Vec::new();
    for a in corpus.articles() {
        match a.published_at {
            None => excluded.push(a.id.clone()),
            Some(d) if d < first => {
                assignment.insert(a.id.as_str(), 0);
            }
            Some(d) if d < second => {
                assignment.insert(a.id.as_str(), 1);
            }
            Some(_) => {
                assignment.insert(a.id.as_str(), 2);
            }
        }
    }
    let sets = in_corpus_order(corpus, &assignment);
    for (name, ids) in sets.iter() {
        if ids.is_empty() {
            return Err(Error::EmptySet(name));
        }
    }
    let mut metadata = metadata_for(corpus, &sets);
    metadata.excluded = excluded;
    metadata.boundaries = Some(boundaries);
    Ok(Split {
        strategy: SplitStrategy::Time,
        seed: None,
        ratios: None,
        train: sets.train,
        dev: sets.dev,
        test: sets.test,
        metadata,
    })
}

/// Calendar-month key, e.g. `2019-03`.
pub fn month_bucket(date: NaiveDate) -> String {
    format!("{:04}-{:02}", date.year(), date.month())
}

/// Article positions grouped by calendar month; undated articles are skipped.
pub fn bucket_by_month(articles: &[Article]) -> BTreeMap<String, Vec<usize>> {
    let mut buckets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, a) in articles.iter().enumerate() {
        if let Some(d) = a.published_at {
            buckets.entry(month_bucket(d)).or_default().push(i);
        }
    }
    buckets
}

/// Reassigns the multiset of site labels to sites by a seeded permutation.
/// When both labels occur, permutations that leave every site unchanged are
/// redrawn.
pub fn permute_site_labels(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let original = corpus.site_labels()?;
    let sites: Vec<&String> = original.0.keys().collect();
    let before: Vec<Label> = original.0.values().copied().collect();
    let distinct = before.iter().collect::<BTreeSet<_>>().len();
    let mut rng = seeded_rng(seed, PERMUTE_STREAM);
    let mut after = before.clone();
    loop {
        after.shuffle(&mut rng);
        if distinct < 2 || after != before {
            break;
        }
    }
    let new_labels: HashMap<&str, Label> = sites.iter().map(|s| s.as_str()).zip(after.iter().copied()).collect();
    let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
    let articles = corpus
        .articles()
        .iter()
        .map(|a| Article {
            label: new_labels[a.source.as_str()],
            ..a.clone()
        })
        .collect();
    corpus.derive(
        articles,
        format!("permuted site labels seed={seed}: {changed} of {} sites changed", sites.len()),
    )
}
