//! Site representations and distributional distances between sites.
//!
//! A site is the matrix of its articles' representation vectors. L2 and
//! cosine compare site means; MMD and CORAL compare the full samples. The
//! similarity score of an evaluation site is the ratio of its nearest
//! opposite-label training site distance to its nearest same-label one, so
//! values above 1 mean the closest training site shares its label.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Label};
use crate::error::{Error, Result};
use crate::eval::rank_correlation;
use crate::features::vectorize;
use crate::probe::LinearProbe;

/// Lower clamp applied to distances before taking the similarity ratio.
pub const DISTANCE_FLOOR: f64 = 1e-12;

/// One site's article representations, `n × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSet {
    pub site: String,
    pub label: Label,
    dim: usize,
    rows: Vec<f64>,
}

impl SiteSet {
    pub fn new(site: impl Into<String>, label: Label, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.is_empty() {
            return Err(Error::Empty("site rows"));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("zero-dimensional representation".into()));
        }
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            flat.extend_from_slice(r);
        }
        Ok(SiteSet {
            site: site.into(),
            label,
            dim,
            rows: flat,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistanceKind {
    L2,
    Cosine,
    /// Unbiased MMD² with a Gaussian kernel; `None` picks the bandwidth by
    /// the median pairwise distance of the pooled samples.
    Mmd { bandwidth: Option<f64> },
    Coral,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 4] = [
        DistanceKind::L2,
        DistanceKind::Cosine,
        DistanceKind::Mmd { bandwidth: None },
        DistanceKind::Coral,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::L2 => "l2",
            DistanceKind::Cosine => "cosine",
            DistanceKind::Mmd { .. } => "mmd",
            DistanceKind::Coral => "coral",
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" => Ok(DistanceKind::L2),
            "cosine" | "cos" => Ok(DistanceKind::Cosine),
            "mmd" => Ok(DistanceKind::Mmd { bandwidth: None }),
            "coral" => Ok(DistanceKind::Coral),
            other => Err(Error::InvalidParameter(format!("unknown distance {other:?}"))),
        }
    }
}

fn same_dim(a: &SiteSet, b: &SiteSet) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    Ok(())
}

fn need_two(s: &SiteSet) -> Result<()> {
    if s.len() < 2 {
        return Err(Error::TooFew {
            what: "articles in site",
            need: 2,
            have: s.len(),
        });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn site_mean(site: &SiteSet) -> Vec<f64> {
    let mut mean = vec![0.0; site.dim];
    for r in site.rows() {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    let n = site.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

pub fn l2_distance(a: &SiteSet, b: &SiteSet) -> Result<f64> {
    same_dim(a, b)?;
    Ok(sq_dist(&site_mean(a), &site_mean(b)).sqrt())
}

pub fn cosine_distance(a: &SiteSet, b: &SiteSet) -> Result<f64> {
    same_dim(a, b)?;
    let (ma, mb) = (site_mean(a), site_mean(b));
    let na = ma.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = mb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "zero mean representation for site {}",
            if na == 0.0 { &a.site } else { &b.site }
        )));
    }
    let cos = ma.iter().zip(&mb).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Median Euclidean distance over all pairs of the pooled rows of `a` and
/// `b`. Falls back to 1 when every pooled row coincides.
pub fn median_bandwidth(a: &SiteSet, b: &SiteSet) -> f64 {
    let pooled: Vec<&[f64]> = a.rows().chain(b.rows()).collect();
    let mut d = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Unbiased MMD² estimate with `k(x, y) = exp(-‖x − y‖² / (2σ²))`. Can be
/// slightly negative when both samples come from one distribution.
pub fn mmd_distance(a: &SiteSet, b: &SiteSet, bandwidth: f64) -> Result<f64> {
    same_dim(a, b)?;
    need_two(a)?;
    need_two(b)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let k = |x: &[f64], y: &[f64]| (-gamma * sq_dist(x, y)).exp();
    let within = |s: &SiteSet| {
        let n = s.len();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sum += k(s.row(i), s.row(j));
                }
            }
        }
        sum / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for x in a.rows() {
        for y in b.rows() {
            cross += k(x, y);
        }
    }
    Ok(within(a) + within(b) - 2.0 * cross / (a.len() * b.len()) as f64)
}

/// Sample covariance (`1/(n−1)`), row-major `dim × dim`.
pub fn covariance(s: &SiteSet) -> Vec<f64> {
    let d = s.dim;
    let mean = site_mean(s);
    let mut cov = vec![0.0; d * d];
    for r in s.rows() {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += di * (r[j] - mean[j]);
            }
        }
    }
    let denom = (s.len() - 1) as f64;
    cov.iter_mut().for_each(|c| *c /= denom);
    cov
}

/// `‖C_a − C_b‖²_F / (4d²)`.
pub fn coral_distance(a: &SiteSet, b: &SiteSet) -> Result<f64> {
    same_dim(a, b)?;
    need_two(a)?;
    need_two(b)?;
    let d = a.dim as f64;
    let (ca, cb) = (covariance(a), covariance(b));
    Ok(sq_dist(&ca, &cb) / (4.0 * d * d))
}

pub fn distance(a: &SiteSet, b: &SiteSet, kind: DistanceKind) -> Result<f64> {
    match kind {
        DistanceKind::L2 => l2_distance(a, b),
        DistanceKind::Cosine => cosine_distance(a, b),
        DistanceKind::Mmd { bandwidth } => {
            let bw = match bandwidth {
                Some(bw) => bw,
                None => median_bandwidth(a, b),
            };
            mmd_distance(a, b, bw)
        }
        DistanceKind::Coral => coral_distance(a, b),
    }
}

/// `min_{opposite} dist / min_{same} dist`, each clamped below at
/// [`DISTANCE_FLOOR`].
pub fn sim_score(site: &SiteSet, train_sites: &[SiteSet], kind: DistanceKind) -> Result<f64> {
    let mut nearest = [f64::INFINITY; 2];
    for t in train_sites {
        let d = distance(site, t, kind)?;
        let same = (t.label == site.label) as usize;
        nearest[same] = nearest[same].min(d);
    }
    if nearest[1].is_infinite() {
        return Err(Error::MissingLabelClass(site.label.as_u8()));
    }
    if nearest[0].is_infinite() {
        return Err(Error::MissingLabelClass(site.label.flip().as_u8()));
    }
    Ok(nearest[0].max(DISTANCE_FLOOR) / nearest[1].max(DISTANCE_FLOOR))
}

/// An evaluation site with the accuracy a model reached on it.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSite {
    pub set: SiteSet,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankGroup {
    Top,
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSimilarity {
    pub site: String,
    pub label: Label,
    pub accuracy: f64,
    pub group: Option<RankGroup>,
    /// Distance name → similarity score.
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub distance: String,
    pub top_mean: Option<f64>,
    pub bottom_mean: Option<f64>,
    pub top_count: usize,
    pub bottom_count: usize,
    /// Spearman correlation of per-site accuracy with the score.
    pub rank_correlation: Option<f64>,
}

/// Mean similarity score of the best- and worst-scoring evaluation sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable {
    pub rows: Vec<SimilarityRow>,
    pub per_site: Vec<SiteSimilarity>,
    pub eligible_eval_sites: usize,
    pub eligible_train_sites: usize,
    pub warnings: Vec<String>,
}

impl SimilarityTable {
    fn summarize(per_site: &[SiteSimilarity], kinds: &[String]) -> Vec<SimilarityRow> {
        kinds
            .iter()
            .map(|k| {
                let group_mean = |g: RankGroup| {
                    let v: Vec<f64> = per_site
                        .iter()
                        .filter(|s| s.group == Some(g))
                        .filter_map(|s| s.scores.get(k).copied())
                        .collect();
                    let mean = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
                    (mean, v.len())
                };
                let (top_mean, top_count) = group_mean(RankGroup::Top);
                let (bottom_mean, bottom_count) = group_mean(RankGroup::Bottom);
                let (acc, score): (Vec<f64>, Vec<f64>) = per_site
                    .iter()
                    .filter_map(|s| s.scores.get(k).map(|v| (s.accuracy, *v)))
                    .unzip();
                SimilarityRow {
                    distance: k.clone(),
                    top_mean,
                    bottom_mean,
                    top_count,
                    bottom_count,
                    rank_correlation: rank_correlation(&acc, &score),
                }
            })
            .collect()
    }

    /// Grand mean over every (site, split) pair of several tables.
    pub fn pooled(tables: &[SimilarityTable]) -> Option<SimilarityTable> {
        let first = tables.first()?;
        let kinds: Vec<String> = first.rows.iter().map(|r| r.distance.clone()).collect();
        let per_site: Vec<SiteSimilarity> = tables.iter().flat_map(|t| t.per_site.iter().cloned()).collect();
        Some(SimilarityTable {
            rows: Self::summarize(&per_site, &kinds),
            eligible_eval_sites: tables.iter().map(|t| t.eligible_eval_sites).sum(),
            eligible_train_sites: tables.iter().map(|t| t.eligible_train_sites).sum(),
            warnings: tables.iter().flat_map(|t| t.warnings.iter().cloned()).collect(),
            per_site,
        })
    }

    pub fn row(&self, distance: &str) -> Option<&SimilarityRow> {
        self.rows.iter().find(|r| r.distance == distance)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["distance", "top_mean", "bottom_mean", "top_count", "bottom_count", "rank_correlation"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.distance.clone(),
                opt(r.top_mean),
                opt(r.bottom_mean),
                r.top_count.to_string(),
                r.bottom_count.to_string(),
                opt(r.rank_correlation),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))
    }
}

/// Ranks evaluation sites by accuracy (ties by site name), scores each
/// against the training sites for every distance kind, and averages the
/// top-`top_n` and bottom-`top_n` groups. Sites with fewer than
/// `min_site_count` articles are ignored on both sides. With fewer than
/// `2 × top_n` eligible evaluation sites the table is built from the two
/// halves and a warning is recorded.
pub fn similarity_table(
    eval_sites: &[RankedSite],
    train_sites: &[SiteSet],
    kinds: &[DistanceKind],
    min_site_count: usize,
    top_n: usize,
) -> Result<SimilarityTable> {
    let mut warnings = Vec::new();
    let train: Vec<SiteSet> = train_sites.iter().filter(|s| s.len() >= min_site_count).cloned().collect();
    let mut eval: Vec<&RankedSite> = eval_sites.iter().filter(|s| s.set.len() >= min_site_count).collect();
    eval.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then_with(|| a.set.site.cmp(&b.set.site)));
    let names: Vec<String> = kinds.iter().map(|k| k.name().to_owned()).collect();

    let m = eval.len();
    let group_size = if m >= 2 * top_n {
        top_n
    } else {
        warnings.push(format!(
            "only {m} evaluation sites with at least {min_site_count} articles; comparing halves instead of top/bottom {top_n}"
        ));
        m / 2
    };
    let has_both = Label::BOTH.iter().all(|l| train.iter().any(|t| t.label == *l));
    if !has_both {
        warnings.push(format!(
            "training sites with at least {min_site_count} articles lack one label; no scores computed"
        ));
    }
    let per_site: Vec<SiteSimilarity> = if has_both {
        eval.par_iter()
            .enumerate()
            .map(|(rank, s)| {
                let scores = kinds
                    .iter()
                    .map(|k| Ok((k.name().to_owned(), sim_score(&s.set, &train, *k)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                let group = if rank < group_size {
                    Some(RankGroup::Top)
                } else if rank >= m - group_size {
                    Some(RankGroup::Bottom)
                } else {
                    None
                };
                Ok(SiteSimilarity {
                    site: s.set.site.clone(),
                    label: s.set.label,
                    accuracy: s.accuracy,
                    group,
                    scores,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(SimilarityTable {
        rows: SimilarityTable::summarize(&per_site, &names),
        per_site,
        eligible_eval_sites: m,
        eligible_train_sites: train.len(),
        warnings,
    })
}

/// Groups articles by source into site sets using `represent` for each
/// article. The site label is the majority article label.
pub fn site_sets<F>(articles: &[Article], mut represent: F) -> Result<Vec<SiteSet>>
where
    F: FnMut(&Article) -> Option<Vec<f64>>,
{
    let mut groups: BTreeMap<&str, (Vec<Vec<f64>>, Vec<Label>)> = BTreeMap::new();
    for a in articles {
        let v = represent(a).ok_or_else(|| Error::InvalidArticle(format!("{}: no representation", a.id)))?;
        let g = groups.entry(a.source.as_str()).or_default();
        g.0.push(v);
        g.1.push(a.label);
    }
    groups
        .into_iter()
        .map(|(site, (rows, labels))| {
            let label = crate::eval::majority_vote(labels).expect("non-empty");
            SiteSet::new(site, label, &rows)
        })
        .collect()
}

/// Site sets from the articles' attached embeddings.
pub fn embedding_site_sets(articles: &[Article]) -> Result<Vec<SiteSet>> {
    site_sets(articles, |a| a.embedding.clone())
}

/// Dense fallback representation: each article's TFIDF vector restricted to
/// the probe's `dim` largest-magnitude features.
pub fn projected_site_sets(articles: &[Article], probe: &LinearProbe, dim: usize) -> Result<Vec<SiteSet>> {
    let features = probe.top_feature_indices(dim);
    if features.is_empty() {
        return Err(Error::Empty("probe vocabulary"));
    }
    site_sets(articles, |a| {
        let dense = vectorize(&probe.vocab.field().extract(a), &probe.vocab).to_dense();
        Some(features.iter().map(|&i| dense[i]).collect())
    })
}
