//! Bag-of-words features and token/outcome association.
//!
//! Vectors are raw term counts times a smoothed idf,
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, then L2-normalized. No stop
//! words are removed: stop-word skew between classes is one of the biases a
//! probe is supposed to surface.
//!
//! PMI is computed over document presence. For every token, each cell of the
//! 2×2 table (token present × outcome) gets one added to it, so
//! `pmi(w, y) = ln((c(w, y) + 1)(N + 4) / ((c(w) + 2)(N_y + 2)))`.
//! A token spread evenly over a balanced slice scores exactly zero.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Article, Label};
use crate::error::{Error, Result};

/// Which article text a feature extractor reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TextField {
    #[default]
    #[serde(rename = "title")]
    Title,
    #[serde(rename = "title+body")]
    TitleBody,
}

impl TextField {
    pub fn extract<'a>(&self, article: &'a Article) -> Cow<'a, str> {
        match (self, &article.body) {
            (TextField::TitleBody, Some(body)) => Cow::Owned(format!("{}\n{}", article.title, body)),
            _ => Cow::Borrowed(article.title.as_str()),
        }
    }
}

impl fmt::Display for TextField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextField::Title => "title",
            TextField::TitleBody => "title+body",
        })
    }
}

impl std::str::FromStr for TextField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "title" => Ok(TextField::Title),
            "title+body" | "title_body" => Ok(TextField::TitleBody),
            other => Err(Error::InvalidParameter(format!("unknown field {other:?}"))),
        }
    }
}

/// Lowercased alphanumeric runs, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabParams {
    pub field: TextField,
    pub min_df: usize,
    pub max_features: usize,
}

impl Default for VocabParams {
    fn default() -> Self {
        VocabParams {
            field: TextField::Title,
            min_df: 2,
            max_features: 50_000,
        }
    }
}

/// Token → dense feature index, with document frequencies and idf.
///
/// Indices follow lexicographic token order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    df: Vec<usize>,
    idf: Vec<f64>,
    num_documents: usize,
    field: TextField,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    df: Vec<usize>,
    idf: Vec<f64>,
    num_documents: usize,
    field: TextField,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens: r.tokens,
            df: r.df,
            idf: r.idf,
            num_documents: r.num_documents,
            field: r.field,
            index,
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary over raw documents.
    pub fn fit<S: AsRef<str>>(docs: &[S], field: TextField, min_df: usize, max_features: usize) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Empty("corpus slice"));
        }
        if min_df == 0 {
            return Err(Error::InvalidParameter("min_df must be at least 1".into()));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let unique: HashSet<String> = tokenize(doc.as_ref()).into_iter().collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, c)| *c >= min_df).collect();
        if kept.len() > max_features {
            kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            kept.truncate(max_features);
        }
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        let n = docs.len();
        let idf = kept
            .iter()
            .map(|(_, c)| ((1.0 + n as f64) / (1.0 + *c as f64)).ln() + 1.0)
            .collect();
        let (tokens, df): (Vec<String>, Vec<usize>) = kept.into_iter().unzip();
        Ok(VocabularyRepr {
            tokens,
            df,
            idf,
            num_documents: n,
            field,
        }
        .into())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn field(&self) -> TextField {
        self.field
    }

    pub fn num_documents(&self) -> usize {
        self.num_documents
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn document_frequency(&self, index: usize) -> usize {
        self.df[index]
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    /// Same vocabulary with every idf multiplied by `factor`.
    pub fn with_idf_scaled(&self, factor: f64) -> Self {
        let mut v = self.clone();
        v.idf.iter_mut().for_each(|x| *x *= factor);
        v
    }

    /// SHA-256 over tokens, document frequencies and document count; lets a
    /// serialized probe reference the vocabulary it was trained with.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.num_documents.to_le_bytes());
        for (t, df) in self.tokens.iter().zip(&self.df) {
            h.update(t.as_bytes());
            h.update([0u8]);
            h.update(df.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Tokens of `text` that are in the vocabulary, as indices.
    pub fn known_indices(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().filter_map(|t| self.index_of(t)).collect()
    }
}

pub fn build_vocabulary(articles: &[Article], params: &VocabParams) -> Result<Vocabulary> {
    let docs: Vec<Cow<'_, str>> = articles.iter().map(|a| params.field.extract(a)).collect();
    Vocabulary::fit(&docs, params.field, params.min_df, params.max_features)
}

/// Sparse real vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidParameter(format!("duplicate index {}", w[0].0)));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dim {
                return Err(Error::DimensionMismatch { expected: dim, got: i + 1 });
            }
        }
        if entries.iter().any(|e| !e.1.is_finite()) {
            return Err(Error::NonFinite(0));
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector { dim, entries: Vec::new() }
    }

    /// Keeps every non-zero coordinate of a dense vector.
    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.1.is_finite())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// TFIDF vector of `text`, L2-normalized; all-OOV text gives the zero vector.
pub fn vectorize(text: &str, vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for i in vocab.known_indices(text) {
        *counts.entry(i).or_insert(0) += 1;
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, c)| (i, c as f64 * vocab.idf(i)))
        .collect();
    let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    if norm > 0.0 {
        entries.iter_mut().for_each(|e| e.1 /= norm);
    }
    SparseVector {
        dim: vocab.len(),
        entries,
    }
}

pub fn vectorize_articles(articles: &[Article], vocab: &Vocabulary) -> Vec<SparseVector> {
    articles
        .iter()
        .map(|a| vectorize(&vocab.field().extract(a), vocab))
        .collect()
}

/// Association of one token with a binary outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiEntry {
    pub token: String,
    pub pmi_positive: f64,
    pub pmi_negative: f64,
    /// Documents containing the token.
    pub count: usize,
}

/// PMI of every vocabulary token present in `docs` against `outcomes`,
/// sorted by `pmi_positive` descending (ties by token).
pub fn pmi_table<S: AsRef<str>>(docs: &[S], outcomes: &[bool], vocab: &Vocabulary) -> Result<Vec<PmiEntry>> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus slice"));
    }
    if docs.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            what: "documents vs outcomes",
            left: docs.len(),
            right: outcomes.len(),
        });
    }
    let n = docs.len() as f64;
    let n_pos = outcomes.iter().filter(|&&o| o).count();
    let n_neg = outcomes.len() - n_pos;
    let mut joint = vec![[0usize; 2]; vocab.len()];
    for (doc, &positive) in docs.iter().zip(outcomes) {
        let mut present: Vec<usize> = vocab.known_indices(doc.as_ref());
        present.sort_unstable();
        present.dedup();
        for i in present {
            joint[i][positive as usize] += 1;
        }
    }
    let smoothed = |c_wy: usize, c_w: usize, n_y: usize| -> f64 {
        ((c_wy as f64 + 1.0) * (n + 4.0) / ((c_w as f64 + 2.0) * (n_y as f64 + 2.0))).ln()
    };
    let mut entries: Vec<PmiEntry> = joint
        .iter()
        .enumerate()
        .filter(|(_, c)| c[0] + c[1] > 0)
        .map(|(i, c)| {
            let c_w = c[0] + c[1];
            PmiEntry {
                token: vocab.token(i).to_owned(),
                pmi_positive: smoothed(c[1], c_w, n_pos),
                pmi_negative: smoothed(c[0], c_w, n_neg),
                count: c_w,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.pmi_positive
            .total_cmp(&a.pmi_positive)
            .then_with(|| a.token.cmp(&b.token))
    });
    Ok(entries)
}

/// PMI between tokens and the article label (positive = reliable).
pub fn pmi_by_label(articles: &[Article], vocab: &Vocabulary) -> Result<Vec<PmiEntry>> {
    if articles.is_empty() {
        return Err(Error::Empty("corpus slice"));
    }
    let outcomes: Vec<bool> = articles.iter().map(|a| a.label.is_positive()).collect();
    match outcomes.iter().filter(|&&o| o).count() {
        0 => return Err(Error::SingleLabel(0)),
        k if k == outcomes.len() => return Err(Error::SingleLabel(1)),
        _ => {}
    }
    let docs: Vec<Cow<'_, str>> = articles.iter().map(|a| vocab.field().extract(a)).collect();
    pmi_table(&docs, &outcomes, vocab)
}

/// Token rankings for correct and incorrect predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePmi {
    /// Ranked by association with a correct prediction.
    pub correct: Vec<WeightedToken>,
    /// Ranked by association with an incorrect prediction.
    pub incorrect: Vec<WeightedToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedToken {
    pub token: String,
    pub weight: f64,
    pub count: usize,
}

impl OutcomePmi {
    pub fn truncated(&self, k: usize) -> Self {
        OutcomePmi {
            correct: self.correct.iter().take(k).cloned().collect(),
            incorrect: self.incorrect.iter().take(k).cloned().collect(),
        }
    }

    pub fn records(&self) -> Vec<SalienceRecord> {
        let side = |list: &[WeightedToken], side: Side| {
            list.iter()
                .map(|w| SalienceRecord {
                    token: w.token.clone(),
                    weight: w.weight,
                    side,
                    count: w.count,
                })
                .collect::<Vec<_>>()
        };
        let mut out = side(&self.correct, Side::Positive);
        out.extend(side(&self.incorrect, Side::Negative));
        out
    }
}

/// PMI between tokens and prediction correctness.
pub fn pmi_by_correctness(articles: &[Article], predictions: &[Label], vocab: &Vocabulary) -> Result<OutcomePmi> {
    if articles.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            what: "articles vs predictions",
            left: articles.len(),
            right: predictions.len(),
        });
    }
    if articles.is_empty() {
        return Err(Error::Empty("evaluation articles"));
    }
    let outcomes: Vec<bool> = articles.iter().zip(predictions).map(|(a, p)| a.label == *p).collect();
    match outcomes.iter().filter(|&&o| o).count() {
        0 => return Err(Error::DegenerateOutcome("incorrect")),
        k if k == outcomes.len() => return Err(Error::DegenerateOutcome("correct")),
        _ => {}
    }
    let docs: Vec<Cow<'_, str>> = articles.iter().map(|a| vocab.field().extract(a)).collect();
    let entries = pmi_table(&docs, &outcomes, vocab)?;
    Ok(rank_sides(&entries))
}

fn rank_sides(entries: &[PmiEntry]) -> OutcomePmi {
    let to_weighted = |e: &PmiEntry, w: f64| WeightedToken {
        token: e.token.clone(),
        weight: w,
        count: e.count,
    };
    let correct = entries.iter().map(|e| to_weighted(e, e.pmi_positive)).collect();
    let mut incorrect: Vec<WeightedToken> = entries.iter().map(|e| to_weighted(e, e.pmi_negative)).collect();
    incorrect.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.token.cmp(&b.token)));
    OutcomePmi { correct, incorrect }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Positive,
    Negative,
}

/// One line of the salience / PMI JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceRecord {
    pub token: String,
    pub weight: f64,
    pub side: Side,
    pub count: usize,
}

/// Top-`k` PMI records per side: positive side ranked by `pmi_positive`,
/// negative side by `pmi_negative`.
pub fn pmi_records(entries: &[PmiEntry], k: usize) -> Vec<SalienceRecord> {
    rank_sides(entries)
        .truncated(k)
        .records()
}

pub fn write_jsonl_records<W: Write>(records: &[SalienceRecord], out: &mut W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}
