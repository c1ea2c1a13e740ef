//! Labeled news corpora: ingestion, validation, site-level labeling and
//! balanced subsampling.
//!
//! A [`Corpus`] is immutable once built. Every transform returns a new corpus
//! and appends a line to its provenance so a report can say exactly which
//! steps produced the data it was computed on.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use rand::seq::index;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::seeded_rng;

const SUBSAMPLE_STREAM: u64 = 0x5ab5;

/// Binary reliability label. Serialized as `0` (unreliable) / `1` (reliable).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Unreliable,
    Reliable,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Unreliable, Label::Reliable];

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Unreliable => 0,
            Label::Reliable => 1,
        }
    }

    pub fn index(self) -> usize {
        self.as_u8() as usize
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Unreliable),
            1 => Some(Label::Reliable),
            _ => None,
        }
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Reliable
        } else {
            Label::Unreliable
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Reliable
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Unreliable => Label::Reliable,
            Label::Reliable => Label::Unreliable,
        }
    }

    /// Parses the accepted label spellings: `0`/`1`, `unreliable`/`reliable`,
    /// `fake`/`real`, case-insensitive.
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "0" | "unreliable" | "fake" => Some(Label::Unreliable),
            "1" | "reliable" | "real" => Some(Label::Reliable),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        label_from_json(&v).ok_or_else(|| serde::de::Error::custom(format!("bad label {v}")))
    }
}

fn label_from_json(v: &Value) -> Option<Label> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|x| u8::try_from(x).ok()).and_then(Label::from_u8),
        Value::String(s) => Label::parse(s),
        _ => None,
    }
}

/// One news item.
#[derive(Debug, Clone, PartialEq)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub body: Option<String>,
    pub source: String,
    pub published_at: Option<NaiveDate>,
    pub label: Label,
    pub embedding: Option<Vec<f64>>,
}

impl Article {
    pub fn new(id: impl Into<String>, title: impl Into<String>, source: impl Into<String>, label: Label) -> Self {
        Article {
            id: id.into(),
            title: title.into(),
            body: None,
            source: source.into(),
            published_at: None,
            label,
            embedding: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidArticle("empty id".into()));
        }
        if self.title.trim().is_empty() {
            return Err(Error::InvalidArticle(format!("{}: empty title", self.id)));
        }
        if self.source.trim().is_empty() {
            return Err(Error::InvalidArticle(format!("{}: empty source", self.id)));
        }
        if let Some(v) = &self.embedding {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArticle(format!("{}: non-finite embedding", self.id)));
            }
        }
        Ok(())
    }
}

/// A validated, ordered collection of articles.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    articles: Vec<Article>,
    embedding_dim: Option<usize>,
    provenance: Vec<String>,
    skipped_lines: Vec<usize>,
}

impl Corpus {
    pub fn new(articles: Vec<Article>, provenance: impl Into<String>) -> Result<Self> {
        Self::build(articles, vec![provenance.into()], Vec::new())
    }

    fn build(articles: Vec<Article>, provenance: Vec<String>, skipped_lines: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(articles.len());
        let mut dim = None;
        let mut with_vec = 0usize;
        for a in &articles {
            a.validate()?;
            if !seen.insert(a.id.as_str()) {
                return Err(Error::DuplicateId(a.id.clone()));
            }
            if let Some(v) = &a.embedding {
                with_vec += 1;
                match dim {
                    None if v.is_empty() => {
                        return Err(Error::InvalidArticle(format!("{}: empty embedding", a.id)))
                    }
                    None => dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(Error::DimensionMismatch { expected: d, got: v.len() })
                    }
                    Some(_) => {}
                }
            }
        }
        if with_vec != 0 && with_vec != articles.len() {
            return Err(Error::InvalidArticle(format!(
                "{with_vec} of {} articles carry embeddings; need all or none",
                articles.len()
            )));
        }
        Ok(Corpus {
            articles,
            embedding_dim: dim,
            provenance,
            skipped_lines,
        })
    }

    /// Builds a corpus derived from this one, carrying provenance forward.
    pub fn derive(&self, articles: Vec<Article>, note: impl Into<String>) -> Result<Self> {
        let mut provenance = self.provenance.clone();
        provenance.push(note.into());
        Self::build(articles, provenance, self.skipped_lines.clone())
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn into_articles(self) -> Vec<Article> {
        self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    /// 1-based line numbers of input rows skipped as malformed.
    pub fn skipped_lines(&self) -> &[usize] {
        &self.skipped_lines
    }

    pub fn label_counts(&self) -> [usize; 2] {
        label_counts(&self.articles)
    }

    /// Distinct sources, sorted.
    pub fn sources(&self) -> Vec<String> {
        self.articles
            .iter()
            .map(|a| a.source.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect()
    }

    pub fn site_sizes(&self) -> BTreeMap<String, usize> {
        let mut sizes = BTreeMap::new();
        for a in &self.articles {
            *sizes.entry(a.source.clone()).or_insert(0) += 1;
        }
        sizes
    }

    /// Per-site label, failing if any site mixes labels.
    pub fn site_labels(&self) -> Result<SiteLabelMap> {
        let mut map: BTreeMap<String, Label> = BTreeMap::new();
        for a in &self.articles {
            match map.get(&a.source) {
                Some(&l) if l != a.label => return Err(Error::InconsistentSiteLabels(a.source.clone())),
                Some(_) => {}
                None => {
                    map.insert(a.source.clone(), a.label);
                }
            }
        }
        Ok(SiteLabelMap(map))
    }

    /// Articles whose id is in `ids`, in corpus order.
    pub fn select<'a, I>(&self, ids: I) -> Vec<Article>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let wanted: HashSet<&str> = ids.into_iter().map(String::as_str).collect();
        self.articles
            .iter()
            .filter(|a| wanted.contains(a.id.as_str()))
            .cloned()
            .collect()
    }

    /// Joins per-id embeddings onto the articles. Articles without an
    /// embedding are dropped and counted in the provenance.
    pub fn with_embeddings(&self, embeddings: &HashMap<String, Vec<f64>>) -> Result<Self> {
        let mut kept = Vec::with_capacity(self.articles.len());
        let mut missing = 0usize;
        for a in &self.articles {
            match embeddings.get(&a.id) {
                Some(v) => {
                    let mut a = a.clone();
                    a.embedding = Some(v.clone());
                    kept.push(a);
                }
                None => missing += 1,
            }
        }
        if kept.is_empty() {
            return Err(Error::NoValidRecords("embedding join".into()));
        }
        self.derive(
            kept,
            format!("joined embeddings; dropped {missing} articles without a vector"),
        )
    }
}

pub(crate) fn label_counts(articles: &[Article]) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for a in articles {
        counts[a.label.index()] += 1;
    }
    counts
}

/// Mapping from source identifier to its site-level label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteLabelMap(pub BTreeMap<String, Label>);

impl SiteLabelMap {
    pub fn get(&self, source: &str) -> Option<Label> {
        self.0.get(source).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reads a JSON object `{"source": label, ...}`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

impl FromIterator<(String, Label)> for SiteLabelMap {
    fn from_iter<T: IntoIterator<Item = (String, Label)>>(iter: T) -> Self {
        SiteLabelMap(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown corpus format {other:?}"))),
        }
    }
}

pub fn load_corpus(path: &Path, format: Format) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    match format {
        Format::Jsonl => read_jsonl(BufReader::new(file), &origin),
        Format::Csv => read_csv(BufReader::new(file), &origin),
    }
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: Format) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Jsonl => write_jsonl(corpus, &mut out),
        Format::Csv => write_csv(corpus, &mut out),
    }?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Field-level parse result before corpus-wide checks.
struct RowBuilder {
    skipped: Vec<usize>,
    notes: Vec<String>,
    articles: Vec<Article>,
    dim: Option<usize>,
    total: usize,
}

impl RowBuilder {
    fn new() -> Self {
        RowBuilder {
            skipped: Vec::new(),
            notes: Vec::new(),
            articles: Vec::new(),
            dim: None,
            total: 0,
        }
    }

    fn push(&mut self, line: usize, row: std::result::Result<(Article, Option<String>), String>) {
        self.total += 1;
        let accepted = row.and_then(|(article, date_note)| {
            if let Some(v) = &article.embedding {
                match self.dim {
                    None => self.dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(format!("vec has length {}, expected {d}", v.len()))
                    }
                    Some(_) => {}
                }
            }
            Ok((article, date_note))
        });
        match accepted {
            Ok((article, date_note)) => {
                if let Some(raw) = date_note {
                    self.notes.push(format!("line {line}: unparseable date {raw:?} stored as absent"));
                }
                self.articles.push(article);
            }
            Err(reason) => {
                warn!("skipping line {line}: {reason}");
                self.skipped.push(line);
            }
        }
    }

    fn finish(self, origin: &str, format: Format) -> Result<Corpus> {
        if self.total == 0 {
            return Err(Error::NoValidRecords(origin.to_owned()));
        }
        let malformed = self.skipped.len();
        if malformed * 2 > self.total {
            return Err(Error::TooManyMalformed {
                path: origin.to_owned(),
                malformed,
                total: self.total,
            });
        }
        if self.articles.is_empty() {
            return Err(Error::NoValidRecords(origin.to_owned()));
        }
        let mut provenance = vec![format!(
            "loaded {} articles from {origin} ({format:?})",
            self.articles.len()
        )];
        if !self.skipped.is_empty() {
            let lines: Vec<String> = self.skipped.iter().map(usize::to_string).collect();
            provenance.push(format!("skipped malformed rows at lines {}", lines.join(",")));
        }
        provenance.extend(self.notes);
        Corpus::build(self.articles, provenance, self.skipped)
    }
}

fn parse_date(raw: Option<&str>) -> (Option<NaiveDate>, Option<String>) {
    match raw.map(str::trim) {
        None | Some("") => (None, None),
        Some(s) => match NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            Ok(d) => (Some(d), None),
            Err(_) => (None, Some(s.to_owned())),
        },
    }
}

fn required(field: &str, value: Option<&str>) -> std::result::Result<String, String> {
    match value {
        Some(s) if !s.trim().is_empty() => Ok(s.to_owned()),
        Some(_) => Err(format!("empty {field}")),
        None => Err(format!("missing {field}")),
    }
}

fn json_row(v: &Value) -> std::result::Result<(Article, Option<String>), String> {
    let obj = v.as_object().ok_or("record is not an object")?;
    let text = |field: &str| -> std::result::Result<Option<&str>, String> {
        match obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(format!("{field} must be a string")),
        }
    };
    let id = required("id", text("id")?)?;
    let title = required("title", text("title")?)?;
    let source = required("source", text("source")?)?;
    let body = text("body")?.map(str::to_owned);
    let (published_at, date_note) = parse_date(text("date")?);
    let label = match obj.get("label") {
        None | Some(Value::Null) => return Err("missing label".into()),
        Some(l) => label_from_json(l).ok_or_else(|| format!("unrecognized label {l}"))?,
    };
    let embedding = match obj.get("vec") {
        None | Some(Value::Null) => None,
        Some(Value::Array(xs)) => Some(
            xs.iter()
                .map(|x| x.as_f64().filter(|f| f.is_finite()).ok_or("vec entries must be finite numbers"))
                .collect::<std::result::Result<Vec<f64>, _>>()?,
        ),
        Some(_) => return Err("vec must be an array".into()),
    };
    if embedding.as_ref().is_some_and(Vec::is_empty) {
        return Err("empty vec".into());
    }
    Ok((
        Article {
            id,
            title,
            body,
            source,
            published_at,
            label,
            embedding,
        },
        date_note,
    ))
}

pub fn read_jsonl<R: BufRead>(reader: R, origin: &str) -> Result<Corpus> {
    let mut rows = RowBuilder::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(&line)
            .map_err(|e| format!("invalid JSON: {e}"))
            .and_then(|v| json_row(&v));
        rows.push(i + 1, parsed);
    }
    rows.finish(origin, Format::Jsonl)
}

pub fn read_csv<R: Read>(reader: R, origin: &str) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (id_c, title_c, body_c, source_c, date_c, label_c, vec_c) = (
        col("id"),
        col("title"),
        col("body"),
        col("source"),
        col("date"),
        col("label"),
        col("vec"),
    );
    let mut rows = RowBuilder::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                rows.push(line, Err(format!("csv: {e}")));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |c: Option<usize>| c.and_then(|c| record.get(c));
        let parsed = (|| {
            let id = required("id", get(id_c))?;
            let title = required("title", get(title_c))?;
            let source = required("source", get(source_c))?;
            let body = get(body_c).filter(|s| !s.is_empty()).map(str::to_owned);
            let (published_at, date_note) = parse_date(get(date_c));
            let label_raw = get(label_c).ok_or("missing label")?;
            let label = Label::parse(label_raw).ok_or_else(|| format!("unrecognized label {label_raw:?}"))?;
            let embedding = match get(vec_c).map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(
                    s.split(';')
                        .map(|x| x.trim().parse::<f64>().ok().filter(|f| f.is_finite()))
                        .collect::<Option<Vec<f64>>>()
                        .ok_or("vec entries must be finite numbers")?,
                ),
            };
            Ok((
                Article {
                    id,
                    title,
                    body,
                    source,
                    published_at,
                    label,
                    embedding,
                },
                date_note,
            ))
        })();
        rows.push(line, parsed);
    }
    rows.finish(origin, Format::Csv)
}

#[derive(Serialize)]
struct JsonRow<'a> {
    id: &'a str,
    title: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    body: Option<&'a str>,
    source: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    date: Option<String>,
    label: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    vec: Option<&'a [f64]>,
}

pub fn write_jsonl<W: Write>(corpus: &Corpus, out: &mut W) -> Result<()> {
    for a in corpus.articles() {
        let row = JsonRow {
            id: &a.id,
            title: &a.title,
            body: a.body.as_deref(),
            source: &a.source,
            date: a.published_at.map(|d| d.format("%Y-%m-%d").to_string()),
            label: a.label.as_u8(),
            vec: a.embedding.as_deref(),
        };
        serde_json::to_writer(&mut *out, &row)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(corpus: &Corpus, out: &mut W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "title", "body", "source", "date", "label", "vec"])?;
    for a in corpus.articles() {
        let date = a.published_at.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
        let vec = a
            .embedding
            .as_ref()
            .map(|v| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        let label = a.label.to_string();
        w.write_record([
            a.id.as_str(),
            a.title.as_str(),
            a.body.as_deref().unwrap_or(""),
            a.source.as_str(),
            date.as_str(),
            label.as_str(),
            vec.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

/// Reads an embeddings file of `{"id": ..., "vec": [...]}` lines.
pub fn load_embeddings(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        vec: Vec<f64>,
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    let mut dim = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidArticle(format!("{}:{}: {e}", path.display(), i + 1)))?;
        match dim {
            None => dim = Some(row.vec.len()),
            Some(d) if d != row.vec.len() => {
                return Err(Error::DimensionMismatch { expected: d, got: row.vec.len() })
            }
            Some(_) => {}
        }
        if out.insert(row.id.clone(), row.vec).is_some() {
            return Err(Error::DuplicateId(row.id));
        }
    }
    if out.is_empty() {
        return Err(Error::NoValidRecords(path.display().to_string()));
    }
    Ok(out)
}

/// Relabels every article with its site's label. With `drop_uncovered`,
/// articles from sources missing in `map` are removed; otherwise their
/// presence is an error listing the uncovered sources.
pub fn apply_site_labels(corpus: &Corpus, map: &SiteLabelMap, drop_uncovered: bool) -> Result<Corpus> {
    let uncovered: Vec<String> = corpus
        .sources()
        .into_iter()
        .filter(|s| map.get(s).is_none())
        .collect();
    if !uncovered.is_empty() && !drop_uncovered {
        return Err(Error::UncoveredSources(uncovered));
    }
    let articles: Vec<Article> = corpus
        .articles()
        .iter()
        .filter_map(|a| {
            map.get(&a.source).map(|label| Article {
                label,
                ..a.clone()
            })
        })
        .collect();
    if articles.is_empty() {
        return Err(Error::Empty("no articles remain after site labeling"));
    }
    let note = if uncovered.is_empty() {
        format!("applied site labels ({} sites)", map.len())
    } else {
        format!(
            "applied site labels ({} sites); dropped uncovered sources {}",
            map.len(),
            uncovered.join(",")
        )
    };
    corpus.derive(articles, note)
}

/// Downsamples the majority label uniformly at random so both labels have
/// the minority count. Output keeps corpus order.
pub fn subsample_balanced(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let kept = balanced_articles(corpus.articles(), seed)?;
    let counts = label_counts(&kept);
    corpus.derive(
        kept,
        format!("balanced subsample seed={seed}: {} per label", counts[0]),
    )
}

pub(crate) fn balanced_articles(articles: &[Article], seed: u64) -> Result<Vec<Article>> {
    let counts = label_counts(articles);
    if articles.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if counts[0] == 0 || counts[1] == 0 {
        let only = if counts[0] == 0 { 1 } else { 0 };
        return Err(Error::SingleLabel(only));
    }
    if counts[0] == counts[1] {
        return Ok(articles.to_vec());
    }
    let (major, minor_n) = if counts[1] > counts[0] {
        (Label::Reliable, counts[0])
    } else {
        (Label::Unreliable, counts[1])
    };
    let major_positions: Vec<usize> = articles
        .iter()
        .enumerate()
        .filter(|(_, a)| a.label == major)
        .map(|(i, _)| i)
        .collect();
    let mut rng = seeded_rng(seed, SUBSAMPLE_STREAM);
    let mut keep = vec![false; articles.len()];
    for pick in index::sample(&mut rng, major_positions.len(), minor_n) {
        keep[major_positions[pick]] = true;
    }
    Ok(articles
        .iter()
        .enumerate()
        .filter(|(i, a)| a.label != major || keep[*i])
        .map(|(_, a)| a.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jsonl(text: &str) -> Result<Corpus> {
        read_jsonl(text.as_bytes(), "test")
    }

    fn sites(layout: &[(&str, usize, Label)]) -> Corpus {
        let mut articles = Vec::new();
        for (site, n, label) in layout {
            for i in 0..*n {
                articles.push(Article::new(format!("{site}-{i}"), format!("title {i}"), *site, *label));
            }
        }
        Corpus::new(articles, "fixture").unwrap()
    }

    #[test]
    fn empty_file_has_no_valid_records() {
        let err = jsonl("").unwrap_err();
        assert!(err.to_string().contains("no valid records"), "{err}");
    }

    #[test]
    fn row_missing_source_is_skipped() {
        let text = r#"{"id":"a","title":"t1","source":"s1","label":1}
{"id":"b","title":"t2","label":0}
{"id":"c","title":"t3","source":"s2","label":0}
"#;
        let c = jsonl(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.skipped_lines(), &[2]);
        assert!(c.provenance().iter().any(|p| p.contains("lines 2")));
    }

    #[test]
    fn label_strings_are_normalized() {
        let text = r#"{"id":"a","title":"t","source":"s","label":"Reliable"}
{"id":"b","title":"t","source":"s","label":"UNRELIABLE"}
{"id":"c","title":"t","source":"s","label":"fake"}
{"id":"d","title":"t","source":"s","label":"real"}
{"id":"e","title":"t","source":"s","label":"1"}
"#;
        let c = jsonl(text).unwrap();
        let labels: Vec<u8> = c.articles().iter().map(|a| a.label.as_u8()).collect();
        assert_eq!(labels, vec![1, 0, 0, 1, 1]);
    }

    #[test]
    fn unknown_label_is_malformed() {
        let text = r#"{"id":"a","title":"t","source":"s","label":"satire"}
{"id":"b","title":"t","source":"s","label":1}
{"id":"c","title":"t","source":"s","label":true}
"#;
        let err = jsonl(text).unwrap_err();
        assert!(matches!(err, Error::TooManyMalformed { malformed: 2, total: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"{"id":"a","title":"t","source":"s","label":1}
{"id":"a","title":"u","source":"s","label":0}
"#;
        assert!(matches!(jsonl(text), Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn bad_date_is_absent_with_note() {
        let text = r#"{"id":"a","title":"t","source":"s","label":1,"date":"Sept 6"}
{"id":"b","title":"t","source":"s","label":0,"date":"2018-09-06"}
"#;
        let c = jsonl(text).unwrap();
        assert_eq!(c.articles()[0].published_at, None);
        assert_eq!(c.articles()[1].published_at, NaiveDate::from_ymd_opt(2018, 9, 6));
        assert!(c.provenance().iter().any(|p| p.contains("unparseable date")));
    }

    #[test]
    fn mismatched_vec_length_is_skipped() {
        let text = r#"{"id":"a","title":"t","source":"s","label":1,"vec":[1,2]}
{"id":"b","title":"t","source":"s","label":0,"vec":[1,2,3]}
{"id":"c","title":"t","source":"s","label":0,"vec":[0.5,2]}
"#;
        let c = jsonl(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.embedding_dim(), Some(2));
    }

    #[test]
    fn partial_embeddings_rejected() {
        let text = r#"{"id":"a","title":"t","source":"s","label":1,"vec":[1,2]}
{"id":"b","title":"t","source":"s","label":0}
"#;
        assert!(jsonl(text).is_err());
    }

    #[test]
    fn csv_reads_semicolon_vectors() {
        let text = "id,title,body,source,date,label,vec\n\
                    a,Hello world,,s1,2019-01-02,reliable,1;2.5\n\
                    b,Other,some body,s2,,0,3;4\n";
        let c = read_csv(text.as_bytes(), "test").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.articles()[0].embedding.as_deref(), Some(&[1.0, 2.5][..]));
        assert_eq!(c.articles()[0].body, None);
        assert_eq!(c.articles()[1].body.as_deref(), Some("some body"));
    }

    #[test]
    fn site_labels_assigned() {
        let c = sites(&[("A", 5, Label::Unreliable), ("B", 3, Label::Unreliable)]);
        let map: SiteLabelMap = [("A".to_owned(), Label::Reliable), ("B".to_owned(), Label::Unreliable)]
            .into_iter()
            .collect();
        let out = apply_site_labels(&c, &map, false).unwrap();
        assert_eq!(out.label_counts(), [3, 5]);
    }

    #[test]
    fn uncovered_site_dropped_or_reported() {
        let c = sites(&[("A", 5, Label::Reliable), ("B", 3, Label::Reliable)]);
        let map: SiteLabelMap = [("A".to_owned(), Label::Reliable)].into_iter().collect();
        assert_eq!(apply_site_labels(&c, &map, true).unwrap().len(), 5);
        match apply_site_labels(&c, &map, false) {
            Err(Error::UncoveredSources(s)) => assert_eq!(s, vec!["B".to_owned()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn site_labeling_is_idempotent() {
        let c = sites(&[("A", 4, Label::Reliable), ("B", 3, Label::Unreliable), ("C", 2, Label::Reliable)]);
        let map: SiteLabelMap = [
            ("A".to_owned(), Label::Unreliable),
            ("B".to_owned(), Label::Reliable),
            ("C".to_owned(), Label::Reliable),
        ]
        .into_iter()
        .collect();
        let once = apply_site_labels(&c, &map, false).unwrap();
        let twice = apply_site_labels(&once, &map, false).unwrap();
        assert_eq!(once.articles(), twice.articles());
    }

    #[test]
    fn balanced_already() {
        let c = sites(&[("A", 10, Label::Reliable), ("B", 10, Label::Unreliable)]);
        assert_eq!(subsample_balanced(&c, 3).unwrap().len(), 20);
    }

    #[test]
    fn majority_downsampled() {
        let c = sites(&[("A", 100, Label::Reliable), ("B", 40, Label::Unreliable)]);
        let out = subsample_balanced(&c, 9).unwrap();
        assert_eq!(out.label_counts(), [40, 40]);
        let again = subsample_balanced(&c, 9).unwrap();
        assert_eq!(out.articles(), again.articles());
    }

    #[test]
    fn single_label_rejected() {
        let c = sites(&[("A", 3, Label::Reliable)]);
        assert!(matches!(subsample_balanced(&c, 1), Err(Error::SingleLabel(1))));
    }
}
