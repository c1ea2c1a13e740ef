//! Flat `key = value` audit configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the config file. List values are
//! comma-separated; `corpus` may also be repeated.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::TextField;
use crate::simdist::DistanceKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// The first corpus is audited; any further ones are used as
    /// out-of-dataset test sets.
    pub corpus: Vec<PathBuf>,
    pub site_labels: Option<PathBuf>,
    pub field: TextField,
    pub ratios: [f64; 3],
    pub seeds: Vec<u64>,
    pub time_boundaries: Option<(NaiveDate, NaiveDate)>,
    pub min_site_count: usize,
    pub distances: Vec<DistanceKind>,
    pub mmd_bandwidth: Option<f64>,
    pub predictions: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Use the probe's top TFIDF features as site representations when no
    /// embeddings are given.
    pub tfidf_fallback: bool,
    pub projection_dim: usize,
    pub output_dir: Option<PathBuf>,
    pub probe_margin: f64,
    pub drop_threshold: f64,
    pub l2_weight: f64,
    pub min_df: usize,
    pub max_features: usize,
    pub top_k: usize,
    pub top_sites: usize,
    pub size_threshold: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            corpus: Vec::new(),
            site_labels: None,
            field: TextField::Title,
            ratios: [0.8, 0.1, 0.1],
            seeds: (1..=5).collect(),
            time_boundaries: None,
            min_site_count: 100,
            distances: DistanceKind::ALL.to_vec(),
            mmd_bandwidth: None,
            predictions: None,
            embeddings: None,
            tfidf_fallback: false,
            projection_dim: 50,
            output_dir: None,
            probe_margin: 0.15,
            drop_threshold: 0.10,
            l2_weight: 1.0,
            min_df: 2,
            max_features: 50_000,
            top_k: 20,
            top_sites: 10,
            size_threshold: 100,
        }
    }
}

/// Every key accepted by [`AuditConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "corpus",
    "site_labels",
    "field",
    "ratios",
    "seeds",
    "time_boundaries",
    "min_site_count",
    "distances",
    "mmd_bandwidth",
    "predictions",
    "embeddings",
    "tfidf_fallback",
    "projection_dim",
    "output_dir",
    "probe_margin",
    "drop_threshold",
    "l2_weight",
    "min_df",
    "max_features",
    "top_k",
    "top_sites",
    "size_threshold",
];

fn bad(message: impl Into<String>) -> Error {
    Error::InvalidParameter(message.into())
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(format!("{key}: cannot parse {value:?}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// `"0.8,0.1,0.1"` → ratios summing to 1 (within 1e-9).
pub fn parse_ratios(value: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = list(value).map(|p| number("ratios", p)).collect::<Result<_>>()?;
    let ratios: [f64; 3] = parts
        .try_into()
        .map_err(|_| bad(format!("ratios: expected three values, got {value:?}")))?;
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadRatios(sum));
    }
    Ok(ratios)
}

/// `"1,2,3"` or the inclusive range `"1..5"`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let v = value.trim();
    if let Some((lo, hi)) = v.split_once("..") {
        let lo: u64 = number("seeds", lo)?;
        let hi: u64 = number("seeds", hi.trim_start_matches('='))?;
        return Ok((lo..=hi).collect());
    }
    list(v).map(|s| number("seeds", s)).collect()
}

/// `"2018-07-01,2018-10-01"` → ordered boundary pair.
pub fn parse_date_pair(value: &str) -> Result<(NaiveDate, NaiveDate)> {
    let dates: Vec<NaiveDate> = list(value)
        .map(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|_| bad(format!("bad date {d:?}"))))
        .collect::<Result<_>>()?;
    match dates[..] {
        [d1, d2] if d1 < d2 => Ok((d1, d2)),
        [_, _] => Err(bad("time boundaries must be increasing")),
        _ => Err(bad(format!("expected two dates, got {value:?}"))),
    }
}

impl AuditConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut config = AuditConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            let key = key.trim();
            // A repeated `corpus` key appends.
            if key == "corpus" {
                config.corpus.extend(list(value).map(|p| base.join(p)));
                continue;
            }
            config.set(key, value, base).map_err(|e| Error::Config {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        AuditConfig::parse(&text, base)
    }

    /// Sets one key from its textual value. Used for both config lines and
    /// command-line overrides.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| -> Option<PathBuf> {
            let v = v.trim();
            (!v.is_empty()).then(|| base.join(v))
        };
        match key {
            "corpus" => self.corpus = list(value).map(|p| base.join(p)).collect(),
            "site_labels" => self.site_labels = path(value),
            "field" => self.field = value.parse()?,
            "ratios" => self.ratios = parse_ratios(value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "time_boundaries" => {
                self.time_boundaries = if value.trim().is_empty() {
                    None
                } else {
                    Some(parse_date_pair(value)?)
                }
            }
            "min_site_count" => self.min_site_count = number(key, value)?,
            "distances" => self.distances = list(value).map(str::parse).collect::<Result<_>>()?,
            "mmd_bandwidth" => self.mmd_bandwidth = Some(number(key, value)?),
            "predictions" => self.predictions = path(value),
            "embeddings" => self.embeddings = path(value),
            "tfidf_fallback" => self.tfidf_fallback = boolean(key, value)?,
            "projection_dim" => self.projection_dim = number(key, value)?,
            "output_dir" => self.output_dir = path(value),
            "probe_margin" => self.probe_margin = number(key, value)?,
            "drop_threshold" => self.drop_threshold = number(key, value)?,
            "l2_weight" => self.l2_weight = number(key, value)?,
            "min_df" => self.min_df = number(key, value)?,
            "max_features" => self.max_features = number(key, value)?,
            "top_k" => self.top_k = number(key, value)?,
            "top_sites" => self.top_sites = number(key, value)?,
            "size_threshold" => self.size_threshold = number(key, value)?,
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Distance kinds with the configured MMD bandwidth applied.
    pub fn distance_kinds(&self) -> Vec<DistanceKind> {
        self.distances
            .iter()
            .map(|k| match k {
                DistanceKind::Mmd { .. } => DistanceKind::Mmd {
                    bandwidth: self.mmd_bandwidth,
                },
                other => *other,
            })
            .collect()
    }

    /// Checks the analysis parameters. Input paths are checked when loaded.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(bad("seeds must be nonempty"));
        }
        let sum: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| !(*r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadRatios(sum));
        }
        if let Some(bw) = self.mmd_bandwidth {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(bad(format!("mmd_bandwidth must be positive, got {bw}")));
            }
        }
        if self.distances.is_empty() {
            return Err(bad("distances must be nonempty"));
        }
        if self.min_df == 0 || self.max_features == 0 || self.top_k == 0 || self.top_sites == 0 {
            return Err(bad("min_df, max_features, top_k and top_sites must be positive"));
        }
        if self.projection_dim == 0 {
            return Err(bad("projection_dim must be positive"));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return Err(bad(format!("l2_weight must be non-negative, got {}", self.l2_weight)));
        }
        Ok(())
    }
}
