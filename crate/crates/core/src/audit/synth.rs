//! Synthetic site-labeled corpora with planted artifacts.

use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus, Label};
use crate::error::{Error, Result};
use crate::seeded_rng;

/// Token planted in unreliable articles of content-bearing corpora.
pub const SIGNAL_TOKEN: &str = "hoaxword";

const FILLER_WORDS: usize = 300;
const TITLE_WORDS: usize = 6;
const BODY_WORDS: usize = 12;
const DATE_SPAN_DAYS: u64 = 730;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Every title carries its site's signature token; labels are
    /// independent of content.
    Leaky,
    /// Unreliable titles, and only those, contain [`SIGNAL_TOKEN`].
    ContentSignal,
    /// Signatures everywhere plus the signal token in a site-dependent
    /// fraction of unreliable titles.
    Mixed,
}

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::Leaky => "leaky",
            SyntheticKind::ContentSignal => "content_signal",
            SyntheticKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "leaky" => Ok(SyntheticKind::Leaky),
            "content_signal" | "content" => Ok(SyntheticKind::ContentSignal),
            "mixed" => Ok(SyntheticKind::Mixed),
            other => Err(Error::InvalidParameter(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

/// Signature token of site `i`.
pub fn signature_token(site: usize) -> String {
    format!("sig_{site}")
}

fn filler<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    (0..n).map(|_| format!("w{}", rng.gen_range(0..FILLER_WORDS))).collect()
}

fn insert_random<R: Rng>(rng: &mut R, words: &mut Vec<String>, token: String) {
    let at = rng.gen_range(0..=words.len());
    words.insert(at, token);
}

/// Builds `n_sites × articles_per_site` articles. Half the sites (rounded
/// down) are reliable; which ones is drawn from `seed`. Sites are named
/// `site{i}`, articles `site{i}-{j}`, and dates fall in 2018–2019.
pub fn generate_synthetic_corpus(
    kind: SyntheticKind,
    n_sites: usize,
    articles_per_site: usize,
    seed: u64,
) -> Result<Corpus> {
    if n_sites < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 sites, got {n_sites}")));
    }
    if articles_per_site < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 articles per site, got {articles_per_site}"
        )));
    }
    let mut rng = seeded_rng(seed, 0x5e7);
    let mut labels: Vec<Label> = (0..n_sites).map(|i| Label::from_bool(i < n_sites / 2)).collect();
    labels.shuffle(&mut rng);
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date");

    let mut articles = Vec::with_capacity(n_sites * articles_per_site);
    for (i, &label) in labels.iter().enumerate() {
        let signal_rate = match kind {
            SyntheticKind::Leaky => 0.0,
            SyntheticKind::ContentSignal => 1.0,
            SyntheticKind::Mixed => rng.gen_range(0.3..0.9),
        };
        for j in 0..articles_per_site {
            let mut title = filler(&mut rng, TITLE_WORDS);
            if kind != SyntheticKind::ContentSignal {
                insert_random(&mut rng, &mut title, signature_token(i));
            }
            if label == Label::Unreliable && rng.gen_bool(signal_rate) {
                insert_random(&mut rng, &mut title, SIGNAL_TOKEN.to_owned());
            }
            let mut a = Article::new(format!("site{i}-{j}"), title.join(" "), format!("site{i}"), label);
            a.body = Some(filler(&mut rng, BODY_WORDS).join(" "));
            a.published_at = start.checked_add_days(Days::new(rng.gen_range(0..DATE_SPAN_DAYS)));
            articles.push(a);
        }
    }
    Corpus::new(
        articles,
        format!("synthetic {kind}: {n_sites} sites x {articles_per_site} articles, seed {seed}"),
    )
}
