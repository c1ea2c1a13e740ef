//! Probes for hidden bias and train/test leakage in grouped, labeled text
//! datasets such as site-labeled news corpora.
//!
//! The crate is organized by stage:
//!
//! - [`corpus`]: ingest and validate articles, apply site-level labels,
//!   balanced subsampling.
//! - [`features`]: tokenization, TFIDF bag-of-words, PMI rankings.
//! - [`probe`]: the L2-regularized logistic-regression bias probe.
//! - [`splits`]: random, source-disjoint and time-disjoint splits plus the
//!   site-label permutation probe.
//! - [`eval`]: article/site accuracy, majority baselines, multi-seed runs.
//! - [`simdist`]: site representations, L2/cosine/MMD/CORAL distances and
//!   nearest-site similarity scores.
//! - [`audit`]: the end-to-end pipeline, report rendering and synthetic
//!   corpora.

pub mod audit;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod probe;
pub mod simdist;
pub mod splits;

pub use audit::{run_audit, AuditConfig, AuditReport, SyntheticKind};
pub use corpus::{Article, Corpus, Format, Label, SiteLabelMap};
pub use error::{Error, ErrorKind, Result};
pub use eval::{EvalResult, MeanStd, RunSummary};
pub use features::{SparseVector, TextField, Vocabulary};
pub use probe::LinearProbe;
pub use simdist::{DistanceKind, SiteSet};
pub use splits::{Split, SplitStrategy};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for `seed`. Distinct `stream`s give independent
/// sequences, so e.g. subsampling and splitting under the same user seed do
/// not share random draws.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
