//! Deterministic inputs shared by the benchmarks.

use newsaudit::audit::{generate_synthetic_corpus, SyntheticKind};
use newsaudit::{Corpus, Label, SiteSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn site_set(name: &str, label: Label, n: usize, d: usize, seed: u64) -> SiteSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    SiteSet::new(name, label, &rows).expect("nonempty rows")
}

/// `n_sites` site sets with alternating labels.
pub fn site_sets(n_sites: usize, n: usize, d: usize) -> Vec<SiteSet> {
    (0..n_sites)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Reliable } else { Label::Unreliable };
            site_set(&format!("site{i}"), label, n, d, i as u64)
        })
        .collect()
}

pub fn corpus(kind: SyntheticKind, sites: usize, per_site: usize) -> Corpus {
    generate_synthetic_corpus(kind, sites, per_site, 0).expect("valid synthetic parameters")
}
