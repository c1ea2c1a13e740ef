use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use newsaudit::audit::{derive_time_boundaries, parse_date_pair, parse_ratios, render_report, write_report_files};
use newsaudit::corpus::{apply_site_labels, load_corpus, load_embeddings, save_corpus, write_jsonl};
use newsaudit::eval::evaluate;
use newsaudit::features::VocabParams;
use newsaudit::probe::{train_probe, TrainParams};
use newsaudit::simdist::{embedding_site_sets, sim_score};
use newsaudit::splits::{random_split, source_split, time_split};
use newsaudit::{
    AuditConfig, Corpus, DistanceKind, Error, ErrorKind, Format, SiteLabelMap, SiteSet, Split, SplitStrategy,
    SyntheticKind, TextField,
};

#[derive(Parser)]
#[command(name = "newsaudit", version, about = "Audit labeled news corpora for site and time leakage")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full audit and print the report.
    Audit(Box<AuditArgs>),
    /// Split a corpus into train/dev/test id lists.
    Split(SplitArgs),
    /// Train a TF-IDF logistic probe.
    Probe(ProbeArgs),
    /// Score each site's embedding similarity to same- vs opposite-label sites.
    Simdist(SimdistArgs),
    /// Write a synthetic corpus with planted artifacts.
    Synth(SynthArgs),
}

/// Every option except `--config`, `--set` and `--format` mirrors the
/// config key of the same name (dashes for underscores) and overrides it.
#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus file; repeat to add out-of-dataset test corpora.
    #[arg(long)]
    corpus: Vec<String>,
    #[arg(long)]
    site_labels: Option<String>,
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    ratios: Option<String>,
    /// `1,2,3` or `1..5`.
    #[arg(long)]
    seeds: Option<String>,
    /// `YYYY-MM-DD,YYYY-MM-DD`.
    #[arg(long)]
    time_boundaries: Option<String>,
    #[arg(long)]
    min_site_count: Option<String>,
    #[arg(long)]
    distances: Option<String>,
    #[arg(long)]
    mmd_bandwidth: Option<String>,
    /// JSONL of `{"id": ..., "pred": 0|1}` from another model.
    #[arg(long)]
    predictions: Option<String>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    tfidf_fallback: bool,
    #[arg(long)]
    projection_dim: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    probe_margin: Option<String>,
    #[arg(long)]
    drop_threshold: Option<String>,
    #[arg(long)]
    l2_weight: Option<String>,
    #[arg(long)]
    min_df: Option<String>,
    #[arg(long)]
    max_features: Option<String>,
    #[arg(long)]
    top_k: Option<String>,
    #[arg(long)]
    top_sites: Option<String>,
    #[arg(long)]
    size_threshold: Option<String>,
    /// Raw `key=value` override, applied after the named options.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Report format on stdout: markdown or json.
    #[arg(long, default_value = "markdown")]
    format: newsaudit::audit::ReportFormat,
}

impl AuditArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = Vec::new();
        if !self.corpus.is_empty() {
            out.push(("corpus".into(), self.corpus.join(",")));
        }
        let named = [
            ("site_labels", &self.site_labels),
            ("field", &self.field),
            ("ratios", &self.ratios),
            ("seeds", &self.seeds),
            ("time_boundaries", &self.time_boundaries),
            ("min_site_count", &self.min_site_count),
            ("distances", &self.distances),
            ("mmd_bandwidth", &self.mmd_bandwidth),
            ("predictions", &self.predictions),
            ("embeddings", &self.embeddings),
            ("projection_dim", &self.projection_dim),
            ("output_dir", &self.output_dir),
            ("probe_margin", &self.probe_margin),
            ("drop_threshold", &self.drop_threshold),
            ("l2_weight", &self.l2_weight),
            ("min_df", &self.min_df),
            ("max_features", &self.max_features),
            ("top_k", &self.top_k),
            ("top_sites", &self.top_sites),
            ("size_threshold", &self.size_threshold),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                out.push((key.into(), v.clone()));
            }
        }
        if self.tfidf_fallback {
            out.push(("tfidf_fallback".into(), "true".into()));
        }
        for raw in &self.set {
            let (k, v) = raw
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, got {raw:?}")))?;
            out.push((k.trim().to_owned(), v.to_owned()));
        }
        Ok(out)
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    strategy: SplitStrategy,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Time split boundaries; derived from the date quantiles when absent.
    #[arg(long)]
    time_boundaries: Option<String>,
    #[arg(long)]
    site_labels: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Corpus to train on.
    #[arg(long)]
    train: PathBuf,
    /// Split file; the probe trains on its train set and is scored on its
    /// test set. Without it the whole corpus is used for training.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, default_value = "title")]
    field: TextField,
    #[arg(long, default_value_t = 2)]
    min_df: usize,
    #[arg(long, default_value_t = 50_000)]
    max_features: usize,
    #[arg(long, default_value_t = 1.0)]
    l2_weight: f64,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    #[arg(long)]
    site_labels: Option<PathBuf>,
    /// Where to save the trained probe.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimdistArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSONL of `{"id": ..., "vec": [...]}`.
    #[arg(long)]
    embeddings: PathBuf,
    /// Comma-separated kinds; all four when absent.
    #[arg(long, value_delimiter = ',')]
    distance: Vec<DistanceKind>,
    #[arg(long, default_value_t = 100)]
    min_site_count: usize,
    #[arg(long)]
    mmd_bandwidth: Option<f64>,
    /// Score test-set sites against train-set sites. Without a split each
    /// site is scored against all the others.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    site_labels: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    kind: SyntheticKind,
    #[arg(long, default_value_t = 40)]
    sites: usize,
    #[arg(long, default_value_t = 50)]
    per_site: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `.csv` writes CSV, anything else JSONL. Defaults to JSONL on stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_corpus(path: &Path, labels: Option<&Path>) -> Result<Corpus> {
    let corpus = load_corpus(path, Format::from_path(path))?;
    for n in corpus.skipped_lines().iter().take(5) {
        log::warn!("{}: skipped malformed line {n}", path.display());
    }
    Ok(match labels {
        Some(l) => apply_site_labels(&corpus, &SiteLabelMap::load(l)?, true)?,
        None => corpus,
    })
}

fn audit(args: AuditArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => AuditConfig::load(path)?,
        None => AuditConfig::default(),
    };
    for (key, value) in args.overrides()? {
        config.set(&key, &value, Path::new(""))?;
    }
    let report = newsaudit::run_audit(&config)?;
    if let Some(dir) = &config.output_dir {
        for path in write_report_files(&report, dir)? {
            info!("wrote {}", path.display());
        }
    }
    let mut out = output(None)?;
    out.write_all(render_report(&report, args.format).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn split(args: SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&args.ratios)?;
    let corpus = read_corpus(&args.input, args.site_labels.as_deref())?;
    let split = match args.strategy {
        SplitStrategy::Random => random_split(&corpus, ratios, args.seed)?,
        SplitStrategy::Source => source_split(&corpus, ratios, args.seed)?,
        SplitStrategy::Time => {
            let bounds = match &args.time_boundaries {
                Some(b) => parse_date_pair(b)?,
                None => derive_time_boundaries(corpus.articles(), ratios)
                    .ok_or_else(|| Error::InvalidParameter("cannot derive time boundaries; pass --time-boundaries".into()))?,
            };
            time_split(&corpus, bounds)?
        }
    };
    info!(
        "{} split: {} train, {} dev, {} test",
        split.strategy,
        split.train.len(),
        split.dev.len(),
        split.test.len()
    );
    let mut out = output(args.output.as_deref())?;
    writeln!(out, "{}", split.to_json()?)?;
    out.flush()?;
    Ok(())
}

fn probe(args: ProbeArgs) -> Result<()> {
    let corpus = read_corpus(&args.train, args.site_labels.as_deref())?;
    let split = args.split.as_deref().map(Split::load).transpose()?;
    let train_articles = match &split {
        Some(s) => corpus.select(&s.train),
        None => corpus.articles().to_vec(),
    };
    let vocab = VocabParams {
        field: args.field,
        min_df: args.min_df,
        max_features: args.max_features,
    };
    let params = TrainParams {
        l2_weight: args.l2_weight,
        ..TrainParams::default()
    };
    let probe = train_probe(&train_articles, &vocab, &params)?;
    let test = match &split {
        Some(s) => {
            let articles = corpus.select(&s.test);
            let preds: Vec<_> = probe.predict_articles(&articles).into_iter().map(|p| p.label).collect();
            Some(evaluate(&articles, &preds)?)
        }
        None => None,
    };
    if let Some(path) = &args.output {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &probe)?;
        info!("wrote {}", path.display());
    }
    let summary = json!({
        "train_articles": train_articles.len(),
        "vocabulary": probe.vocab.len(),
        "training": probe.model.meta,
        "test": test.map(|t| json!({
            "articles": t.n_articles,
            "article_accuracy": t.article_accuracy,
            "site_accuracy": t.site_accuracy,
            "majority_article": t.majority_article,
        })),
        "salient": probe.salient_features(args.top_k.min(probe.vocab.len()))?,
    });
    let mut out = output(None)?;
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn simdist(args: SimdistArgs) -> Result<()> {
    let kinds: Vec<DistanceKind> = if args.distance.is_empty() {
        DistanceKind::ALL.to_vec()
    } else {
        args.distance.clone()
    };
    let kinds: Vec<DistanceKind> = kinds
        .into_iter()
        .map(|k| match k {
            DistanceKind::Mmd { .. } => DistanceKind::Mmd {
                bandwidth: args.mmd_bandwidth,
            },
            other => other,
        })
        .collect();
    let corpus = read_corpus(&args.corpus, args.site_labels.as_deref())?;
    let corpus = corpus.with_embeddings(&load_embeddings(&args.embeddings)?)?;
    let keep = |sets: Vec<SiteSet>| -> Vec<SiteSet> {
        sets.into_iter().filter(|s| s.len() >= args.min_site_count.max(2)).collect()
    };
    let (eval, train) = match args.split.as_deref().map(Split::load).transpose()? {
        Some(s) => (
            keep(embedding_site_sets(&corpus.select(&s.test))?),
            Some(keep(embedding_site_sets(&corpus.select(&s.train))?)),
        ),
        None => (keep(embedding_site_sets(corpus.articles())?), None),
    };
    if eval.is_empty() {
        return Err(Error::TooFew {
            what: "articles in any site",
            need: args.min_site_count,
            have: 0,
        }
        .into());
    }
    let mut out = output(args.output.as_deref())?;
    for site in &eval {
        let others: Vec<SiteSet> = match &train {
            Some(t) => t.clone(),
            None => eval.iter().filter(|o| o.site != site.site).cloned().collect(),
        };
        let mut scores = BTreeMap::new();
        for kind in &kinds {
            let score = sim_score(site, &others, *kind).with_context(|| format!("site {}", site.site))?;
            scores.insert(kind.name(), score);
        }
        let line = json!({
            "site": site.site,
            "label": site.label,
            "articles": site.len(),
            "sim_score": scores,
        });
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let corpus = newsaudit::audit::generate_synthetic_corpus(args.kind, args.sites, args.per_site, args.seed)?;
    match &args.output {
        Some(path) => {
            save_corpus(&corpus, path, Format::from_path(path))?;
            info!("wrote {} articles to {}", corpus.len(), path.display());
        }
        None => {
            let mut out = output(None)?;
            write_jsonl(&corpus, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// The error chain joined with ": ", skipping causes the message already
/// quotes.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.is_empty() {
            msg = text;
        } else if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

/// 1 usage, 2 data, 3 internal.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Internal => 3,
            };
        }
        if cause.is::<io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Audit(a) => audit(*a),
        Command::Split(a) => split(a),
        Command::Probe(a) => probe(a),
        Command::Simdist(a) => simdist(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // a closed stdout pipe is not a failure
            if e.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)) {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
