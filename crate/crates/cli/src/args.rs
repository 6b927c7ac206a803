use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cfc",
    version,
    about = "Fuzzy cluster-feature classification: sample, cluster, train, predict, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Down-sample listed groups, keep every other group whole.
    Sample(SampleArgs),
    /// Run fuzzy c-means only and write memberships and centroids.
    Cluster(ClusterArgs),
    /// Train over candidate cluster counts and save the best model.
    Train(TrainArgs),
    /// Classify instances with a saved model.
    Predict(PredictArgs),
    /// Score a predictions file against labeled data.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Schema file (TOML).
    #[arg(long)]
    pub schema: PathBuf,
    /// Delimited data file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides the schema's label column.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Column holding group tags; overrides the schema's group column.
    #[arg(long)]
    pub strata_column: Option<String>,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Per-group fractions, e.g. `neptune=0.05,smurf=0.05`.
    #[arg(long, value_parser = parse_fractions)]
    pub fractions: Option<Fractions>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FcmArgs {
    /// Fuzzy degree.
    #[arg(long, default_value_t = cfc_core::fcm::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Convergence tolerance on the largest membership change.
    #[arg(long, default_value_t = cfc_core::fcm::DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = cfc_core::fcm::DEFAULT_MAX_ITERATIONS)]
    pub max_iter: usize,
    /// Equal-frequency bins for discretizing continuous features.
    #[arg(long, default_value_t = cfc_core::infogain::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fcm: FcmArgs,
    /// Number of clusters.
    #[arg(long = "k")]
    pub k: usize,
    /// Membership matrix output.
    #[arg(long)]
    pub out: PathBuf,
    /// Centroid output.
    #[arg(long)]
    pub centroids: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Search {
    Genetic,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Global,
    PerFold,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fcm: FcmArgs,
    /// Candidate cluster counts: `2..8`, `2..=8`, `3` or `2,4,8`.
    #[arg(long = "K", default_value = "2..=50", value_parser = parse_k_values)]
    pub k_values: KValues,
    /// Cluster-feature mode: 1 (z, b), 2 (z, b, memberships), 3 (selected).
    #[arg(long = "T", default_value = "1", value_parser = parse_mode)]
    pub mode: cfc_core::ManipulationMode,
    /// Cross-validation folds.
    #[arg(long = "q", default_value_t = 10)]
    pub folds: usize,
    /// Cluster once on all data, or re-cluster inside every fold.
    #[arg(long, value_enum, default_value_t = Scope::Global)]
    pub cv_scope: Scope,
    /// Stratify folds by class only, ignoring group tags.
    #[arg(long)]
    pub stratify_by_class: bool,
    /// Pruning confidence factor.
    #[arg(long, default_value_t = 0.2)]
    pub confidence: f64,
    /// Minimum instances per branch.
    #[arg(long, default_value_t = 6)]
    pub min_leaf: usize,
    #[arg(long)]
    pub no_prune: bool,
    /// Subset search for mode 3.
    #[arg(long, value_enum, default_value_t = Search::Genetic)]
    pub search: Search,
    #[arg(long, default_value_t = 20)]
    pub ga_population: usize,
    #[arg(long, default_value_t = 20)]
    pub ga_generations: usize,
    #[arg(long, default_value_t = 0.6)]
    pub ga_crossover: f64,
    #[arg(long, default_value_t = 0.033)]
    pub ga_mutation: f64,
    #[arg(long, default_value_t = 1)]
    pub ga_seed: u64,
    /// Model output.
    #[arg(long)]
    pub model: PathBuf,
    /// Candidate report (aligned text).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Candidate report (delimited).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Checked against the model's schema when given.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,
    /// Append one membership column per cluster.
    #[arg(long)]
    pub emit_memberships: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Labeled data.
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions written by `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Supplies the label column and label map.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,
    /// Row label in the report.
    #[arg(long, default_value = "CFC")]
    pub name: String,
    /// Report (aligned text).
    #[arg(long)]
    pub out: PathBuf,
    /// Report (delimited).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KValues(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct Fractions(pub BTreeMap<String, f64>);

pub fn parse_delimiter(s: &str) -> Result<u8, String> {
    let s = if s == "\\t" || s == "tab" { "\t" } else { s };
    match s.as_bytes() {
        [b] if b.is_ascii() => Ok(*b),
        _ => Err(format!(
            "delimiter must be a single ASCII character, got {s:?}"
        )),
    }
}

pub fn parse_mode(s: &str) -> Result<cfc_core::ManipulationMode, String> {
    s.parse().map_err(|e: cfc_core::Error| e.to_string())
}

fn parse_count(s: &str) -> Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("{s:?} is not a cluster count"))
}

pub fn parse_k_values(s: &str) -> Result<KValues, String> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let (lo, hi) = (parse_count(lo)?, parse_count(hi)?);
            if lo > hi {
                return Err(format!("empty range {part:?}"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(parse_count(part)?);
        }
    }
    if out.is_empty() {
        return Err("no cluster counts given".into());
    }
    if let Some(k) = out.iter().find(|&&k| k < 2) {
        return Err(format!("cluster counts must be at least 2, got {k}"));
    }
    out.sort_unstable();
    out.dedup();
    Ok(KValues(out))
}

pub fn parse_fractions(s: &str) -> Result<Fractions, String> {
    let mut out = BTreeMap::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (name, f) = part
            .split_once('=')
            .ok_or_else(|| format!("expected group=fraction, got {part:?}"))?;
        let f: f64 = f
            .trim()
            .parse()
            .map_err(|_| format!("{f:?} is not a number"))?;
        if !(f > 0.0 && f <= 1.0) {
            return Err(format!("fraction for {name:?} must lie in (0, 1], got {f}"));
        }
        if out.insert(name.trim().to_string(), f).is_some() {
            return Err(format!("group {name:?} listed twice"));
        }
    }
    Ok(Fractions(out))
}
