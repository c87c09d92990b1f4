use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dmlprobe::knn::DEFAULT_BLOCK_SIZE;
use dmlprobe::{two_sided_threshold, MetricKind};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "dmlprobe", version, about = "Saliency and property-level analysis of metric learning embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Distance or similarity used for retrieval (default: the embedding dir's meta.json, else euclidean)
    #[arg(long, global = true)]
    pub metric: Option<MetricKind>,
    /// Count the query itself toward R and allow it to be retrieved
    #[arg(long, global = true)]
    pub include_query: bool,
    /// Significance level (default 0.01)
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Query/candidate tile size for the neighbour pass
    #[arg(long, global = true)]
    pub block_size: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "DMLPROBE_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory. Tables go to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file with defaults for any of the flags above
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Saliency map processing and comparison
    #[command(subcommand)]
    Saliency(SaliencyCommand),
    /// R-Precision and NR-Prec of every property, for one or more models
    Nrprec {
        properties_csv: PathBuf,
        #[arg(required = true)]
        embeddings_dirs: Vec<PathBuf>,
    },
    /// Mann-Whitney U test between two groups of models, per property
    GroupTest {
        #[arg(required = true, num_args = 2..)]
        report_csvs: Vec<PathBuf>,
        /// Lines of `model,group`
        #[arg(long)]
        groups: PathBuf,
    },
    /// Sample a property manifest from the synthetic grid
    Manifest {
        #[arg(short = 'n', long)]
        count: usize,
        /// Also write render_jobs.jsonl
        #[arg(long)]
        render_jobs: bool,
    },
    /// Synthetic embeddings with known property influence
    SynthEmbed {
        /// Properties CSV or render-jobs JSONL
        #[arg(long)]
        manifest: PathBuf,
        /// `name=weight,...`
        #[arg(long, default_value = "")]
        weights: String,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum SaliencyCommand {
    /// SmoothGrad mean and post-processing of every gradient stack in a directory
    Postprocess { in_dir: PathBuf, out_dir: PathBuf },
    /// Correlation and JSD between all pairs of models
    Compare {
        #[arg(required = true, num_args = 2..)]
        model_dirs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Markdown,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    metric: Option<String>,
    include_query: Option<bool>,
    alpha: Option<f64>,
    block_size: Option<usize>,
    threads: Option<usize>,
    format: Option<Format>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

/// Flags merged with the config file; flags win.
#[derive(Debug, Clone)]
pub struct Settings {
    pub metric: Option<MetricKind>,
    pub include_query: bool,
    pub alpha: f64,
    pub threshold: f64,
    pub block_size: usize,
    pub threads: Option<usize>,
    pub format: Format,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl Settings {
    pub fn resolve(g: &GlobalArgs) -> Result<Self> {
        let file = match &g.config {
            Some(p) => read_config(p)?,
            None => FileConfig::default(),
        };
        let metric = match (g.metric, &file.metric) {
            (Some(m), _) => Some(m),
            (None, Some(s)) => Some(s.parse().with_context(|| format!("config metric {s:?}"))?),
            (None, None) => None,
        };
        let alpha = g.alpha.or(file.alpha).unwrap_or(0.01);
        let threshold = two_sided_threshold(alpha)?;
        let block_size = g.block_size.or(file.block_size).unwrap_or(DEFAULT_BLOCK_SIZE);
        if block_size == 0 {
            bail!("--block-size must be at least 1");
        }
        let threads = g.threads.or(file.threads);
        if threads == Some(0) {
            bail!("--threads must be at least 1");
        }
        Ok(Self {
            metric,
            include_query: g.include_query || file.include_query.unwrap_or(false),
            alpha,
            threshold,
            block_size,
            threads,
            format: g.format.or(file.format).unwrap_or_default(),
            seed: g.seed.or(file.seed).unwrap_or(0),
            out: g.out.clone().or(file.out),
        })
    }
}
