use std::path::PathBuf;

use clap::Args;

pub const SEED_ENV: &str = "KSMP_SEED";

#[derive(Debug, Args)]
pub struct SampleCheckArgs {
    /// Number of classes.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Embedding dimension.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub d: u64,
    /// uniform, quadratic[:ALPHA] or quartic[:ALPHA].
    #[arg(long, default_value = "quadratic")]
    pub kernel: String,
    /// Kernel scale; overrides any `:ALPHA` suffix.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: u64,
    /// Defaults to $KSMP_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Classes per leaf; defaults to max(1, D / d).
    #[arg(long)]
    pub tau: Option<usize>,
    /// Entries of the random embeddings and query are N(0, scale^2);
    /// defaults to 1 / sqrt(d).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Read class embeddings from a KSMP1 file instead (overrides --n, --d).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

/// Experiment settings shared by `bias`, `convergence` and `dump-config`.
/// Precedence, lowest first: built-in defaults, $KSMP_SEED, the config
/// file, `--set`, then the individual flags.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// key=value file; `#` starts a comment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set learning_rate=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub num_queries: Option<String>,
    /// Training examples (one epoch).
    #[arg(long)]
    pub examples: Option<String>,
    #[arg(long)]
    pub eval_examples: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    /// Comma-separated: full, uniform, unigram, softmax, quadratic[:A], quartic[:A].
    #[arg(long)]
    pub samplers: Option<String>,
    /// Base seed; defaults to $KSMP_SEED, then 0.
    #[arg(long)]
    pub seed: Option<String>,
    /// Runs per configuration, with seeds seed, seed+1, ...
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub eval_every: Option<String>,
    /// standard, absolute or auto.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub temperature: Option<String>,
    #[arg(long)]
    pub init_scale: Option<String>,
    /// Classes per tree leaf; 0 picks max(1, D / d).
    #[arg(long)]
    pub tau: Option<String>,
    /// Audit the tree against a rebuild every this many epochs; 0 disables.
    #[arg(long)]
    pub audit_every: Option<String>,
}

impl ConfigArgs {
    pub fn flag_pairs(&self) -> Vec<(&'static str, &str)> {
        [
            ("n", &self.n),
            ("d", &self.d),
            ("num_queries", &self.num_queries),
            ("examples_per_epoch", &self.examples),
            ("eval_examples", &self.eval_examples),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("samplers", &self.samplers),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("eval_every", &self.eval_every),
            ("prediction_mode", &self.mode),
            ("temperature", &self.temperature),
            ("init_scale", &self.init_scale),
            ("leaf_capacity", &self.tau),
            ("audit_every", &self.audit_every),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub m: Option<String>,
    /// Output CSV path; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress progress and the summary on stderr.
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Sample size shared by every sampler.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress progress output on stderr.
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated class counts.
    #[arg(long, default_value = "64,1024,65536")]
    pub n: String,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub d: u64,
    #[arg(long, default_value = "quadratic")]
    pub kernel: String,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<usize>,
    /// Draws (and updates) timed per class count.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub draws: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpConfigArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub m: Option<String>,
}
