//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "testforge", version, about = "Generate, enhance and run browser tests")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML configuration file (default: ./testforge.toml when present).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Run against the simulated sites (the default).
    #[arg(long, global = true, conflicts_with = "webdriver")]
    pub sim: bool,
    /// Run against a WebDriver endpoint instead of the simulated sites.
    #[arg(long, global = true, value_name = "ENDPOINT", env = "TESTFORGE_WEBDRIVER")]
    pub webdriver: Option<String>,
    /// Artifact directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Directory of simulated sites.
    #[arg(long, global = true, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Job store journal.
    #[arg(long, global = true, value_name = "FILE")]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a test script from natural-language instructions.
    Generate(GenerateArgs),
    /// Apply enhancement strategies to a script.
    Enhance(EnhanceArgs),
    /// Statically validate a script; exits 1 unless it may proceed.
    Validate(ScriptArgs),
    /// Execute scripts, or generate, enhance and execute from instructions.
    Run(RunArgs),
    /// Add a job to the queue.
    Enqueue(EnqueueArgs),
    /// Inspect queued jobs.
    Jobs {
        #[command(subcommand)]
        command: JobsCommand,
    },
    /// Claim and execute queued jobs.
    Worker(WorkerArgs),
    /// Plan and run security probes.
    Probe(ProbeArgs),
    /// Run every script of a corpus under each strategy combination.
    Ablate(AblateArgs),
    /// Render a saved ablation or security report, or cluster a failure store.
    Report(ReportArgs),
    /// Print the default configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Page to test: `sim://<site>/<path>` or an absolute URL.
    pub target: String,
    #[arg(long, short)]
    pub instructions: String,
    #[arg(long, default_value = "script")]
    pub id: String,
}

#[derive(Debug, Args)]
pub struct ScriptArgs {
    /// Script JSON file.
    pub script: PathBuf,
    /// Override the page the script is checked against.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[command(flatten)]
    pub script: ScriptArgs,
    /// `all`, `none`, or strategies such as `s1,s2,s4`.
    #[arg(long, default_value = "all")]
    pub strategies: String,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Script JSON files.
    pub scripts: Vec<PathBuf>,
    /// Page to run against; required with --instructions.
    #[arg(long)]
    pub target: Option<String>,
    /// Generate the script instead of reading one.
    #[arg(long, short, conflicts_with = "scripts")]
    pub instructions: Option<String>,
    /// Strategies applied to generated scripts.
    #[arg(long, default_value = "all")]
    pub strategies: String,
    #[arg(long, default_value = "script")]
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Functional,
    Security,
}

#[derive(Debug, Args)]
pub struct EnqueueArgs {
    /// Page to test: `sim://<site>/<path>` or an absolute URL.
    pub target: String,
    #[arg(long, short)]
    pub instructions: String,
    #[arg(long, value_enum, default_value = "functional")]
    pub kind: KindArg,
    #[arg(long, default_value = "cli")]
    pub session: String,
}

#[derive(Debug, Subcommand)]
pub enum JobsCommand {
    /// List jobs in creation order.
    Ls {
        /// Only jobs in this status.
        #[arg(long)]
        status: Option<String>,
    },
    /// Show one job record.
    Status { job_id: String },
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    #[arg(long, default_value = "worker-1")]
    pub id: String,
    /// Exit when the queue is empty.
    #[arg(long)]
    pub once: bool,
    #[arg(long)]
    pub max_jobs: Option<usize>,
    /// Idle poll interval; overrides `queue.poll_interval_ms`.
    #[arg(long, value_name = "MS")]
    pub poll_ms: Option<u64>,
    /// Heartbeat interval; overrides `queue.heartbeat_interval_ms`.
    #[arg(long, value_name = "MS")]
    pub heartbeat_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Page to probe: `sim://<site>/<path>`, a fixture site name, or an absolute URL.
    #[arg(long)]
    pub target: String,
    /// Probe descriptions; may be repeated.
    #[arg(long = "describe", short = 'd', visible_alias = "description")]
    pub description: Vec<String>,
    /// JSON list of `{"description": ...}` objects.
    #[arg(long, value_name = "FILE")]
    pub from_file: Option<PathBuf>,
    /// JSON test accounts and routes; simulated sites supply their own.
    #[arg(long, value_name = "FILE")]
    pub hints: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Corpus directory (default: the fixtures directory).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated masks such as `none,s1,s1+s2,all`; default all 16.
    #[arg(long)]
    pub masks: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `ablation.json`, a security report, or a failure store (`.ndjson`).
    pub file: PathBuf,
}
