//! `tierroute`: profile, train, evaluate and inspect hierarchical routers.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "tierroute", version, about = "Hierarchical GraphRAG and LLM routing")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML config; relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed applied to every seeded section of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training stage to run (both when omitted).
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: Option<u8>,
    /// Seeded subsample of the dataset.
    #[arg(long, global = true)]
    pub limit: Option<usize>,
    /// Scripted world file; overrides the config.
    #[arg(long, global = true)]
    pub world: Option<PathBuf>,
    /// Use the HTTP backends configured in the registry instead of the scripted world.
    #[arg(long, global = true)]
    pub http: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic workspace (dataset, world, traces, registry, config).
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Label question difficulty and append to the profile store.
    Profile {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the training schedule and write checkpoints.
    Train {
        /// Start from this checkpoint instead of cloning from traces.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ArchArg::Hierarchical)]
        arch: ArchArg,
        /// Skip behavior cloning even when traces are configured.
        #[arg(long)]
        no_clone: bool,
        /// Final checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a router and write the report records.
    Eval {
        #[command(flatten)]
        router: RouterArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a trace file with the format rules and the lint.
    ValidateTrace { file: PathBuf },
    /// Run one episode and dump every segment.
    Simulate {
        #[arg(long)]
        question: String,
        #[command(flatten)]
        router: RouterArgs,
    },
    /// Candidate pool management.
    Registry {
        #[command(subcommand)]
        action: RegistryAction,
    },
}

#[derive(Debug, Args)]
pub struct RouterArgs {
    /// Policy checkpoint to route with.
    #[arg(long, conflicts_with_all = ["route", "router"])]
    pub policy: Option<PathBuf>,
    /// Fixed route list `GraphRAG:LLM,GraphRAG:LLM,...`.
    #[arg(long, conflicts_with = "router")]
    pub route: Option<String>,
    /// Built-in router.
    #[arg(long, value_enum)]
    pub router: Option<BuiltinRouter>,
    /// Sampling temperature for policy routing.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BuiltinRouter {
    Uniform,
    Oracle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArchArg {
    Hierarchical,
    Joint,
}

#[derive(Debug, Subcommand)]
pub enum RegistryAction {
    /// Append one candidate and save the registry.
    Add {
        #[arg(value_enum)]
        kind: CandidateKind,
        id: String,
        #[arg(long, value_enum)]
        tier: Option<TierArg>,
        #[arg(long)]
        description: Option<String>,
        #[arg(long)]
        endpoint: Option<String>,
        /// Output registry file; defaults to the configured registry path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CandidateKind {
    Graphrag,
    Llm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TierArg {
    Small,
    Medium,
    Large,
}

fn init_tracing() {
    let filter = EnvFilter::try_from_env("TIERROUTE_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn main() -> ExitCode {
    init_tracing();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", commands::error_record("Usage", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", commands::error_record(&commands::error_kind(&e), &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
