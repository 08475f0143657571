mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rulemine_core::lattice::Interpretation;

use commands::{CurveArgs, RunArgs, UsageError};

#[derive(Parser)]
#[command(name = "rulemine", version, about = "Mine retention and omission rules that explain a RAG model's outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Where to write the JSON report (printed to stdout when absent).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Forwarded to chat endpoints that accept a sampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn run_args(&self, interpretation: Option<Interpretation>) -> RunArgs {
        RunArgs {
            config: self.config.clone(),
            interpretation,
            parallelism: self.parallelism,
            output: self.output.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Mine every valid rule of one interpretation.
    MineMono {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        interpretation: Option<Interpretation>,
    },
    /// Mine retention and omission rules in one pass.
    MineDual {
        #[command(flatten)]
        common: Common,
        /// Send every request to the model, even repeats.
        #[arg(long)]
        no_cache: bool,
        #[arg(long)]
        cache_max_bytes: Option<usize>,
    },
    /// Check one rule exhaustively.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        interpretation: Option<Interpretation>,
        /// Mask value: 0b010, 0x2 or 2.
        #[arg(long, conflicts_with = "sources")]
        mask: Option<String>,
        /// 1-based source list, e.g. 2,4.
        #[arg(long)]
        sources: Option<String>,
    },
    /// Evaluate every lattice node and derive validity by brute force.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        interpretation: Option<Interpretation>,
    },
    /// Run Mono on every satisfaction assignment of a small lattice.
    Sweep {
        #[arg(long)]
        n: usize,
        /// CSV destination (stdout when absent).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Lattice exploration curves over HotpotQA questions.
    HotpotCurves {
        #[arg(long)]
        dataset: PathBuf,
        /// Transcript to replay instead of calling an endpoint.
        #[arg(long, conflicts_with = "endpoint")]
        replay: Option<PathBuf>,
        /// OpenAI-compatible base URL, e.g. https://api.openai.com/v1.
        #[arg(long)]
        endpoint: Option<String>,
        /// API key; `${VAR}` reads it from the environment.
        #[arg(long, default_value = "${OPENAI_API_KEY}")]
        api_key: String,
        #[arg(long, default_value = "gpt-4o-mini-2024-07-18")]
        model: String,
        #[arg(long)]
        judge_model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Save every request and response to this transcript.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, default_value = "curves")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        k_min: usize,
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        #[arg(long)]
        limit: Option<usize>,
        /// Keep examples whose supporting-fact count is not exactly three.
        #[arg(long)]
        any_support: bool,
        /// Process examples concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Render a report as if-then sentences.
    Explain {
        #[arg(long)]
        report: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::MineMono {
            common,
            interpretation,
        } => commands::mine_mono(&common.run_args(interpretation)),
        Command::MineDual {
            common,
            no_cache,
            cache_max_bytes,
        } => commands::mine_dual(&common.run_args(None), !no_cache, cache_max_bytes),
        Command::Verify {
            common,
            interpretation,
            mask,
            sources,
        } => commands::verify(
            &common.run_args(interpretation),
            mask.as_deref(),
            sources.as_deref(),
        ),
        Command::Oracle {
            common,
            interpretation,
        } => commands::oracle(&common.run_args(interpretation)),
        Command::Sweep { n, output } => commands::sweep(n, output.as_deref()),
        Command::HotpotCurves {
            dataset,
            replay,
            endpoint,
            api_key,
            model,
            judge_model,
            seed,
            record,
            out_dir,
            k_min,
            k_max,
            limit,
            any_support,
            parallel,
        } => commands::hotpot_curves(&CurveArgs {
            dataset,
            api_key: endpoint.is_some().then_some(api_key),
            replay,
            endpoint,
            model,
            judge_model,
            seed,
            record,
            out_dir,
            k_min,
            k_max,
            limit,
            any_support,
            parallel,
        }),
        Command::Explain { report } => commands::explain(&report),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                eprintln!("run `rulemine --help` for usage");
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
