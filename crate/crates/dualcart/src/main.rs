use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualcart::pipeline::{self, CliError, Common, RecommendArgs, Task};
use dualcart_core::synth::SynthSpec;

/// Dual item embeddings for complementary product recommendation.
#[derive(Parser)]
#[command(name = "dualcart", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory holding every artifact of a run.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Config file with `key = value` lines.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads for training and evaluation.
    #[arg(long)]
    threads: Option<usize>,
    /// Run seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common {
            out: a.out,
            config: a.config,
            sets: a.sets,
            threads: a.threads,
            seed: a.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Read the inputs, split them and cache the training observations.
    Prepare {
        #[command(flatten)]
        common: CommonArgs,
        /// Convert the Instacart CSV release in DIR first.
        #[arg(long, value_name = "DIR")]
        from_instacart: Option<PathBuf>,
    },
    /// Train embeddings on the prepared corpus.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate the trained model.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// within_basket, next_purchase, classification or all.
        #[arg(long, default_value = "all")]
        task: Task,
    },
    /// Rank complements for a basket.
    Recommend {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated item ids.
        #[arg(long, value_delimiter = ',', required = true)]
        context: Vec<String>,
        /// User id, needed by the user and two-stage modes.
        #[arg(long)]
        user: Option<String>,
        /// Number of results.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Recall pool size for two-stage ranking.
        #[arg(long, default_value_t = dualcart_core::rank::DEFAULT_RECALL_POOL)]
        pool: usize,
        /// complement, user or two-stage.
        #[arg(long, default_value = "complement")]
        mode: String,
        /// File of candidate item ids; others are never returned.
        #[arg(long, value_name = "FILE")]
        allow: Option<PathBuf>,
        /// Cold-item fragment to merge into the model.
        #[arg(long, value_name = "FRAGMENT")]
        cold: Option<PathBuf>,
    },
    /// Infer vectors for unseen items from their tokens.
    InferCold {
        #[command(flatten)]
        common: CommonArgs,
        /// Items as `id<TAB>token token ...` lines.
        #[arg(long, value_name = "FILE")]
        items: PathBuf,
        /// Fragment path; defaults to cold.cemb in the output directory.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Write a synthetic corpus with planted complements.
    Synth {
        /// Output directory for the corpus files.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        items: usize,
        #[arg(long, default_value_t = 2000)]
        users: usize,
        /// Planted directed pairs.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        /// Planted two-source combos.
        #[arg(long, default_value_t = 20)]
        combos: usize,
        /// Probability that a source is followed by its target.
        #[arg(long, default_value_t = 0.9)]
        strength: f64,
        /// Probability that a purchase chain is a lone filler item.
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        /// Probability that a chain starting at a combo source is the combo.
        #[arg(long, default_value_t = 0.25)]
        combo_rate: f64,
        /// Also plant the reverse of every pair.
        #[arg(long)]
        reciprocal: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(cmd: Command) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    match cmd {
        Command::Prepare { common, from_instacart } => {
            let manifest = pipeline::prepare(&common.into(), from_instacart.as_deref())?;
            let _ = out.write_all(manifest.as_bytes());
        }
        Command::Train { common } => pipeline::train(&common.into(), &mut out)?,
        Command::Evaluate { common, task } => {
            let report = pipeline::evaluate(&common.into(), task, &mut err)?;
            let _ = out.write_all(report.to_kv().as_bytes());
        }
        Command::Recommend {
            common,
            context,
            user,
            k,
            pool,
            mode,
            allow,
            cold,
        } => {
            let args = RecommendArgs {
                context,
                user,
                k,
                pool,
                mode,
                allow,
                cold,
            };
            pipeline::recommend(&common.into(), &args, &mut out)?;
        }
        Command::InferCold { common, items, output } => {
            let n = pipeline::infer_cold(&common.into(), &items, output.as_deref(), &mut err)?;
            let _ = writeln!(out, "inferred {n} items");
        }
        Command::Synth {
            out: dir,
            items,
            users,
            pairs,
            combos,
            strength,
            noise,
            combo_rate,
            reciprocal,
            seed,
        } => {
            let spec = SynthSpec {
                n_items: items,
                n_users: users,
                n_pairs: pairs,
                n_combos: combos,
                strength,
                noise_rate: noise,
                combo_rate,
                reciprocal,
                seed,
                ..Default::default()
            };
            let conf = pipeline::synth(&dir, &spec)?;
            let _ = writeln!(out, "{}", conf.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
