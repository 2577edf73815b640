//! `l1mdd` command-line driver.
//!
//! Exit status: 0 on success, 2 on usage errors, 3 when a configuration is
//! rejected, 1 for any other failure. Failures print one line to stderr,
//! `error[<category>]: <detail>`.

mod commands;
mod run_manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "l1mdd", version, about = "L1-aware multilingual mispronunciation detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn enabled(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file for the subcommand; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long)]
    pub run_manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub freeze_conv: Option<OnOff>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the union phoneme inventory from per-language symbol lists.
    BuildInventory {
        #[command(flatten)]
        common: Common,
        /// Comma-separated languages to include (default: all in the config).
        #[arg(long, value_delimiter = ',')]
        langs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus: inventory, features, and split manifests.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of training utterances.
        #[arg(long)]
        train_count: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the auxiliary L1/L2 classifier.
    TrainAux {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training log, JSON Lines (default: `<out>.log.jsonl`).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train a recognizer.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        /// none | onehot-l2 | onehot-l1 | onehot-l1l2 | aux
        #[arg(long)]
        conditioning: Option<String>,
        #[arg(long)]
        phoneme_encoder: Option<OnOff>,
        /// Pretrained aux checkpoint, required for aux conditioning.
        #[arg(long)]
        aux_checkpoint: Option<PathBuf>,
        /// sequential | joint
        #[arg(long)]
        aux_training: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Training log, JSON Lines (default: `<out>.log.jsonl`).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Greedy-decode a manifest into JSON Lines predictions.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a manifest, or score saved predictions.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        manifest: Option<PathBuf>,
        /// Predictions written by `decode`.
        #[arg(long, conflicts_with_all = ["checkpoint", "manifest"])]
        predictions: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train and compare the configured ablation variants.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated variant ids (default: the config's list).
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Table as JSON; a text rendering goes to `<out>.txt`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &l1mdd::Error) -> u8 {
    match e {
        l1mdd::Error::Config(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::BuildInventory { common, langs, out } => commands::build_inventory(&common, &langs, &out),
        Command::Synth {
            common,
            seed,
            train_count,
            out,
        } => commands::synth(&common, seed, train_count, &out),
        Command::TrainAux {
            common,
            flags,
            train,
            valid,
            out,
            log,
        } => commands::train_aux(&common, &flags, &train, &valid, &out, log.as_deref()),
        Command::Train {
            common,
            flags,
            inventory,
            train,
            valid,
            conditioning,
            phoneme_encoder,
            aux_checkpoint,
            aux_training,
            alpha,
            out,
            log,
        } => commands::train(commands::TrainArgs {
            common: &common,
            flags: &flags,
            inventory: &inventory,
            train: &train,
            valid: &valid,
            conditioning: conditioning.as_deref(),
            phoneme_encoder,
            aux_checkpoint: aux_checkpoint.as_deref(),
            aux_training: aux_training.as_deref(),
            alpha,
            out: &out,
            log: log.as_deref(),
        }),
        Command::Decode {
            common,
            checkpoint,
            manifest,
            out,
        } => commands::decode(&common, &checkpoint, &manifest, &out),
        Command::Eval {
            common,
            checkpoint,
            manifest,
            predictions,
            report,
        } => commands::eval(
            &common,
            checkpoint.as_deref(),
            manifest.as_deref(),
            predictions.as_deref(),
            &report,
        ),
        Command::Ablate {
            common,
            seed,
            variants,
            inventory,
            train,
            valid,
            test,
            out,
        } => commands::ablate(&common, seed, &variants, &inventory, [&train, &valid, &test], &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {detail}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
