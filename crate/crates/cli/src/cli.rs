use std::path::PathBuf;

use basinscope_core::dataops::BlockSize;
use clap::{Parser, Subcommand};

use crate::commands;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::figures::{run_figure, FigureId};
use crate::workspace::Workspace;

/// Transfer-learning diagnostics for small convolutional classifiers.
///
/// Every command writes CSV/JSON results under the output directory together
/// with a `<run-id>.manifest.json` recording the resolved config and the
/// SHA-256 of every input and output.
#[derive(Parser, Debug)]
#[command(name = "basinscope", version)]
pub struct Cli {
    /// Experiment config (TOML with [train], [data], [interpolate], [basin], [criticality], [similarity], [spectrum], [sweep]); built-in defaults when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed, overriding [train] seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent sub-runs; 0 uses all cores
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory; the BASINSCOPE_OUT environment variable takes precedence
    #[arg(long, global = true, default_value = "basinscope-out")]
    pub out_dir: PathBuf,
    /// Directory for cached generated datasets
    #[arg(long, global = true)]
    pub data_cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train on the source domains and save checkpoints at the [sweep] checkpoint epochs
    Pretrain,
    /// Fine-tune on the target task from a checkpoint, or from random weights without --init
    Finetune {
        /// Checkpoint to start from; its architecture must match the config
        #[arg(long)]
        init: Option<PathBuf>,
        /// Block-shuffle the target images (a block size or `star`), overriding [data] shuffle
        #[arg(long)]
        shuffle: Option<BlockSize>,
        /// Output subdirectory; defaults to pt or rit plus the shuffle
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate the linear path between two checkpoints on the target task
    Interpolate {
        #[arg(long = "a")]
        a: PathBuf,
        #[arg(long = "b")]
        b: PathBuf,
        /// Use [interpolate] extrapolate_grid instead of grid
        #[arg(long)]
        extrapolate: bool,
        #[arg(long, default_value = "run")]
        name: String,
    },
    /// Fit and certify an error-rate basin around two checkpoints
    Basin {
        #[arg(long = "a")]
        a: PathBuf,
        #[arg(long = "b")]
        b: PathBuf,
        #[arg(long, default_value = "run")]
        name: String,
    },
    /// Module criticality maps and module rewinding for one trained model
    Criticality {
        /// Weights at the start of the path
        #[arg(long)]
        init: PathBuf,
        /// Trained weights
        #[arg(long = "final")]
        final_ckpt: PathBuf,
        /// Checkpoints along training, for [criticality] path = "optimization" or endpoint = "optimal"
        #[arg(long = "intermediate")]
        intermediates: Vec<PathBuf>,
        #[arg(long, default_value = "run")]
        name: String,
    },
    /// CKA, parameter distances and common mistakes between two checkpoints
    Compare {
        #[arg(long = "a")]
        a: PathBuf,
        #[arg(long = "b")]
        b: PathBuf,
        #[arg(long, default_value = "run")]
        name: String,
    },
    /// Exact singular values of every layer of a checkpoint
    Spectrum {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "run")]
        name: String,
    },
    /// Run one figure pipeline end to end (needs `pretrain` first)
    Figure {
        #[arg(value_enum)]
        id: FigureId,
    },
}

impl Cli {
    pub fn workspace(&self) -> CliResult<Workspace> {
        let mut config = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            config.train.seed = s;
            config.validate()?;
        }
        let out_dir = std::env::var_os("BASINSCOPE_OUT").map(PathBuf::from).unwrap_or_else(|| self.out_dir.clone());
        Ok(Workspace::new(out_dir, self.data_cache_dir.clone(), config))
    }
}

/// Runs a parsed command; returns the manifest written.
pub fn run(cli: &Cli, argv: &[String]) -> CliResult<PathBuf> {
    let ws = cli.workspace()?;
    basinscope_core::exec::with_jobs(cli.jobs, || dispatch(&ws, &cli.command, argv))
}

fn dispatch(ws: &Workspace, command: &Command, argv: &[String]) -> CliResult<PathBuf> {
    let out = match command {
        Command::Pretrain => return commands::pretrain(ws, argv),
        Command::Finetune { init, shuffle, name } => commands::finetune(ws, init.as_deref(), *shuffle, name.as_deref(), argv)?,
        Command::Interpolate { a, b, extrapolate, name } => commands::interpolate(ws, a, b, *extrapolate, name, argv)?,
        Command::Basin { a, b, name } => commands::basin(ws, a, b, name, argv)?,
        Command::Criticality { init, final_ckpt, intermediates, name } => {
            commands::criticality(ws, init, final_ckpt, intermediates, name, argv)?
        }
        Command::Compare { a, b, name } => commands::compare(ws, a, b, name, argv)?,
        Command::Spectrum { ckpt, name } => commands::spectrum(ws, ckpt, name, argv)?,
        Command::Figure { id } => run_figure(ws, *id, argv)?,
    };
    Ok(out.manifest)
}

/// Parses `argv` and runs it; returns the process exit code.
pub fn main_with(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, &argv[1..]) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
