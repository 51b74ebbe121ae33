//! `ppg-qa`: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 invalid arguments or inputs (nothing written),
//! 2 failure while processing (the message names the segment).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model format_version 1)");

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ppg-qa", version = VERSION, about = "Good/Bad quality assessment of PPG segments")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

const SEGMENT_SCHEMA: &str = "\
Segment CSV: one sample per line, optional header `value`, blank lines ignored.";

const MANIFEST_SCHEMA: &str = "\
Manifest CSV header: segment_id,path,raw_label,split
  raw_label: excellent | acceptable | unfit  (excellent/acceptable merge to good)
  split:     train | validation | test
  path:      segment CSV, relative paths resolve against the manifest's directory";

const FEATURE_SCHEMA: &str = "\
Feature CSV header: segment_id,f00_mean_seg,...,f26_kurt_pearson,label
  Rows whose segment had fewer than two beats leave all 27 feature fields empty.";

const FEATURES_HELP: &str = "\
Manifest CSV header: segment_id,path,raw_label,split
Output feature CSV header: segment_id,f00_mean_seg,...,f26_kurt_pearson,label
  Segments with fewer than two beats leave all 27 feature fields empty.";

#[derive(Args, Debug, Clone)]
pub struct BandArgs {
    /// Lower passband edge in Hz.
    #[arg(long, default_value_t = 0.5)]
    low: f64,
    /// Upper passband edge in Hz.
    #[arg(long, default_value_t = 10.0)]
    high: f64,
    /// Total bandpass order (even).
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Stopband attenuation in dB.
    #[arg(long = "atten-db", default_value_t = 20.0)]
    atten_db: f64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Algo {
    Rf,
    Gbdt,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Zero-phase Chebyshev II bandpass of one segment.
    #[command(after_help = SEGMENT_SCHEMA)]
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        fs: f64,
        #[command(flatten)]
        band: BandArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Peak and trough markers of a (filtered) segment as JSON
    /// `{"peaks":[...],"troughs":[...]}`.
    #[command(after_help = SEGMENT_SCHEMA)]
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        fs: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter and extract the 27 features for every manifest entry.
    #[command(after_help = FEATURES_HELP)]
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        fs: f64,
        #[arg(long)]
        out: PathBuf,
        /// Only entries of this split.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Directory for per-segment JSON with markers, template and distances.
        #[arg(long)]
        dump_intermediate: Option<PathBuf>,
        #[command(flatten)]
        band: BandArgs,
        /// Points per length-normalized beat.
        #[arg(long, default_value_t = 100)]
        beat_length: usize,
    },
    /// Train a classifier on a feature CSV; rows without features are skipped.
    #[command(after_help = FEATURE_SCHEMA)]
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Forest size (rf).
        #[arg(long, default_value_t = 100)]
        n_trees: usize,
        /// Boosting rounds (gbdt).
        #[arg(long, default_value_t = 100)]
        n_rounds: usize,
        /// Depth cap; default unlimited for rf, 6 for gbdt.
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long, default_value_t = 0.3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Label every row of a feature CSV.
    /// Output columns: segment_id,label,score,reason.
    #[command(after_help = FEATURE_SCHEMA)]
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// End-to-end Se/PPV/F1 report on one split (Good is the positive class).
    #[command(after_help = MANIFEST_SCHEMA)]
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = 128.0)]
        fs: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        band: BandArgs,
        #[arg(long, default_value_t = 100)]
        beat_length: usize,
    },
    /// Print the normalized gain-based importances (impurity decrease for rf,
    /// split gain for gbdt) as CSV.
    Importance {
        #[arg(long)]
        model: PathBuf,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a labeled synthetic corpus: segments/*.csv and manifest.csv.
    #[command(after_help = MANIFEST_SCHEMA)]
    Synth {
        #[arg(long, default_value_t = 700)]
        n_good: usize,
        #[arg(long, default_value_t = 1400)]
        n_bad: usize,
        #[arg(long, default_value_t = 128.0)]
        fs: f64,
        #[arg(long, default_value_t = 25.0)]
        duration: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Filter { input, fs, band, out } => commands::filter(&input, fs, &band, &out),
        Command::Detect { input, fs, out } => commands::detect(&input, fs, &out),
        Command::Features {
            manifest,
            fs,
            out,
            split,
            dump_intermediate,
            band,
            beat_length,
        } => commands::features(commands::FeaturesArgs {
            manifest: &manifest,
            fs,
            out: &out,
            split,
            dump: dump_intermediate.as_deref(),
            band: &band,
            beat_length,
        }),
        Command::Train {
            features,
            algo,
            seed,
            out,
            n_trees,
            n_rounds,
            max_depth,
            learning_rate,
            lambda,
        } => commands::train(commands::TrainArgs {
            features: &features,
            algo,
            seed,
            out: &out,
            n_trees,
            n_rounds,
            max_depth,
            learning_rate,
            lambda,
        }),
        Command::Predict {
            model,
            features,
            out,
            threshold,
        } => commands::predict(&model, &features, &out, threshold),
        Command::Evaluate {
            model,
            manifest,
            split,
            fs,
            out,
            threshold,
            band,
            beat_length,
        } => commands::evaluate(commands::EvaluateArgs {
            model: &model,
            manifest: &manifest,
            split,
            fs,
            out: &out,
            threshold,
            band: &band,
            beat_length,
        }),
        Command::Importance { model, out } => commands::importance(&model, out.as_deref()),
        Command::Synth {
            n_good,
            n_bad,
            fs,
            duration,
            seed,
            out,
        } => commands::synth(n_good, n_bad, fs, duration, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ppg-qa: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
