//! Benchmark CLI for the learning-augmented sketches.
//!
//! A run is described by a JSON config file (same schema as the `config`
//! block in JSON output) and/or command-line overrides. Results go to stdout
//! or `--out` as CSV or JSON; a median/mean/std summary per algorithm and
//! size is always printed to stderr.
//!
//! Exit status is 0 when every sweep cell ran, 1 when any cell errored, 2 on
//! configuration problems.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use lasketch::bench::{
    self, BenchConfig, Mode, OutputFormat, RobustSpace, SpaceConvention,
};
use lasketch::freq::Split;

#[derive(Parser, Debug)]
#[command(
    name = "lasketch",
    about = "Benchmark harness for learning-augmented frequency and matrix sketches",
    version
)]
struct Cli {
    /// Benchmark family: freq | matrix | adversarial | noise.
    #[arg(long, value_enum)]
    mode: Option<CliMode>,

    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format: csv | json.
    #[arg(long, value_enum)]
    format: Option<CliFormat>,

    /// Comma-separated trial seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Comma-separated space budgets in words (freq/adversarial modes).
    #[arg(long, value_delimiter = ',')]
    space: Option<Vec<u64>>,

    /// Comma-separated output ranks (matrix/noise modes).
    #[arg(long, value_delimiter = ',')]
    rank: Option<Vec<u64>>,

    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,

    /// Learned-space split: half | third.
    #[arg(long, value_enum)]
    split: Option<CliSplit>,

    /// Comma-separated truncation constants for the truncated count sketch.
    #[arg(long = "cs-c", value_delimiter = ',')]
    cs_c: Option<Vec<f64>>,

    /// Comma-separated noise levels (noise mode).
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,

    /// Domain size (streams) or dimension (matrices).
    #[arg(short = 'd', long = "domain")]
    d: Option<usize>,

    /// Stream length (streams) or rows per matrix.
    #[arg(short = 'n', long = "items")]
    n: Option<u64>,

    /// Number of matrices in a self-similar sequence.
    #[arg(long)]
    count: Option<usize>,

    /// Shared top-subspace rank for matrix sequences.
    #[arg(long)]
    k_shared: Option<usize>,

    /// Tail drift for matrix sequences.
    #[arg(long)]
    drift: Option<f64>,

    /// Instance-generation seed (independent of trial seeds).
    #[arg(long)]
    gen_seed: Option<u64>,

    /// Emit generated streams in sorted blocks instead of shuffled order.
    #[arg(long)]
    sorted: bool,

    /// Include the first (prediction-source) instance of a sequence in the
    /// reports.
    #[arg(long)]
    include_first: bool,

    /// Oracle coverage fraction in (0,1]: only the top c·k_h predictions
    /// are correct, the rest are random distractors.
    #[arg(long = "oracle-c")]
    oracle_c: Option<f64>,

    /// Stream or matrix file to use instead of the generator.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Prediction file: JSON id list (freq) or dense matrix (matrix).
    #[arg(long)]
    oracle: Option<PathBuf>,

    /// Record wall-clock update times (breaks byte-identical output).
    #[arg(long)]
    timing: bool,

    /// Space accounting for learned matrix sketches:
    /// budget | unbilled-oracle.
    #[arg(long, value_enum)]
    space_convention: Option<CliSpaceConvention>,

    /// Space accounting for the robust sketch: budget | total.
    #[arg(long, value_enum)]
    robust_space: Option<CliRobustSpace>,

    /// Write the final sketch state to this path (single-cell runs only).
    #[arg(long)]
    save_sketch: Option<PathBuf>,

    /// Start from a saved sketch state (single-cell runs only).
    #[arg(long)]
    load_sketch: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum CliMode {
    Freq,
    Matrix,
    Adversarial,
    Noise,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum CliFormat {
    Csv,
    Json,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum CliSplit {
    Half,
    Third,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum CliSpaceConvention {
    Budget,
    UnbilledOracle,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum CliRobustSpace {
    Budget,
    Total,
}

fn build_config(cli: &Cli) -> Result<BenchConfig, String> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str::<BenchConfig>(&text)
                .map_err(|e| format!("cannot parse {}: {e}", path.display()))?
        }
        None => BenchConfig::default(),
    };
    if let Some(mode) = cli.mode {
        config.mode = match mode {
            CliMode::Freq => Mode::Freq,
            CliMode::Matrix => Mode::Matrix,
            CliMode::Adversarial => Mode::Adversarial,
            CliMode::Noise => Mode::Noise,
        };
    }
    if let Some(format) = cli.format {
        config.format = match format {
            CliFormat::Csv => OutputFormat::Csv,
            CliFormat::Json => OutputFormat::Json,
        };
    }
    if let Some(split) = cli.split {
        config.split = match split {
            CliSplit::Half => Split::Half,
            CliSplit::Third => Split::Third,
        };
    }
    if let Some(v) = cli.space_convention {
        config.space_convention = match v {
            CliSpaceConvention::Budget => SpaceConvention::Budget,
            CliSpaceConvention::UnbilledOracle => SpaceConvention::UnbilledOracle,
        };
    }
    if let Some(v) = cli.robust_space {
        config.robust_space = match v {
            CliRobustSpace::Budget => RobustSpace::Budget,
            CliRobustSpace::Total => RobustSpace::Total,
        };
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = cli.$field.clone() {
                config.$field = v;
            }
        };
    }
    take!(seeds);
    take!(space);
    take!(rank);
    take!(algos);
    take!(cs_c);
    take!(sigma);
    take!(d);
    take!(n);
    take!(count);
    take!(k_shared);
    take!(drift);
    take!(gen_seed);
    if cli.sorted {
        config.shuffled = false;
    }
    if cli.include_first {
        config.include_first = true;
    }
    if cli.timing {
        config.timing = true;
    }
    if let Some(c) = cli.oracle_c {
        config.oracle_c = Some(c);
    }
    if cli.input.is_some() {
        config.input = cli.input.clone();
    }
    if cli.oracle.is_some() {
        config.oracle = cli.oracle.clone();
    }
    if cli.out.is_some() {
        config.out = cli.out.clone();
    }
    if cli.save_sketch.is_some() {
        config.save_sketch = cli.save_sketch.clone();
    }
    if cli.load_sketch.is_some() {
        config.load_sketch = cli.load_sketch.clone();
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let outcome = match bench::run(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    eprint!("{}", bench::render_summary_table(&outcome.summary));
    if let Some(slope) = outcome.noise_slope {
        eprintln!("noise scaling slope: {slope:.4}");
    }
    match bench::emit(&config, &outcome) {
        Ok(Some(text)) => print!("{text}"),
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if outcome.any_failed {
        for r in outcome.reports.iter().filter(|r| r.error.is_some()) {
            eprintln!(
                "cell failed: {} seed {}: {}",
                r.algorithm,
                r.seed,
                r.error.as_deref().unwrap_or("unknown")
            );
        }
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
