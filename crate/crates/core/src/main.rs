use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use streamgen::analysis::{compare_spaces, FeatureMatrix, Group};
use streamgen::features::{extract_stream, FeatureId, Grouping, WindowConfig};
use streamgen::io::feature_csv::write_features;
use streamgen::io::{open_sink, read_static_log, read_stream, streamify, write_stream, SinkReport};
use streamgen::optimizer::grid::{build_grid, grid_csv};
use streamgen::optimizer::{optimize, Budget, ParamSpace, RunConfig, TargetsFile};
use streamgen::sim::{simulate_with_drift, StreamDefinition};
use streamgen::{Error, Result};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_IO: u8 = 4;
const QUEUE_DEPTH: usize = 4096;

#[derive(Parser)]
#[command(
    name = "streamgen",
    version,
    about = "Generate event streams with target characteristics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize generator parameters toward feature targets and write the
    /// best stream definition.
    Generate(GenerateArgs),
    /// Simulate a stream definition into a file, stdout (`-`) or `tcp://host:port`.
    Replay(ReplayArgs),
    /// Compute per-window features of a stream file.
    Features(FeaturesArgs),
    /// Convert a static CSV log into a timestamp-ordered stream file.
    Streamify(StreamifyArgs),
    /// Run the pairwise feasibility grid.
    Grid(GridArgs),
    /// Compare feature spaces of generated streams and replayed logs.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Events per window.
    #[arg(long, default_value_t = 500)]
    window: usize,
    /// Windows simulated per evaluation.
    #[arg(long, default_value_t = 4)]
    eval_windows: usize,
    /// Simulation replicates per evaluation.
    #[arg(long, default_value_t = 3)]
    n_seeds: usize,
    /// Stop once the best distance falls below this value.
    #[arg(long, default_value_t = 0.02)]
    epsilon: f64,
}

impl EvalArgs {
    fn config(&self, budget: Budget, master_seed: u64) -> RunConfig {
        RunConfig {
            budget,
            epsilon: self.epsilon,
            n_eval_windows: self.eval_windows,
            window: WindowConfig::with_size(self.window),
            n_seeds: self.n_seeds,
            master_seed,
            ..RunConfig::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides SOI_SEED and the targets file.
    #[arg(long)]
    seed: Option<u64>,
    /// Total number of evaluations; overrides the targets file.
    #[arg(long)]
    budget: Option<usize>,
    /// Trial history CSV; defaults to `<out>.trials.csv`.
    #[arg(long)]
    trials: Option<PathBuf>,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    def: PathBuf,
    #[arg(long)]
    n_events: usize,
    #[arg(long)]
    out: String,
    /// Maximum events per second; unlimited when absent.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 500)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
    /// Comparison groups for out-of-order detection: global or per-case.
    #[arg(long, default_value = "global")]
    grouping: Grouping,
}

#[derive(Args)]
struct StreamifyArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Milliseconds per tick for ISO-8601 timestamps.
    #[arg(long, default_value_t = 1000)]
    tick_ms: u64,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated feature names; every pair is evaluated.
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<FeatureId>,
    /// Comma-separated target values.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.5,0.7,1.0")]
    targets: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluations per cell.
    #[arg(long, default_value_t = 30)]
    budget: usize,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory of feature CSVs of generated streams.
    #[arg(long)]
    generated: PathBuf,
    /// Directory of feature CSVs of replayed logs.
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn master_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("SOI_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Param(format!("SOI_SEED={v:?} is not an integer"))),
        Err(_) => Ok(fallback),
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn generate(args: GenerateArgs) -> Result<u8> {
    let file = TargetsFile::from_json(&read_text(&args.targets)?)?;
    let seed = master_seed(args.seed, file.master_seed)?;
    let budget = args.budget.map(Budget::total).unwrap_or(file.budget);
    let cfg = args.eval.config(budget, seed);
    let run = optimize(&file.targets()?, &file.space()?, &cfg)?;
    let trials = args
        .trials
        .unwrap_or_else(|| PathBuf::from(format!("{}.trials.csv", args.out.display())));
    fs::write(&trials, run.history_csv())?;
    let Some(def) = &run.best_definition else {
        eprintln!("no candidate could be simulated");
        return Ok(EXIT_BUDGET);
    };
    fs::write(&args.out, def.to_json()?)?;
    eprintln!(
        "best distance {:.6} after {} trials",
        run.best_distance(),
        run.history.len()
    );
    Ok(if run.reached_epsilon() {
        0
    } else {
        EXIT_BUDGET
    })
}

fn replay(args: ReplayArgs) -> Result<u8> {
    let def = StreamDefinition::from_json(&read_text(&args.def)?)?;
    if let Some(r) = args.rate {
        if !(r > 0.0) {
            return Err(Error::Param("--rate must be positive".into()));
        }
    }
    let mut sink = open_sink(&args.out)?;
    let (tx, rx) = mpsc::sync_channel(QUEUE_DEPTH);
    let n = args.n_events;
    let report: Result<SinkReport> = thread::scope(|s| {
        let producer = s.spawn(move || -> Result<()> {
            let stream = simulate_with_drift(&def, n)?;
            for e in stream.into_events() {
                if tx.send(e).is_err() {
                    break;
                }
            }
            Ok(())
        });
        let started = Instant::now();
        let mut consumed = Ok(());
        for (i, e) in rx.iter().enumerate() {
            if let Some(rate) = args.rate {
                let due = started + Duration::from_secs_f64(i as f64 / rate);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    thread::sleep(wait);
                }
            }
            if let Err(err) = sink.send(&e) {
                consumed = Err(err);
                break;
            }
        }
        drop(rx);
        producer.join().expect("producer thread panicked")?;
        consumed?;
        sink.finish()
    });
    let report = report?;
    eprintln!(
        "sent {} events ({} bytes) in {:.3}s",
        report.events_sent,
        report.bytes,
        report.duration.as_secs_f64()
    );
    Ok(0)
}

fn features(args: FeaturesArgs) -> Result<u8> {
    let cfg = WindowConfig {
        grouping: args.grouping,
        ..WindowConfig::with_size(args.window)
    };
    cfg.validate()?;
    let stream = read_stream(BufReader::new(File::open(&args.input)?))?;
    let vectors = extract_stream(&stream, &cfg);
    write_features(BufWriter::new(File::create(&args.out)?), &vectors)?;
    Ok(0)
}

fn streamify_cmd(args: StreamifyArgs) -> Result<u8> {
    let rows = read_static_log(BufReader::new(File::open(&args.log)?), args.tick_ms)?;
    let stream = streamify(&rows);
    write_stream(BufWriter::new(File::create(&args.out)?), stream.events())?;
    Ok(0)
}

fn grid(args: GridArgs) -> Result<u8> {
    let seed = master_seed(args.seed, 0)?;
    let cfg = args.eval.config(Budget::total(args.budget), seed);
    let cells = build_grid(&args.features, &args.targets, &ParamSpace::default(), &cfg)?;
    fs::write(&args.out, grid_csv(&cells))?;
    Ok(0)
}

fn analyze(args: AnalyzeArgs) -> Result<u8> {
    let mut generated = FeatureMatrix::new(FeatureId::PRIMARY.to_vec());
    generated.load_dir(&args.generated, Group::Generated)?;
    let mut logs = FeatureMatrix::new(FeatureId::PRIMARY.to_vec());
    logs.load_dir(&args.logs, Group::BenchmarkLog)?;
    let report = compare_spaces(&generated, &logs)?;
    report.write_dir(&args.out)?;
    print!("{}", report.gaps_text());
    Ok(0)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Param(_) | Error::Parse { .. } | Error::Definition(_) => EXIT_USAGE,
        Error::Io(_) | Error::Sink { .. } => EXIT_IO,
        Error::Simulation(_) | Error::Degenerate(_) => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Replay(a) => replay(a),
        Command::Features(a) => features(a),
        Command::Streamify(a) => streamify_cmd(a),
        Command::Grid(a) => grid(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
