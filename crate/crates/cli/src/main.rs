use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use triehh::analysis::{discovery_rate, min_population, occurrences_for, DiscoveryQuery};
use triehh::harness::{curve_csv, discovery_curve_from, log_bins, run_battery, ExperimentSpec, ParamSource};
use triehh::ingest::{ingest_csv, ingest_jsonl, load_dictionary, IngestConfig, Selection};
use triehh::protocol::{run, run_private, selectors, ProtocolParams, RunOptions};
use triehh::synthetic::{generate_synthetic, Fixture, SyntheticConfig};
use triehh::{choose_parameters, theta_rule, Error, UserDataset};

#[derive(Parser, Debug)]
#[command(name = "triehh", version, about = "Trie-based federated heavy-hitters discovery")]
struct Cli {
    /// Print the command tree as JSON and exit.
    #[arg(long, global = false)]
    help_json: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Choose theta and gamma for a privacy target.
    Params(ParamsArgs),
    /// Run the protocol once, or a battery of seeded runs.
    Simulate(SimulateArgs),
    /// Worst-case discovery rate across a frequency range.
    AnalyzeRate(AnalyzeArgs),
    /// Smallest population reaching a target discovery rate.
    MinPop(MinPopArgs),
    /// Build a dataset from a CSV or JSONL corpus.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset from a bundled frequency table.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the primary output here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct PrivacyTarget {
    #[arg(long)]
    epsilon: f64,
    /// inv300n, invn2, or explicit=<delta>.
    #[arg(long, default_value = "invn2")]
    delta_mode: String,
    /// Maximum sequence length including EOS.
    #[arg(long, default_value_t = 10)]
    max_length: u32,
}

#[derive(Args, Debug)]
struct ParamsArgs {
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    target: PrivacyTarget,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Dataset dump (JSONL, one user per line).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "single")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, required_unless_present_all = ["threshold", "batch_size"])]
    epsilon: Option<f64>,
    #[arg(long, default_value = "invn2")]
    delta_mode: String,
    #[arg(long, default_value_t = 10)]
    max_length: u32,
    /// Use a raw threshold instead of deriving one (no privacy claim).
    #[arg(long, requires = "batch_size", conflicts_with = "epsilon")]
    threshold: Option<u32>,
    #[arg(long, requires = "threshold", conflicts_with = "epsilon")]
    batch_size: Option<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 25, 50, 100])]
    top_k: Vec<usize>,
    /// Leave per-round logs out of single-run reports.
    #[arg(long)]
    no_round_log: bool,
    /// Print one line per round to standard error.
    #[arg(long)]
    log_rounds: bool,
    /// Write (x, y, ci) plot columns here (batteries only).
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
    /// Also write a frequency/discovery-rate curve with this many bins.
    #[arg(long, requires = "emit_plot_data")]
    curve_bins: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    target: PrivacyTarget,
    #[arg(long)]
    freq_min: f64,
    #[arg(long)]
    freq_max: f64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct MinPopArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    freq: Vec<f64>,
    #[arg(long, default_value_t = 0.9)]
    target_rate: f64,
    #[command(flatten)]
    target: PrivacyTarget,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InputFormat {
    Csv,
    Jsonl,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Csv)]
    format: InputFormat,
    /// Dictionary file, one word per line; matching words are dropped.
    #[arg(long)]
    oov_dict: Option<PathBuf>,
    /// Keep only each user's most frequent word.
    #[arg(long)]
    top1: bool,
    #[arg(long, default_value_t = 10)]
    max_length: u32,
    #[arg(long)]
    keep_case: bool,
    #[arg(long)]
    strip_punctuation: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    fixture: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    words_per_user: usize,
    #[arg(long, default_value_t = 10)]
    max_length: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Errors leaving the process, split by exit code.
enum Failure {
    Validation(String, String),
    Runtime(String, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::OutOfRange(_) => "out_of_range",
            Error::PopulationTooSmall { .. } => "population_too_small",
            Error::AlphabetMismatch { .. } => "alphabet_mismatch",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidInput(_) => "invalid_input",
            Error::UnknownStrategy { .. } => "unknown_strategy",
            Error::Unsatisfiable { .. } => "unsatisfiable",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        };
        if e.is_validation() {
            Failure::Validation(kind.into(), e.to_string())
        } else {
            Failure::Runtime(kind.into(), e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime("io".into(), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime("json".into(), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation("invalid_input".into(), msg.into())
}

type CliResult<T = ()> = Result<T, Failure>;

fn emit(output: Option<&Path>, body: &str) -> CliResult {
    match output {
        Some(path) => std::fs::write(path, body)?,
        None => io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

/// Shortest round-trip decimal, switching to exponent form for tiny values.
fn num(x: f64) -> String {
    serde_json::Value::from(x).to_string()
}

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn params(args: ParamsArgs) -> CliResult {
    let rule = theta_rule(&args.target.delta_mode)?;
    let p = choose_parameters(args.n, args.target.max_length, args.target.epsilon, rule.as_ref())?;
    eprintln!(
        "| n={} | L={} | {} | theta={} | gamma={:.2} |",
        p.n(),
        p.max_length(),
        rule.name(),
        p.theta(),
        p.gamma()
    );
    let body = match args.common.format {
        Format::Json => json(&p)?,
        Format::Csv => format!(
            "n,max_length,delta_mode,theta,gamma,batch_size,epsilon,delta\n{},{},{},{},{},{},{},{}\n",
            p.n(),
            p.max_length(),
            rule.name(),
            p.theta(),
            num(p.gamma()),
            p.batch_size(),
            num(p.epsilon()),
            num(p.delta())
        ),
    };
    emit(args.common.output.as_deref(), &body)
}

fn load_dataset(path: &Path, max_length: u32) -> CliResult<UserDataset> {
    let file = File::open(path)?;
    Ok(UserDataset::read_jsonl(BufReader::new(file), max_length)?)
}

fn simulate(args: SimulateArgs) -> CliResult {
    if args.runs == 0 {
        return Err(invalid("--runs must be at least 1"));
    }
    let selector = selectors().resolve(&args.mode)?;
    let dataset = load_dataset(&args.dataset, args.max_length)?;
    let source = match (args.threshold, args.batch_size, args.epsilon) {
        (Some(threshold), Some(batch_size), _) => ParamSource::Protocol(ProtocolParams {
            threshold,
            batch_size,
            max_length: args.max_length,
        }),
        (_, _, Some(epsilon)) => {
            let rule = theta_rule(&args.delta_mode)?;
            let p = choose_parameters(dataset.len() as u64, args.max_length, epsilon, rule.as_ref())?;
            ParamSource::Privacy(p)
        }
        _ => return Err(invalid("give --epsilon or both --threshold and --batch-size")),
    };
    let seed = args.common.seed;

    if args.runs == 1 {
        let options = RunOptions {
            verbose: !args.no_round_log,
            ..RunOptions::default()
        };
        let mut report = match &source {
            ParamSource::Privacy(p) => run_private(&dataset, p, seed, selector.as_ref(), &options)?,
            ParamSource::Protocol(p) => run(&dataset, *p, seed, selector.as_ref(), &options)?,
            ParamSource::Derive { .. } => unreachable!("resolved above"),
        };
        if args.log_rounds {
            for r in &report.log {
                let added: Vec<&str> = r.added.iter().map(|a| a.prefix.as_str()).collect();
                eprintln!("round {}: added {:?}", r.round, added);
            }
        }
        if args.no_round_log {
            report.log.clear();
        }
        let body = match args.common.format {
            Format::Json => json(&report)?,
            Format::Csv => {
                let mut s = String::from("word\n");
                for w in &report.words {
                    s.push_str(w);
                    s.push('\n');
                }
                s
            }
        };
        return emit(args.common.output.as_deref(), &body);
    }

    let spec = ExperimentSpec {
        params: source,
        runs: args.runs,
        top_k: args.top_k,
        base_seed: seed,
        mode: args.mode,
    };
    let report = run_battery(&spec, &dataset)?;
    if args.log_rounds {
        eprintln!(
            "{} runs in {:.3}s, mean rounds {:.2}",
            report.runs,
            report.elapsed.as_secs_f64(),
            report.rounds.mean
        );
    }
    if let Some(path) = &args.emit_plot_data {
        std::fs::write(path, report.plot_data())?;
        if let Some(bins) = args.curve_bins {
            let freqs: Vec<f64> = dataset.ranked().iter().map(|(_, f)| *f).collect();
            let lo = freqs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = freqs.iter().copied().fold(0.0, f64::max);
            let edges = if hi > lo { log_bins(lo, hi, bins)? } else { vec![lo, lo * 2.0] };
            let rows = discovery_curve_from(&report, &dataset, &edges)?;
            std::fs::write(path.with_extension("curve.csv"), curve_csv(&rows))?;
        }
    }
    let body = match args.common.format {
        Format::Json => json(&report)?,
        Format::Csv => report.to_csv(),
    };
    emit(args.common.output.as_deref(), &body)
}

#[derive(Serialize)]
struct RatePoint {
    frequency: f64,
    occurrences: u64,
    rate: f64,
}

fn analyze_rate(args: AnalyzeArgs) -> CliResult {
    if !(args.freq_min > 0.0 && args.freq_max >= args.freq_min && args.freq_max <= 1.0) {
        return Err(invalid("need 0 < --freq-min <= --freq-max <= 1"));
    }
    if args.bins == 0 {
        return Err(invalid("--bins must be at least 1"));
    }
    let rule = theta_rule(&args.target.delta_mode)?;
    let p = choose_parameters(args.n, args.target.max_length, args.target.epsilon, rule.as_ref())?;
    let steps = args.bins.max(2) - 1;
    let (lo, hi) = (args.freq_min.ln(), args.freq_max.ln());
    let points = (0..=steps)
        .map(|i| {
            let frequency = if args.bins == 1 {
                args.freq_min
            } else {
                (lo + (hi - lo) * i as f64 / steps as f64).exp()
            };
            let occurrences = occurrences_for(frequency, args.n);
            let rate = discovery_rate(&DiscoveryQuery {
                n: args.n,
                batch_size: p.batch_size(),
                theta: p.theta(),
                occurrences,
                length: args.target.max_length,
            })?;
            Ok(RatePoint {
                frequency,
                occurrences,
                rate,
            })
        })
        .take(args.bins)
        .collect::<Result<Vec<_>, Error>>()?;
    let body = match args.common.format {
        Format::Json => json(&points)?,
        Format::Csv => {
            let mut s = String::from("frequency,rate\n");
            for pt in &points {
                s.push_str(&format!("{},{}\n", num(pt.frequency), num(pt.rate)));
            }
            s
        }
    };
    emit(args.common.output.as_deref(), &body)
}

#[derive(Serialize)]
struct MinPopRow {
    frequency: f64,
    n: u64,
    theta: u32,
    batch_size: u64,
    rate: f64,
}

fn min_pop(args: MinPopArgs) -> CliResult {
    let rule = theta_rule(&args.target.delta_mode)?;
    let rows = args
        .freq
        .iter()
        .map(|&f| {
            let r = min_population(f, args.target_rate, args.target.epsilon, args.target.max_length, rule.as_ref())?;
            Ok(MinPopRow {
                frequency: f,
                n: r.n,
                theta: r.params.theta(),
                batch_size: r.params.batch_size(),
                rate: r.rate,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let body = match args.common.format {
        Format::Json => json(&rows)?,
        Format::Csv => {
            let mut s = String::from("frequency,n\n");
            for r in &rows {
                s.push_str(&format!("{},{}\n", num(r.frequency), r.n));
            }
            s
        }
    };
    emit(args.common.output.as_deref(), &body)
}

fn ingest(args: IngestArgs) -> CliResult {
    let mut config = IngestConfig::new(args.max_length);
    config.lowercase = !args.keep_case;
    config.strip_punctuation = args.strip_punctuation;
    if args.top1 {
        config.selection = Selection::Top1;
    }
    if let Some(path) = &args.oov_dict {
        let dict = load_dictionary(path)?;
        if dict.is_empty() {
            return Err(invalid("OOV dictionary is empty"));
        }
        config.dictionary = Some(dict);
    }
    let dataset = match args.format {
        InputFormat::Csv => ingest_csv(&args.input, &config)?,
        InputFormat::Jsonl => ingest_jsonl(&args.input, &config)?,
    };
    emit(args.output.as_deref(), &dataset.to_jsonl())
}

fn gen(args: GenArgs) -> CliResult {
    let fixture = Fixture::from_name(&args.fixture)?;
    let dataset = generate_synthetic(
        &fixture.table(),
        &SyntheticConfig {
            users: args.n,
            words_per_user: args.words_per_user,
            max_length: args.max_length,
            seed: args.seed,
        },
    )?;
    emit(args.output.as_deref(), &dataset.to_jsonl())
}

fn command_json(cmd: &clap::Command) -> serde_json::Value {
    let args: Vec<serde_json::Value> = cmd
        .get_arguments()
        .filter(|a| !a.is_hide_set())
        .map(|a| {
            serde_json::json!({
                "name": a.get_id().as_str(),
                "long": a.get_long(),
                "help": a.get_help().map(|h| h.to_string()),
                "required": a.is_required_set(),
                "default": a.get_default_values().iter().map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>(),
                "values": a.get_possible_values().iter().map(|v| v.get_name().to_owned()).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({
        "name": cmd.get_name(),
        "about": cmd.get_about().map(|s| s.to_string()),
        "args": args,
        "subcommands": cmd.get_subcommands().map(command_json).collect::<Vec<_>>(),
    })
}

fn report_failure(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            report_failure("usage", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    if cli.help_json {
        let tree = command_json(&Cli::command());
        let body = serde_json::to_string_pretty(&tree).expect("command tree serializes") + "\n";
        return match emit(None, &body) {
            Ok(()) => ExitCode::SUCCESS,
            Err(_) => ExitCode::from(2),
        };
    }
    let Some(command) = cli.command else {
        report_failure("usage", "a subcommand is required (see --help)");
        return ExitCode::from(1);
    };
    let result = match command {
        Command::Params(a) => params(a),
        Command::Simulate(a) => simulate(a),
        Command::AnalyzeRate(a) => analyze_rate(a),
        Command::MinPop(a) => min_pop(a),
        Command::Ingest(a) => ingest(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(kind, msg)) => {
            report_failure(&kind, &msg);
            ExitCode::from(1)
        }
        Err(Failure::Runtime(kind, msg)) => {
            report_failure(&kind, &msg);
            ExitCode::from(2)
        }
    }
}
