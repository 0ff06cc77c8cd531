use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use detqkd::adversary::OptimizerConfig;
use detqkd::experiments::{
    comm_experiment, eve_optimize, eve_sweep, guess_report, qkd_experiment, replay_table3, validate_scheme, EvanMode,
    ExperimentError,
};
use detqkd::protocol::QkdConfig;
use detqkd::schemes::{Bit, Scheme, SchemeKind};

#[derive(Parser)]
#[command(name = "detqkd", version, about = "Deterministic two-qubit single-photon cryptography simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a scheme.
    #[command(subcommand)]
    Scheme(SchemeCommand),
    /// Run one key-distribution session.
    Qkd(QkdArgs),
    /// Run direct-communication sessions over the three-one scheme.
    Comm(CommArgs),
    /// Optimize the intercept-resend attack.
    #[command(subcommand)]
    Eve(EveCommand),
    /// Helstrom odds of telling "+" photons from "-" photons.
    Guess(GuessArgs),
}

#[derive(Subcommand)]
enum SchemeCommand {
    /// Run the structural checks; exit 1 if any fails.
    Validate(SchemeArgs),
    /// Print the scheme's states and bases as JSON.
    Dump(SchemeArgs),
}

#[derive(Args)]
struct SchemeArgs {
    /// product, k, k-four or three-one
    #[arg(long, alias = "scheme")]
    name: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    k: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizerArgs {
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl OptimizerArgs {
    fn config(&self) -> OptimizerConfig {
        OptimizerConfig {
            restarts: self.restarts,
            tolerance: self.tol,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct QkdArgs {
    #[arg(long, default_value = "k")]
    scheme: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    k: f64,
    #[arg(long, default_value_t = 1000)]
    key_bits: usize,
    #[arg(long, default_value_t = 100)]
    checks: usize,
    /// Total photons; overrides --key-bits with photons - checks.
    #[arg(long)]
    photons: Option<usize>,
    /// none, optimal or naive
    #[arg(long, default_value = "none")]
    evan: EvanMode,
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long, env = "DETQKD_SEED")]
    seed: Option<u64>,
    /// Write summary and full transcript here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CommArgs {
    /// Message bits as a string of + and -.
    #[arg(long, required_unless_present = "replay_table3", allow_hyphen_values = true)]
    message: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    control_fraction: f64,
    #[arg(long, default_value = "none")]
    evan: EvanMode,
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    #[arg(long, default_value_t = 1)]
    sessions: usize,
    /// Replay the published nine-photon example and compare its rows.
    #[arg(long, conflicts_with_all = ["message", "sessions", "evan"])]
    replay_table3: bool,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long, env = "DETQKD_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EveCommand {
    /// Optimize one scheme and compare with its closed form.
    Optimize(EveOptimizeArgs),
    /// Optimize over a grid of k values.
    Sweep(EveSweepArgs),
}

#[derive(Args)]
struct EveOptimizeArgs {
    #[arg(long, default_value = "k")]
    scheme: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    k: f64,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long, env = "DETQKD_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EveSweepArgs {
    #[arg(long, default_value = "k")]
    scheme: String,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4", allow_negative_numbers = true)]
    ks: Vec<f64>,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long, env = "DETQKD_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GuessArgs {
    #[arg(long, default_value = "k")]
    scheme: String,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    k: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn build_scheme(name: &str, k: f64) -> Result<Scheme, Failure> {
    let kind: SchemeKind = name.parse().map_err(|e: detqkd::schemes::SchemeError| Failure::Usage(e.to_string()))?;
    kind.build(k).map_err(|e| Failure::Usage(e.to_string()))
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    if let Some(p) = path {
        std::fs::write(p, format!("{text}\n"))?;
    }
    Ok(())
}

fn status(passed: bool) -> Result<bool, Failure> {
    Ok(passed)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Scheme(SchemeCommand::Validate(a)) => {
            let report = validate_scheme(&build_scheme(&a.name, a.k)?);
            let text = to_json(&report);
            println!("{text}");
            write_out(a.out.as_deref(), &text)?;
            status(report.passed)
        }
        Command::Scheme(SchemeCommand::Dump(a)) => {
            let text = to_json(&build_scheme(&a.name, a.k)?);
            println!("{text}");
            write_out(a.out.as_deref(), &text)?;
            status(true)
        }
        Command::Qkd(a) => {
            let scheme = build_scheme(&a.scheme, a.k)?;
            let key_bits = match a.photons {
                Some(n) if n <= a.checks => {
                    return Err(Failure::Usage(format!(
                        "--photons {n} leaves no key photons after {} checks",
                        a.checks
                    )))
                }
                Some(n) => n - a.checks,
                None => a.key_bits,
            };
            let config = QkdConfig {
                key_bits,
                check_count: a.checks,
            };
            let seed = resolve_seed(a.seed);
            let run = qkd_experiment(&scheme, &config, a.evan, a.loss, &a.optimizer.config(), seed)?;
            println!("{}", to_json(&run.summary));
            write_out(a.out.as_deref(), &to_json(&run))?;
            status(run.summary.passed)
        }
        Command::Comm(a) => {
            if a.replay_table3 {
                let replay = replay_table3()?;
                for row in &replay.rows {
                    eprintln!(
                        "{:<22} {} {}",
                        row.row,
                        if row.matches { "ok  " } else { "FAIL" },
                        row.observed.join(" ")
                    );
                }
                eprintln!("{:<22} {}", "message_received", replay.message_received);
                println!(
                    "{}",
                    to_json(&serde_json::json!({
                        "rows": replay.rows,
                        "message_expected": replay.message_expected,
                        "message_received": replay.message_received,
                        "passed": replay.passed,
                    }))
                );
                write_out(a.out.as_deref(), &to_json(&replay))?;
                return status(replay.passed);
            }
            let text = a.message.unwrap_or_default();
            let message =
                Bit::parse_string(&text).ok_or_else(|| Failure::Usage(format!("message '{text}' is not a +/- string")))?;
            let seed = resolve_seed(a.seed);
            let run = comm_experiment(
                &message,
                a.control_fraction,
                a.evan,
                a.loss,
                a.sessions,
                &a.optimizer.config(),
                seed,
            )?;
            println!("{}", to_json(&run.summary));
            write_out(a.out.as_deref(), &to_json(&run))?;
            status(run.summary.passed)
        }
        Command::Eve(EveCommand::Optimize(a)) => {
            let scheme = build_scheme(&a.scheme, a.k)?;
            let seed = resolve_seed(a.seed);
            let summary = eve_optimize(&scheme, &a.optimizer.config(), seed)?;
            let text = to_json(&summary);
            println!("{text}");
            write_out(a.out.as_deref(), &text)?;
            status(!summary.flagged)
        }
        Command::Eve(EveCommand::Sweep(a)) => {
            let kind: SchemeKind = a
                .scheme
                .parse()
                .map_err(|e: detqkd::schemes::SchemeError| Failure::Usage(e.to_string()))?;
            let seed = resolve_seed(a.seed);
            let start = Instant::now();
            let report = eve_sweep(kind, &a.ks, &a.optimizer.config(), seed)?;
            eprintln!("wall time {:.2} s", start.elapsed().as_secs_f64());
            for r in report.rows.iter().filter(|r| r.flagged) {
                eprintln!(
                    "flagged: k = {} numeric {:.6} vs closed form {:.6} (|diff| = {:.2e})",
                    r.k, r.p_min_numeric, r.p_min_closed_form, r.abs_difference
                );
            }
            let text = to_json(&report);
            println!("{text}");
            write_out(a.out.as_deref(), &text)?;
            if let Some(p) = &a.csv {
                std::fs::write(p, report.to_csv())?;
            }
            status(report.flagged == 0)
        }
        Command::Guess(a) => {
            let report = guess_report(&build_scheme(&a.scheme, a.k)?);
            let text = to_json(&report);
            println!("{text}");
            write_out(a.out.as_deref(), &text)?;
            status(report.abs_difference.is_none_or(|d| d <= 1e-9))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
