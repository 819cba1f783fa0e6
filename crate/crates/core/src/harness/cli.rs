//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when the inputs are invalid (bad flags,
//! scenario or coalition), 2 when a protocol or numerical step fails.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::harness::generate::{random_scenario, Shape};
use crate::harness::metrics::{Role, RunMetrics};
use crate::harness::report::{self, fmt_sig};
use crate::harness::scenario::{load_scenario, parse_scenario, DataSource, Scenario, Seeds};
use crate::harness::trajectory::write_trajectory;
use crate::privacy::attack::{attack_query_coalition, check_theorem_conditions, AttackError};
use crate::privacy::coalition::CoalitionSpec;
use crate::protocol1::run_protocol1;
use crate::protocol2::run_protocol2;
use crate::run::{prepare_data, ProtocolError, ProtocolKind, RunResult};

#[derive(Debug, Parser)]
#[command(name = "phekf", version, about = "Encrypted multi-party Kalman filtering and coalition attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run Protocol 1 (flat sensors, encrypted fusion).
    Run1(RunArgs),
    /// Run Protocol 2 (sensor groups, encrypted diffusion).
    Run2(RunArgs),
    /// Attack a saved run with a coalition.
    Attack(AttackArgs),
    /// Time both protocols over a sweep of key sizes.
    Bench(BenchArgs),
    /// Write a synthetic scenario and its measurement CSV.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file; the built-in demo when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    /// Base seed for plant noise, keys and simulation.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    key_bits: Option<u64>,
    /// Skip the per-step re-encryption of the estimate (Protocol 1 only).
    #[arg(long)]
    literal_paper_mode: bool,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// `run.json` written by run1 or run2.
    #[arg(long)]
    run: PathBuf,
    /// For example `kind=query,members=1,2` (members count from 1).
    #[arg(long)]
    coalition: String,
    /// Step to attack; the last step when omitted.
    #[arg(long)]
    step: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated key sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [512u64, 1024, 2048])]
    key_bits: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long, default_value_t = 6)]
    sensors: usize,
    #[arg(long, default_value_t = 3)]
    groups: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Random model instead of the constant-velocity demo.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    sensors: usize,
    /// Put the sensors into this many groups.
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    key_bits: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn invalid(message: impl fmt::Display) -> CliError {
    CliError {
        code: 1,
        message: message.to_string(),
    }
}

fn failed(message: impl fmt::Display) -> CliError {
    CliError {
        code: 2,
        message: message.to_string(),
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        if e.is_validation() {
            invalid(e)
        } else {
            failed(e)
        }
    }
}

fn write_failed(e: std::io::Error) -> CliError {
    failed(format!("cannot write output: {e}"))
}

/// `scenarios/demo.toml`, built into the binary.
pub const DEMO_SCENARIO: &str = include_str!("../../scenarios/demo.toml");

/// Six-state constant-velocity target seen by four position sensors in two groups.
pub fn demo_scenario() -> Scenario {
    parse_scenario(DEMO_SCENARIO).expect("the bundled demo scenario is valid")
}

/// Parses `argv` (program name first), runs the command, and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Run1(args) => run(ProtocolKind::One, args),
        Command::Run2(args) => run(ProtocolKind::Two, args),
        Command::Attack(args) => attack(args),
        Command::Bench(args) => bench(args),
        Command::Gen(args) => generate(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn scenario_for(args: &RunArgs) -> Result<Scenario, CliError> {
    let mut s = match &args.scenario {
        Some(path) => load_scenario(path).map_err(invalid)?,
        None => demo_scenario(),
    };
    if let Some(steps) = args.steps {
        if steps == 0 {
            return Err(invalid("--steps must be at least 1"));
        }
        s.steps = steps;
    }
    if let Some(seed) = args.seed {
        s.seeds = Seeds::from_base(seed);
    }
    if let Some(bits) = args.key_bits {
        if bits < crate::phe::MIN_KEY_BITS {
            return Err(invalid(format!("--key-bits must be at least {}", crate::phe::MIN_KEY_BITS)));
        }
        s.key_bits = bits;
    }
    if args.literal_paper_mode {
        s.options.refresh = false;
    }
    Ok(s)
}

fn execute(protocol: ProtocolKind, s: &Scenario) -> Result<RunResult, CliError> {
    Ok(match protocol {
        ProtocolKind::One => run_protocol1(s)?,
        ProtocolKind::Two => run_protocol2(s)?,
    })
}

fn run(protocol: ProtocolKind, args: RunArgs) -> Result<(), CliError> {
    let s = scenario_for(&args)?;
    let result = execute(protocol, &s)?;
    let metrics = RunMetrics::compute(&result);
    report::emit_reports(&result, &metrics, &args.out_dir).map_err(write_failed)?;
    report::write_run_artifacts(&result, &args.out_dir).map_err(write_failed)?;
    println!(
        "{protocol}: {} steps on `{}`, max deviation from plaintext filter {}",
        result.steps(),
        s.name,
        fmt_sig(metrics.reference_deviation)
    );
    if let Some(rms) = &metrics.rms {
        println!("rms error per axis: {}", rms.iter().map(|&v| format!("{v:.3e}")).collect::<Vec<_>>().join(" "));
    }
    println!("reports in {}", args.out_dir.display());
    Ok(())
}

fn attack(args: AttackArgs) -> Result<(), CliError> {
    let result = report::read_run(&args.run).map_err(invalid)?;
    let coalition = CoalitionSpec::parse(&args.coalition).map_err(invalid)?;
    let step = args.step.unwrap_or(result.steps());
    let predicted = check_theorem_conditions(&result.scenario, result.protocol, &coalition);
    std::fs::create_dir_all(&args.out_dir).map_err(write_failed)?;
    let (text, csv) = match attack_query_coalition(&result, &coalition, step) {
        Ok(r) => {
            let mut text = r.to_text();
            text.push_str(&format!("predicted: {predicted}\n"));
            (text, Some(r.to_csv()))
        }
        Err(AttackError::Inapplicable(why)) => (
            format!("{} attack, coalition {coalition}, step {step}\ninapplicable: {why}\npredicted: {predicted}\n", result.protocol),
            None,
        ),
        Err(e @ (AttackError::Inconsistent { .. } | AttackError::Linalg(_) | AttackError::Kalman(_))) => {
            return Err(failed(e))
        }
        Err(e) => return Err(invalid(e)),
    };
    let text_path = args.out_dir.join("attack.txt");
    std::fs::write(&text_path, &text).map_err(write_failed)?;
    if let Some(csv) = csv {
        std::fs::write(args.out_dir.join("attack.csv"), csv).map_err(write_failed)?;
    }
    print!("{text}");
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), CliError> {
    if args.groups == 0 || args.groups > args.sensors || args.steps == 0 {
        return Err(invalid("bench needs 1 <= groups <= sensors and at least one step"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let record = |w: &mut csv::Writer<Vec<u8>>, row: &[String]| w.write_record(row).map_err(|e| failed(e.to_string()));
    record(
        &mut w,
        &["key_bits", "protocol", "sensor_ms", "aggregator_ms", "query_ms", "messages", "bytes"].map(String::from),
    )?;
    println!("{:>8} {:>10} {:>12} {:>13} {:>9}", "key bits", "protocol", "sensor ms", "aggregator ms", "query ms");
    for &bits in &args.key_bits {
        if bits < crate::phe::MIN_KEY_BITS {
            return Err(invalid(format!("key size {bits} is below {}", crate::phe::MIN_KEY_BITS)));
        }
        let s = random_scenario(
            Shape {
                n: 6,
                p: 3,
                sensors: args.sensors,
                groups: Some(args.groups),
                steps: args.steps,
                key_bits: bits,
            },
            args.seed,
        );
        for protocol in [ProtocolKind::One, ProtocolKind::Two] {
            let m = RunMetrics::compute(&execute(protocol, &s)?);
            let (sensor, agg, query) = (m.role(Role::Sensor), m.role(Role::Aggregator), m.role(Role::Query));
            println!("{bits:>8} {:>10} {sensor:>12.3} {agg:>13.3} {query:>9.3}", protocol.to_string());
            record(
                &mut w,
                &[
                    bits.to_string(),
                    protocol.to_string(),
                    format!("{sensor:.4}"),
                    format!("{agg:.4}"),
                    format!("{query:.4}"),
                    m.messages.to_string(),
                    m.bytes.to_string(),
                ],
            )?;
        }
    }
    std::fs::create_dir_all(&args.out_dir).map_err(write_failed)?;
    let csv = w.into_inner().map_err(|e| failed(e.to_string()))?;
    std::fs::write(args.out_dir.join("bench.csv"), csv).map_err(write_failed)?;
    Ok(())
}

fn generate(args: GenArgs) -> Result<(), CliError> {
    if args.steps == 0 {
        return Err(invalid("--steps must be at least 1"));
    }
    if args.groups.is_some_and(|g| g == 0 || g > args.sensors) {
        return Err(invalid("--groups must be between 1 and the number of sensors"));
    }
    let key_bits = args.key_bits.unwrap_or(crate::phe::DEFAULT_KEY_BITS);
    let mut s = if args.random {
        random_scenario(
            Shape {
                n: 6,
                p: 3,
                sensors: args.sensors,
                groups: args.groups,
                steps: args.steps,
                key_bits,
            },
            args.seed,
        )
    } else {
        let mut s = Scenario::constant_velocity(args.sensors, args.groups, args.steps, key_bits);
        s.seeds = Seeds::from_base(args.seed);
        s
    };
    // One extra row gives Protocol 2's last prediction a true state.
    let traj = prepare_data(&Scenario {
        steps: s.steps + 1,
        ..s.clone()
    })
    .map_err(CliError::from)?;
    std::fs::create_dir_all(&args.out_dir).map_err(write_failed)?;
    let csv_path = args.out_dir.join("measurements.csv");
    let file = std::fs::File::create(&csv_path).map_err(write_failed)?;
    write_trajectory(file, &traj, dt_of(&s)).map_err(write_failed)?;
    s.data = DataSource::Csv(PathBuf::from("measurements.csv"));
    let scenario_path = args.out_dir.join("scenario.toml");
    std::fs::write(&scenario_path, s.to_toml()).map_err(write_failed)?;
    println!("wrote {} and {}", scenario_path.display(), csv_path.display());
    Ok(())
}

/// Sample spacing written to the CSV; the constant-velocity model's `dt` when recognisable.
fn dt_of(s: &Scenario) -> f64 {
    let f = &s.model.f;
    if f.nrows() == 6 && f[(0, 3)] > 0.0 && f[(0, 0)] == 1.0 {
        f[(0, 3)]
    } else {
        1.0
    }
}
