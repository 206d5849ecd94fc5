//! eprsim: simulate EPR-Bohm trial logs under pluggable hidden-variable
//! models and analyze them with frequency-based independence tests, CHSH, and
//! the conditional factorability check.
//!
//! Subcommands: `simulate`, `analyze`, `counterexample`. Reports are JSON;
//! logs are CSV. Every artifact embeds the master seed and a config hash so
//! runs replay exactly.
//!
//! Exit codes: 0 success, 1 violated `--assert-*`, 2 usage or config error,
//! 3 I/O or log-parse error.

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use eprsim_core::bell::{
    chsh, factorability_check, factorability_csv, ChshReport, FactorabilityReport, SettingQuery,
};
use eprsim_core::collective::Collective;
use eprsim_core::epr::{
    extract_collective, freedom_of_choice_check, run_experiment, wing_dependence_demo,
    FreedomOfChoiceReport, ProjField, Projection, TrialLog, WingDependenceReport,
};
use eprsim_core::independence::{
    collective_independence_test, combine, deviation_matrix_csv, event_independence_test,
    joint_builtin_family, CollectiveIndependenceReport, IndependenceReport, IndependenceThresholds,
    Verdict,
};
use eprsim_core::logio::{read_log_csv, write_log_csv, LogIoError};
use eprsim_core::numberplay::find_numberplay_counterexample;
use eprsim_core::selection::{builtin_family, stability_report, StabilityReport};

use config::{ConfigEcho, RunConfig, RunConfigFile};

#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem (exit 2).
    Config(String),
    /// I/O or log-parse problem (exit 3).
    Io(String),
    /// A requested assertion failed (exit 1).
    Assertion(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Assertion(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Assertion(_) => ExitCode::from(1),
            CliError::Config(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(3),
        }
    }
}

impl From<LogIoError> for CliError {
    fn from(e: LogIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "eprsim",
    version,
    about = "EPR-Bohm frequency simulation and Bell-type analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trial log from a model with a reproducible master seed.
    Simulate(SimulateArgs),
    /// Run analyses over a trial log and emit one combined JSON report.
    Analyze(AnalyzeArgs),
    /// Search for a periodic pair sequence that factorizes by accident.
    Counterexample(CounterexampleArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// quantum_singlet | local_deterministic | dependent_collectives | discrete_table
    #[arg(long)]
    model: Option<String>,
    /// Table-model JSON document (discrete_table).
    #[arg(long)]
    model_file: Option<String>,
    /// Left-wing angles, comma-separated, pi notation allowed.
    #[arg(long, value_delimiter = ',')]
    left_angles: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    right_angles: Option<Vec<String>>,
    /// uniform | fixed:<index>
    #[arg(long)]
    left_policy: Option<String>,
    #[arg(long)]
    right_policy: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output stem: writes <out>.csv and <out>.echo.json.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trial log CSV.
    #[arg(long)]
    log: PathBuf,
    /// Config echo of the simulation (defaults to <log stem>.echo.json).
    #[arg(long)]
    echo: Option<PathBuf>,
    /// CHSH settings "a,a',b,b'" (pi notation allowed for angle logs).
    #[arg(long)]
    chsh: Option<String>,
    /// Conditional factorability check over lambda bins.
    #[arg(long)]
    factorability: bool,
    /// Wing dependence through the shared hidden variable.
    #[arg(long)]
    wing_dependence: bool,
    /// Independence of each wing's settings from the hidden variable.
    #[arg(long)]
    freedom_of_choice: bool,
    /// Event + collective independence between two projections,
    /// e.g. "left_outcome:right_outcome".
    #[arg(long)]
    independence: Option<String>,
    /// Frequency stability of a projection under the built-in selections,
    /// e.g. "left_outcome".
    #[arg(long)]
    stability: Option<String>,
    /// Lambda bins for the continuous backend (default: the simulation's
    /// config echo, else 64).
    #[arg(long)]
    bins: Option<usize>,
    /// Minimum conditional count for a factorability cell to be scored
    /// (default: the simulation's config echo, else 100).
    #[arg(long)]
    min_bin_count: Option<u64>,
    /// Re-run the factorability check at each of these bin counts,
    /// e.g. "16,32,64,128".
    #[arg(long, value_delimiter = ',')]
    factorability_sweep: Option<Vec<usize>>,
    /// Minimum subsequence length for selection subtests.
    #[arg(long, default_value_t = 100)]
    min_subsequence: usize,
    #[arg(long, default_value_t = 3.0)]
    dependent_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    independent_sigma: f64,
    #[arg(long, default_value_t = 0.01)]
    dependent_p: f64,
    #[arg(long, default_value_t = 0.05)]
    independent_p: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV export of the --independence deviation matrix.
    #[arg(long)]
    deviations_csv: Option<PathBuf>,
    /// CSV export of per-bin factorability deviations.
    #[arg(long)]
    factorability_csv: Option<PathBuf>,
    /// Exit 1 unless |S| is within this bound.
    #[arg(long)]
    assert_chsh_bound: Option<f64>,
    /// Exit 1 unless the --independence event verdict is independent.
    #[arg(long)]
    assert_independent: bool,
    /// Exit 1 unless the --independence event verdict is dependent.
    #[arg(long)]
    assert_dependent: bool,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long, default_value_t = 2)]
    left_size: usize,
    #[arg(long, default_value_t = 2)]
    right_size: usize,
    #[arg(long, default_value_t = 16)]
    max_period: usize,
    /// Write the witness JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Counterexample(args) => cmd_counterexample(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file_config: RunConfigFile = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config: {e}")))?
        }
        None => RunConfigFile::default(),
    };
    let overrides = RunConfigFile {
        model: args.model,
        model_file: args.model_file,
        left_angles: args.left_angles,
        right_angles: args.right_angles,
        left_policy: args.left_policy,
        right_policy: args.right_policy,
        left_flip_prob: None,
        right_flip_prob: None,
        trials: args.trials,
        seed: args.seed,
        lambda_bins: None,
        min_bin_count: None,
        out: args.out,
    };
    let config = RunConfig::materialize(file_config, overrides)?;
    let (model, left, right) = config.build()?;
    let log = run_experiment(&model, &left, &right, config.trials as usize, config.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let log_path = config.log_path();
    let echo_path = config.echo_path();
    let mut buf = Vec::new();
    write_log_csv(&log, &mut buf)?;
    fs::write(&log_path, &buf)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", log_path.display())))?;

    let echo = ConfigEcho::new(config);
    let echo_json = serde_json::to_string_pretty(&echo).expect("echo serializes");
    fs::write(&echo_path, echo_json.as_bytes())
        .map_err(|e| CliError::Io(format!("writing {}: {e}", echo_path.display())))?;

    println!(
        "{}",
        serde_json::json!({
            "log": log_path,
            "echo": echo_path,
            "trials": log.len(),
            "seed": echo.config.seed,
            "config_hash": echo.config_hash,
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct ReportMeta {
    tool_version: String,
    master_seed: Option<u64>,
    config_echo_hash: Option<String>,
    log_path: String,
    analyze_params: serde_json::Value,
    analyze_params_hash: String,
}

#[derive(Serialize)]
struct IndependenceSection {
    left_fields: Vec<String>,
    right_fields: Vec<String>,
    event: IndependenceReport,
    collective: CollectiveIndependenceReport,
}

#[derive(Serialize)]
struct StabilitySection {
    fields: Vec<String>,
    report: StabilityReport,
}

#[derive(Serialize)]
struct AnalyzeReport {
    meta: ReportMeta,
    #[serde(skip_serializing_if = "Option::is_none")]
    chsh: Option<ChshReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factorability: Option<FactorabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wing_dependence: Option<WingDependenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    freedom_of_choice: Option<FreedomOfChoiceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    independence: Option<IndependenceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stability: Option<StabilitySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factorability_sweep: Option<Vec<FactorabilityReport>>,
}

fn parse_fields(spec: &str, what: &str) -> Result<Vec<ProjField>, CliError> {
    spec.split(',')
        .map(|f| ProjField::parse(f.trim()).map_err(|e| CliError::Config(format!("{what}: {e}"))))
        .collect()
}

fn field_names(fields: &[ProjField]) -> Vec<String> {
    fields
        .iter()
        .map(|f| {
            serde_json::to_value(f)
                .expect("field serializes")
                .as_str()
                .expect("field is a string")
                .to_string()
        })
        .collect()
}

fn extract(log: &TrialLog, fields: &[ProjField], bins: usize) -> Result<Collective, CliError> {
    extract_collective(log, &Projection::new(fields.to_vec(), bins))
        .map_err(|e| CliError::Config(e.to_string()))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.log)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", args.log.display())))?;
    let log = read_log_csv(text.as_bytes())?;

    let echo_path = args
        .echo
        .clone()
        .unwrap_or_else(|| args.log.with_extension("echo.json"));
    let echo = ConfigEcho::load(&echo_path);

    // Flags win, then the simulation's recorded config, then the defaults.
    let bins = args
        .bins
        .or(echo.as_ref().map(|e| e.config.lambda_bins))
        .unwrap_or(config::DEFAULT_LAMBDA_BINS);
    let min_bin_count = args
        .min_bin_count
        .or(echo.as_ref().map(|e| e.config.min_bin_count))
        .unwrap_or(config::DEFAULT_MIN_BIN_COUNT);

    let thresholds = IndependenceThresholds {
        dependent_sigma: args.dependent_sigma,
        independent_sigma: args.independent_sigma,
        dependent_p_below: args.dependent_p,
        independent_p_min: args.independent_p,
    };

    let analyze_params = serde_json::json!({
        "chsh": args.chsh,
        "factorability": args.factorability,
        "wing_dependence": args.wing_dependence,
        "freedom_of_choice": args.freedom_of_choice,
        "independence": args.independence,
        "stability": args.stability,
        "bins": bins,
        "min_bin_count": min_bin_count,
        "factorability_sweep": args.factorability_sweep,
        "min_subsequence": args.min_subsequence,
        "thresholds": thresholds,
    });
    let analyze_params_hash = config::hex(&Sha256::digest(analyze_params.to_string().as_bytes()));

    let mut report = AnalyzeReport {
        meta: ReportMeta {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: echo.as_ref().map(|e| e.config.seed),
            config_echo_hash: echo.as_ref().map(|e| e.config_hash.clone()),
            log_path: args.log.display().to_string(),
            analyze_params,
            analyze_params_hash,
        },
        chsh: None,
        factorability: None,
        wing_dependence: None,
        freedom_of_choice: None,
        independence: None,
        stability: None,
        factorability_sweep: None,
    };

    if let Some(spec) = &args.chsh {
        let tokens: Vec<&str> = spec.split(',').map(str::trim).collect();
        if tokens.len() != 4 {
            return Err(CliError::Config(format!(
                "chsh: expected 4 comma-separated settings (a,a',b,b'), got {}",
                tokens.len()
            )));
        }
        let q = |raw: &str, set| {
            SettingQuery::parse(raw, set).map_err(|e| CliError::Config(format!("chsh: {e}")))
        };
        let a = q(tokens[0], &log.left_settings)?;
        let ap = q(tokens[1], &log.left_settings)?;
        let b = q(tokens[2], &log.right_settings)?;
        let bp = q(tokens[3], &log.right_settings)?;
        report.chsh =
            Some(chsh(&log, &a, &ap, &b, &bp).map_err(|e| CliError::Config(e.to_string()))?);
    }

    if args.factorability {
        let fr = factorability_check(&log, bins, min_bin_count)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(path) = &args.factorability_csv {
            fs::write(path, factorability_csv(&fr))
                .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        }
        report.factorability = Some(fr);
    }

    if let Some(sweep) = &args.factorability_sweep {
        let mut reports = Vec::with_capacity(sweep.len());
        for &k in sweep {
            reports.push(
                factorability_check(&log, k, min_bin_count)
                    .map_err(|e| CliError::Config(e.to_string()))?,
            );
        }
        report.factorability_sweep = Some(reports);
    }

    if args.wing_dependence {
        report.wing_dependence = Some(
            wing_dependence_demo(&log, bins, &thresholds)
                .map_err(|e| CliError::Config(e.to_string()))?,
        );
    }

    if args.freedom_of_choice {
        report.freedom_of_choice = Some(
            freedom_of_choice_check(&log, bins, &thresholds)
                .map_err(|e| CliError::Config(e.to_string()))?,
        );
    }

    if let Some(spec) = &args.independence {
        let (left_spec, right_spec) = spec
            .split_once(':')
            .ok_or_else(|| CliError::Config("independence: expected `<fields>:<fields>`".into()))?;
        let left_fields = parse_fields(left_spec, "independence")?;
        let right_fields = parse_fields(right_spec, "independence")?;
        let c1 = extract(&log, &left_fields, bins)?;
        let c2 = extract(&log, &right_fields, bins)?;
        let cc = combine(&c1, &c2).map_err(|e| CliError::Config(e.to_string()))?;
        let event = event_independence_test(&cc, &thresholds)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(path) = &args.deviations_csv {
            fs::write(path, deviation_matrix_csv(&event))
                .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        }
        let family = joint_builtin_family(&cc);
        let collective =
            collective_independence_test(&cc, &family, args.min_subsequence, &thresholds)
                .map_err(|e| CliError::Config(e.to_string()))?;
        report.independence = Some(IndependenceSection {
            left_fields: field_names(&left_fields),
            right_fields: field_names(&right_fields),
            event,
            collective,
        });
    }

    if let Some(spec) = &args.stability {
        let fields = parse_fields(spec, "stability")?;
        let c = extract(&log, &fields, bins)?;
        let family = builtin_family(c.alphabet());
        let sr = stability_report(&c, &family, args.min_subsequence)
            .map_err(|e| CliError::Config(e.to_string()))?;
        report.stability = Some(StabilitySection {
            fields: field_names(&fields),
            report: sr,
        });
    }

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => fs::write(path, json.as_bytes())
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?,
        None => println!("{json}"),
    }

    if let Some(bound) = args.assert_chsh_bound {
        let s = report
            .chsh
            .as_ref()
            .ok_or_else(|| CliError::Config("assert-chsh-bound requires --chsh".into()))?
            .s;
        if s.abs() > bound {
            return Err(CliError::Assertion(format!(
                "|S| = {} exceeds the asserted bound {bound}",
                s.abs()
            )));
        }
    }
    if args.assert_independent || args.assert_dependent {
        let verdict = report
            .independence
            .as_ref()
            .ok_or_else(|| {
                CliError::Config("assert-independent/dependent requires --independence".into())
            })?
            .event
            .verdict;
        if args.assert_independent && verdict != Verdict::Independent {
            return Err(CliError::Assertion(format!(
                "independence verdict is {verdict:?}, asserted independent"
            )));
        }
        if args.assert_dependent && verdict != Verdict::Dependent {
            return Err(CliError::Assertion(format!(
                "independence verdict is {verdict:?}, asserted dependent"
            )));
        }
    }
    Ok(())
}

fn cmd_counterexample(args: CounterexampleArgs) -> Result<(), CliError> {
    let witness = find_numberplay_counterexample(args.left_size, args.right_size, args.max_period)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if witness.is_none() {
        eprintln!(
            "none: no witness within period {} for {}x{} alphabets",
            args.max_period, args.left_size, args.right_size
        );
    }
    let doc = serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "left_size": args.left_size,
        "right_size": args.right_size,
        "max_period": args.max_period,
        "witness": witness,
    });
    let json = serde_json::to_string_pretty(&doc).expect("witness serializes");
    match &args.out {
        Some(path) => fs::write(path, json.as_bytes())
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    Ok(())
}

/// Resolve the sibling echo path of a log file. Kept for tests.
#[allow(dead_code)]
fn sibling_echo(log: &Path) -> PathBuf {
    log.with_extension("echo.json")
}
