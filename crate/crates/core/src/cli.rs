//! Command-line front end. Exit statuses: 0 success, 1 runtime failure,
//! 2 usage or configuration error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::evaluation::{self, UtilityOptions};
use crate::grammar::{parse_spec, Generator, RowLayout, Spec, DEFAULT_DEPTH_BUDGET};
use crate::pipeline::{self, OutputLock, PipelineConfig, PipelineError, RawConfig, RunOutcome};
use crate::rng;
use crate::tabular::{self, Schema, TabularError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Attempts allowed per emitted row before `fuzz` gives up.
pub const FUZZ_RETRY_CAP: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "tabfuzz", version, about = "Grammar-based synthetic tabular data")]
pub struct Cli {
    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full synthesis pipeline.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Override a config entry, e.g. `--set rounds=1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Score an existing synthetic dataset against the original.
    Evaluate {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Print grammar-random rows that satisfy the static constraints.
    Fuzz {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Summarize a finished run and write a plot-ready collection curve.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

/// A failure carrying its exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure { code: EXIT_USAGE, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = if e.is_config_error() { EXIT_USAGE } else { EXIT_RUNTIME };
        Failure { code, message: e.to_string() }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status. Output goes to the given writers.
pub fn run_with<I, T>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    init_logging(cli.verbose);
    match execute(&cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

pub fn execute(command: &Command, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    match command {
        Command::Synth { config, set } => synth(config, set, out),
        Command::Evaluate { original, synthetic, config } => evaluate(original, synthetic, config, out),
        Command::Fuzz { spec, count, seed } => fuzz(spec, *count, *seed, out),
        Command::Report { run } => report(run, out),
    }
}

fn load_config(path: &Path, overrides: &[String]) -> Result<PipelineConfig, Failure> {
    let mut raw = RawConfig::load(path).map_err(Failure::usage)?;
    for o in overrides {
        raw.apply_override(o).map_err(Failure::usage)?;
    }
    raw.build().map_err(Failure::usage)
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(Failure::runtime)
}

/// Runs the pipeline for a config file plus `key=value` overrides.
pub fn synth_run(config: &Path, overrides: &[String]) -> Result<RunOutcome, Failure> {
    Ok(pipeline::run(load_config(config, overrides)?)?)
}

fn synth(config: &Path, overrides: &[String], out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let outcome = synth_run(config, overrides)?;
    emit(
        out,
        &format!(
            "wrote {} synthetic rows ({} good samples collected) to {}\n",
            outcome.synthetic.len(),
            outcome.state.good.len(),
            outcome.out.display()
        ),
    )
}

fn evaluate(original: &Path, synthetic: &Path, config: &Path, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let text = evaluate_files(original, synthetic, config)?;
    emit(out, &text)
}

/// Scores `synthetic` against `original` under the config's schema and task,
/// writes `report.txt` and `report.csv` to the config's output directory and
/// returns the text report. Both files are preprocessed first.
pub fn evaluate_files(original: &Path, synthetic: &Path, config: &Path) -> Result<String, Failure> {
    let config = load_config(config, &[])?;
    let spec_text = fs::read_to_string(&config.spec).map_err(|e| Failure::usage(format!("{}: {e}", config.spec.display())))?;
    let spec = parse_spec(&spec_text).map_err(|e| Failure::usage(format!("{}: {e}", config.spec.display())))?;
    let layout = RowLayout::from_grammar(&spec.grammar).map_err(Failure::usage)?;
    let schema = Arc::new(Schema::from_layout(&layout).with_target(&config.task_column).map_err(Failure::usage)?);
    let load = |path: &Path| -> Result<tabular::Dataset, Failure> {
        let raw = tabular::load_csv(path, Arc::clone(&schema)).map_err(|e| tabular_failure(path, e))?;
        tabular::preprocess(&raw).map_err(|e| tabular_failure(path, e))
    };
    let original = load(original)?;
    let synthetic = load(synthetic)?;
    if synthetic.is_empty() || original.is_empty() {
        return Err(Failure::runtime("no usable rows to evaluate"));
    }
    let opts = UtilityOptions { task_kind: config.task_kind, forest_trees: config.forest_trees, seed: config.seed };
    let res = evaluation::resemblance(&original, &synthetic).map_err(Failure::runtime)?;
    let util = evaluation::utility_matrix(&original, &synthetic, &opts).map_err(Failure::runtime)?;
    let privacy = evaluation::privacy_audit(&original, &synthetic);
    let text = evaluation::render_report(&res, &util, &privacy);
    let _lock = OutputLock::acquire(&config.out)?;
    let write = |name: &str, body: &str| {
        tabular::write_atomic(&config.out.join(name), body.as_bytes()).map_err(Failure::runtime)
    };
    write("report.txt", &text)?;
    write("report.csv", &evaluation::render_report_csv(&res, &util, &privacy))?;
    Ok(text)
}

fn tabular_failure(path: &Path, e: TabularError) -> Failure {
    let message = format!("{}: {e}", path.display());
    match e {
        TabularError::Io { .. } | TabularError::TooSmall(_) => Failure::runtime(message),
        _ => Failure::usage(message),
    }
}

fn fuzz(spec_path: &Path, count: usize, seed: u64, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let text = fs::read_to_string(spec_path).map_err(|e| Failure::usage(format!("{}: {e}", spec_path.display())))?;
    let spec = parse_spec(&text).map_err(|e| Failure::usage(format!("{}: {e}", spec_path.display())))?;
    let csv = fuzz_csv(&spec, count, seed)?;
    emit(out, &csv)
}

/// `count` grammar-random rows satisfying the static constraints, as CSV
/// with a header. Each row gets [`FUZZ_RETRY_CAP`] attempts.
pub fn fuzz_csv(spec: &Spec, count: usize, seed: u64) -> Result<String, Failure> {
    let layout = Arc::new(RowLayout::from_grammar(&spec.grammar).map_err(Failure::usage)?);
    let generator = Generator::new(&spec.grammar);
    let mut r = rng::seeded(seed);
    let mut csv = layout.names.join(",");
    csv.push('\n');
    // rejection counts keyed by constraint index
    let mut rejected: BTreeMap<usize, usize> = BTreeMap::new();
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..FUZZ_RETRY_CAP {
            let tree = generator.generate(&layout.row_symbol, DEFAULT_DEPTH_BUDGET, &mut r).map_err(Failure::runtime)?;
            let Ok(row) = layout.tree_to_row(&tree) else { continue };
            match spec.constraints.iter().position(|c| !c.eval(&row).unwrap_or(false)) {
                None => {
                    accepted = Some(layout.cell_texts(&tree));
                    break;
                }
                Some(i) => *rejected.entry(i).or_default() += 1,
            }
        }
        let Some(line) = accepted else {
            let (worst, n) = rejected.iter().max_by_key(|(_, n)| **n).map(|(i, n)| (*i, *n)).unwrap_or((0, 0));
            let name = spec.constraints.get(worst).map_or_else(|| "row layout".to_string(), |c| format!("`{c}`"));
            return Err(Failure::runtime(format!(
                "no row satisfied the constraints after {FUZZ_RETRY_CAP} attempts; constraint {name} rejected {n} candidates"
            )));
        };
        csv.push_str(&line);
        csv.push('\n');
    }
    Ok(csv)
}

/// One parsed `run_log.csv` line.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub round: usize,
    pub iteration: usize,
    pub new_good: usize,
    pub cumulative_good: usize,
}

pub fn parse_run_log(text: &str) -> Result<Vec<CurvePoint>, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    let expected = ["round", "iteration", "new_good", "cumulative_good", "fool_rate"];
    if header.iter().ne(expected) {
        return Err(format!("unexpected header: {}", header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut points: Vec<CurvePoint> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = i + 2;
        let field = |k: usize| -> Result<usize, String> {
            rec.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| format!("line {line}: bad {}", expected[k]))
        };
        rec.get(4).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| format!("line {line}: bad fool_rate"))?;
        let point = CurvePoint { round: field(0)?, iteration: field(1)?, new_good: field(2)?, cumulative_good: field(3)? };
        if let Some(prev) = points.last() {
            if point.cumulative_good < prev.cumulative_good {
                return Err(format!("line {line}: cumulative_good decreases ({} after {})", point.cumulative_good, prev.cumulative_good));
            }
            if point.round < prev.round || point.iteration <= prev.iteration {
                return Err(format!("line {line}: round or iteration goes backwards"));
            }
        }
        points.push(point);
    }
    Ok(points)
}

/// Plot-ready curve: `boundary` is 1 on the first iteration run against a
/// newly trained discriminator.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("iteration,cumulative_good,round,boundary\n");
    for (i, p) in points.iter().enumerate() {
        let boundary = i > 0 && points[i - 1].round != p.round;
        let _ = writeln!(s, "{},{},{},{}", p.iteration, p.cumulative_good, p.round, u8::from(boundary));
    }
    s
}

fn report(run: &Path, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let log_path = run.join("run_log.csv");
    let text = fs::read_to_string(&log_path).map_err(|e| Failure::runtime(format!("{}: {e}", log_path.display())))?;
    let points = parse_run_log(&text).map_err(|e| Failure::runtime(format!("{}: {e}", log_path.display())))?;
    let curve = curve_csv(&points);
    let curve_path = run.join("curve.csv");
    tabular::write_atomic(&curve_path, curve.as_bytes()).map_err(Failure::runtime)?;

    let mut s = String::new();
    let boundaries = curve.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    let total = points.last().map_or(0, |p| p.cumulative_good);
    let _ = writeln!(s, "iterations: {}", points.len());
    let _ = writeln!(s, "good samples: {total}");
    let _ = writeln!(s, "round boundaries: {boundaries}");
    let rounds_path = run.join("rounds.csv");
    if let Ok(rounds) = fs::read_to_string(&rounds_path) {
        let mut reader = csv::Reader::from_reader(rounds.as_bytes());
        for rec in reader.records() {
            let rec = rec.map_err(|e| Failure::runtime(format!("{}: {e}", rounds_path.display())))?;
            let get = |k: usize| rec.get(k).unwrap_or("?");
            let _ = writeln!(
                s,
                "round {}: discriminator accuracy {}, {} iterations, {} new good samples, stopped by {}",
                get(0),
                get(1),
                get(2),
                get(3),
                get(4)
            );
        }
    }
    let _ = writeln!(s, "curve: {}", curve_path.display());
    emit(out, &s)
}
