//! The `higgs-torus` command line.
//!
//! Exit codes: 0 success or affirmative verdict, 1 negative verdict, 2 usage
//! or format error, 3 numerical failure. Reports go to stdout (or `-o`), the
//! one-line summary to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::levi::{centralizer_basis, inductive_reduction};
use crate::linalg::Tolerances;
use crate::model::{
    apply_trivialization_change, conjugate_datum, gen_negative, gen_planted_with, io, Conjugation, HiggsDatum,
    NegativeKind, PlantedConfig,
};
use crate::polystability::{check_polystable_seeded, joint_spectrum, Verdict, DEFAULT_SPLIT_SEED};
use crate::yang_mills::{
    apply_gauge, construct_ym_metric_seeded, flow_solve, parse_metric, serialize_metric, ym_residual, FlowOptions,
    FlowVerdict,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Maps an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        e if e.is_numerical() => EXIT_NUMERICAL,
        Error::Precondition(_) => EXIT_NEGATIVE,
        _ => EXIT_USAGE,
    }
}

#[derive(Parser, Debug)]
#[command(name = "higgs-torus", version, about = "Polystability and Yang–Mills metrics for constant Higgs data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Relative commutator threshold.
    #[arg(long, default_value_t = 1e-9)]
    tau_commute: f64,
    /// Relative singular-value cutoff.
    #[arg(long, default_value_t = 1e-10)]
    tau_rank: f64,
    /// Relative eigenvalue clustering radius.
    #[arg(long, default_value_t = 1e-7)]
    tau_cluster: f64,
    /// Ceiling on metric and eigenbasis condition numbers.
    #[arg(long, default_value_t = 1e8)]
    kappa_max: f64,
    /// Seed for randomized steps; falls back to HIGGS_SEED.
    #[arg(long, env = "HIGGS_SEED")]
    seed: Option<u64>,
    /// Write the report to this file instead of stdout.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    /// Emit the report on stdout as JSON rather than text.
    #[arg(long)]
    json: bool,
}

impl Common {
    fn tolerances(&self) -> Result<Tolerances, Error> {
        let tol = Tolerances {
            tau_commute: self.tau_commute,
            tau_rank: self.tau_rank,
            tau_cluster: self.tau_cluster,
            kappa_max: self.kappa_max,
        };
        tol.check()?;
        Ok(tol)
    }

    fn split_seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SPLIT_SEED)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
#[value(rename_all = "snake_case")]
enum GenKind {
    Planted,
    Nilpotent,
    Noncommuting,
    NonsemisimpleMixed,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a planted polystable datum or a negative fixture.
    Gen {
        /// What to generate.
        #[arg(long, value_enum, default_value = "planted")]
        kind: GenKind,
        /// Number of Higgs components.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Block sizes for planted data, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "3,2")]
        sizes: Vec<usize>,
        /// Matrix size for negative fixtures.
        #[arg(long, default_value_t = 3)]
        size: usize,
        /// Largest condition number of planted conjugators (1 for none).
        #[arg(long, default_value_t = crate::model::DEFAULT_CONJUGATOR_CONDITION)]
        conjugator_condition: f64,
        /// Where to write the planted truth file.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check a datum file against every structural invariant.
    Validate {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decide polystability of one or more datum files.
    Check {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Worker threads across input files.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Joint spectrum of every block.
    Spectrum {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Centralizer dimension and Levi type of every block.
    Levi {
        input: PathBuf,
        /// Include the centralizer basis in the report.
        #[arg(long)]
        basis: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Find a Yang–Mills metric by gradient flow, or construct it directly.
    Solve {
        input: PathBuf,
        /// Construct the metric from a reduction frame instead of running the flow.
        #[arg(long)]
        direct: bool,
        /// Also write the metric to this file.
        #[arg(long)]
        metric_out: Option<PathBuf>,
        /// Starting metric for the flow; identity when absent.
        #[arg(long)]
        initial: Option<PathBuf>,
        /// Flow step budget.
        #[arg(long, default_value_t = 50_000)]
        steps: usize,
        /// Initial flow step; defaults to 0.05 / scale².
        #[arg(long)]
        lr: Option<f64>,
        /// Keep every k-th residual in the reported history.
        #[arg(long, default_value_t = 1)]
        history_every: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Verify the Yang–Mills and Einstein–Hermitian equations for a metric.
    Verify {
        input: PathBuf,
        metric: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Apply a gauge transformation to a datum and optionally a metric.
    Gauge {
        input: PathBuf,
        /// Gauge file with one invertible matrix per block.
        #[arg(long)]
        gauge: PathBuf,
        /// Metric to transform along with the datum.
        #[arg(long)]
        metric: Option<PathBuf>,
        /// Where to write the transformed metric.
        #[arg(long, requires = "metric")]
        metric_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Change the trivialization of the cotangent bundle.
    Trivialize {
        input: PathBuf,
        /// Trivialization file holding the d x d change matrix.
        #[arg(long)]
        matrix: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gen { common, .. }
            | Command::Validate { common, .. }
            | Command::Check { common, .. }
            | Command::Spectrum { common, .. }
            | Command::Levi { common, .. }
            | Command::Solve { common, .. }
            | Command::Verify { common, .. }
            | Command::Gauge { common, .. }
            | Command::Trivialize { common, .. } => common,
        }
    }

    /// Commands whose report is a data file, always written as JSON.
    fn emits_data(&self) -> bool {
        matches!(self, Command::Gen { .. } | Command::Gauge { .. } | Command::Trivialize { .. })
    }
}

/// Result of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub report_path: Option<PathBuf>,
    pub summary: String,
}

struct Report {
    exit_code: i32,
    summary: String,
    body: Vec<u8>,
    value: Value,
}

impl Report {
    fn new<T: Serialize>(exit_code: i32, summary: impl Into<String>, body: &T) -> Self {
        Self {
            exit_code,
            summary: summary.into(),
            body: io::to_json(body),
            value: serde_json::to_value(body).unwrap_or(Value::Null),
        }
    }
}

type Outcome = Result<Report, Error>;

fn read(path: &Path) -> Result<Vec<u8>, Error> {
    std::fs::read(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    std::fs::write(path, bytes).map_err(Error::Io)
}

fn load_datum(path: &Path, tol: &Tolerances) -> Result<HiggsDatum, Error> {
    io::parse(&read(path)?, tol)
}

fn list<T: std::fmt::Display>(items: &[T]) -> String {
    let parts: Vec<String> = items.iter().map(ToString::to_string).collect();
    format!("[{}]", parts.join(","))
}

fn cmd_gen(
    kind: GenKind,
    dim: usize,
    sizes: &[usize],
    size: usize,
    conjugator_condition: f64,
    truth: Option<&Path>,
    common: &Common,
) -> Outcome {
    let seed = common.seed.unwrap_or(0);
    match kind {
        GenKind::Planted => {
            let conjugation = if conjugator_condition <= 1.0 {
                Conjugation::Identity
            } else {
                Conjugation::Random { max_condition: conjugator_condition }
            };
            let cfg = PlantedConfig { conjugation, ..PlantedConfig::new(dim, sizes, seed) };
            let (datum, planted) = gen_planted_with(&cfg)?;
            if let Some(path) = truth {
                write(path, &io::to_json(&planted))?;
            }
            Ok(Report::new(EXIT_OK, format!("planted; blocks={}; sizes={}; seed={seed}", sizes.len(), list(sizes)), &datum))
        }
        other => {
            let kind = match other {
                GenKind::Nilpotent => NegativeKind::Nilpotent,
                GenKind::Noncommuting => NegativeKind::Noncommuting,
                _ => NegativeKind::NonsemisimpleMixed,
            };
            let datum = gen_negative(kind, size, dim, seed)?;
            Ok(Report::new(EXIT_OK, format!("{}; size={size}; seed={seed}", kind.as_str()), &datum))
        }
    }
}

fn cmd_validate(input: &Path, common: &Common) -> Outcome {
    let tol = common.tolerances()?;
    let datum: HiggsDatum = io::from_json(&read(input)?)?;
    let report = datum.validate(&tol);
    let code = if report.is_ok() { EXIT_OK } else { EXIT_USAGE };
    let summary = if report.is_ok() { "valid".to_string() } else { format!("invalid: {report}") };
    Ok(Report::new(code, summary, &json!({ "valid": report.is_ok(), "violations": report.violations })))
}

fn check_one(input: &Path, tol: &Tolerances, seed: u64) -> Outcome {
    let datum = load_datum(input, tol)?;
    let report = check_polystable_seeded(&datum, tol, seed)?;
    let summary = match report.levi_type() {
        Some(levi) => format!("polystable; blocks={}; levi={}", datum.blocks.len(), list(&levi)),
        None => report.verdict.as_str().to_string(),
    };
    let code = if report.verdict == Verdict::Polystable { EXIT_OK } else { EXIT_NEGATIVE };
    Ok(Report::new(code, summary, &report))
}

fn cmd_check(inputs: &[PathBuf], parallel: usize, common: &Common) -> Outcome {
    let tol = common.tolerances()?;
    let base = common.split_seed();
    if inputs.len() == 1 {
        return check_one(&inputs[0], &tol, base);
    }
    let workers = parallel.clamp(1, inputs.len());
    let mut results: Vec<Option<Outcome>> = (0..inputs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = inputs.len().div_ceil(workers);
        for (slots, (offset, files)) in results.chunks_mut(chunk).zip(inputs.chunks(chunk).enumerate()) {
            let tol = &tol;
            scope.spawn(move || {
                for (k, (slot, file)) in slots.iter_mut().zip(files).enumerate() {
                    let index = (offset * chunk + k) as u64;
                    *slot = Some(check_one(file, tol, base.wrapping_add(index)));
                }
            });
        }
    });
    let mut entries = Vec::with_capacity(inputs.len());
    let mut worst = EXIT_OK;
    let mut polystable = 0;
    for (input, outcome) in inputs.iter().zip(results) {
        let name = input.display().to_string();
        match outcome.expect("every slot is filled") {
            Ok(r) => {
                worst = worst.max(r.exit_code);
                polystable += usize::from(r.exit_code == EXIT_OK);
                entries.push(json!({ "input": name, "exit_code": r.exit_code, "summary": r.summary, "report": r.value }));
            }
            Err(e) => {
                let code = exit_code(&e);
                worst = worst.max(code);
                entries.push(json!({ "input": name, "exit_code": code, "error": e.to_string() }));
            }
        }
    }
    let summary = format!("{polystable}/{} polystable", inputs.len());
    Ok(Report::new(worst, summary, &json!({ "results": entries })))
}

fn cmd_spectrum(input: &Path, common: &Common) -> Outcome {
    let tol = common.tolerances()?;
    let datum = load_datum(input, &tol)?;
    let seed = common.split_seed();
    let report = check_polystable_seeded(&datum, &tol, seed)?;
    if report.verdict != Verdict::Polystable {
        let verdict = report.verdict.as_str();
        return Ok(Report::new(EXIT_NEGATIVE, verdict, &json!({ "verdict": verdict, "blocks": Value::Null })));
    }
    let blocks: Vec<Value> = datum
        .blocks
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let spectrum = joint_spectrum(&b.higgs, &tol, seed.wrapping_add(j as u64))?;
            Ok(json!({ "label": b.label, "spectrum": spectrum }))
        })
        .collect::<Result<_, Error>>()?;
    let counts: Vec<usize> = blocks.iter().map(|b| b["spectrum"].as_array().map_or(0, Vec::len)).collect();
    Ok(Report::new(EXIT_OK, format!("polystable; eigenspaces={}", list(&counts)), &json!({ "verdict": "polystable", "blocks": blocks })))
}

fn cmd_levi(input: &Path, with_basis: bool, common: &Common) -> Outcome {
    let tol = common.tolerances()?;
    let datum = load_datum(input, &tol)?;
    let mut blocks = Vec::with_capacity(datum.blocks.len());
    let mut all_levi = Vec::new();
    let mut complete = true;
    let mut dims = Vec::new();
    for b in &datum.blocks {
        let result = centralizer_basis(&b.higgs, &tol)?;
        let steps = inductive_reduction(&b.higgs, &tol)?;
        match &result.levi_type {
            Some(lt) => all_levi.extend(lt.iter().copied()),
            None => complete = false,
        }
        dims.push(result.dim);
        let mut entry = json!({
            "label": b.label,
            "dim": result.dim,
            "levi_type": result.levi_type,
            "dimension_consistent": result.dimension_consistent,
            "reduction": steps,
        });
        if with_basis {
            entry["basis"] = serde_json::to_value(&result).map_err(|e| Error::Parse(e.to_string()))?["basis"].clone();
        }
        blocks.push(entry);
    }
    all_levi.sort_unstable_by(|a, b| b.cmp(a));
    let levi = complete.then_some(all_levi);
    let (code, summary) = match &levi {
        Some(l) => (EXIT_OK, format!("levi={}; centralizer_dim={}", list(l), list(&dims))),
        None => (EXIT_NEGATIVE, format!("not commuting semisimple; centralizer_dim={}", list(&dims))),
    };
    Ok(Report::new(code, summary, &json!({ "levi_type": levi, "blocks": blocks })))
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    input: &Path,
    direct: bool,
    metric_out: Option<&Path>,
    initial: Option<&Path>,
    steps: usize,
    lr: Option<f64>,
    history_every: usize,
    common: &Common,
) -> Outcome {
    let tol = common.tolerances()?;
    let datum = load_datum(input, &tol)?;
    if direct {
        let metric = construct_ym_metric_seeded(&datum, &tol, common.split_seed())?;
        let report = ym_residual(&datum, &metric, &tol)?;
        if let Some(path) = metric_out {
            write(path, &serialize_metric(&metric))?;
        }
        let summary = format!(
            "constructed; ym_residual={:.3e}; flatness_residual={:.3e}",
            report.ym_residual, report.flatness_residual
        );
        return Ok(Report::new(EXIT_OK, summary, &json!({ "method": "direct", "metric": metric, "report": report })));
    }
    let start = initial.map(|p| parse_metric(&read(p)?, &tol)).transpose()?;
    let opts = FlowOptions { max_steps: steps, step_size: lr, tol };
    let result = flow_solve(&datum, start.as_ref(), &opts)?;
    if let Some(path) = metric_out {
        write(path, &serialize_metric(&result.metric))?;
    }
    let code = match result.verdict {
        FlowVerdict::Converged => EXIT_OK,
        FlowVerdict::Degenerating => EXIT_NEGATIVE,
        FlowVerdict::BudgetExhausted => EXIT_NUMERICAL,
    };
    let summary = format!(
        "{}; steps={}; residual={:.3e}; max_condition={:.3e}",
        result.verdict.as_str(),
        result.steps,
        result.final_residual,
        result.max_condition
    );
    Ok(Report::new(code, summary, &result.thinned(history_every)))
}

fn cmd_verify(input: &Path, metric: &Path, common: &Common) -> Outcome {
    let tol = common.tolerances()?;
    let datum = load_datum(input, &tol)?;
    let metric = parse_metric(&read(metric)?, &tol)?;
    let report = ym_residual(&datum, &metric, &tol)?;
    let ok = report.ym_verdict && report.eh_verdict;
    let summary = format!(
        "{}; ym_residual={:.3e}; flatness_residual={:.3e}",
        if ok { "einstein_hermitian" } else { "not_yang_mills" },
        report.ym_residual,
        report.flatness_residual
    );
    Ok(Report::new(if ok { EXIT_OK } else { EXIT_NEGATIVE }, summary, &report))
}

fn cmd_gauge(input: &Path, gauge: &Path, metric: Option<&Path>, metric_out: Option<&Path>, common: &Common) -> Outcome {
    let tol = common.tolerances()?;
    let datum = load_datum(input, &tol)?;
    let g = io::parse_gauge(&read(gauge)?)?;
    let moved = conjugate_datum(&datum, &g)?;
    if let Some(path) = metric {
        let h = parse_metric(&read(path)?, &tol)?;
        let transformed = apply_gauge(&h, &g)?;
        if let Some(out) = metric_out {
            write(out, &serialize_metric(&transformed))?;
        }
    }
    Ok(Report::new(EXIT_OK, format!("gauged; blocks={}", moved.blocks.len()), &moved))
}

fn cmd_trivialize(input: &Path, matrix: &Path, common: &Common) -> Outcome {
    let tol = common.tolerances()?;
    let datum = load_datum(input, &tol)?;
    let change = io::parse_trivialization(&read(matrix)?, &tol)?;
    let moved = apply_trivialization_change(&datum, &change)?;
    Ok(Report::new(EXIT_OK, format!("retrivialized; dim={}", moved.dim), &moved))
}

fn dispatch(command: &Command) -> Outcome {
    match command {
        Command::Gen { kind, dim, sizes, size, conjugator_condition, truth, common } => {
            cmd_gen(*kind, *dim, sizes, *size, *conjugator_condition, truth.as_deref(), common)
        }
        Command::Validate { input, common } => cmd_validate(input, common),
        Command::Check { inputs, parallel, common } => cmd_check(inputs, *parallel, common),
        Command::Spectrum { input, common } => cmd_spectrum(input, common),
        Command::Levi { input, basis, common } => cmd_levi(input, *basis, common),
        Command::Solve { input, direct, metric_out, initial, steps, lr, history_every, common } => cmd_solve(
            input,
            *direct,
            metric_out.as_deref(),
            initial.as_deref(),
            *steps,
            *lr,
            *history_every,
            common,
        ),
        Command::Verify { input, metric, common } => cmd_verify(input, metric, common),
        Command::Gauge { input, gauge, metric, metric_out, common } => {
            cmd_gauge(input, gauge, metric.as_deref(), metric_out.as_deref(), common)
        }
        Command::Trivialize { input, matrix, common } => cmd_trivialize(input, matrix, common),
    }
}

/// Plain-text rendering: one `key: value` line per top-level field.
fn render_text(value: &Value) -> String {
    let mut out = String::new();
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                out.push_str(&format!("{k}: {v}\n"));
            }
        }
        other => out.push_str(&format!("{other}\n")),
    }
    out
}

/// Runs the command line with explicit streams and returns the outcome.
pub fn execute<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(rendered.as_bytes()) } else { stdout.write_all(rendered.as_bytes()) };
            return CommandOutcome { exit_code: code, report_path: None, summary: String::new() };
        }
    };
    let common = cli.command.common();
    let outcome = dispatch(&cli.command).and_then(|report| {
        match &common.output {
            Some(path) => write(path, &report.body)?,
            None if common.json || cli.command.emits_data() => stdout.write_all(&report.body)?,
            None => stdout.write_all(render_text(&report.value).as_bytes())?,
        }
        Ok(report)
    });
    match outcome {
        Ok(report) => {
            let _ = writeln!(stderr, "{}", report.summary);
            CommandOutcome { exit_code: report.exit_code, report_path: common.output.clone(), summary: report.summary }
        }
        Err(e) => {
            let code = exit_code(&e);
            if common.json {
                let _ = stdout.write_all(&io::to_json(&serde_json::json!({ "error": e.to_string(), "exit_code": code })));
            }
            let _ = writeln!(stderr, "error: {e}");
            CommandOutcome { exit_code: code, report_path: None, summary: format!("error: {e}") }
        }
    }
}

/// Entry point for the binary.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    execute(args, &mut stdout.lock(), &mut stderr.lock()).exit_code
}
