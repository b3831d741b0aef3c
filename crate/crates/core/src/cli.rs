//! Command-line front end: `analyze`, `simulate` and `robustness`.
//!
//! Reports go to `--out` (or stdout). Failures print one JSON line on stderr,
//! `{"error":"<kind>","exit":<code>,"message":"..."}`, and exit with
//!
//! | code | kind       | meaning                                         |
//! |------|------------|-------------------------------------------------|
//! | 1    | config     | bad flags or parameter values                   |
//! | 2    | data       | unreadable input, unknown column, bad cell      |
//! | 3    | degenerate | the analysis itself failed (e.g. no usable fit) |

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::dataset::{self, ColumnKind, ColumnRole, ColumnSpec, DataError, Dataset};
use crate::regress::{Design, DesignError, Family};
use crate::resample::Execution;
use crate::simulate::{
    self, CoxSimParams, ModelVariant, MonteCarloSummary, RobustnessOptions, RobustnessResult,
    SimError,
};
use crate::spline::{self, SplineError, SplineSpec};
use crate::vimp::{self, NoiseMethod, VimpError, VimpOptions, VimpReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "oob-vimp",
    version,
    about = "Out-of-bag error and VIMP for linear, logistic and Cox models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a CSV file and report OOB error and VIMP per variable.
    Analyze(AnalyzeArgs),
    /// Average VIMP reports over simulated misspecified Cox datasets.
    Simulate(SimulateArgs),
    /// Repeat the analysis on random subsamples of a CSV file.
    Robustness(RobustnessArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Linear,
    Logistic,
    Cox,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Linear => Family::Linear,
            FamilyArg::Logistic => Family::Logistic,
            FamilyArg::Cox => Family::Cox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Zero,
    Permute,
}

impl From<NoiseArg> for NoiseMethod {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Zero => NoiseMethod::ZeroCoefficient,
            NoiseArg::Permute => NoiseMethod::Permute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Linear,
    Spline,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// How a variable is noised up.
    #[arg(long, value_enum, default_value_t = NoiseArg::Zero)]
    noise: NoiseArg,
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = FamilyArg::Cox)]
    family: FamilyArg,
    /// Response column (linear, logistic).
    #[arg(long)]
    response: Option<String>,
    /// Survival time column (cox).
    #[arg(long)]
    time: Option<String>,
    /// Event indicator column, 1 = event (cox).
    #[arg(long)]
    event: Option<String>,
    /// Comma-separated covariates (default: every other column).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// B-spline expansion `var`, `var=df` or `var=degree:k1,k2,...`; repeatable.
    #[arg(long)]
    spline: Vec<String>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Monte Carlo repetitions.
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::Linear)]
    variant: VariantArg,
    /// Spline columns for tumor volume in the spline variant.
    #[arg(long, default_value_t = spline::DEFAULT_DF)]
    df: usize,
    /// Rows per simulated dataset.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Target censored fraction.
    #[arg(long, default_value_t = 0.70)]
    censoring: f64,
    /// Write one simulated dataset (seeded by --seed) to this CSV and stop.
    #[arg(long)]
    emit_data: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct RobustnessArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated subsample fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.10, 0.25, 0.50, 0.75])]
    fractions: Vec<f64>,
    /// Subsamples per fraction.
    #[arg(long, default_value_t = 500)]
    repeats: usize,
    /// Also write the long-format per-subsample CSV here.
    #[arg(long)]
    long: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Degenerate(_) => "degenerate",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Degenerate(m) => m,
        }
    }

    /// The one-line diagnostic written to stderr.
    pub fn diagnostic(&self) -> String {
        json!({"error": self.kind(), "exit": self.exit_code(), "message": self.message()})
            .to_string()
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SplineError> for CliError {
    fn from(e: SplineError) -> Self {
        match e {
            SplineError::Syntax(_)
            | SplineError::UnknownVariable(_)
            | SplineError::AlreadyExpanded(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<VimpError> for CliError {
    fn from(e: VimpError) -> Self {
        match e {
            VimpError::Resample(_) => CliError::Config(e.to_string()),
            _ => CliError::Degenerate(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Params(_) | SimError::SubsampleTooSmall { .. } => {
                CliError::Config(e.to_string())
            }
            SimError::Data(_) | SimError::Design(_) | SimError::Spline(_) => {
                CliError::Data(e.to_string())
            }
            SimError::Run { source, .. } => CliError::from(source),
            SimError::NoEvents { .. } => CliError::Degenerate(e.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Config(first.trim_start_matches("error: ").to_string());
            let _ = writeln!(stderr, "{}", err.diagnostic());
            return err.exit_code();
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.diagnostic());
            e.exit_code()
        }
    }
}

/// What a command produced: the report text (if any) and notices for stderr.
struct Output {
    body: Option<String>,
    notices: Vec<String>,
}

impl Output {
    fn report(body: String) -> Self {
        Self {
            body: Some(body),
            notices: Vec::new(),
        }
    }
}

fn dispatch(
    command: Command,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let run_args = match &command {
        Command::Analyze(a) => &a.run,
        Command::Simulate(a) => &a.run,
        Command::Robustness(a) => &a.run,
    };
    let pool = thread_pool(run_args.jobs)?;
    let output = pool.install(|| match &command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Robustness(a) => cmd_robustness(a),
    })?;
    for n in &output.notices {
        let _ = writeln!(stderr, "{n}");
    }
    match output.body {
        Some(body) => emit(run_args, stdout, &body),
        None => Ok(()),
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    match jobs {
        Some(0) => return Err(CliError::Config("--jobs must be at least 1".into())),
        Some(j) => builder = builder.num_threads(j),
        None => {}
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))
}

fn vimp_options(run: &RunArgs) -> Result<VimpOptions, CliError> {
    if run.bootstrap == 0 {
        return Err(CliError::Config("--bootstrap must be at least 1".into()));
    }
    Ok(VimpOptions {
        bootstrap: run.bootstrap,
        seed: run.seed,
        noise: run.noise.into(),
        marginal: true,
        stepwise: true,
        execution: Execution::Parallel,
    })
}

fn emit(run: &RunArgs, stdout: &mut dyn Write, body: &str) -> Result<(), CliError> {
    match &run.out {
        Some(path) => {
            let mut f = File::create(path).map_err(io_error(path))?;
            f.write_all(body.as_bytes()).map_err(io_error(path))
        }
        None => stdout
            .write_all(body.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

/// Builds the schema from the header and flags, loads the file and returns
/// the model design with spline expansions applied.
fn load_design(args: &DataArgs) -> Result<Design, CliError> {
    let family: Family = args.family.into();
    let need = |flag: &str, v: &Option<String>| -> Result<String, CliError> {
        v.clone()
            .ok_or_else(|| CliError::Config(format!("--family {family} needs --{flag}")))
    };
    let mut outcome: Vec<(String, ColumnKind, ColumnRole)> = Vec::new();
    match family {
        Family::Cox => {
            outcome.push((
                need("time", &args.time)?,
                ColumnKind::Numeric,
                ColumnRole::Time,
            ));
            outcome.push((
                need("event", &args.event)?,
                ColumnKind::Binary,
                ColumnRole::Event,
            ));
        }
        Family::Linear => outcome.push((
            need("response", &args.response)?,
            ColumnKind::Numeric,
            ColumnRole::Response,
        )),
        Family::Logistic => outcome.push((
            need("response", &args.response)?,
            ColumnKind::Binary,
            ColumnRole::Response,
        )),
    }
    let header = dataset::read_header(&args.data)?;
    for (name, _, _) in &outcome {
        if !header.contains(name) {
            return Err(DataError::MissingColumn(name.clone()).into());
        }
    }
    if let Some(covs) = &args.covariates {
        for c in covs {
            if !header.contains(c) {
                return Err(DataError::MissingColumn(c.clone()).into());
            }
            if outcome.iter().any(|(n, _, _)| n == c) {
                return Err(CliError::Config(format!(
                    "'{c}' is both an outcome and a covariate"
                )));
            }
        }
    }
    let schema: Vec<ColumnSpec> = header
        .iter()
        .map(|h| {
            if let Some((_, kind, role)) = outcome.iter().find(|(n, _, _)| n == h) {
                return ColumnSpec::new(h.clone(), *kind, *role);
            }
            let is_cov = args.covariates.as_ref().is_none_or(|c| c.contains(h));
            let role = if is_cov {
                ColumnRole::Covariate
            } else {
                ColumnRole::Ignore
            };
            ColumnSpec::new(h.clone(), ColumnKind::Numeric, role)
        })
        .collect();
    let data: Dataset = dataset::load_csv(&args.data, &schema)?;
    let mut design = Design::from_dataset(&data, family)?;
    if design.groups().is_empty() {
        return Err(CliError::Config("no covariates selected".into()));
    }
    for s in &args.spline {
        let spec: SplineSpec = s.parse()?;
        design = spline::expand_variable(&design, &spec)?;
    }
    Ok(design)
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<Output, CliError> {
    let options = vimp_options(&args.run)?;
    let design = load_design(&args.data)?;
    let report = vimp::vimp_analysis(&design, &options)?;
    let body = match args.run.format {
        Format::Json => report_json(&report),
        Format::Csv => report_csv(&report),
        Format::Table => report_table(&report),
    };
    Ok(Output::report(body))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Output, CliError> {
    let params = CoxSimParams {
        n: args.n,
        target_censoring: args.censoring,
        ..CoxSimParams::default()
    };
    if let Some(path) = &args.emit_data {
        let data = simulate::simulate_cox_data(&params, args.run.seed)?;
        let f = File::create(path).map_err(io_error(path))?;
        data.write_csv(io::BufWriter::new(f))?;
        return Ok(Output {
            body: None,
            notices: Vec::new(),
        });
    }
    let options = vimp_options(&args.run)?;
    let variant = match args.variant {
        VariantArg::Linear => ModelVariant::Linear,
        VariantArg::Spline => ModelVariant::Spline { df: args.df },
    };
    let summary = simulate::monte_carlo(&params, args.m, variant, &options, args.run.seed)?;
    let body = match args.run.format {
        Format::Json => summary_json(&summary, &params),
        Format::Csv => summary_csv(&summary),
        Format::Table => summary_table(&summary),
    };
    Ok(Output::report(body))
}

fn cmd_robustness(args: &RobustnessArgs) -> Result<Output, CliError> {
    let vimp = vimp_options(&args.run)?;
    let design = load_design(&args.data)?;
    let options = RobustnessOptions {
        fractions: args.fractions.clone(),
        repeats: args.repeats,
        vimp,
    };
    let result = simulate::subsample_robustness(&design, &options)?;
    if let Some(path) = &args.long {
        let mut f = File::create(path).map_err(io_error(path))?;
        f.write_all(long_csv(&result).as_bytes())
            .map_err(io_error(path))?;
    }
    let body = match args.run.format {
        Format::Json => robustness_json(&result),
        Format::Csv => quantile_csv(&result),
        Format::Table => quantile_table(&result),
    };
    let mut out = Output::report(body);
    if !result.skipped.is_empty() {
        out.notices.push(
            json!({"warning": "skipped_subsamples", "count": result.skipped.len()}).to_string(),
        );
    }
    Ok(out)
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

#[derive(Serialize)]
struct JsonRow<'a> {
    group: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_inbag: Option<f64>,
    delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    err_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_marginal: Option<f64>,
}

/// Versioned JSON report, full precision, one trailing newline.
pub fn report_json(report: &VimpReport) -> String {
    let rows: Vec<JsonRow> = report
        .rows
        .iter()
        .map(|r| JsonRow {
            group: &r.group,
            beta_hat: r.beta_hat,
            p_value: r.p_value,
            beta_inbag: r.beta_inbag,
            delta: r.delta,
            err_step: r.err_step,
            delta_marginal: r.delta_marginal,
        })
        .collect();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "family": report.family,
        "n": report.n,
        "B_used": report.b_used,
        "err_oob": report.err_oob,
        "diagnostics": report.diagnostics,
        "rows": rows,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// One line per variable, in report order. The last `err_step` is the OOB
/// error of the full model.
pub fn report_csv(report: &VimpReport) -> String {
    let mut s = String::from("group,beta_hat,p_value,beta_inbag,delta,err_step,delta_marginal\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            csv_field(&r.group),
            opt_num(r.beta_hat),
            opt_num(r.p_value),
            opt_num(r.beta_inbag),
            r.delta,
            opt_num(r.err_step),
            opt_num(r.delta_marginal)
        );
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Human-readable table: coefficients, then VIMP columns, two decimals
/// (p-values three). VIMP values are in percentage points.
pub fn report_table(report: &VimpReport) -> String {
    let width = report
        .rows
        .iter()
        .map(|r| r.group.len())
        .max()
        .unwrap_or(8)
        .max(8);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>8}  {:>7}  {:>10}  {:>7}  {:>8}  {:>9}",
        "variable", "beta", "p-value", "beta_inbag", "VIMP", "Err_step", "VIMP_marg"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>7}  {:>10}  {:>7.2}  {:>8}  {:>9}",
            r.group,
            fixed(r.beta_hat, 2),
            fixed(r.p_value, 3),
            fixed(r.beta_inbag, 2),
            r.delta,
            fixed(r.err_step, 2),
            fixed(r.delta_marginal, 2),
        );
    }
    let d = &report.diagnostics;
    let _ = writeln!(
        s,
        "\nOOB error {:.2}% ({} family, n = {}, B used = {}; non-converged {}, no OOB events {}, reduced fits dropped {})",
        report.err_oob, report.family, report.n, report.b_used, d.non_converged, d.no_oob_events, d.reduced_excluded
    );
    s
}

fn summary_json(summary: &MonteCarloSummary, params: &CoxSimParams) -> String {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "params": params,
        "summary": summary,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("summary serializes");
    s.push('\n');
    s
}

fn summary_csv(summary: &MonteCarloSummary) -> String {
    let mut s = String::from("group,beta_hat,p_value,beta_inbag,delta,delta_marginal\n");
    for v in &summary.variables {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            csv_field(&v.group),
            opt_num(v.beta_hat),
            opt_num(v.p_value),
            opt_num(v.beta_inbag),
            v.delta,
            opt_num(v.delta_marginal)
        );
    }
    s
}

fn summary_table(summary: &MonteCarloSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12}  {:>8}  {:>7}  {:>10}  {:>7}  {:>9}",
        "variable", "beta", "p-value", "beta_inbag", "VIMP", "VIMP_marg"
    );
    for v in &summary.variables {
        let _ = writeln!(
            s,
            "{:<12}  {:>8}  {:>7}  {:>10}  {:>7.2}  {:>9}",
            v.group,
            fixed(v.beta_hat, 2),
            fixed(v.p_value, 3),
            fixed(v.beta_inbag, 2),
            v.delta,
            fixed(v.delta_marginal, 2),
        );
    }
    let variant = match summary.variant {
        ModelVariant::Linear => "linear".to_string(),
        ModelVariant::Spline { df } => format!("spline, df {df}"),
    };
    let _ = writeln!(
        s,
        "\nmean OOB error {:.2}% over M = {} runs ({variant}; B = {}; event fraction {:.3})",
        summary.err_oob, summary.m, summary.bootstrap, summary.event_fraction
    );
    s
}

fn long_csv(result: &RobustnessResult) -> String {
    let mut s = String::from("fraction,repeat,group,p_value,delta\n");
    for r in &result.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.fraction,
            r.repeat,
            csv_field(&r.group),
            opt_num(r.p_value),
            r.delta
        );
    }
    s
}

fn quantile_csv(result: &RobustnessResult) -> String {
    let mut s = String::from(
        "fraction,group,runs,log_p_q25,log_p_q50,log_p_q75,delta_q25,delta_q50,delta_q75\n",
    );
    for q in &result.quantiles {
        let lp = |f: fn(&simulate::Quartiles) -> f64| opt_num(q.log_p.as_ref().map(f));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            q.fraction,
            csv_field(&q.group),
            q.runs,
            lp(|x| x.q25),
            lp(|x| x.q50),
            lp(|x| x.q75),
            q.delta.q25,
            q.delta.q50,
            q.delta.q75
        );
    }
    s
}

fn quantile_table(result: &RobustnessResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8}  {:<12}  {:>4}  {:>24}  {:>24}",
        "fraction", "variable", "runs", "ln p (25/50/75%)", "VIMP (25/50/75%)"
    );
    for q in &result.quantiles {
        let lp = q.log_p.map_or_else(
            || "-".to_string(),
            |x| format!("{:.2} / {:.2} / {:.2}", x.q25, x.q50, x.q75),
        );
        let d = format!(
            "{:.2} / {:.2} / {:.2}",
            q.delta.q25, q.delta.q50, q.delta.q75
        );
        let _ = writeln!(
            s,
            "{:>8.2}  {:<12}  {:>4}  {:>24}  {:>24}",
            q.fraction, q.group, q.runs, lp, d
        );
    }
    s
}

fn robustness_json(result: &RobustnessResult) -> String {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "quantiles": result.quantiles,
        "skipped": result.skipped,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("result serializes");
    s.push('\n');
    s
}
