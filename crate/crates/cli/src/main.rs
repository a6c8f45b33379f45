use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use nie_core::conversion::{validate_threshold, ArmCounts, EffectSummary, Measure, OutcomeFrequency};
use nie_core::report::{batch_text, render_svg, run_verification, study_text, verify_text, PlotSpec};
use nie_core::sensitivity::Direction;
use nie_core::study::{analyze, analyze_batch, parse_batch, BatchFormat, NieResult, StudyRecord};
use tempfile::NamedTempFile;

const EXIT_INPUT: u8 = 1;
const EXIT_DOMAIN: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

/// Non-inferiority E-values for sensitivity analysis of unmeasured confounding.
#[derive(Debug, Parser)]
#[command(name = "nie", version)]
struct Cli {
    /// Report format for stdout.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,

    /// Write results to this path instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Decimal places in human-readable output.
    #[arg(long, global = true, default_value_t = 2)]
    round: usize,

    /// Prevalence at or above which an outcome counts as common.
    #[arg(long, global = true, default_value_t = 0.15)]
    threshold: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze a single study given on the command line.
    Compute(StudyArgs),
    /// Analyze every study in a CSV or JSON file.
    Batch(BatchArgs),
    /// Render bias-factor contour plots as SVG.
    Plot(PlotArgs),
    /// Check the bounding inequality against a brute-force oracle.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FrequencyArg {
    Rare,
    Common,
    FromCounts,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Effect measure: RR or HR.
    #[arg(long)]
    measure: Measure,
    #[arg(long)]
    point: f64,
    /// Lower 95% confidence limit.
    #[arg(long)]
    lower: f64,
    /// Upper 95% confidence limit.
    #[arg(long)]
    upper: f64,
    /// Non-inferiority margin on the scale of the estimate.
    #[arg(long)]
    margin: f64,
    #[arg(long)]
    direction: Direction,
    #[arg(long, value_enum)]
    frequency: FrequencyArg,
    #[arg(long, requires_all = ["n_exposed", "events_control", "n_control"])]
    events_exposed: Option<u64>,
    #[arg(long)]
    n_exposed: Option<u64>,
    #[arg(long)]
    events_control: Option<u64>,
    #[arg(long)]
    n_control: Option<u64>,
    #[arg(long, default_value = "study")]
    id: String,
    #[arg(long, default_value = "")]
    label: String,
}

#[derive(Debug, Args)]
struct BatchArgs {
    /// CSV or JSON study file.
    input: PathBuf,
    /// Overrides the format inferred from the file extension.
    #[arg(long)]
    input_format: Option<BatchFormat>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Study file; every study becomes a panel unless --study picks one.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    input_format: Option<BatchFormat>,
    /// Study id to plot from --input.
    #[arg(long, requires = "input")]
    study: Option<String>,
    /// Upper end of both axes.
    #[arg(long)]
    axis_max: Option<f64>,
    #[command(flatten)]
    record: Option<StudyArgs>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Number of random confounder scenarios.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Points per axis in the grid search.
    #[arg(long, default_value_t = 200)]
    grid_resolution: usize,
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }
}

impl From<nie_core::Error> for Failure {
    fn from(e: nie_core::Error) -> Self {
        Failure {
            code: if e.is_input() { EXIT_INPUT } else { EXIT_DOMAIN },
            error: e.into(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Single-study flags that `plot` only needs when no `--input` is given.
const STUDY_REQUIRED: [&str; 7] = ["measure", "point", "lower", "upper", "margin", "direction", "frequency"];

fn parse_cli() -> clap::error::Result<Cli> {
    let command = Cli::command().mut_subcommand("plot", |mut plot| {
        for id in STUDY_REQUIRED {
            plot = plot.mut_arg(id, |a| a.required(false).required_unless_present("input"));
        }
        plot.mut_arg("input", |a| a.conflicts_with_all(STUDY_REQUIRED))
    });
    Cli::from_arg_matches(&command.try_get_matches()?)
}

fn main() -> ExitCode {
    let cli = match parse_cli() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    validate_threshold(cli.threshold)?;
    match &cli.command {
        Command::Compute(args) => compute(&cli, args),
        Command::Batch(args) => batch(&cli, args),
        Command::Plot(args) => plot(&cli, args),
        Command::Verify(args) => verify(&cli, args),
    }
}

fn compute(cli: &Cli, args: &StudyArgs) -> CliResult<()> {
    let record = build_record(args, cli.threshold)?;
    let result = analyze(&record)?;
    let body = match cli.format {
        OutputFormat::Text => study_text(&record, &result, cli.round),
        OutputFormat::Json => to_json(&result)?,
    };
    emit(cli.output.as_deref(), &body)
}

fn batch(cli: &Cli, args: &BatchArgs) -> CliResult<()> {
    let records = read_records(&args.input, args.input_format, cli.threshold)?;
    let results = analyze_batch(&records)?;
    let json = to_json(&results)?;
    let text = batch_text(&records, &results, cli.round);
    match &cli.output {
        Some(path) => write_all_atomic(&[(path.clone(), json), (path.with_extension("txt"), text)]),
        None => emit(None, if cli.format == OutputFormat::Json { &json } else { &text }),
    }
}

fn plot(cli: &Cli, args: &PlotArgs) -> CliResult<()> {
    let results: Vec<(String, NieResult)> = match (&args.input, &args.record) {
        (Some(path), _) => {
            let records = read_records(path, args.input_format, cli.threshold)?;
            let selected: Vec<&StudyRecord> = match &args.study {
                Some(id) => {
                    let r = records
                        .iter()
                        .find(|r| &r.study_id == id)
                        .ok_or_else(|| Failure::input(anyhow!("study '{id}' not found in {}", path.display())))?;
                    vec![r]
                }
                None => records.iter().collect(),
            };
            selected
                .into_iter()
                .map(|r| Ok((title_of(r), analyze(r)?)))
                .collect::<CliResult<_>>()?
        }
        (None, Some(study)) => {
            let record = build_record(study, cli.threshold)?;
            vec![(title_of(&record), analyze(&record)?)]
        }
        (None, None) => {
            return Err(Failure::input(anyhow!(
                "plot needs either --input or the single-study flags (--measure, --point, ...)"
            )))
        }
    };
    if let Some(max) = args.axis_max {
        if !(max.is_finite() && max > 1.0) {
            return Err(Failure::input(anyhow!("--axis-max must be greater than 1, got {max}")));
        }
    }
    let specs = results
        .iter()
        .map(|(title, r)| PlotSpec::for_result(r, title, args.axis_max))
        .collect::<nie_core::Result<Vec<_>>>()?;
    emit(cli.output.as_deref(), &render_svg(&specs))
}

fn verify(cli: &Cli, args: &VerifyArgs) -> CliResult<()> {
    let report = run_verification(args.n, args.seed, args.grid_resolution)?;
    let json = to_json(&report)?;
    let text = verify_text(&report);
    match &cli.output {
        Some(path) => write_all_atomic(&[(path.clone(), json), (path.with_extension("txt"), text)])?,
        None => emit(None, if cli.format == OutputFormat::Json { &json } else { &text })?,
    }
    let violations = report.violation_count();
    if violations > 0 {
        let worst = to_json(&report.bound.worst)?;
        return Err(Failure {
            code: EXIT_VERIFICATION,
            error: anyhow!("verification failed with {violations} violations; worst scenario:\n{worst}"),
        });
    }
    if !report.passed {
        eprintln!(
            "warning: no violations, but sharpness or sufficiency tolerances were missed at grid resolution {}; \
             a finer --grid-resolution should close the gap",
            report.grid_resolution
        );
    }
    Ok(())
}

fn build_record(args: &StudyArgs, threshold: f64) -> CliResult<StudyRecord> {
    let frequency = match args.frequency {
        FrequencyArg::Rare => OutcomeFrequency::rare(),
        FrequencyArg::Common => OutcomeFrequency::common(),
        FrequencyArg::FromCounts => {
            let (Some(ee), Some(ne), Some(ec), Some(nc)) =
                (args.events_exposed, args.n_exposed, args.events_control, args.n_control)
            else {
                return Err(Failure::input(anyhow!(
                    "--frequency from-counts needs --events-exposed, --n-exposed, --events-control and --n-control"
                )));
            };
            OutcomeFrequency::from_counts(ArmCounts::new(ee, ne)?, ArmCounts::new(ec, nc)?)
        }
    };
    let record = StudyRecord {
        study_id: args.id.clone(),
        label: args.label.clone(),
        estimate: EffectSummary::new(args.measure, args.point, args.lower, args.upper)?,
        margin: args.margin,
        direction: args.direction,
        frequency,
    };
    Ok(record.with_threshold(threshold)?)
}

fn read_records(path: &Path, format: Option<BatchFormat>, threshold: f64) -> CliResult<Vec<StudyRecord>> {
    let format = match format {
        Some(f) => f,
        None => path
            .extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| Failure::input(anyhow!("cannot infer format of {}; use --input-format", path.display())))?
            .parse()?,
    };
    let file = File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(Failure::input)?;
    let records = parse_batch(file, format).map_err(|e| Failure {
        error: anyhow::Error::new(e).context(format!("in {}", path.display())),
        code: EXIT_INPUT,
    })?;
    records
        .into_iter()
        .map(|r| r.with_threshold(threshold).map_err(Failure::from))
        .collect()
}

fn title_of(record: &StudyRecord) -> String {
    if record.label.is_empty() {
        record.study_id.clone()
    } else {
        record.label.clone()
    }
}

fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: EXIT_DOMAIN,
        error: e.into(),
    })?;
    s.push('\n');
    Ok(s)
}

fn emit(path: Option<&Path>, body: &str) -> CliResult<()> {
    match path {
        Some(p) => write_all_atomic(&[(p.to_path_buf(), body.to_string())]),
        None => std::io::stdout()
            .lock()
            .write_all(body.as_bytes())
            .context("cannot write to stdout")
            .map_err(Failure::input),
    }
}

/// Stage every file in its target directory, then rename them into place,
/// so a failure leaves no partial output behind.
fn write_all_atomic(files: &[(PathBuf, String)]) -> CliResult<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, body) in files {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir)
            .and_then(|mut t| t.write_all(body.as_bytes()).map(|_| t))
            .and_then(|mut t| t.flush().map(|_| t))
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::input)?;
        tmp.as_file_mut()
            .sync_all()
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::input)?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::input)?;
    }
    Ok(())
}
