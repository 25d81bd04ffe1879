//! `fourier-accountant`: tight `(epsilon, delta)` accounting for compositions
//! of subsampled Gaussian mechanisms from the command line.
//!
//! Exit status: 0 on success, 1 on I/O failure, 2 on flag errors, 3 on
//! numeric-domain errors, 4 when an iterative solver does not converge.

mod report;
mod request;

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fourier_accountant::error_bounds::richardson_estimate;
use fourier_accountant::{AccountantError, CompositionQuery, Grid, MechanismSpec, Target};

use report::{Format, Output, Report, Series};
use request::{GridArgs, MechanismArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(AccountantError),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Domain(AccountantError::NonConvergence { .. }) => 4,
            CliError::Domain(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Io(msg) => f.write_str(msg),
            CliError::Domain(err) => write!(f, "{err}"),
        }
    }
}

impl From<AccountantError> for CliError {
    fn from(err: AccountantError) -> Self {
        CliError::Domain(err)
    }
}

impl From<io::Error> for CliError {
    fn from(err: io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "fourier-accountant", version)]
#[command(about = "Tight (epsilon, delta) accounting for compositions of subsampled Gaussian mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// delta(epsilon) of a composition.
    Delta(QueryArgs),
    /// epsilon(delta) of a composition.
    Epsilon(QueryArgs),
    /// One row per value of a swept parameter.
    Sweep(SweepArgs),
    /// delta(epsilon) over a doubling schedule of n or L with error estimates.
    Converge(ConvergeArgs),
}

#[derive(Debug, Clone, Args)]
struct QueryArgs {
    #[command(flatten)]
    mechanism: MechanismArgs,
    /// Target epsilon (delta queries).
    #[arg(long)]
    eps: Option<f64>,
    /// Target delta (epsilon queries).
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    K,
    Eps,
    Delta,
    Sigma,
    Q,
    N,
    #[value(name = "L", alias = "l")]
    Radius,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::Eps => "eps",
            SweepParam::Delta => "delta",
            SweepParam::Sigma => "sigma",
            SweepParam::Q => "q",
            SweepParam::N => "n",
            SweepParam::Radius => "L",
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SweepArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, value_enum)]
    over: SweepParam,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConvergeParam {
    N,
    #[value(name = "L", alias = "l")]
    Radius,
}

#[derive(Debug, Clone, Args)]
struct ConvergeArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, value_enum, default_value = "n")]
    over: ConvergeParam,
    /// First n (or L) of the schedule; defaults to --n (or --L).
    #[arg(long)]
    start: Option<f64>,
    /// Number of doublings after the first row.
    #[arg(long, default_value_t = 6)]
    doublings: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetKind {
    Delta,
    Epsilon,
}

fn target(args: &QueryArgs, kind: TargetKind) -> Result<Target, CliError> {
    match (kind, args.eps, args.delta) {
        (TargetKind::Delta, Some(eps), None) => Ok(Target::Epsilon(eps)),
        (TargetKind::Epsilon, None, Some(delta)) => Ok(Target::Delta(delta)),
        (TargetKind::Delta, _, _) => Err(CliError::Usage("delta queries take --eps and not --delta".into())),
        (TargetKind::Epsilon, _, _) => Err(CliError::Usage("epsilon queries take --delta and not --eps".into())),
    }
}

fn run_query(
    args: &QueryArgs,
    components: &[(MechanismSpec, u64)],
    grid: Grid,
    target: Target,
    with_estimate: bool,
) -> Result<Report, CliError> {
    let result = CompositionQuery::heterogeneous(components.to_vec(), grid, target)
        .with_directions(args.mechanism.direction_mode())
        .with_newton_tolerance(args.grid.newton_tol)
        .with_discretization_estimate(with_estimate)
        .run()?;
    Ok(Report::new(
        &result,
        components,
        args.mechanism.is_heterogeneous(),
        args.mechanism.direction.name(),
    ))
}

fn single(args: &QueryArgs, kind: TargetKind) -> Result<Output, CliError> {
    let target = target(args, kind)?;
    let components = args.mechanism.components()?;
    let report = run_query(args, &components, args.grid.grid()?, target, !args.grid.no_error_estimate)?;
    Ok(Output::Single(report))
}

fn positive_integer(param: &str, value: f64) -> Result<u64, CliError> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u64::MAX as f64 {
        Ok(value as u64)
    } else {
        Err(CliError::Usage(format!("--values for {param} must be positive integers, got {value}")))
    }
}

fn sweep(args: &SweepArgs) -> Result<Output, CliError> {
    let query = &args.query;
    let over = args.over;
    if matches!(over, SweepParam::K | SweepParam::Sigma | SweepParam::Q) && query.mechanism.is_heterogeneous() {
        return Err(CliError::Usage(format!("sweeping {} needs a single mechanism", over.name())));
    }
    let fixed_target = match over {
        SweepParam::Eps | SweepParam::Delta => {
            if query.eps.is_some() || query.delta.is_some() {
                return Err(CliError::Usage(format!("--eps/--delta conflict with --over {}", over.name())));
            }
            None
        }
        _ => Some(match (query.eps, query.delta) {
            (Some(eps), None) => Target::Epsilon(eps),
            (None, Some(delta)) => Target::Delta(delta),
            _ => return Err(CliError::Usage("give exactly one of --eps and --delta".into())),
        }),
    };

    let mut rows = Vec::with_capacity(args.values.len());
    for &value in &args.values {
        let mut mechanism = query.mechanism.clone();
        let mut radius = query.grid.radius;
        let mut n = query.grid.n;
        let mut target = fixed_target;
        match over {
            SweepParam::K => mechanism.k = Some(positive_integer("k", value)?),
            SweepParam::Sigma => mechanism.sigma = Some(value),
            SweepParam::Q => mechanism.q = Some(value),
            SweepParam::N => n = positive_integer("n", value)? as usize,
            SweepParam::Radius => radius = value,
            SweepParam::Eps => target = Some(Target::Epsilon(value)),
            SweepParam::Delta => target = Some(Target::Delta(value)),
        }
        let row_args = QueryArgs {
            mechanism,
            ..query.clone()
        };
        let components = row_args.mechanism.components()?;
        let grid = request::grid(radius, n)?;
        let target = target.expect("target set for every sweep parameter");
        rows.push(run_query(&row_args, &components, grid, target, !query.grid.no_error_estimate)?);
    }
    Ok(Output::Series(Series {
        over: over.name(),
        rows,
    }))
}

fn converge(args: &ConvergeArgs) -> Result<Output, CliError> {
    let query = &args.query;
    let target = target(query, TargetKind::Delta)?;
    let components = query.mechanism.components()?;
    let mut rows = Vec::new();
    match args.over {
        ConvergeParam::N => {
            let start = match args.start {
                Some(s) => positive_integer("n", s)? as usize,
                None => query.grid.n,
            };
            let sizes: Vec<usize> = (0..=args.doublings + 1).map(|i| start << i).collect();
            let mut values = Vec::with_capacity(sizes.len());
            for &n in &sizes {
                let grid = request::grid(query.grid.radius, n)?;
                values.push(run_query(query, &components, grid, target, false)?);
            }
            for i in 0..sizes.len() - 1 {
                let mut row = values[i].clone();
                row.discretization_estimate = Some(richardson_estimate(values[i].value, values[i + 1].value));
                rows.push(row);
            }
        }
        ConvergeParam::Radius => {
            let start = args.start.unwrap_or(query.grid.radius);
            for i in 0..=args.doublings {
                let grid = request::grid(start * f64::from(1u32 << i.min(31)), query.grid.n)?;
                rows.push(run_query(query, &components, grid, target, !query.grid.no_error_estimate)?);
            }
        }
    }
    Ok(Output::Series(Series {
        over: match args.over {
            ConvergeParam::N => "n",
            ConvergeParam::Radius => "L",
        },
        rows,
    }))
}

fn write_output(output: &Output, args: &OutputArgs) -> Result<(), CliError> {
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut writer = BufWriter::new(file);
            output.write(args.format, &mut writer)?;
            writer.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            output.write(args.format, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (output, output_args) = match &cli.command {
        Command::Delta(args) => (single(args, TargetKind::Delta)?, &args.output),
        Command::Epsilon(args) => (single(args, TargetKind::Epsilon)?, &args.output),
        Command::Sweep(args) => (sweep(args)?, &args.query.output),
        Command::Converge(args) => (converge(args)?, &args.query.output),
    };
    write_output(&output, output_args)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
