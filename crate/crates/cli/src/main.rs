use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pubbias_cli::commands::{self, Axis, CommonOptions, Method, Outcome};
use pubbias_cli::input::parse_csv;
use pubbias_cli::{CliError, EXIT_NONCONVERGED};

/// Selection models for publication bias in meta-analysis.
#[derive(Debug, Parser)]
#[command(name = "pubbias", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a selection model and print the report.
    Fit {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "monotone")]
        method: MethodArg,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Profile-likelihood confidence interval for the effect.
    Ci {
        input: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Parametric-bootstrap test of a constant weight function.
    SelectionTest {
        input: PathBuf,
        /// Number of simulated datasets.
        #[arg(long = "m", short = 'M', visible_alias = "M", default_value_t = 1000)]
        m: usize,
        /// Include every replicate's fitted weights.
        #[arg(long)]
        keep_curves: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the fitted step function as CSV (x_left,x_right,w).
    Plotdata {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "monotone")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "pscale")]
        axis: AxisArg,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Monotone,
    Dearbegg,
    RandomEffects,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Pscale,
    Groupscale,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, default_value_t = pubbias::model::DEFAULT_LAMBDA1)]
    lambda1: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// DE population size (default 10 x dimension).
    #[arg(long)]
    pop_size: Option<usize>,
    #[arg(long)]
    max_generations: Option<usize>,
    /// DE differential weight.
    #[arg(long)]
    f: Option<f64>,
    /// DE crossover rate.
    #[arg(long)]
    cr: Option<f64>,
    /// Disable data-parallel evaluation.
    #[arg(long)]
    sequential: bool,
}

impl From<&CommonArgs> for CommonOptions {
    fn from(a: &CommonArgs) -> Self {
        CommonOptions {
            lambda1: a.lambda1,
            seed: a.seed,
            population_size: a.pop_size,
            max_generations: a.max_generations,
            differential_weight: a.f,
            crossover_rate: a.cr,
            sequential: a.sequential,
        }
    }
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Monotone => Method::Monotone,
            MethodArg::Dearbegg => Method::Dearbegg,
            MethodArg::RandomEffects => Method::RandomEffects,
        }
    }
}

fn emit(outcome: Outcome) -> ExitCode {
    println!("{}", outcome.document.to_json());
    eprintln!("{}", outcome.summary);
    if outcome.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NONCONVERGED as u8)
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Fit {
            input,
            method,
            common,
        } => {
            let data = parse_csv(input)?;
            Ok(emit(commands::cmd_fit(
                &data,
                method.into(),
                &(&common).into(),
            )?))
        }
        Command::Ci {
            input,
            level,
            common,
        } => {
            let data = parse_csv(input)?;
            Ok(emit(commands::cmd_ci(&data, level, &(&common).into())?))
        }
        Command::SelectionTest {
            input,
            m,
            keep_curves,
            common,
        } => {
            let data = parse_csv(input)?;
            Ok(emit(commands::cmd_selection_test(
                &data,
                m,
                keep_curves,
                &(&common).into(),
            )?))
        }
        Command::Plotdata {
            input,
            method,
            axis,
            common,
        } => {
            let data = parse_csv(input)?;
            let axis = match axis {
                AxisArg::Pscale => Axis::Pscale,
                AxisArg::Groupscale => Axis::Groupscale,
            };
            let (table, summary, converged) =
                commands::cmd_plotdata(&data, method.into(), axis, &(&common).into())?;
            print!("{table}");
            eprintln!("{summary}");
            Ok(if converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NONCONVERGED as u8)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                pubbias_cli::EXIT_INPUT
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
