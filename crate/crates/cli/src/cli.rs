//! Argument definitions and dispatch for the `varsynth` binary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use varsynth::{SignConvention, Tolerances};

use crate::contour::{run_contour, ContourSpec};
use crate::report::write_file;
use crate::scenario::{Fix, Overrides, Range, RhoOverride, SweepSpec};
use crate::{
    load_study, load_study_file, run_analyze, run_mc_check, run_optimize, run_pi_reduce,
    run_sweep, CliError, Report, DEFAULT_MAX_RELATIVE_GAP,
};

#[derive(Debug, Parser)]
#[command(
    name = "varsynth",
    version,
    about = "Variance transmission analysis and robust parameter design",
    after_help = "Exit status: 0 success, 1 I/O error, 2 usage error, 3 study parse error, \
                  4 study validation error, 5 optimizer did not converge or problem infeasible, \
                  6 evaluation error, 7 Monte-Carlo check failed."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Io {
    /// Study file (JSON).
    #[arg(long)]
    pub study: PathBuf,
    /// Output path. Reports also get a `.txt` companion next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SignArg {
    Signed,
    Magnitude,
}

impl From<SignArg> for SignConvention {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Signed => SignConvention::Signed,
            SignArg::Magnitude => SignConvention::Magnitude,
        }
    }
}

#[derive(Debug, Args)]
pub struct Scenario {
    /// Hold a variable at a value (NAME=VALUE). Repeatable.
    #[arg(long, value_name = "NAME=VALUE", allow_hyphen_values = true)]
    pub fix: Vec<Fix>,
    /// Set a pairwise correlation (A:B=VALUE). Repeatable.
    #[arg(long, value_name = "A:B=VALUE", allow_hyphen_values = true)]
    pub rho: Vec<RhoOverride>,
    /// Whether covariance terms keep their sign or enter as magnitudes.
    #[arg(long, value_enum)]
    pub sign_convention: Option<SignArg>,
}

impl Scenario {
    fn overrides(&self) -> Overrides {
        Overrides {
            fix: self.fix.clone(),
            rho: self.rho.clone(),
            sign_convention: self.sign_convention.map(Into::into),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose the transmitted variance at the nominals (or at --fix values).
    Analyze {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        scenario: Scenario,
    },
    /// Choose nominals minimizing transmitted variance on target. --fix pins
    /// a variable.
    Optimize {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        scenario: Scenario,
        /// Re-optimize for each correlation value of a pair (A:B=R1,R2,...).
        #[arg(long, value_name = "A:B=RHOS", allow_hyphen_values = true)]
        sweep: Option<SweepSpec>,
        /// Cap on objective evaluations.
        #[arg(long, default_value_t = Tolerances::default().max_evaluations)]
        max_evaluations: usize,
    },
    /// Write a CSV grid of transmitted variance and response over two variables.
    Contour {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, default_value_t = 41)]
        nx: usize,
        #[arg(long, default_value_t = 41)]
        ny: usize,
        /// LO,HI. Defaults to the variable's bounds, or 0.5–1.5 times its nominal.
        #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
        x_range: Option<Range>,
        #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
        y_range: Option<Range>,
    },
    /// Compare the delta-method variance with a Monte-Carlo estimate.
    McCheck {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest relative gap that passes.
        #[arg(long, default_value_t = DEFAULT_MAX_RELATIVE_GAP)]
        max_gap: f64,
    },
    /// Dimensionless groups from the study's `dimensions` section.
    PiReduce {
        #[command(flatten)]
        io: Io,
        /// Repeating variables, comma-separated.
        #[arg(long, value_delimiter = ',')]
        repeating: Option<Vec<String>>,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// reporting errors on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match execute(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(report: &Report, out: &std::path::Path) -> Result<u8, CliError> {
    let text_path = report.write(out)?;
    print!("{}", report.text);
    eprintln!("wrote {} and {}", out.display(), text_path.display());
    Ok(report.status.exit_code())
}

/// Runs one command; returns its exit status.
pub fn execute(command: &Command) -> Result<u8, CliError> {
    match command {
        Command::Analyze { io, scenario } => {
            let mut study = load_study(&io.study)?;
            let o = scenario.overrides();
            o.apply(&mut study)?;
            let point = o.point(&study)?;
            emit(&run_analyze(&study, Some(&point))?, &io.out)
        }
        Command::Optimize {
            io,
            scenario,
            sweep,
            max_evaluations,
        } => {
            let mut study = load_study(&io.study)?;
            let o = scenario.overrides();
            o.apply(&mut study)?;
            o.pin(&mut study)?;
            let report = match sweep {
                Some(s) => run_sweep(&study, s)?,
                None => {
                    let tols = Tolerances {
                        max_evaluations: *max_evaluations,
                        ..Tolerances::default()
                    };
                    run_optimize(&study, &tols)?
                }
            };
            emit(&report, &io.out)
        }
        Command::Contour {
            io,
            scenario,
            x,
            y,
            nx,
            ny,
            x_range,
            y_range,
        } => {
            let mut study = load_study(&io.study)?;
            let o = scenario.overrides();
            o.apply(&mut study)?;
            let grid = run_contour(
                &study,
                &ContourSpec {
                    x: x.clone(),
                    y: y.clone(),
                    x_range: *x_range,
                    y_range: *y_range,
                    nx: *nx,
                    ny: *ny,
                    fixed: o.fix.clone(),
                },
            )?;
            write_file(&io.out, &grid.to_csv())?;
            eprintln!("wrote {} ({} x {} cells)", io.out.display(), nx, ny);
            Ok(crate::exit::SUCCESS)
        }
        Command::McCheck {
            io,
            scenario,
            n,
            seed,
            max_gap,
        } => {
            let mut study = load_study(&io.study)?;
            let o = scenario.overrides();
            o.apply(&mut study)?;
            let point = o.point(&study)?;
            study.variables = study.variables_at(&point)?;
            emit(&run_mc_check(&study, *n, *seed, *max_gap)?, &io.out)
        }
        Command::PiReduce { io, repeating } => {
            let file = load_study_file(&io.study)?;
            emit(&run_pi_reduce(&file, repeating.as_deref())?, &io.out)
        }
    }
}
