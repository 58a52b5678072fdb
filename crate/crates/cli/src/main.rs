use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twostep::stability::Window;
use twostep_cli::commands::{
    run_accuracy, run_blowup, run_energy, run_longtime, run_stability, write_accuracy,
    write_blowup, write_energy, write_longtime, write_raster, AccuracyArgs, BlowupArgs, EnergyArgs,
    Family, LongTimeArgs, ProblemSource, RasterSpec, SchemeChoice, StabilityArgs, StarterArg,
};
use twostep_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "twostep",
    version,
    about = "Two-step time integrator experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Built-in benchmark, `dahlquist:<re>:<im>`, or a problem file.
    #[arg(long, default_value = "damped-driven")]
    problem: ProblemSource,
    #[arg(long, value_enum, default_value = "exact")]
    starter: StarterArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Terminal relative error and observed order for each α.
    Accuracy {
        #[arg(long, value_enum, default_value = "bdf2")]
        family: Family,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "1"
        )]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4")]
        h: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Errors at checkpoint times over a long run.
    Longtime {
        #[arg(long, value_enum, default_value = "imex-bdf2")]
        family: Family,
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.1)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_value = "2e-3,1e-3,5e-4")]
        h: Vec<f64>,
        /// Checkpoint times; defaults to 1, 10, 20, ..., 100.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<f64>>,
        /// Used only when no checkpoints are given: stop at this time.
        #[arg(long)]
        t_end: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Trajectories and boundedness for each α.
    Blowup {
        #[arg(long, value_enum, default_value = "imex-bdf2")]
        family: Family,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "0.75,1.1"
        )]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        h: f64,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[command(flatten)]
        common: Common,
    },
    /// A-stability verdict and optional stability-region raster.
    Stability {
        #[arg(long, value_enum, conflicts_with = "coefficients")]
        family: Option<Family>,
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        alpha: f64,
        /// File with `a a0 a1 a2` and `b b0 b1 b2` lines.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        #[arg(long, default_value_t = 20001)]
        samples: usize,
        /// Write a raster CSV to this path.
        #[arg(long)]
        raster: Option<PathBuf>,
        /// Raster window as `re_min,re_max,im_min,im_max`.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "-4,4,-4,4"
        )]
        window: Vec<f64>,
        #[arg(long, default_value_t = 201)]
        resolution: usize,
    },
    /// G-norm energy sequence of an IMEX-BDF2 run.
    Energy {
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        h: f64,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn default_checkpoints(t_end: Option<f64>) -> Vec<f64> {
    let all = std::iter::once(1.0).chain((1..=10).map(|k| 10.0 * k as f64));
    match t_end {
        Some(t) => all.filter(|&c| c <= t).collect(),
        None => all.collect(),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Accuracy {
            family,
            alpha,
            h,
            t_end,
            common,
        } => {
            let args = AccuracyArgs {
                family,
                alphas: alpha,
                hs: h,
                t_end,
                problem: common.problem,
                starter: common.starter,
            };
            let tables = run_accuracy(&args)?;
            for (alpha, table) in &tables {
                println!("alpha = {alpha}");
                for r in &table.rows {
                    let order = r
                        .observed_order
                        .map_or(String::new(), |o| format!("{o:.4}"));
                    println!(
                        "  h = {:<8e} error = {:.4e}  order = {order}",
                        r.h, r.relative_error
                    );
                }
            }
            for p in write_accuracy(&common.out, family, &tables)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Longtime {
            family,
            alpha,
            h,
            checkpoints,
            t_end,
            common,
        } => {
            let checkpoints = checkpoints.unwrap_or_else(|| default_checkpoints(t_end));
            let args = LongTimeArgs {
                family,
                alpha,
                hs: h,
                checkpoints,
                problem: common.problem,
                starter: common.starter,
            };
            let table = run_longtime(&args)?;
            for row in &table.rows {
                let cells: Vec<String> = row
                    .entries
                    .iter()
                    .map(|e| match e.order {
                        Some(o) => format!("{:.4e} ({o:.4})", e.error),
                        None => format!("{:.4e}", e.error),
                    })
                    .collect();
                println!("t = {:<5} {}", row.time, cells.join("  "));
            }
            println!(
                "wrote {}",
                write_longtime(&common.out, family, alpha, &table)?.display()
            );
        }
        Command::Blowup {
            family,
            alpha,
            h,
            t_end,
            common,
        } => {
            let args = BlowupArgs {
                family,
                alphas: alpha,
                h,
                t_end,
                problem: common.problem,
                starter: common.starter,
            };
            let runs = run_blowup(&args)?;
            for r in &runs {
                let s = r.summary;
                println!(
                    "alpha = {}: bounded = {}, growth exponent = {:.4e}, final norm = {:.4e}{}",
                    s.alpha,
                    s.bounded,
                    s.growth_exponent,
                    s.final_norm,
                    if s.overflowed { " (overflow)" } else { "" }
                );
            }
            for p in write_blowup(&common.out, &runs)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Stability {
            family,
            alpha,
            coefficients,
            samples,
            raster,
            window,
            resolution,
        } => {
            let scheme = match (family, coefficients) {
                (_, Some(path)) => SchemeChoice::File(path),
                (Some(f), None) => SchemeChoice::Family(f.scheme_family(), alpha),
                (None, None) => {
                    return Err(CliError::Usage("give --family or --coefficients".into()))
                }
            };
            if window.len() != 4 {
                return Err(CliError::Usage("--window takes four values".into()));
            }
            let raster_spec = raster.as_ref().map(|_| RasterSpec {
                window: Window::new(window[0], window[1], window[2], window[3]),
                nx: resolution,
                ny: resolution,
            });
            let report = run_stability(&StabilityArgs {
                scheme,
                samples,
                raster: raster_spec,
            })?;
            for line in report.summary_lines() {
                println!("{line}");
            }
            if let (Some(path), Some(r)) = (raster, &report.raster) {
                write_raster(&path, r)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Energy {
            alpha,
            h,
            t_end,
            common,
        } => {
            let args = EnergyArgs {
                alpha,
                h,
                t_end,
                problem: common.problem,
                starter: common.starter,
            };
            let (traj, series) = run_energy(&args)?;
            let last = series.records.last().map_or(f64::NAN, |r| r.e_n);
            println!(
                "steps = {}, final E = {last:.6e}, bounded = {}",
                series.records.len(),
                series.bounded
            );
            println!(
                "wrote {}",
                write_energy(&common.out, alpha, &traj, &series)?.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
