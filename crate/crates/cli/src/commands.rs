//! The experiment commands. Each `run_*` computes in memory; `write_*`
//! persists the result as CSV under an output directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use twostep::Complex64;

use twostep::energy::{energy_series, head_tail_bounded, EnergySeries};
use twostep::integrators::{
    integrate, steps_for, LinearSkewProblem, Starter, StepperConfig, StepperKind, Trajectory,
};
use twostep::problems::{build, load_custom, BenchmarkId};
use twostep::schemes::{SchemeCoefficients, SchemeFamily};
use twostep::stability::{
    a_stable_closed_form, a_stable_sampled, stability_region, RegionRaster, StabilityVerdict,
    Window,
};

use crate::error::{CliError, CliResult};
use crate::tables::{numeric_csv, relative, write_atomic, ErrorTable, LongTimeTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Family {
    /// Generalized BDF2, fully implicit.
    Bdf2,
    /// Generalized AM2, fully implicit.
    Am2,
    /// Generalized BDF2 with the skew part extrapolated.
    ImexBdf2,
    /// Generalized AM2 with the skew part extrapolated (AB2).
    ImexAmab2,
}

impl Family {
    pub fn scheme_family(self) -> SchemeFamily {
        match self {
            Family::Bdf2 | Family::ImexBdf2 => SchemeFamily::GeneralizedBdf2,
            Family::Am2 | Family::ImexAmab2 => SchemeFamily::GeneralizedAm2,
        }
    }

    pub fn kind(self) -> StepperKind {
        match self {
            Family::Bdf2 | Family::Am2 => StepperKind::Implicit,
            Family::ImexBdf2 => StepperKind::ImexBdf2,
            Family::ImexAmab2 => StepperKind::ImexAmab2,
        }
    }

    pub fn scheme(self, alpha: f64) -> CliResult<SchemeCoefficients> {
        Ok(SchemeCoefficients::new(self.scheme_family(), alpha)?)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Bdf2 => "bdf2",
            Family::Am2 => "am2",
            Family::ImexBdf2 => "imex-bdf2",
            Family::ImexAmab2 => "imex-amab2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum StarterArg {
    Exact,
    Trapezoid,
}

impl From<StarterArg> for Starter {
    fn from(s: StarterArg) -> Self {
        match s {
            StarterArg::Exact => Starter::ExactInjection,
            StarterArg::Trapezoid => Starter::TrapezoidOneStep,
        }
    }
}

/// A built-in benchmark (`damped-driven`, `damped-driven-skew`,
/// `damped-driven-skew2`, `dahlquist:<re>:<im>`) or a problem file.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Benchmark(BenchmarkId),
    File(PathBuf),
}

impl FromStr for ProblemSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(id) = BenchmarkId::from_name(s) {
            return Ok(ProblemSource::Benchmark(id));
        }
        if let Some(rest) = s.strip_prefix("dahlquist:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let parsed: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
            return match parsed.as_deref() {
                Some(&[re, im]) => Ok(ProblemSource::Benchmark(BenchmarkId::ScalarDahlquist(
                    Complex64::new(re, im),
                ))),
                _ => Err(format!("expected dahlquist:<re>:<im>, got {s:?}")),
            };
        }
        Ok(ProblemSource::File(PathBuf::from(s)))
    }
}

impl fmt::Display for ProblemSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSource::Benchmark(BenchmarkId::ScalarDahlquist(l)) => {
                write!(f, "dahlquist:{}:{}", l.re, l.im)
            }
            ProblemSource::Benchmark(id) => f.write_str(id.name()),
            ProblemSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl ProblemSource {
    pub fn load(&self) -> CliResult<LinearSkewProblem> {
        Ok(match self {
            ProblemSource::Benchmark(id) => build(*id)?,
            ProblemSource::File(path) => load_custom(path)?,
        })
    }
}

fn config(family: Family, alpha: f64, h: f64, starter: StarterArg) -> CliResult<StepperConfig> {
    Ok(StepperConfig::new(family.scheme(alpha)?, h).with_starter(starter.into()))
}

/// Terminal relative error `‖y_N − y(T)‖ / ‖y(T)‖`; infinite if the run overflowed.
pub fn terminal_relative_error(
    p: &LinearSkewProblem,
    family: Family,
    alpha: f64,
    h: f64,
    t_end: f64,
    starter: StarterArg,
) -> CliResult<f64> {
    let exact = p.exact_at(t_end)?;
    let traj = integrate(p, &config(family, alpha, h, starter)?, family.kind(), t_end)?;
    if traj.blew_up {
        return Ok(f64::INFINITY);
    }
    let y = traj.states.last().expect("trajectory is never empty");
    Ok(relative((y - &exact).norm(), exact.norm()))
}

#[derive(Debug, Clone)]
pub struct AccuracyArgs {
    pub family: Family,
    pub alphas: Vec<f64>,
    pub hs: Vec<f64>,
    pub t_end: f64,
    pub problem: ProblemSource,
    pub starter: StarterArg,
}

/// One convergence table per α, in the order given.
pub fn run_accuracy(args: &AccuracyArgs) -> CliResult<Vec<(f64, ErrorTable)>> {
    let p = args.problem.load()?;
    p.exact_at(args.t_end)?;
    let pairs: Vec<(f64, f64)> = args
        .alphas
        .iter()
        .flat_map(|&a| args.hs.iter().map(move |&h| (a, h)))
        .collect();
    let errors = pairs
        .par_iter()
        .map(|&(alpha, h)| {
            terminal_relative_error(&p, args.family, alpha, h, args.t_end, args.starter)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    args.alphas
        .iter()
        .zip(errors.chunks(args.hs.len().max(1)))
        .map(|(&alpha, errs)| Ok((alpha, ErrorTable::from_errors(&args.hs, errs)?)))
        .collect()
}

pub fn accuracy_path(out: &Path, family: Family, alpha: f64) -> PathBuf {
    out.join(format!("accuracy_{}_alpha_{alpha}.csv", family.name()))
}

pub fn write_accuracy(
    out: &Path,
    family: Family,
    tables: &[(f64, ErrorTable)],
) -> CliResult<Vec<PathBuf>> {
    tables
        .iter()
        .map(|(alpha, table)| {
            let path = accuracy_path(out, family, *alpha);
            write_atomic(&path, &table.to_csv()?)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LongTimeArgs {
    pub family: Family,
    pub alpha: f64,
    pub hs: Vec<f64>,
    pub checkpoints: Vec<f64>,
    pub problem: ProblemSource,
    pub starter: StarterArg,
}

pub fn run_longtime(args: &LongTimeArgs) -> CliResult<LongTimeTable> {
    let p = args.problem.load()?;
    let t_last = *args
        .checkpoints
        .last()
        .ok_or_else(|| CliError::Usage("no checkpoint times".into()))?;
    let exact = args
        .checkpoints
        .iter()
        .map(|&t| p.exact_at(t))
        .collect::<twostep::Result<Vec<_>>>()?;
    // per h: (absolute, relative) errors at each checkpoint
    let per_h = args
        .hs
        .par_iter()
        .map(|&h| -> CliResult<Vec<(f64, f64)>> {
            let indices = args
                .checkpoints
                .iter()
                .map(|&t| steps_for(t, h))
                .collect::<twostep::Result<Vec<_>>>()?;
            let traj = integrate(
                &p,
                &config(args.family, args.alpha, h, args.starter)?,
                args.family.kind(),
                t_last,
            )?;
            Ok(indices
                .iter()
                .zip(&exact)
                .map(|(&n, y_ref)| match traj.states.get(n) {
                    Some(y) => {
                        let e = (y - y_ref).norm();
                        (e, relative(e, y_ref.norm()))
                    }
                    None => (f64::INFINITY, f64::INFINITY),
                })
                .collect())
        })
        .collect::<CliResult<Vec<_>>>()?;
    let n_t = args.checkpoints.len();
    let abs: Vec<Vec<f64>> = (0..n_t)
        .map(|i| per_h.iter().map(|v| v[i].0).collect())
        .collect();
    let rel: Vec<Vec<f64>> = (0..n_t)
        .map(|i| per_h.iter().map(|v| v[i].1).collect())
        .collect();
    LongTimeTable::new(&args.checkpoints, &args.hs, &abs, &rel)
}

pub fn write_longtime(
    out: &Path,
    family: Family,
    alpha: f64,
    table: &LongTimeTable,
) -> CliResult<PathBuf> {
    let path = out.join(format!("longtime_{}_alpha_{alpha}.csv", family.name()));
    write_atomic(&path, &table.to_csv()?)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct BlowupArgs {
    pub family: Family,
    pub alphas: Vec<f64>,
    pub h: f64,
    pub t_end: f64,
    pub problem: ProblemSource,
    pub starter: StarterArg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupSummary {
    pub alpha: f64,
    /// `max ‖y‖` over the second half is within 5% of the first half and
    /// the run did not overflow.
    pub bounded: bool,
    /// Least-squares slope of `ln ‖y‖` against `t` over the final third.
    pub growth_exponent: f64,
    pub final_norm: f64,
    pub overflowed: bool,
}

#[derive(Debug, Clone)]
pub struct BlowupRun {
    pub summary: BlowupSummary,
    pub trajectory: Trajectory,
}

/// Slope of the least-squares line through `(x, y)`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

pub fn summarize_blowup(alpha: f64, traj: &Trajectory) -> BlowupSummary {
    let norms = traj.norms();
    let start = norms.len() - norms.len() / 3 - 1;
    let logs: Vec<f64> = norms[start..]
        .iter()
        .map(|v| v.max(f64::MIN_POSITIVE).ln())
        .collect();
    BlowupSummary {
        alpha,
        bounded: !traj.blew_up && head_tail_bounded(norms.iter().copied()),
        growth_exponent: least_squares_slope(&traj.times[start..], &logs),
        final_norm: *norms.last().expect("trajectory is never empty"),
        overflowed: traj.blew_up,
    }
}

pub fn run_blowup(args: &BlowupArgs) -> CliResult<Vec<BlowupRun>> {
    let p = args.problem.load()?;
    args.alphas
        .par_iter()
        .map(|&alpha| {
            let traj = integrate(
                &p,
                &config(args.family, alpha, args.h, args.starter)?,
                args.family.kind(),
                args.t_end,
            )?;
            Ok(BlowupRun {
                summary: summarize_blowup(alpha, &traj),
                trajectory: traj,
            })
        })
        .collect()
}

fn trajectory_csv(traj: &Trajectory) -> CliResult<Vec<u8>> {
    let dim = traj.states.first().map_or(0, |y| y.len());
    let names: Vec<String> = std::iter::once("t".to_owned())
        .chain((0..dim).map(|i| format!("y{i}")))
        .chain(std::iter::once("norm".to_owned()))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    numeric_csv(
        &header,
        traj.times.iter().zip(&traj.states).map(|(&t, y)| {
            std::iter::once(t)
                .chain(y.iter().copied())
                .chain(std::iter::once(y.norm()))
                .collect()
        }),
    )
}

pub fn write_blowup(out: &Path, runs: &[BlowupRun]) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for run in runs {
        let path = out.join(format!("blowup_alpha_{}.csv", run.summary.alpha));
        write_atomic(&path, &trajectory_csv(&run.trajectory)?)?;
        paths.push(path);
    }
    let path = out.join("blowup_summary.csv");
    let bytes = numeric_csv(
        &[
            "alpha",
            "bounded",
            "growth_exponent",
            "final_norm",
            "overflowed",
        ],
        runs.iter().map(|r| {
            let s = r.summary;
            vec![
                s.alpha,
                f64::from(u8::from(s.bounded)),
                s.growth_exponent,
                s.final_norm,
                f64::from(u8::from(s.overflowed)),
            ]
        }),
    )?;
    write_atomic(&path, &bytes)?;
    paths.push(path);
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemeChoice {
    Family(SchemeFamily, f64),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterSpec {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone)]
pub struct StabilityArgs {
    pub scheme: SchemeChoice,
    pub samples: usize,
    pub raster: Option<RasterSpec>,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub scheme: SchemeCoefficients,
    pub closed_form: Option<bool>,
    pub sampled: StabilityVerdict,
    pub raster: Option<RegionRaster>,
}

impl StabilityReport {
    pub fn summary_lines(&self) -> Vec<String> {
        let verdict = |b: bool| if b { "A-stable" } else { "not A-stable" };
        let mut lines = vec![format!("a = {:?}, b = {:?}", self.scheme.a, self.scheme.b)];
        if let Some(c) = self.closed_form {
            lines.push(format!("closed form: {}", verdict(c)));
        }
        let mut s = format!(
            "sampled ({} points checked): {}",
            self.sampled.samples,
            verdict(self.sampled.stable)
        );
        if let Some(w) = self.sampled.witness {
            if w.re == 0.0 {
                s.push_str(&format!(", witness t = {:e}", w.im));
            } else {
                s.push_str(&format!(", witness z = {w}"));
            }
            s.push_str(&format!(
                ", max root modulus {:.6}",
                self.sampled.max_root_modulus
            ));
        }
        lines.push(s);
        if let Some(r) = &self.raster {
            lines.push(format!(
                "raster {}x{}: stable fraction {:.4}",
                r.nx,
                r.ny,
                r.stable_fraction()
            ));
        }
        lines
    }
}

/// Coefficient file: `a a0 a1 a2` and `b b0 b1 b2` lines, `#` comments.
pub fn parse_coefficients(text: &str) -> CliResult<SchemeCoefficients> {
    let mut a = None;
    let mut b = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let err = |msg: &str| twostep::Error::Parse {
            line,
            msg: msg.to_owned(),
        };
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| err("expected a number")))
            .collect::<Result<_, _>>()?;
        let triple: [f64; 3] = values
            .try_into()
            .map_err(|_| err("expected exactly three coefficients"))?;
        let slot = match fields[0] {
            "a" => &mut a,
            "b" => &mut b,
            _ => return Err(err("lines must start with `a` or `b`").into()),
        };
        if slot.replace(triple).is_some() {
            return Err(err("duplicate coefficient line").into());
        }
    }
    let missing = |what: &str| twostep::Error::Parse {
        line: 0,
        msg: format!("missing `{what}` line"),
    };
    let a = a.ok_or_else(|| missing("a"))?;
    let b = b.ok_or_else(|| missing("b"))?;
    Ok(SchemeCoefficients::custom(a, b)?)
}

pub fn run_stability(args: &StabilityArgs) -> CliResult<StabilityReport> {
    let (scheme, closed_form) = match &args.scheme {
        SchemeChoice::Family(family, alpha) => (
            SchemeCoefficients::new(*family, *alpha)?,
            Some(a_stable_closed_form(*family, *alpha)?),
        ),
        SchemeChoice::File(path) => (parse_coefficients(&std::fs::read_to_string(path)?)?, None),
    };
    let sampled = a_stable_sampled(&scheme, args.samples)?;
    let raster = args
        .raster
        .map(|r| stability_region(&scheme, r.window, r.nx, r.ny))
        .transpose()?;
    Ok(StabilityReport {
        scheme,
        closed_form,
        sampled,
        raster,
    })
}

pub fn write_raster(path: &Path, raster: &RegionRaster) -> CliResult<()> {
    let rows = (0..raster.nx).flat_map(|i| {
        (0..raster.ny).map(move |j| {
            let z = raster.z(i, j);
            vec![z.re, z.im, raster.value(i, j)]
        })
    });
    write_atomic(path, &numeric_csv(&["re", "im", "max_root_modulus"], rows)?)
}

#[derive(Debug, Clone)]
pub struct EnergyArgs {
    pub alpha: f64,
    pub h: f64,
    pub t_end: f64,
    pub problem: ProblemSource,
    pub starter: StarterArg,
}

/// IMEX-BDF2 run and its energy sequence.
pub fn run_energy(args: &EnergyArgs) -> CliResult<(Trajectory, EnergySeries)> {
    let p = args.problem.load()?;
    let cfg = config(Family::ImexBdf2, args.alpha, args.h, args.starter)?;
    let traj = integrate(&p, &cfg, StepperKind::ImexBdf2, args.t_end)?;
    let series = energy_series(&traj, args.alpha, args.h, p.l0)?;
    Ok((traj, series))
}

pub fn write_energy(
    out: &Path,
    alpha: f64,
    traj: &Trajectory,
    series: &EnergySeries,
) -> CliResult<PathBuf> {
    let path = out.join(format!("energy_alpha_{alpha}.csv"));
    let rows = series
        .records
        .iter()
        .map(|r| vec![r.n as f64, traj.times[r.n], r.g_norm_sq, r.e_n]);
    write_atomic(&path, &numeric_csv(&["n", "t", "g_norm_sq", "e_n"], rows)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_source_parsing() {
        assert_eq!(
            "damped-driven-skew".parse::<ProblemSource>().unwrap(),
            ProblemSource::Benchmark(BenchmarkId::DampedDrivenSkew)
        );
        assert_eq!(
            "dahlquist:-2:0.5".parse::<ProblemSource>().unwrap(),
            ProblemSource::Benchmark(BenchmarkId::ScalarDahlquist(Complex64::new(-2.0, 0.5)))
        );
        assert!("dahlquist:x".parse::<ProblemSource>().is_err());
        assert_eq!(
            "p.txt".parse::<ProblemSource>().unwrap(),
            ProblemSource::File("p.txt".into())
        );
        for s in ["damped-driven", "dahlquist:-2:0.5"] {
            assert_eq!(s.parse::<ProblemSource>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn coefficient_file() {
        let s = parse_coefficients("# implicit euler\na 0 -1 1\nb 0 0 1\n").unwrap();
        assert_eq!(s.a, [0.0, -1.0, 1.0]);
        assert_eq!(s.b, [0.0, 0.0, 1.0]);
        for bad in [
            "a 0 -1 1\n",
            "a 0 -1\nb 0 0 1\n",
            "a 0 -1 1\nb 0 0 x\n",
            "c 1 2 3\n",
            "a 0 -1 1\na 0 -1 1\n",
            "a 1 1 0\nb 0 0 1\n",
        ] {
            assert!(parse_coefficients(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn slope_of_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        assert!((least_squares_slope(&x, &y) - 2.0).abs() < 1e-15);
        assert_eq!(least_squares_slope(&[1.0], &[2.0]), 0.0);
    }
}
