//! Benchmark initial value problems with exact solutions.
//!
//! All built-in benchmarks are `u' + λu = g(t)` for a complex `λ = l + iκ`
//! written as a real system: `L = l I`, `Ls = κ [[0, −1], [1, 0]]`, with
//! `u = y₀ + i y₁`. The scalar `DampedDriven` problem is the `κ = 0` case
//! restricted to one component.
//!
//! Custom problems are read from a text file:
//!
//! ```text
//! # comment
//! dim 2
//! L  10 0  0 10        # row-major
//! Ls 0 -1  1 0         # row-major, optional (zero if omitted)
//! g 0 sin 1 1          # component, kind, coefficient, omega
//! g 0 cos 1 1.4142135623730951
//! g 1 const 0.5        # component, kind, coefficient
//! y0 1 0
//! ```

use std::f64::consts::SQRT_2;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrators::{Forcing, ForcingTerm, LinearSkewProblem};
use crate::StateVector;

const DAMPING: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchmarkId {
    /// `y' + 10y = sin t + cos √2 t`, `y(0) = 1`.
    DampedDriven,
    /// Two components with unit rotation coupling.
    DampedDrivenSkew,
    /// As `DampedDrivenSkew` with the rotation scaled by 4.
    DampedDrivenSkew2,
    /// `y' = λy`, `y(0) = 1`, as a real 2-D system; needs `Re λ < 0`.
    ScalarDahlquist(Complex64),
    Custom,
}

impl BenchmarkId {
    /// Short command-line name.
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkId::DampedDriven => "damped-driven",
            BenchmarkId::DampedDrivenSkew => "damped-driven-skew",
            BenchmarkId::DampedDrivenSkew2 => "damped-driven-skew2",
            BenchmarkId::ScalarDahlquist(_) => "dahlquist",
            BenchmarkId::Custom => "custom",
        }
    }

    /// Inverse of [`BenchmarkId::name`] for the parameter-free benchmarks.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "damped-driven" => Some(BenchmarkId::DampedDriven),
            "damped-driven-skew" => Some(BenchmarkId::DampedDrivenSkew),
            "damped-driven-skew2" => Some(BenchmarkId::DampedDrivenSkew2),
            _ => None,
        }
    }

    fn complex_rate(&self) -> Result<Complex64> {
        match *self {
            BenchmarkId::DampedDriven => Ok(Complex64::new(DAMPING, 0.0)),
            BenchmarkId::DampedDrivenSkew => Ok(Complex64::new(DAMPING, 1.0)),
            BenchmarkId::DampedDrivenSkew2 => Ok(Complex64::new(DAMPING, 4.0)),
            BenchmarkId::ScalarDahlquist(lambda) => {
                if lambda.re.is_nan() || lambda.re >= 0.0 || !lambda.im.is_finite() {
                    return Err(Error::InvalidProblem(format!(
                        "Dahlquist problem needs Re λ < 0, got {lambda}"
                    )));
                }
                Ok(-lambda)
            }
            BenchmarkId::Custom => Err(Error::MissingOracle),
        }
    }

    fn is_forced(&self) -> bool {
        !matches!(self, BenchmarkId::ScalarDahlquist(_))
    }
}

/// Forcing term `c_s sin ωt + c_c cos ωt`.
#[derive(Debug, Clone, Copy)]
struct Harmonic {
    omega: f64,
    sin: f64,
    cos: f64,
}

fn benchmark_harmonics() -> [Harmonic; 2] {
    [
        Harmonic {
            omega: 1.0,
            sin: 1.0,
            cos: 0.0,
        },
        Harmonic {
            omega: SQRT_2,
            sin: 0.0,
            cos: 1.0,
        },
    ]
}

/// Closed-form solution of `u' + λu = Σ harmonics`, `u(0) = u0`.
#[derive(Debug, Clone)]
struct ComplexOracle {
    lambda: Complex64,
    /// `(ω, A, B)` with particular part `A cos ωt + B sin ωt`.
    particular: Vec<(f64, Complex64, Complex64)>,
    homogeneous: Complex64,
}

impl ComplexOracle {
    fn new(lambda: Complex64, harmonics: &[Harmonic], u0: Complex64) -> Result<Self> {
        let mut particular = Vec::with_capacity(harmonics.len());
        for h in harmonics {
            // (A cos + B sin)' + λ(A cos + B sin) = (λA + ωB) cos + (λB − ωA) sin
            let w = Complex64::new(h.omega, 0.0);
            let m = Matrix2::new(lambda, w, -w, lambda);
            let rhs = Vector2::new(Complex64::new(h.cos, 0.0), Complex64::new(h.sin, 0.0));
            let coef = m
                .lu()
                .solve(&rhs)
                .ok_or(Error::Singular("particular solution matching system"))?;
            particular.push((h.omega, coef[0], coef[1]));
        }
        let p0: Complex64 = particular.iter().map(|&(_, a, _)| a).sum();
        Ok(Self {
            lambda,
            particular,
            homogeneous: u0 - p0,
        })
    }

    fn eval(&self, t: f64) -> Complex64 {
        let mut u = self.homogeneous * (-self.lambda * t).exp();
        for &(omega, a, b) in &self.particular {
            let (s, c) = (omega * t).sin_cos();
            u += a * c + b * s;
        }
        u
    }
}

fn oracle_for(id: BenchmarkId) -> Result<ComplexOracle> {
    let lambda = id.complex_rate()?;
    let harmonics: Vec<Harmonic> = if id.is_forced() {
        benchmark_harmonics().to_vec()
    } else {
        Vec::new()
    };
    ComplexOracle::new(lambda, &harmonics, Complex64::new(1.0, 0.0))
}

fn dimension(id: BenchmarkId) -> usize {
    match id {
        BenchmarkId::DampedDriven => 1,
        _ => 2,
    }
}

fn to_state(u: Complex64, dim: usize) -> StateVector {
    if dim == 1 {
        DVector::from_element(1, u.re)
    } else {
        DVector::from_vec(vec![u.re, u.im])
    }
}

/// Exact solution at `t`.
pub fn exact_solution(id: BenchmarkId, t: f64) -> Result<StateVector> {
    let oracle = oracle_for(id)?;
    Ok(to_state(oracle.eval(t), dimension(id)))
}

/// The problem for `id`, with its exact solution attached.
pub fn build(id: BenchmarkId) -> Result<LinearSkewProblem> {
    if id == BenchmarkId::Custom {
        return Err(Error::InvalidProblem(
            "custom problems are loaded with parse_custom or load_custom".into(),
        ));
    }
    let lambda = id.complex_rate()?;
    let dim = dimension(id);
    let l = DMatrix::from_diagonal_element(dim, dim, lambda.re);
    let mut ls = DMatrix::zeros(dim, dim);
    if dim == 2 {
        ls[(0, 1)] = -lambda.im;
        ls[(1, 0)] = lambda.im;
    }
    let mut components = vec![Vec::new(); dim];
    if id.is_forced() {
        components[0] = vec![
            ForcingTerm::Sin {
                coef: 1.0,
                omega: 1.0,
            },
            ForcingTerm::Cos {
                coef: 1.0,
                omega: SQRT_2,
            },
        ];
    }
    let mut y0 = DVector::zeros(dim);
    y0[0] = 1.0;

    let oracle = oracle_for(id)?;
    let exact = Arc::new(move |t: f64| to_state(oracle.eval(t), dim));
    Ok(LinearSkewProblem::new(l, ls, Forcing::Terms(components), y0)?.with_exact(exact))
}

fn parse_numbers(line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("expected a number, got {f:?}"),
            })
        })
        .collect()
}

/// Parse the custom problem format described in the module docs.
pub fn parse_custom(text: &str) -> Result<LinearSkewProblem> {
    let mut dim: Option<usize> = None;
    let mut l: Option<Vec<f64>> = None;
    let mut ls: Option<Vec<f64>> = None;
    let mut y0: Option<Vec<f64>> = None;
    let mut terms: Vec<(usize, usize, ForcingTerm)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let err = |msg: String| Error::Parse { line, msg };
        let need_dim = || dim.ok_or_else(|| err("`dim` must come first".into()));
        match fields[0] {
            "dim" => {
                if dim.is_some() {
                    return Err(err("duplicate `dim`".into()));
                }
                let n = fields
                    .get(1)
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&n| n > 0 && fields.len() == 2)
                    .ok_or_else(|| err("`dim` takes one positive integer".into()))?;
                dim = Some(n);
            }
            key @ ("L" | "Ls" | "y0") => {
                let n = need_dim()?;
                let values = parse_numbers(line, &fields[1..])?;
                let expected = if key == "y0" { n } else { n * n };
                if values.len() != expected {
                    return Err(err(format!(
                        "`{key}` needs {expected} values, got {}",
                        values.len()
                    )));
                }
                let slot = match key {
                    "L" => &mut l,
                    "Ls" => &mut ls,
                    _ => &mut y0,
                };
                if slot.replace(values).is_some() {
                    return Err(err(format!("duplicate `{key}`")));
                }
            }
            "g" => {
                let n = need_dim()?;
                let comp = fields
                    .get(1)
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&c| c < n)
                    .ok_or_else(|| err(format!("component must be an integer below {n}")))?;
                let kind = fields.get(2).copied().unwrap_or("");
                let values = parse_numbers(line, &fields[3.min(fields.len())..])?;
                let term = match (kind, values.as_slice()) {
                    ("const", &[c]) => ForcingTerm::Constant(c),
                    ("sin", &[coef, omega]) => ForcingTerm::Sin { coef, omega },
                    ("cos", &[coef, omega]) => ForcingTerm::Cos { coef, omega },
                    _ => {
                        return Err(err(
                            "expected `g <comp> const <c>` or `g <comp> sin|cos <c> <omega>`"
                                .into(),
                        ))
                    }
                };
                terms.push((line, comp, term));
            }
            other => return Err(err(format!("unknown keyword {other:?}"))),
        }
    }

    let missing = |what: &str| Error::Parse {
        line: 0,
        msg: format!("missing `{what}`"),
    };
    let n = dim.ok_or_else(|| missing("dim"))?;
    let l = l.ok_or_else(|| missing("L"))?;
    let y0 = y0.ok_or_else(|| missing("y0"))?;
    let ls = ls.unwrap_or_else(|| vec![0.0; n * n]);
    let mut components = vec![Vec::new(); n];
    for (line, comp, term) in terms {
        let finite = match term {
            ForcingTerm::Constant(c) => c.is_finite(),
            ForcingTerm::Sin { coef, omega } | ForcingTerm::Cos { coef, omega } => {
                coef.is_finite() && omega.is_finite()
            }
        };
        if !finite {
            return Err(Error::Parse {
                line,
                msg: "non-finite forcing term".into(),
            });
        }
        components[comp].push(term);
    }
    LinearSkewProblem::new(
        DMatrix::from_row_slice(n, n, &l),
        DMatrix::from_row_slice(n, n, &ls),
        Forcing::Terms(components),
        DVector::from_vec(y0),
    )
}

pub fn load_custom(path: impl AsRef<Path>) -> Result<LinearSkewProblem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidProblem(format!("cannot read {}: {e}", path.display())))?;
    parse_custom(&text)
}
