//! Time steppers for two-step schemes.
//!
//! [`step_lmm`] advances a general right-hand side `y' = f(t, y)`: a direct
//! solve when `f` is affine, Newton otherwise. [`LinearStepper`] specializes
//! to `y' + L y + Ls y = g(t)` and keeps the factorization of its implicit
//! matrix, which depends only on `(h, scheme, L)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{ensure_finite, Error, Result};
use crate::schemes::{SchemeCoefficients, SchemeFamily};
use crate::StateVector;

/// States whose components exceed this magnitude end an integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e150;

/// Symmetry / skew-symmetry tolerance relative to the matrix norm.
const STRUCTURE_TOL: f64 = 1e-12;

pub type TimeFunction = Arc<dyn Fn(f64) -> StateVector + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingTerm {
    Constant(f64),
    Sin { coef: f64, omega: f64 },
    Cos { coef: f64, omega: f64 },
}

impl ForcingTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ForcingTerm::Constant(c) => c,
            ForcingTerm::Sin { coef, omega } => coef * (omega * t).sin(),
            ForcingTerm::Cos { coef, omega } => coef * (omega * t).cos(),
        }
    }

    fn amplitude(&self) -> f64 {
        match *self {
            ForcingTerm::Constant(c) => c.abs(),
            ForcingTerm::Sin { coef, .. } | ForcingTerm::Cos { coef, .. } => coef.abs(),
        }
    }
}

/// Right-hand side forcing `g(t)`.
#[derive(Clone)]
pub enum Forcing {
    /// Per component, a sum of constant and sinusoidal terms.
    Terms(Vec<Vec<ForcingTerm>>),
    Function(TimeFunction),
}

impl Forcing {
    pub fn zero(dim: usize) -> Self {
        Forcing::Terms(vec![Vec::new(); dim])
    }

    pub fn eval(&self, t: f64) -> StateVector {
        match self {
            Forcing::Terms(components) => DVector::from_iterator(
                components.len(),
                components
                    .iter()
                    .map(|terms| terms.iter().map(|term| term.eval(t)).sum::<f64>()),
            ),
            Forcing::Function(f) => f(t),
        }
    }

    /// Upper bound on `sup_t ‖g(t)‖`, available for term sums.
    pub fn sup_norm_bound(&self) -> Option<f64> {
        match self {
            Forcing::Terms(components) => Some(
                components
                    .iter()
                    .map(|terms| {
                        terms
                            .iter()
                            .map(ForcingTerm::amplitude)
                            .sum::<f64>()
                            .powi(2)
                    })
                    .sum::<f64>()
                    .sqrt(),
            ),
            Forcing::Function(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Terms(components) => components
                .iter()
                .all(|terms| terms.iter().all(|t| t.amplitude() == 0.0)),
            Forcing::Function(_) => false,
        }
    }
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Terms(t) => f.debug_tuple("Terms").field(t).finish(),
            Forcing::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// `y' + L y + Ls y = g(t)` with `L` symmetric positive (semi)definite and
/// `Ls` skew-symmetric.
#[derive(Clone)]
pub struct LinearSkewProblem {
    pub dim: usize,
    pub l: DMatrix<f64>,
    pub ls: DMatrix<f64>,
    pub forcing: Forcing,
    pub y0: StateVector,
    pub exact: Option<TimeFunction>,
    /// Smallest eigenvalue of `L`.
    pub l0: f64,
}

impl fmt::Debug for LinearSkewProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearSkewProblem")
            .field("dim", &self.dim)
            .field("l", &self.l)
            .field("ls", &self.ls)
            .field("forcing", &self.forcing)
            .field("y0", &self.y0)
            .field("exact", &self.exact.is_some())
            .field("l0", &self.l0)
            .finish()
    }
}

impl LinearSkewProblem {
    /// Validates the structure of `L` and `Ls`. `L` may be semidefinite
    /// (`l0 = 0`); indefinite `L` is rejected.
    pub fn new(
        l: DMatrix<f64>,
        ls: DMatrix<f64>,
        forcing: Forcing,
        y0: StateVector,
    ) -> Result<Self> {
        let dim = y0.len();
        if dim == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        for (name, m) in [("L", &l), ("Ls", &ls)] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidProblem(format!(
                    "{name} is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidProblem(format!(
                    "{name} has non-finite entries"
                )));
            }
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("y0 has non-finite entries".into()));
        }
        if let Forcing::Terms(c) = &forcing {
            if c.len() != dim {
                return Err(Error::InvalidProblem(format!(
                    "forcing has {} components, expected {dim}",
                    c.len()
                )));
            }
        }
        if (&l - l.transpose()).norm() > STRUCTURE_TOL * l.norm() {
            return Err(Error::InvalidProblem("L is not symmetric".into()));
        }
        if (&ls + ls.transpose()).norm() > STRUCTURE_TOL * ls.norm().max(1.0) {
            return Err(Error::InvalidProblem("Ls is not skew-symmetric".into()));
        }
        let l0 = l.clone().symmetric_eigenvalues().min();
        if l0 < -STRUCTURE_TOL * l.norm().max(1.0) {
            return Err(Error::InvalidProblem(format!(
                "L is indefinite (smallest eigenvalue {l0:e})"
            )));
        }
        Ok(Self {
            dim,
            l,
            ls,
            forcing,
            y0,
            exact: None,
            l0: l0.max(0.0),
        })
    }

    pub fn with_exact(mut self, exact: TimeFunction) -> Self {
        self.exact = Some(exact);
        self
    }

    /// The attached exact solution; the zero solution when there is none but
    /// both forcing and initial data vanish.
    pub fn exact_at(&self, t: f64) -> Result<StateVector> {
        match &self.exact {
            Some(f) => Ok(f(t)),
            None if self.forcing.is_zero() && self.y0.iter().all(|&v| v == 0.0) => {
                Ok(DVector::zeros(self.dim))
            }
            None => Err(Error::MissingOracle),
        }
    }

    pub fn has_oracle(&self) -> bool {
        self.exact_at(0.0).is_ok()
    }

    /// `L + Ls`.
    pub fn operator(&self) -> DMatrix<f64> {
        &self.l + &self.ls
    }

    pub fn has_skew_part(&self) -> bool {
        self.ls.iter().any(|&v| v != 0.0)
    }
}

/// Right-hand side of `y' = f(t, y)`.
pub trait RightHandSide {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, y: &StateVector) -> StateVector;

    /// `∂f/∂y`; forward differences unless overridden.
    fn jacobian(&self, t: f64, y: &StateVector) -> DMatrix<f64> {
        fd_jacobian(self, t, y)
    }

    /// `f(t, y) = J y + c(t)` with `J` independent of `t`.
    fn is_affine(&self) -> bool {
        false
    }
}

fn fd_jacobian<R: RightHandSide + ?Sized>(f: &R, t: f64, y: &StateVector) -> DMatrix<f64> {
    let f0 = f.eval(t, y);
    let n = f.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut yp = y.clone();
    for j in 0..n {
        let dy = f64::EPSILON.sqrt() * y[j].abs().max(1.0);
        yp[j] = y[j] + dy;
        jac.set_column(j, &((f.eval(t, &yp) - &f0) / dy));
        yp[j] = y[j];
    }
    jac
}

impl RightHandSide for LinearSkewProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &StateVector) -> StateVector {
        self.forcing.eval(t) - self.operator() * y
    }

    fn jacobian(&self, _t: f64, _y: &StateVector) -> DMatrix<f64> {
        -self.operator()
    }

    fn is_affine(&self) -> bool {
        true
    }
}

/// Closure-backed right-hand side with finite-difference Jacobian.
pub struct FnRhs<F> {
    dim: usize,
    f: F,
    affine: bool,
}

impl<F> FnRhs<F>
where
    F: Fn(f64, &StateVector) -> StateVector,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            f,
            affine: false,
        }
    }

    /// Declare `f` affine in `y`; enables the direct solve.
    pub fn affine(mut self) -> Self {
        self.affine = true;
        self
    }
}

impl<F> RightHandSide for FnRhs<F>
where
    F: Fn(f64, &StateVector) -> StateVector,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &StateVector) -> StateVector {
        (self.f)(t, y)
    }

    fn jacobian(&self, t: f64, y: &StateVector) -> DMatrix<f64> {
        if !self.affine {
            return fd_jacobian(self, t, y);
        }
        // unit steps are exact for affine maps
        let f0 = self.eval(t, y);
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        let mut yp = y.clone();
        for j in 0..self.dim {
            yp[j] = y[j] + 1.0;
            jac.set_column(j, &(self.eval(t, &yp) - &f0));
            yp[j] = y[j];
        }
        jac
    }

    fn is_affine(&self) -> bool {
        self.affine
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

fn check_step(h: f64) -> Result<f64> {
    let h = ensure_finite("h", h)?;
    if h <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {h}"
        )));
    }
    Ok(h)
}

/// One step of `Σ aₘ y_{n−1+m} = h Σ bₘ f(t_{n−1+m}, y_{n−1+m})` for a general
/// right-hand side, returning `y_{n+1}`.
pub fn step_lmm<R: RightHandSide + ?Sized>(
    s: &SchemeCoefficients,
    f: &R,
    t_n: f64,
    y_prev: &StateVector,
    y_cur: &StateVector,
    h: f64,
    newton: &NewtonOptions,
) -> Result<StateVector> {
    let h = check_step(h)?;
    let dim = f.dim();
    check_dims(dim, y_prev.len())?;
    check_dims(dim, y_cur.len())?;
    let [a0, a1, a2] = s.a;
    let [b0, b1, b2] = s.b;
    let t_next = t_n + h;

    let mut known = -a1 * y_cur - a0 * y_prev;
    if b1 != 0.0 {
        known += h * b1 * f.eval(t_n, y_cur);
    }
    if b0 != 0.0 {
        known += h * b0 * f.eval(t_n - h, y_prev);
    }
    if b2 == 0.0 {
        return Ok(known / a2);
    }

    let identity = DMatrix::<f64>::identity(dim, dim);
    if f.is_affine() {
        let zero = DVector::zeros(dim);
        let jac = f.jacobian(t_next, &zero);
        let offset = f.eval(t_next, &zero);
        let lu = (a2 * &identity - h * b2 * jac).lu();
        return lu
            .solve(&(known + h * b2 * offset))
            .ok_or(Error::Singular("implicit step matrix"));
    }

    let mut y = 2.0 * y_cur - y_prev;
    let mut last = f64::INFINITY;
    for _ in 0..newton.max_iter {
        let residual = a2 * &y - h * b2 * f.eval(t_next, &y) - &known;
        let jac = a2 * &identity - h * b2 * f.jacobian(t_next, &y);
        let delta = jac
            .lu()
            .solve(&residual)
            .ok_or(Error::Singular("newton jacobian"))?;
        y -= &delta;
        last = delta.norm();
        if !last.is_finite() {
            break;
        }
        if last <= newton.tol * (1.0 + y.norm()) {
            return Ok(y);
        }
    }
    Err(Error::NewtonDivergence {
        iterations: newton.max_iter,
        residual: last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepperKind {
    /// Both `L` and `Ls` implicit, any scheme.
    Implicit,
    /// Generalized BDF2 with Gear extrapolation `2yₙ − yₙ₋₁` of the skew term.
    ImexBdf2,
    /// Generalized AM2 with Adams–Bashforth extrapolation `3/2 yₙ − 1/2 yₙ₋₁`
    /// of the skew term.
    ImexAmab2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Starter {
    /// `y₁ = y(h)` from the problem's exact solution.
    ExactInjection,
    /// One trapezoid (Crank–Nicolson) step.
    TrapezoidOneStep,
}

/// How the forcing enters a step on a [`LinearSkewProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForcingMode {
    /// `h σ(1) g(t*)` with `t* = Σ bₘ t_{n−1+m} / σ(1)`: `t_{n+1}` for the
    /// BDF2 family, `t_n + h/2` for the AM2 family.
    Collocated,
    /// `h Σ bₘ g(t_{n−1+m})`.
    PerLevel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub scheme: SchemeCoefficients,
    pub h: f64,
    pub starter: Starter,
    pub forcing: ForcingMode,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl StepperConfig {
    pub fn new(scheme: SchemeCoefficients, h: f64) -> Self {
        let newton = NewtonOptions::default();
        Self {
            scheme,
            h,
            starter: Starter::ExactInjection,
            forcing: ForcingMode::Collocated,
            newton_tol: newton.tol,
            newton_max_iter: newton.max_iter,
        }
    }

    pub fn with_starter(mut self, starter: Starter) -> Self {
        self.starter = starter;
        self
    }

    pub fn with_forcing(mut self, forcing: ForcingMode) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
        }
    }

    fn validate(&self) -> Result<()> {
        check_step(self.h)?;
        if self.newton_tol.is_nan() || self.newton_tol <= 0.0 || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "newton tolerance and iteration limit must be positive".into(),
            ));
        }
        Ok(())
    }
}

enum Factor {
    Cholesky(nalgebra::Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
    Diagonal(f64),
}

impl Factor {
    fn new(m: DMatrix<f64>, symmetric: bool) -> Result<Self> {
        if symmetric {
            if let Some(ch) = m.clone().cholesky() {
                return Ok(Factor::Cholesky(ch));
            }
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("implicit step matrix"));
        }
        Ok(Factor::Lu(lu))
    }

    fn solve(&self, rhs: StateVector) -> Result<StateVector> {
        match self {
            Factor::Cholesky(ch) => Ok(ch.solve(&rhs)),
            Factor::Lu(lu) => lu
                .solve(&rhs)
                .ok_or(Error::Singular("implicit step matrix")),
            Factor::Diagonal(d) => Ok(rhs / *d),
        }
    }
}

/// Stepper for a [`LinearSkewProblem`] with a prefactored implicit matrix.
///
/// | kind        | implicit matrix          | explicit skew term       |
/// |-------------|--------------------------|--------------------------|
/// | `Implicit`  | `a₂ I + h b₂ (L + Ls)`   | none                     |
/// | `ImexBdf2`  | `3/2 I + h α L`          | `h Ls (2yₙ − yₙ₋₁)`      |
/// | `ImexAmab2` | `I + h α L`              | `h Ls (3/2 yₙ − 1/2 yₙ₋₁)` |
pub struct LinearStepper<'p> {
    problem: &'p LinearSkewProblem,
    kind: StepperKind,
    scheme: SchemeCoefficients,
    h: f64,
    forcing: ForcingMode,
    /// Collocation time minus `t_n`, in units of `h`.
    forcing_shift: Option<f64>,
    skew_weights: [f64; 2],
    implicit_op: DMatrix<f64>,
    factor: Factor,
}

impl<'p> LinearStepper<'p> {
    pub fn new(
        problem: &'p LinearSkewProblem,
        kind: StepperKind,
        scheme: SchemeCoefficients,
        h: f64,
        forcing: ForcingMode,
    ) -> Result<Self> {
        let h = check_step(h)?;
        let expected = match kind {
            StepperKind::Implicit => None,
            StepperKind::ImexBdf2 => Some(SchemeFamily::GeneralizedBdf2),
            StepperKind::ImexAmab2 => Some(SchemeFamily::GeneralizedAm2),
        };
        if let Some(family) = expected {
            if scheme.family != family {
                return Err(Error::InvalidParameter(format!(
                    "{kind:?} needs a {family:?} scheme, got {:?}",
                    scheme.family
                )));
            }
        }
        let (implicit_op, skew_weights) = match kind {
            StepperKind::Implicit => (problem.operator(), [0.0, 0.0]),
            StepperKind::ImexBdf2 => (problem.l.clone(), [-1.0, 2.0]),
            StepperKind::ImexAmab2 => (problem.l.clone(), [-0.5, 1.5]),
        };
        let [_, _, a2] = scheme.a;
        let b2 = scheme.b[2];
        let factor = if b2 == 0.0 {
            Factor::Diagonal(a2)
        } else {
            let identity = DMatrix::<f64>::identity(problem.dim, problem.dim);
            let symmetric = kind != StepperKind::Implicit || !problem.has_skew_part();
            Factor::new(a2 * identity + h * b2 * &implicit_op, symmetric)?
        };
        let forcing_shift = match scheme.family {
            SchemeFamily::GeneralizedBdf2 => Some(1.0),
            SchemeFamily::GeneralizedAm2 => Some(0.5),
            SchemeFamily::Custom => scheme.forcing_offset().map(|o| o - 1.0),
        };
        Ok(Self {
            problem,
            kind,
            scheme,
            h,
            forcing,
            forcing_shift,
            skew_weights,
            implicit_op,
            factor,
        })
    }

    pub fn kind(&self) -> StepperKind {
        self.kind
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    fn forcing_term(&self, t_n: f64) -> StateVector {
        let g = &self.problem.forcing;
        let h = self.h;
        let b = self.scheme.b;
        match (self.forcing, self.forcing_shift) {
            (ForcingMode::Collocated, Some(shift)) => {
                self.scheme.sigma(1.0) * g.eval(t_n + shift * h)
            }
            _ => {
                let mut acc = DVector::zeros(self.problem.dim);
                for (m, &bm) in b.iter().enumerate() {
                    if bm != 0.0 {
                        acc += bm * g.eval(t_n + (m as f64 - 1.0) * h);
                    }
                }
                acc
            }
        }
    }

    /// `y_{n+1}` from `(y_{n−1}, y_n)` at `t_n`.
    pub fn step(&self, t_n: f64, y_prev: &StateVector, y_cur: &StateVector) -> Result<StateVector> {
        let dim = self.problem.dim;
        check_dims(dim, y_prev.len())?;
        check_dims(dim, y_cur.len())?;
        let [a0, a1, _] = self.scheme.a;
        let [b0, b1, _] = self.scheme.b;
        let h = self.h;

        let mut rhs = -a1 * y_cur - a0 * y_prev;
        let lagged = b1 * y_cur + b0 * y_prev;
        rhs -= h * (&self.implicit_op * lagged);
        if self.kind != StepperKind::Implicit {
            let [w_prev, w_cur] = self.skew_weights;
            rhs -= h * (&self.problem.ls * (w_cur * y_cur + w_prev * y_prev));
        }
        rhs += h * self.forcing_term(t_n);
        self.factor.solve(rhs)
    }
}

/// `(y₀, y₁)` for a two-step run starting at `t = 0`.
pub fn start(p: &LinearSkewProblem, cfg: &StepperConfig) -> Result<(StateVector, StateVector)> {
    cfg.validate()?;
    let y0 = p.y0.clone();
    let y1 = match cfg.starter {
        Starter::ExactInjection => p.exact_at(cfg.h)?,
        Starter::TrapezoidOneStep => {
            let trapezoid = SchemeCoefficients::am2(0.5)?;
            LinearStepper::new(
                p,
                StepperKind::Implicit,
                trapezoid,
                cfg.h,
                ForcingMode::PerLevel,
            )?
            .step(0.0, &y0, &y0)?
        }
    };
    Ok((y0, y1))
}

/// One IMEX-BDF2 step:
/// `(3/2 I + hαL) y_{n+1} = 2yₙ − 1/2 yₙ₋₁ − hL((2−2α)yₙ + (α−1)yₙ₋₁) − hLs(2yₙ − yₙ₋₁) + h g(t_{n+1})`.
pub fn step_imex_bdf2(
    alpha: f64,
    p: &LinearSkewProblem,
    t_n: f64,
    y_prev: &StateVector,
    y_cur: &StateVector,
    h: f64,
) -> Result<StateVector> {
    let scheme = SchemeCoefficients::bdf2(alpha)?;
    LinearStepper::new(p, StepperKind::ImexBdf2, scheme, h, ForcingMode::Collocated)?
        .step(t_n, y_prev, y_cur)
}

/// One IMEX-AM-AB2 step:
/// `(I + hαL) y_{n+1} = yₙ − hL((3/2−2α)yₙ + (α−1/2)yₙ₋₁) − hLs(3/2 yₙ − 1/2 yₙ₋₁) + h g(tₙ + h/2)`.
pub fn step_imex_amab2(
    alpha: f64,
    p: &LinearSkewProblem,
    t_n: f64,
    y_prev: &StateVector,
    y_cur: &StateVector,
    h: f64,
) -> Result<StateVector> {
    let scheme = SchemeCoefficients::am2(alpha)?;
    LinearStepper::new(
        p,
        StepperKind::ImexAmab2,
        scheme,
        h,
        ForcingMode::Collocated,
    )?
    .step(t_n, y_prev, y_cur)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub h: f64,
    /// Set when the run was cut short by a state exceeding [`BLOW_UP_THRESHOLD`]
    /// (or turning non-finite); the offending state is not recorded.
    pub blew_up: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|y| y.norm()).collect()
    }

    /// State recorded at the step nearest to `t`, if `t` is a grid time.
    pub fn state_at(&self, t: f64) -> Option<&StateVector> {
        let n = steps_for(t, self.h).ok()?;
        self.states.get(n)
    }
}

/// Number of steps `N` with `N h = t_end` (to 1e-9 relative).
pub fn steps_for(t_end: f64, h: f64) -> Result<usize> {
    let h = check_step(h)?;
    let t_end = ensure_finite("t_end", t_end)?;
    let n = (t_end / h).round();
    if n < 0.0 || (n * h - t_end).abs() > 1e-9 * t_end.abs().max(h) {
        return Err(Error::NonCommensurate { t_end, h });
    }
    Ok(n as usize)
}

fn overflowed(y: &StateVector) -> bool {
    y.iter()
        .any(|v| !v.is_finite() || v.abs() > BLOW_UP_THRESHOLD)
}

/// Run `start` and then `N − 1` steps, recording every state.
pub fn integrate(
    p: &LinearSkewProblem,
    cfg: &StepperConfig,
    kind: StepperKind,
    t_end: f64,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n_steps = steps_for(t_end, cfg.h)?;
    if n_steps == 0 {
        return Err(Error::InvalidParameter(format!(
            "t_end = {t_end} gives no steps"
        )));
    }
    let stepper = LinearStepper::new(p, kind, cfg.scheme, cfg.h, cfg.forcing)?;
    let (y0, y1) = start(p, cfg)?;
    let h = cfg.h;

    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        h,
        blew_up: false,
    };
    traj.times.push(0.0);
    traj.states.push(y0);
    if overflowed(&y1) {
        traj.blew_up = true;
        return Ok(traj);
    }
    traj.times.push(h);
    traj.states.push(y1);

    for n in 1..n_steps {
        let t_n = n as f64 * h;
        let next = stepper.step(t_n, &traj.states[n - 1], &traj.states[n])?;
        if overflowed(&next) {
            traj.blew_up = true;
            break;
        }
        traj.times.push((n + 1) as f64 * h);
        traj.states.push(next);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    fn scalar_problem(l: f64) -> LinearSkewProblem {
        LinearSkewProblem::new(dmatrix![l], dmatrix![0.0], Forcing::zero(1), dvector![1.0]).unwrap()
    }

    fn rotation_problem(scale: f64) -> LinearSkewProblem {
        LinearSkewProblem::new(
            dmatrix![10.0, 0.0; 0.0, 10.0],
            dmatrix![0.0, -scale; scale, 0.0],
            Forcing::zero(2),
            dvector![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn problem_validation() {
        let z = Forcing::zero(2);
        let y0 = dvector![1.0, 0.0];
        assert!(LinearSkewProblem::new(
            dmatrix![1.0, 2.0; 0.0, 1.0],
            DMatrix::zeros(2, 2),
            z.clone(),
            y0.clone()
        )
        .is_err());
        assert!(LinearSkewProblem::new(
            DMatrix::identity(2, 2),
            dmatrix![0.0, 1.0; 1.0, 0.0],
            z.clone(),
            y0.clone()
        )
        .is_err());
        assert!(LinearSkewProblem::new(
            dmatrix![1.0, 0.0; 0.0, -1.0],
            DMatrix::zeros(2, 2),
            z.clone(),
            y0.clone()
        )
        .is_err());
        assert!(LinearSkewProblem::new(
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 3),
            z.clone(),
            y0.clone()
        )
        .is_err());
        let p = LinearSkewProblem::new(dmatrix![2.0, 1.0; 1.0, 2.0], DMatrix::zeros(2, 2), z, y0)
            .unwrap();
        assert_abs_diff_eq!(p.l0, 1.0, epsilon = 1e-14);
        assert!(matches!(p.exact_at(1.0), Err(Error::MissingOracle)));
    }

    #[test]
    fn forcing_terms() {
        let g = Forcing::Terms(vec![
            vec![
                ForcingTerm::Sin {
                    coef: 1.0,
                    omega: 1.0,
                },
                ForcingTerm::Cos {
                    coef: 1.0,
                    omega: 2f64.sqrt(),
                },
            ],
            vec![ForcingTerm::Constant(-3.0)],
        ]);
        let v = g.eval(0.7);
        assert_abs_diff_eq!(
            v[0],
            0.7f64.sin() + (2f64.sqrt() * 0.7).cos(),
            epsilon = 1e-15
        );
        assert_eq!(v[1], -3.0);
        assert_abs_diff_eq!(g.sup_norm_bound().unwrap(), 13f64.sqrt(), epsilon = 1e-15);
        assert!(Forcing::zero(3).is_zero());
        assert!(!g.is_zero());
    }

    #[test]
    fn step_lmm_examples() {
        let newton = NewtonOptions::default();
        let bdf2 = SchemeCoefficients::bdf2(1.0).unwrap();
        let zero = FnRhs::new(1, |_t, y: &StateVector| y * 0.0).affine();
        let one = dvector![1.0];
        let y = step_lmm(&bdf2, &zero, 0.0, &one, &one, 0.3, &newton).unwrap();
        assert_eq!(y[0], 1.0);

        let decay = FnRhs::new(1, |_t, y: &StateVector| -y).affine();
        let y = step_lmm(&bdf2, &decay, 0.0, &one, &one, 1.0, &newton).unwrap();
        assert_abs_diff_eq!(y[0], 0.6, epsilon = 1e-15);

        let am2 = SchemeCoefficients::am2(0.5).unwrap();
        for junk in [-5.0, 0.0, 123.0] {
            let y = step_lmm(&am2, &decay, 0.0, &dvector![junk], &one, 1.0, &newton).unwrap();
            assert_abs_diff_eq!(y[0], 1.0 / 3.0, epsilon = 1e-15);
        }

        assert!(step_lmm(&bdf2, &decay, 0.0, &one, &one, 0.0, &newton).is_err());
        assert!(matches!(
            step_lmm(&bdf2, &decay, 0.0, &dvector![1.0, 2.0], &one, 0.1, &newton),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn newton_matches_direct_solve_on_affine_rhs() {
        let f =
            |t: f64, y: &StateVector| dvector![-3.0 * y[0] + y[1] + t.sin(), -y[0] - 2.0 * y[1]];
        let affine = FnRhs::new(2, f).affine();
        let generic = FnRhs::new(2, f);
        let s = SchemeCoefficients::bdf2(0.9).unwrap();
        let (a, b) = (dvector![0.3, -0.1], dvector![0.25, -0.05]);
        let newton = NewtonOptions::default();
        let direct = step_lmm(&s, &affine, 0.4, &a, &b, 0.1, &newton).unwrap();
        let iter = step_lmm(&s, &generic, 0.4, &a, &b, 0.1, &newton).unwrap();
        assert_abs_diff_eq!((direct - iter).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn newton_failure_is_reported() {
        // y' = y² with a huge step has no nearby root for the implicit equation
        let f = FnRhs::new(1, |_t, y: &StateVector| dvector![y[0] * y[0]]);
        let s = SchemeCoefficients::bdf2(1.0).unwrap();
        let opts = NewtonOptions {
            tol: 1e-14,
            max_iter: 5,
        };
        let r = step_lmm(&s, &f, 0.0, &dvector![1.0], &dvector![2.0], 10.0, &opts);
        assert!(matches!(r, Err(Error::NewtonDivergence { .. })), "{r:?}");
    }

    #[test]
    fn explicit_scheme_needs_no_solve() {
        let ab2 = SchemeCoefficients::am2(0.0).unwrap();
        let decay = FnRhs::new(1, |_t, y: &StateVector| -y);
        let y = step_lmm(
            &ab2,
            &decay,
            0.0,
            &dvector![1.0],
            &dvector![1.0],
            0.5,
            &NewtonOptions::default(),
        )
        .unwrap();
        // y + h(3/2 (−1) − 1/2 (−1)) = 1 − 0.5
        assert_abs_diff_eq!(y[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn imex_bdf2_rotation_example() {
        let p = rotation_problem(1.0);
        let y = dvector![1.0, 0.0];
        for h in [0.01, 0.1, 1.0, 7.0] {
            let next = step_imex_bdf2(1.0, &p, 0.0, &y, &y, h).unwrap();
            let d = 1.5 + 10.0 * h;
            assert_abs_diff_eq!(next[0], 1.5 / d, epsilon = 1e-15);
            assert_abs_diff_eq!(next[1], -h / d, epsilon = 1e-15);
        }
        let zero = dvector![0.0, 0.0];
        assert_eq!(
            step_imex_bdf2(0.8, &p, 0.0, &zero, &zero, 0.1).unwrap(),
            zero
        );
    }

    #[test]
    fn imex_amab2_examples() {
        let p = scalar_problem(1.0);
        let y = step_imex_amab2(0.5, &p, 0.0, &dvector![7.0], &dvector![1.0], 1.0).unwrap();
        assert_abs_diff_eq!(y[0], 1.0 / 3.0, epsilon = 1e-15);

        // (1 + 0.6) y = (1 − 0.1·10·(0.3 + 0.1), −0.1·(3/2 − 1/2)) = (0.6, −0.1)
        let p = rotation_problem(1.0);
        let v = dvector![1.0, 0.0];
        let y = step_imex_amab2(0.6, &p, 0.0, &v, &v, 0.1).unwrap();
        assert_abs_diff_eq!(y[0], 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], -0.0625, epsilon = 1e-15);

        let zero = dvector![0.0, 0.0];
        assert_eq!(
            step_imex_amab2(0.6, &p, 3.0, &zero, &zero, 0.1).unwrap(),
            zero
        );
    }

    #[test]
    fn imex_requires_matching_family() {
        let p = rotation_problem(1.0);
        let s = SchemeCoefficients::am2(0.6).unwrap();
        assert!(
            LinearStepper::new(&p, StepperKind::ImexBdf2, s, 0.1, ForcingMode::Collocated).is_err()
        );
    }

    #[test]
    fn starters() {
        let p = scalar_problem(1.0);
        let cfg = StepperConfig::new(SchemeCoefficients::bdf2(1.0).unwrap(), 1.0)
            .with_starter(Starter::TrapezoidOneStep);
        let (y0, y1) = start(&p, &cfg).unwrap();
        assert_eq!(y0[0], 1.0);
        assert_abs_diff_eq!(y1[0], 1.0 / 3.0, epsilon = 1e-15);

        let still = LinearSkewProblem::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            Forcing::zero(2),
            dvector![0.4, -2.0],
        )
        .unwrap();
        let (y0, y1) = start(&still, &cfg).unwrap();
        assert_eq!(y0, y1);

        let exact = cfg.with_starter(Starter::ExactInjection);
        assert!(matches!(start(&p, &exact), Err(Error::MissingOracle)));
        let with_oracle = p.with_exact(Arc::new(|t| dvector![(-t).exp()]));
        let (_, y1) = start(&with_oracle, &exact).unwrap();
        assert_eq!(y1[0], (-1.0f64).exp());
    }

    #[test]
    fn integrate_bookkeeping() {
        let p = scalar_problem(1.0).with_exact(Arc::new(|t| dvector![(-t).exp()]));
        let cfg = StepperConfig::new(SchemeCoefficients::bdf2(1.0).unwrap(), 0.25);
        let traj = integrate(&p, &cfg, StepperKind::Implicit, 0.25).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.states[1][0], (-0.25f64).exp());

        let traj = integrate(&p, &cfg, StepperKind::Implicit, 10.0).unwrap();
        assert_eq!(traj.len(), 41);
        assert_eq!(traj.times[40], 10.0);
        assert!(!traj.blew_up);
        assert!(traj.state_at(5.0).is_some());

        assert!(matches!(
            integrate(&p, &cfg, StepperKind::Implicit, 1.1),
            Err(Error::NonCommensurate { .. })
        ));
        assert!(integrate(&p, &cfg, StepperKind::Implicit, 0.0).is_err());
    }

    #[test]
    fn blow_up_truncates() {
        // explicit AB2 far outside its stability region
        let p = scalar_problem(100.0).with_exact(Arc::new(|t| dvector![(-100.0 * t).exp()]));
        let cfg = StepperConfig::new(SchemeCoefficients::am2(0.0).unwrap(), 1.0);
        let traj = integrate(&p, &cfg, StepperKind::Implicit, 1000.0).unwrap();
        assert!(traj.blew_up);
        assert!(traj.len() < 1001);
        assert!(traj.states.iter().all(|y| y[0].abs() <= BLOW_UP_THRESHOLD));
    }

    #[test]
    fn steps_for_tolerance() {
        assert_eq!(steps_for(1.0, 1e-3).unwrap(), 1000);
        assert_eq!(steps_for(100.0, 5e-4).unwrap(), 200_000);
        assert!(steps_for(1.0, 0.3).is_err());
        assert!(steps_for(1.0, -0.1).is_err());
    }
}
