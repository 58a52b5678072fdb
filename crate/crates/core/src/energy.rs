//! G-norm energy for the generalized BDF2 scheme.
//!
//! With `V_n = (y_{n−1}, y_n)` and
//!
//! ```text
//! G = 1/4 [[2α−1, −2α], [−2α, 2α+3]]
//! ```
//!
//! the scheme satisfies the telescoping identity
//!
//! ```text
//! ⟨3/2 y₊ − 2y + 1/2 y₋, α y₊ + (2−2α) y + (α−1) y₋⟩
//!     = ‖V₊‖²_G − ‖V‖²_G + (4α−3)/4 ‖y₊ − 2y + y₋‖²
//! ```
//!
//! which is the basis of the uniform-in-time bounds for the IMEX variant.

use nalgebra::{Matrix2, SymmetricEigen};

use crate::error::{ensure_finite, Error, Result};
use crate::integrators::{LinearSkewProblem, Trajectory};
use crate::StateVector;

/// Relative growth of the energy tolerated between the two halves of a run.
pub const BOUNDED_RATIO: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GMatrix {
    pub alpha: f64,
    pub entries: Matrix2<f64>,
}

impl GMatrix {
    pub fn new(alpha: f64) -> Result<Self> {
        let alpha = ensure_finite("alpha", alpha)?;
        let entries = Matrix2::new(
            2.0 * alpha - 1.0,
            -2.0 * alpha,
            -2.0 * alpha,
            2.0 * alpha + 3.0,
        ) * 0.25;
        Ok(Self { alpha, entries })
    }

    /// `(4α − 3) / 16`.
    pub fn determinant(&self) -> f64 {
        self.entries.determinant()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.entries[(0, 0)] > 0.0 && self.determinant() > 0.0
    }

    /// Eigenvalues from a direct symmetric solve, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let ev = SymmetricEigen::new(self.entries).eigenvalues;
        [ev.min(), ev.max()]
    }
}

fn check_same_len(a: &StateVector, b: &StateVector) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        })
    }
}

/// `‖V‖²_G` for `V = (y_prev, y_cur)`, applying `G` blockwise.
pub fn g_norm_sq(y_prev: &StateVector, y_cur: &StateVector, alpha: f64) -> Result<f64> {
    check_same_len(y_prev, y_cur)?;
    let g = GMatrix::new(alpha)?.entries;
    Ok(g[(0, 0)] * y_prev.dot(y_prev)
        + 2.0 * g[(0, 1)] * y_prev.dot(y_cur)
        + g[(1, 1)] * y_cur.dot(y_cur))
}

/// Left side minus right side of the energy identity; zero up to rounding.
pub fn bdf2_energy_identity_residual(
    y_prev: &StateVector,
    y_cur: &StateVector,
    y_next: &StateVector,
    alpha: f64,
) -> Result<f64> {
    check_same_len(y_prev, y_cur)?;
    check_same_len(y_prev, y_next)?;
    let rho = 1.5 * y_next - 2.0 * y_cur + 0.5 * y_prev;
    let sigma = alpha * y_next + (2.0 - 2.0 * alpha) * y_cur + (alpha - 1.0) * y_prev;
    let second_diff = y_next - 2.0 * y_cur + y_prev;
    let lhs = rho.dot(&sigma);
    let rhs = g_norm_sq(y_cur, y_next, alpha)? - g_norm_sq(y_prev, y_cur, alpha)?
        + (4.0 * alpha - 3.0) / 4.0 * second_diff.norm_squared();
    Ok(lhs - rhs)
}

/// `(λ_min, λ_max)` of `G`, so that `λ_min ‖V‖² ≤ ‖V‖²_G ≤ λ_max ‖V‖²`.
pub fn gnorm_equivalence_constants(alpha: f64) -> Result<(f64, f64)> {
    let alpha = ensure_finite("alpha", alpha)?;
    if alpha <= 0.75 {
        return Err(Error::InvalidParameter(format!(
            "G is positive definite only for alpha > 3/4, got {alpha}"
        )));
    }
    let root = alpha.hypot(1.0);
    // λ₋ via det / λ₊ avoids cancellation near α = 3/4
    let hi = 0.25 + (alpha + root) / 2.0;
    let lo = (4.0 * alpha - 3.0) / 16.0 / hi;
    Ok((lo, hi))
}

/// Largest `h` with `h (l₀(α−1)²/2 + (α−1)²/2 + α²/(2C₁)) ≤ (4α−3)/4`.
/// `c1 = ∞` is allowed (no skew part).
pub fn max_step_bdf2(alpha: f64, l0: f64, c1: f64) -> Result<f64> {
    let alpha = ensure_finite("alpha", alpha)?;
    let l0 = ensure_finite("l0", l0)?;
    if alpha < 0.75 || l0 <= 0.0 || c1.is_nan() || c1 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need alpha >= 3/4, l0 > 0, c1 > 0; got alpha={alpha}, l0={l0}, c1={c1}"
        )));
    }
    let d = (alpha - 1.0).powi(2);
    let denom = l0 * d / 2.0 + d / 2.0 + alpha * alpha / (2.0 * c1);
    let num = (4.0 * alpha - 3.0) / 4.0;
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(num / denom)
}

/// Largest `C₁` with `⟨Ly, y⟩ ≥ C₁ ‖Ls y‖²` for all `y`; `∞` when `Ls = 0`
/// and `0` when `L` is singular on a direction `Ls` does not annihilate.
pub fn skew_dominance_constant(p: &LinearSkewProblem) -> f64 {
    if !p.has_skew_part() {
        return f64::INFINITY;
    }
    let Some(chol) = p.l.clone().cholesky() else {
        return 0.0;
    };
    // smallest generalized eigenvalue of (L, LsᵀLs) = 1 / λ_max(R⁻¹ LsᵀLs R⁻ᵀ)
    let r = chol.l();
    let Some(r_inv) = r.clone().try_inverse() else {
        return 0.0;
    };
    let m = &r_inv * p.ls.transpose() * &p.ls * r_inv.transpose();
    let top = m.symmetric_eigenvalues().max();
    if top <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / top
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub n: usize,
    /// `‖V_n‖²_G`.
    pub g_norm_sq: f64,
    /// `E_n = ‖V_n‖²_G + (h l₀ / 32) ‖y_n‖²`.
    pub e_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub records: Vec<EnergyRecord>,
    /// `max E` over the second half of the run is at most [`BOUNDED_RATIO`]
    /// times the max over the first half.
    pub bounded: bool,
}

/// Energy records for `n ≥ 1`.
pub fn energy_series(traj: &Trajectory, alpha: f64, h: f64, l0: f64) -> Result<EnergySeries> {
    if traj.states.len() < 2 {
        return Err(Error::InvalidParameter(
            "energy series needs at least two states".into(),
        ));
    }
    GMatrix::new(alpha)?;
    let weight = ensure_finite("h", h)? * ensure_finite("l0", l0)? / 32.0;
    let records = traj
        .states
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let g = g_norm_sq(&w[0], &w[1], alpha)?;
            Ok(EnergyRecord {
                n: i + 1,
                g_norm_sq: g,
                e_n: g + weight * w[1].norm_squared(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bounded = !traj.blew_up && head_tail_bounded(records.iter().map(|r| r.e_n));
    Ok(EnergySeries { records, bounded })
}

/// `max(tail) ≤ BOUNDED_RATIO · max(head)` over two equal halves; a
/// non-finite value anywhere counts as unbounded.
pub fn head_tail_bounded(values: impl IntoIterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.into_iter().collect();
    if v.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let half = v.len() / 2;
    let head = v[..half].iter().copied().fold(0.0, f64::max);
    let tail = v[v.len() - half..].iter().copied().fold(0.0, f64::max);
    tail <= BOUNDED_RATIO * head
}

/// `C_a = min(1 + h l₀ C_l / 32, 3)` with `C_l = λ_min(G)`.
pub fn contraction_factor(alpha: f64, h: f64, l0: f64) -> Result<f64> {
    let (c_l, _) = gnorm_equivalence_constants(alpha)?;
    Ok((1.0 + h * l0 * c_l / 32.0).min(3.0))
}

/// `C_a E_{n+1} − E_n − h(1/2 + 2/l₀) g²` for consecutive records; the
/// one-step energy inequality holds when this is `≤ 0`.
pub fn contraction_excess(
    prev: &EnergyRecord,
    next: &EnergyRecord,
    c_a: f64,
    h: f64,
    l0: f64,
    g_sup: f64,
) -> f64 {
    c_a * next.e_n - prev.e_n - h * (0.5 + 2.0 / l0) * g_sup * g_sup
}
