//! Linear stability of two-step schemes.
//!
//! Applying a scheme to `y' = λy` gives the recursion whose characteristic
//! polynomial is `η(z, w) = ρ(w) − z σ(w)` with `z = λh`. The scheme is
//! A-stable when `b₂ > 0` and both roots of `η(it, ·)` lie in the closed unit
//! disc for every real `t`.
//!
//! Two conventions are kept apart:
//! - root containment in the *closed* disc, checked with
//!   [`CONTAINMENT_TOL`] slack (A-stability, region rasters);
//! - *strict* interior, `spectral_radius < 1`, used for the companion matrix
//!   when `Re z < 0`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{ensure_finite, Error, Result};
use crate::schemes::{SchemeCoefficients, SchemeFamily};

pub type ComplexScalar = Complex64;

/// Slack on the closed unit-disc test.
pub const CONTAINMENT_TOL: f64 = 1e-12;

/// Relative size below which the leading coefficient counts as zero.
pub const DEGENERATE_LEADING_TOL: f64 = 1e-14;

/// Offset of the imaginary-axis sampling from `±π/2` in angle space.
const AXIS_ANGLE_MARGIN: f64 = 1e-6;

/// Coefficients of `a w² + b w + c = η(z, w)` at a fixed `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicCoeffs {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

impl CharacteristicCoeffs {
    pub fn new(a: Complex64, b: Complex64, c: Complex64) -> Self {
        Self { a, b, c }
    }

    pub fn real(a: f64, b: f64, c: f64) -> Self {
        Self::new(a.into(), b.into(), c.into())
    }

    pub fn eval(&self, w: Complex64) -> Complex64 {
        (self.a * w + self.b) * w + self.c
    }
}

pub fn characteristic_coeffs(s: &SchemeCoefficients, z: Complex64) -> CharacteristicCoeffs {
    CharacteristicCoeffs {
        a: s.a[2] - s.b[2] * z,
        b: s.a[1] - s.b[1] * z,
        c: s.a[0] - s.b[0] * z,
    }
}

/// Roots of `a w² + b w + c`.
///
/// The larger root comes from `−(b ± √disc)/2a` with the sign that avoids
/// cancellation; the other one from `c / (a w₁)`. When the leading
/// coefficient is negligible the polynomial is treated as linear and the
/// second root is reported as `+∞`.
pub fn quadratic_roots(q: &CharacteristicCoeffs) -> Result<[Complex64; 2]> {
    let CharacteristicCoeffs { a, b, c } = *q;
    if a == Complex64::new(0.0, 0.0) && b == Complex64::new(0.0, 0.0) {
        return Err(Error::DegeneratePolynomial);
    }
    let infinite = Complex64::new(f64::INFINITY, 0.0);
    if a.norm() < DEGENERATE_LEADING_TOL * b.norm().max(c.norm()) {
        return Ok([-c / b, infinite]);
    }
    let sq = (b * b - 4.0 * a * c).sqrt();
    let big = if (b.conj() * sq).re >= 0.0 {
        -0.5 * (b + sq)
    } else {
        -0.5 * (b - sq)
    };
    if big == Complex64::new(0.0, 0.0) {
        // b = 0 and b² = 4ac, hence c = 0: double root at the origin
        return Ok([big, big]);
    }
    Ok([big / a, c / big])
}

/// Largest root modulus of `q`; `+∞` for a degenerate polynomial.
pub fn max_root_modulus(q: &CharacteristicCoeffs) -> f64 {
    match quadratic_roots(q) {
        Ok([w1, w2]) => w1.norm().max(w2.norm()),
        Err(_) => f64::INFINITY,
    }
}

/// Cohn–Schur test: both roots of `a w² + b w + c` lie in the closed unit
/// disc iff `|a| ≥ |c|` and `|a|² − |c|² ≥ |a b̄ − b c̄|`.
///
/// When `|a| = |c|` and `a b̄ = b c̄` the polynomial is self-inversive and the
/// two inequalities no longer decide containment; its roots are then on the
/// circle iff the root of the derivative, `−b/2a`, is in the disc.
pub fn cohn_schur_contained(q: &CharacteristicCoeffs) -> Result<bool> {
    let CharacteristicCoeffs { a, b, c } = *q;
    if a == Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidParameter(
            "Cohn-Schur test needs a nonzero leading coefficient".into(),
        ));
    }
    let (na, nb, nc) = (a.norm(), b.norm(), c.norm());
    let scale = na * na + na * nb + nb * nc + nc * nc;
    let slack = CONTAINMENT_TOL * scale;

    let gap = na * na - nc * nc;
    let cross = (a * b.conj() - b * c.conj()).norm();
    if gap < -slack || gap + slack < cross {
        return Ok(false);
    }
    if gap.abs() <= slack && cross <= slack {
        return Ok(nb <= 2.0 * na * (1.0 + CONTAINMENT_TOL));
    }
    Ok(true)
}

/// A-stability thresholds of the two families: `alpha ≥ 3/4` (BDF2) and
/// `alpha ≥ 1/2` (AM2).
pub fn a_stable_closed_form(family: SchemeFamily, alpha: f64) -> Result<bool> {
    let alpha = ensure_finite("alpha", alpha)?;
    family
        .a_stability_threshold()
        .map(|threshold| alpha >= threshold)
        .ok_or(Error::CustomScheme("no closed-form A-stability threshold"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// A `z` at which root containment fails.
    pub witness: Option<Complex64>,
    /// At the witness when unstable, otherwise the maximum over all samples.
    pub max_root_modulus: f64,
    /// Number of imaginary-axis points examined.
    pub samples: usize,
}

/// Points `z = i tan θ` with `θ` spanning `(−π/2, π/2)` uniformly, preceded by
/// `z = 0`.
pub fn imaginary_axis_samples(n: usize) -> impl Iterator<Item = Complex64> {
    let lo = -FRAC_PI_2 + AXIS_ANGLE_MARGIN;
    let step = (std::f64::consts::PI - 2.0 * AXIS_ANGLE_MARGIN) / (n.max(2) - 1) as f64;
    std::iter::once(Complex64::new(0.0, 0.0))
        .chain((0..n).map(move |k| Complex64::new(0.0, (lo + k as f64 * step).tan())))
}

/// Sampled A-stability check.
///
/// A `true` verdict is evidence from `n_samples` imaginary-axis points, not a
/// proof. Schemes failing the `b₂ > 0` gate are reported unstable with the
/// first imaginary-axis violation as witness, or else a point on the negative
/// real axis where a root leaves the disc.
pub fn a_stable_sampled(s: &SchemeCoefficients, n_samples: usize) -> Result<StabilityVerdict> {
    if n_samples < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 samples, got {n_samples}"
        )));
    }
    let s = s.normalized();
    let mut max_modulus: f64 = 0.0;
    let mut count = 0;
    for z in imaginary_axis_samples(n_samples) {
        count += 1;
        let q = characteristic_coeffs(&s, z);
        let contained = q.a != Complex64::new(0.0, 0.0) && cohn_schur_contained(&q)?;
        let modulus = max_root_modulus(&q);
        if !contained {
            return Ok(StabilityVerdict {
                stable: false,
                witness: Some(z),
                max_root_modulus: modulus,
                samples: count,
            });
        }
        max_modulus = max_modulus.max(modulus);
    }

    if s.b[2] > 0.0 {
        return Ok(StabilityVerdict {
            stable: true,
            witness: None,
            max_root_modulus: max_modulus,
            samples: count,
        });
    }

    // b₂ ≤ 0: the violation sits in the open left half-plane.
    let mut probes: Vec<Complex64> = (0..=12)
        .map(|k| Complex64::new(-(10f64.powi(k)), 0.0))
        .collect();
    if s.b[2] < 0.0 {
        probes.insert(0, Complex64::new(s.a[2] / s.b[2], 0.0));
    }
    let witness = probes
        .into_iter()
        .map(|z| (z, max_root_modulus(&characteristic_coeffs(&s, z))))
        .find(|&(_, m)| m > 1.0 + CONTAINMENT_TOL);
    Ok(StabilityVerdict {
        stable: false,
        witness: witness.map(|(z, _)| z),
        max_root_modulus: witness.map_or(max_modulus, |(_, m)| m),
        samples: count,
    })
}

/// Rectangle `[re_min, re_max] × [im_min, im_max]` of the z-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Window {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Self {
            re_min,
            re_max,
            im_min,
            im_max,
        }
    }

    pub fn square(half_width: f64) -> Self {
        Self::new(-half_width, half_width, -half_width, half_width)
    }

    fn validate(&self) -> Result<()> {
        for v in [self.re_min, self.re_max, self.im_min, self.im_max] {
            ensure_finite("window bound", v)?;
        }
        if self.re_min >= self.re_max || self.im_min >= self.im_max {
            return Err(Error::InvalidParameter(format!(
                "degenerate window {self:?}"
            )));
        }
        Ok(())
    }
}

/// Max root modulus of `η(z, ·)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRaster {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    /// Row-major in `i` (real axis): cell `(i, j)` is `cells[i * ny + j]`.
    pub cells: Vec<f64>,
}

impl RegionRaster {
    pub fn z(&self, i: usize, j: usize) -> Complex64 {
        grid_point(&self.window, self.nx, self.ny, i, j)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.ny + j]
    }

    pub fn is_stable(&self, i: usize, j: usize) -> bool {
        self.value(i, j) <= 1.0 + CONTAINMENT_TOL
    }

    pub fn stable_fraction(&self) -> f64 {
        let stable = self
            .cells
            .iter()
            .filter(|&&v| v <= 1.0 + CONTAINMENT_TOL)
            .count();
        stable as f64 / self.cells.len() as f64
    }

    /// Area of the stable cells, each cell weighted by the window area over
    /// the number of grid points.
    pub fn stable_area(&self) -> f64 {
        let w = &self.window;
        self.stable_fraction() * (w.re_max - w.re_min) * (w.im_max - w.im_min)
    }
}

fn grid_point(w: &Window, nx: usize, ny: usize, i: usize, j: usize) -> Complex64 {
    let dre = (w.re_max - w.re_min) / (nx - 1) as f64;
    let dim = (w.im_max - w.im_min) / (ny - 1) as f64;
    Complex64::new(w.re_min + i as f64 * dre, w.im_min + j as f64 * dim)
}

pub fn stability_region(
    s: &SchemeCoefficients,
    window: Window,
    nx: usize,
    ny: usize,
) -> Result<RegionRaster> {
    window.validate()?;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!(
            "raster resolution must be at least 2x2, got {nx}x{ny}"
        )));
    }
    let cells = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let z = grid_point(&window, nx, ny, k / ny, k % ny);
            max_root_modulus(&characteristic_coeffs(s, z))
        })
        .collect();
    Ok(RegionRaster {
        window,
        nx,
        ny,
        cells,
    })
}

/// Matrix of the one-step form `V_{n+1} = A V_n + h b_n`, `V_n = (y_{n−1}, y_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompanionMatrix {
    pub entries: [[Complex64; 2]; 2],
    pub z: Complex64,
}

impl CompanionMatrix {
    /// Eigenvalues from the trace/determinant formula of a general 2×2 matrix.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let [[p, q], [r, s]] = self.entries;
        let half_trace = 0.5 * (p + s);
        let det = p * s - q * r;
        let root = (half_trace * half_trace - det).sqrt();
        let big = if (half_trace.conj() * root).re >= 0.0 {
            half_trace + root
        } else {
            half_trace - root
        };
        if big == Complex64::new(0.0, 0.0) {
            return [big, big];
        }
        [big, det / big]
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let [[p, q], [r, s]] = self.entries;
        [p * v[0] + q * v[1], r * v[0] + s * v[1]]
    }
}

pub fn companion_matrix(s: &SchemeCoefficients, z: Complex64) -> Result<CompanionMatrix> {
    let n = s.normalized();
    let den = n.a[2] - n.b[2] * z;
    if den.norm() <= DEGENERATE_LEADING_TOL * (1.0 + (n.b[2] * z).norm()) {
        return Err(Error::Singular("companion matrix (a2 - b2 z = 0)"));
    }
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    Ok(CompanionMatrix {
        entries: [
            [zero, one],
            [(-n.a[0] + n.b[0] * z) / den, (-n.a[1] + n.b[1] * z) / den],
        ],
        z,
    })
}

pub fn spectral_radius(m: &CompanionMatrix) -> f64 {
    let [l1, l2] = m.eigenvalues();
    l1.norm().max(l2.norm())
}
