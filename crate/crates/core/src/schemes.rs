//! Coefficient sets of three-level two-step linear multistep schemes
//!
//! ```text
//! a₂ y_{n+1} + a₁ y_n + a₀ y_{n-1} = h (b₂ f_{n+1} + b₁ f_n + b₀ f_{n-1})
//! ```
//!
//! Coefficients are stored in the raw form in which the schemes are usually
//! written (`a₂ = 3/2` for BDF2). [`SchemeCoefficients::normalized`] gives the
//! view with `a₂ = 1`.

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeFamily {
    /// `3/2 y_{n+1} − 2 y_n + 1/2 y_{n−1} = h(α f_{n+1} + (2−2α) f_n + (α−1) f_{n−1})`.
    GeneralizedBdf2,
    /// `y_{n+1} − y_n = h(α f_{n+1} + (3/2−2α) f_n + (α−1/2) f_{n−1})`.
    GeneralizedAm2,
    Custom,
}

impl SchemeFamily {
    /// Smallest `alpha` for which the family is A-stable.
    pub fn a_stability_threshold(self) -> Option<f64> {
        match self {
            SchemeFamily::GeneralizedBdf2 => Some(0.75),
            SchemeFamily::GeneralizedAm2 => Some(0.5),
            SchemeFamily::Custom => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeCoefficients {
    /// ρ coefficients `(a₀, a₁, a₂)`.
    pub a: [f64; 3],
    /// σ coefficients `(b₀, b₁, b₂)`.
    pub b: [f64; 3],
    /// Family parameter; `None` for custom schemes.
    pub alpha: Option<f64>,
    pub family: SchemeFamily,
}

impl SchemeCoefficients {
    /// Raw coefficients of a family member.
    pub fn new(family: SchemeFamily, alpha: f64) -> Result<Self> {
        let alpha = ensure_finite("alpha", alpha)?;
        let (a, b) = match family {
            SchemeFamily::GeneralizedBdf2 => {
                ([0.5, -2.0, 1.5], [alpha - 1.0, 2.0 - 2.0 * alpha, alpha])
            }
            SchemeFamily::GeneralizedAm2 => {
                ([0.0, -1.0, 1.0], [alpha - 0.5, 1.5 - 2.0 * alpha, alpha])
            }
            SchemeFamily::Custom => {
                return Err(Error::CustomScheme(
                    "use SchemeCoefficients::custom for user supplied coefficients",
                ))
            }
        };
        Ok(Self {
            a,
            b,
            alpha: Some(alpha),
            family,
        })
    }

    pub fn bdf2(alpha: f64) -> Result<Self> {
        Self::new(SchemeFamily::GeneralizedBdf2, alpha)
    }

    pub fn am2(alpha: f64) -> Result<Self> {
        Self::new(SchemeFamily::GeneralizedAm2, alpha)
    }

    /// A user supplied scheme. `a[2]` must be nonzero.
    pub fn custom(a: [f64; 3], b: [f64; 3]) -> Result<Self> {
        for &v in a.iter().chain(b.iter()) {
            ensure_finite("coefficient", v)?;
        }
        if a[2] == 0.0 {
            return Err(Error::InvalidParameter(
                "leading coefficient a2 must be nonzero".into(),
            ));
        }
        Ok(Self {
            a,
            b,
            alpha: None,
            family: SchemeFamily::Custom,
        })
    }

    /// All six coefficients divided by `a₂`.
    pub fn normalized(&self) -> Self {
        let s = self.a[2];
        Self {
            a: self.a.map(|v| v / s),
            b: self.b.map(|v| v / s),
            ..*self
        }
    }

    pub fn is_explicit(&self) -> bool {
        self.b[2] == 0.0
    }

    pub fn rho(&self, w: f64) -> f64 {
        (self.a[2] * w + self.a[1]) * w + self.a[0]
    }

    pub fn sigma(&self, w: f64) -> f64 {
        (self.b[2] * w + self.b[1]) * w + self.b[0]
    }

    /// Offset, in units of `h` from `t_{n-1}`, of the weighted time
    /// `Σ bₘ t_{n-1+m} / Σ bₘ`. Returns `None` when `σ(1) = 0`.
    pub fn forcing_offset(&self) -> Option<f64> {
        let sum = self.sigma(1.0);
        if sum == 0.0 {
            None
        } else {
            Some((self.b[1] + 2.0 * self.b[2]) / sum)
        }
    }
}

/// Residuals of the consistency and second-order conditions:
/// `(Σ aₘ, Σ m aₘ − Σ bₘ, Σ m² aₘ / 2 − Σ m bₘ)`, i.e.
/// `(ρ(1), ρ′(1) − σ(1), (ρ″(1) + ρ′(1))/2 − σ′(1))`.
///
/// All three vanish iff `ρ(w) − σ(w) ln w = O((w−1)³)`.
pub fn order_condition_residuals(s: &SchemeCoefficients) -> [f64; 3] {
    let [a0, a1, a2] = s.a;
    let [b0, b1, b2] = s.b;
    let r0 = a0 + a1 + a2;
    let r1 = (a1 + 2.0 * a2) - (b0 + b1 + b2);
    let r2 = 0.5 * (a1 + 4.0 * a2) - (b1 + 2.0 * b2);
    [r0, r1, r2]
}
