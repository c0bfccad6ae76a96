//! Transition-rate families `C`, their primitives `P(Δ) = ∫₀^{Δ₊} C`, inverses, and the
//! revision cost that makes `C` the optimal jump rate of the mean-field game.
//!
//! Four families are supported, each with a positive shape parameter `q`:
//!
//! ```text
//! Power                 C(x) = x^q            (q ≥ 1)
//! Logarithmic           C(x) = ln(q x + 1)
//! PositiveExponential   C(x) = exp(q x) - 1
//! NegativeExponential   C(x) = 1 - exp(-q x)
//! ```
//!
//! All of them vanish on `x ≤ 0`. An optional truncation level `L` freezes `C` at `C(L)` for
//! arguments beyond `L`, which makes the primitive globally Lipschitz.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateFamily {
    Power,
    Logarithmic,
    PositiveExponential,
    NegativeExponential,
}

impl RateFamily {
    pub const ALL: [RateFamily; 4] = [
        RateFamily::Power,
        RateFamily::Logarithmic,
        RateFamily::PositiveExponential,
        RateFamily::NegativeExponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RateFamily::Power => "power",
            RateFamily::Logarithmic => "logarithmic",
            RateFamily::PositiveExponential => "positive_exponential",
            RateFamily::NegativeExponential => "negative_exponential",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "power" => Some(RateFamily::Power),
            "logarithmic" | "log" => Some(RateFamily::Logarithmic),
            "positive_exponential" | "exponential" => Some(RateFamily::PositiveExponential),
            "negative_exponential" => Some(RateFamily::NegativeExponential),
            _ => None,
        }
    }
}

impl fmt::Display for RateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Nonnegative real extended with `+∞`.
///
/// The infinite case is kept as its own variant so it can never leak into arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> ExtendedReal<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedReal::Infinite)
    }
}

/// A transition-rate family together with its shape parameter and optional truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRateSpec<T> {
    family: RateFamily,
    q: T,
    truncation: Option<T>,
}

impl<T: Scalar> TransitionRateSpec<T> {
    /// Builds an untruncated rate. Rejects `q ≤ 0`, non-finite `q`, and power rates with `q < 1`
    /// (not Lipschitz at the origin).
    pub fn new(family: RateFamily, q: T) -> Result<Self> {
        if !q.is_finite() || q <= T::zero() {
            return Err(Error::InvalidParameter(format!("q > 0 required, got {q}")));
        }
        if family == RateFamily::Power && q < T::one() {
            return Err(Error::InvalidParameter(format!(
                "q >= 1 required for the power family, got {q}"
            )));
        }
        Ok(Self {
            family,
            q,
            truncation: None,
        })
    }

    pub fn power(q: T) -> Result<Self> {
        Self::new(RateFamily::Power, q)
    }

    pub fn logarithmic(q: T) -> Result<Self> {
        Self::new(RateFamily::Logarithmic, q)
    }

    pub fn positive_exponential(q: T) -> Result<Self> {
        Self::new(RateFamily::PositiveExponential, q)
    }

    pub fn negative_exponential(q: T) -> Result<Self> {
        Self::new(RateFamily::NegativeExponential, q)
    }

    /// Holds `C` constant beyond `level`.
    pub fn with_truncation(self, level: T) -> Result<Self> {
        if !level.is_finite() || level <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "truncation level must be positive and finite, got {level}"
            )));
        }
        Ok(Self {
            truncation: Some(level),
            ..self
        })
    }

    pub fn without_truncation(self) -> Self {
        Self {
            truncation: None,
            ..self
        }
    }

    pub fn family(&self) -> RateFamily {
        self.family
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn truncation_level(&self) -> Option<T> {
        self.truncation
    }

    /// `C(x)` of the untruncated family, for `x ≥ 0`.
    fn raw_rate(&self, x: T) -> T {
        let q = self.q;
        match self.family {
            RateFamily::Power => x.powf(q),
            RateFamily::Logarithmic => (q * x).ln_1p(),
            RateFamily::PositiveExponential => (q * x).exp_m1(),
            RateFamily::NegativeExponential => -(-q * x).exp_m1(),
        }
    }

    /// `∫₀^d C` of the untruncated family, for `d ≥ 0`.
    fn raw_primitive(&self, d: T) -> T {
        let q = self.q;
        let one = T::one();
        match self.family {
            RateFamily::Power => d.powf(q + one) / (q + one),
            RateFamily::Logarithmic => {
                let qd = q * d;
                ((qd + one) * qd.ln_1p() - qd) / q
            }
            RateFamily::PositiveExponential => {
                let qd = q * d;
                (qd.exp_m1() - qd) / q
            }
            RateFamily::NegativeExponential => {
                let qd = q * d;
                ((-qd).exp_m1() + qd) / q
            }
        }
    }

    /// `C⁻¹(v)` of the untruncated family; `None` outside its range.
    fn raw_inverse(&self, v: T) -> Option<T> {
        let q = self.q;
        match self.family {
            RateFamily::Power => Some(v.powf(q.recip())),
            RateFamily::Logarithmic => Some(v.exp_m1() / q),
            RateFamily::PositiveExponential => Some(v.ln_1p() / q),
            RateFamily::NegativeExponential => {
                if v < T::one() {
                    Some(-(-v).ln_1p() / q)
                } else {
                    None
                }
            }
        }
    }

    /// `C(x)`: zero for `x ≤ 0`, constant beyond the truncation level.
    #[inline]
    pub fn rate(&self, x: T) -> T {
        if !(x > T::zero()) {
            return T::zero();
        }
        match self.truncation {
            Some(level) if x > level => self.raw_rate(level),
            _ => self.raw_rate(x),
        }
    }

    /// `P(Δ) = ∫₀^{Δ₊} C(w) dw`.
    #[inline]
    pub fn primitive(&self, delta: T) -> T {
        if !(delta > T::zero()) {
            return T::zero();
        }
        match self.truncation {
            Some(level) if delta > level => {
                self.raw_primitive(level) + self.raw_rate(level) * (delta - level)
            }
            _ => self.raw_primitive(delta),
        }
    }

    /// `sup C`, or `None` when `C` is unbounded.
    pub fn supremum(&self) -> Option<T> {
        match (self.truncation, self.family) {
            (Some(level), _) => Some(self.raw_rate(level)),
            (None, RateFamily::NegativeExponential) => Some(T::one()),
            (None, _) => None,
        }
    }

    /// The unique `w ≥ 0` with `C(w) = v`.
    pub fn inverse(&self, v: T) -> Result<T> {
        if v.is_nan() || v < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "inverse rate needs v >= 0, got {v}"
            )));
        }
        let out_of_range = || Error::OutOfRange {
            value: v.as_f64(),
            supremum: self.supremum().map_or(f64::INFINITY, Scalar::as_f64),
        };
        if let Some(level) = self.truncation {
            let cap = self.raw_rate(level);
            if v > cap {
                return Err(out_of_range());
            }
            if v == cap {
                return Ok(level);
            }
        }
        self.raw_inverse(v).ok_or_else(out_of_range)
    }

    /// Revision cost `c(z, u) = ∫₀^u C⁻¹(v / p_z) dv` for target density `p_z` and jump intensity `u`.
    ///
    /// Evaluated in closed form through Young's identity
    /// `∫₀^s C⁻¹ = s·C⁻¹(s) − P(C⁻¹(s))`. Infinite when `p_z = 0 < u`, and when `u / p_z`
    /// exceeds the range of `C`.
    pub fn revision_cost(&self, p_z: T, u: T) -> Result<ExtendedReal<T>> {
        if p_z.is_nan() || u.is_nan() || p_z < T::zero() || u < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "revision cost needs p_z >= 0 and u >= 0, got p_z = {p_z}, u = {u}"
            )));
        }
        if u == T::zero() {
            return Ok(ExtendedReal::Finite(T::zero()));
        }
        if p_z == T::zero() {
            return Ok(ExtendedReal::Infinite);
        }
        let s = u / p_z;
        match self.inverse(s) {
            Ok(w) => {
                let cost = w * u - p_z * self.primitive(w);
                Ok(ExtendedReal::Finite(cost.max(T::zero())))
            }
            Err(Error::OutOfRange { .. }) => Ok(ExtendedReal::Infinite),
            Err(e) => Err(e),
        }
    }

    /// Lipschitz constant of `P` on `[0, m]`, i.e. `C(m)` since `P' = C` is nondecreasing.
    pub fn primitive_lipschitz_bound(&self, m: T) -> Result<T> {
        if !(m > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz interval [0, m] needs m > 0, got {m}"
            )));
        }
        Ok(self.rate(m))
    }
}

impl<T: Scalar> fmt::Display for TransitionRateSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(q={})", self.family, self.q)?;
        if let Some(level) = self.truncation {
            write!(f, " truncated at {level}")?;
        }
        Ok(())
    }
}
