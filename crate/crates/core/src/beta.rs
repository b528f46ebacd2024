//! Beta distributions as belief representations over a proportion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::special::{
    digamma_unchecked, ln_beta_unchecked, reg_inc_beta_unchecked, reg_inc_beta_upper_unchecked,
};

/// A Beta(alpha, beta) distribution. Both parameters are finite and positive.
///
/// `alpha` acts as a pseudo-count of successes and `beta` of failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBeta<T>", into = "RawBeta<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Beta<T> {
    alpha: T,
    beta: T,
}

#[derive(Serialize, Deserialize)]
struct RawBeta<T> {
    alpha: T,
    beta: T,
}

impl<T: Scalar> TryFrom<RawBeta<T>> for Beta<T> {
    type Error = Error;
    fn try_from(raw: RawBeta<T>) -> Result<Self> {
        Beta::new(raw.alpha, raw.beta)
    }
}

impl<T: Scalar> From<Beta<T>> for RawBeta<T> {
    fn from(b: Beta<T>) -> Self {
        RawBeta {
            alpha: b.alpha,
            beta: b.beta,
        }
    }
}

impl<T: Scalar> Beta<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        if alpha.is_finite() && beta.is_finite() && alpha > T::zero() && beta > T::zero() {
            Ok(Self { alpha, beta })
        } else {
            Err(Error::InvalidParams {
                alpha: alpha.to_f64_lossy(),
                beta: beta.to_f64_lossy(),
            })
        }
    }

    /// The uniform distribution Beta(1, 1).
    pub fn uniform() -> Self {
        Self {
            alpha: T::one(),
            beta: T::one(),
        }
    }

    #[inline]
    pub fn alpha(&self) -> T {
        self.alpha
    }

    #[inline]
    pub fn beta(&self) -> T {
        self.beta
    }

    /// `alpha + beta`.
    #[inline]
    pub fn concentration(&self) -> T {
        self.alpha + self.beta
    }

    pub fn mean(&self) -> T {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> T {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + T::one()))
    }

    pub fn sd(&self) -> T {
        self.variance().sqrt()
    }

    /// The interior mode `(alpha - 1) / (alpha + beta - 2)`.
    ///
    /// Fails with [`Error::NoInteriorMode`] unless both parameters exceed 1.
    pub fn mode(&self) -> Result<T> {
        if self.alpha > T::one() && self.beta > T::one() {
            Ok((self.alpha - T::one()) / (self.alpha + self.beta - c(2.0)))
        } else {
            Err(Error::NoInteriorMode {
                alpha: self.alpha.to_f64_lossy(),
                beta: self.beta.to_f64_lossy(),
            })
        }
    }

    pub fn has_interior_mode(&self) -> bool {
        self.alpha > T::one() && self.beta > T::one()
    }

    pub fn ln_beta_fn(&self) -> T {
        ln_beta_unchecked(self.alpha, self.beta)
    }

    /// Density at `p`. Endpoints where the density diverges are reported as
    /// [`Density::Infinite`] rather than an error.
    pub fn pdf(&self, p: T) -> Result<Density<T>> {
        check_proportion("beta_pdf", p)?;
        let one = T::one();
        let at_endpoint = |exponent: T, other_end_factor: T| -> Density<T> {
            if exponent < T::zero() {
                Density::Infinite
            } else if exponent > T::zero() {
                Density::Finite(T::zero())
            } else {
                Density::Finite(other_end_factor)
            }
        };
        if p == T::zero() {
            // x^(a-1) with a == 1 leaves B(1, b)^-1 = b.
            return Ok(at_endpoint(self.alpha - one, self.beta));
        }
        if p == one {
            return Ok(at_endpoint(self.beta - one, self.alpha));
        }
        Ok(Density::Finite(self.ln_pdf_interior(p).exp()))
    }

    /// Log-density at an interior point `0 < p < 1`.
    pub(crate) fn ln_pdf_interior(&self, p: T) -> T {
        let one = T::one();
        (self.alpha - one) * p.ln() + (self.beta - one) * (-p).ln_1p() - self.ln_beta_fn()
    }

    /// Cumulative distribution `I_p(alpha, beta)`.
    pub fn cdf(&self, p: T) -> Result<T> {
        check_proportion("beta_cdf", p)?;
        Ok(reg_inc_beta_unchecked(p, self.alpha, self.beta))
    }

    /// Survival function `1 - cdf(p)`, accurate in the upper tail.
    pub fn sf(&self, p: T) -> Result<T> {
        check_proportion("beta_sf", p)?;
        Ok(reg_inc_beta_upper_unchecked(p, self.alpha, self.beta))
    }

    /// Probability mass inside `interval`.
    ///
    /// When both tails are small the mass is computed as one minus the tails,
    /// which keeps precision for concentrated distributions.
    pub fn interval_probability(&self, interval: Interval<T>) -> T {
        let lower = reg_inc_beta_unchecked(interval.lo, self.alpha, self.beta);
        let upper = reg_inc_beta_upper_unchecked(interval.hi, self.alpha, self.beta);
        let half: T = c(0.5);
        let p = if lower < half && upper < half {
            T::one() - (lower + upper)
        } else if lower >= half {
            reg_inc_beta_upper_unchecked(interval.lo, self.alpha, self.beta) - upper
        } else {
            reg_inc_beta_unchecked(interval.hi, self.alpha, self.beta) - lower
        };
        p.max(T::zero()).min(T::one())
    }

    /// Inverse cdf by bisection. `q` must lie in [0, 1].
    pub fn quantile(&self, q: T) -> Result<T> {
        check_proportion("beta_quantile", q)?;
        if q == T::zero() {
            return Ok(T::zero());
        }
        if q == T::one() {
            return Ok(T::one());
        }
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..200 {
            let mid = (lo + hi) * c(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if reg_inc_beta_unchecked(mid, self.alpha, self.beta) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo + hi) * c(0.5))
    }

    pub fn cast<U: Scalar>(&self) -> Beta<U> {
        Beta {
            alpha: U::lit(self.alpha.to_f64_lossy()),
            beta: U::lit(self.beta.to_f64_lossy()),
        }
    }
}

impl<T: Scalar> std::fmt::Display for Beta<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Beta({}, {})", self.alpha, self.beta)
    }
}

/// Kullback-Leibler divergence `D_KL(p ‖ q)` in nats.
///
/// The argument order is the divergence direction: across this crate `p` is
/// the participant's belief and `q` the normative one.
pub fn beta_kld<T: Scalar>(p: &Beta<T>, q: &Beta<T>) -> T {
    if p == q {
        return T::zero();
    }
    let (ap, bp) = (p.alpha, p.beta);
    let (aq, bq) = (q.alpha, q.beta);
    let psi_sum = digamma_unchecked(ap + bp);
    let kld = ln_beta_unchecked(aq, bq) - ln_beta_unchecked(ap, bp)
        + (ap - aq) * digamma_unchecked(ap)
        + (bp - bq) * digamma_unchecked(bp)
        + (aq - ap + bq - bp) * psi_sum;
    kld.max(T::zero())
}

/// A density value that may diverge at an endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Density<T> {
    /// The density as a plain number, `+inf` for divergent endpoints.
    pub fn value(self) -> T {
        match self {
            Density::Finite(v) => v,
            Density::Infinite => T::infinity(),
        }
    }

    pub fn clamped(self, max: T) -> T {
        self.value().min(max)
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Density::Infinite)
    }
}

/// A closed sub-interval `[lo, hi]` of the unit interval with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if lo >= T::zero() && hi <= T::one() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidInterval {
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            })
        }
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn contains(&self, p: T) -> bool {
        p >= self.lo && p <= self.hi
    }
}

pub(crate) fn check_proportion<T: Scalar>(func: &'static str, p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::domain(func, format!("{p} is outside [0, 1]")))
    }
}
