//! Special functions needed by the Beta family: log-gamma, digamma, log-beta
//! and the regularized incomplete beta function.
//!
//! Each public function validates its domain and returns [`Error::Domain`]
//! outside it. The `*_unchecked` variants skip validation and are used on
//! hot paths where the arguments are already known to be valid.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Below this argument the Stirling remainder series is not used.
const STIRLING_MIN: f64 = 10.0;

/// Remainder of Stirling's series, `ln Γ(x) - [(x - 1/2) ln x - x + ln √(2π)]`.
/// Valid for `x >= 10`, where the truncation error is below 1e-15.
fn stirling_corr<T: Scalar>(x: T) -> T {
    let inv = x.recip();
    let inv2 = inv * inv;
    inv * (c::<T>(1.0 / 12.0)
        - inv2
            * (c::<T>(1.0 / 360.0)
                - inv2
                    * (c::<T>(1.0 / 1260.0)
                        - inv2
                            * (c::<T>(1.0 / 1680.0)
                                - inv2 * (c::<T>(1.0 / 1188.0) - inv2 * c(691.0 / 360_360.0))))))
}

fn half_ln_two_pi<T: Scalar>() -> T {
    c(0.918_938_533_204_672_8)
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::domain("ln_gamma", format!("x must be positive and finite, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked<T: Scalar>(x: T) -> T {
    if x < c(0.5) {
        // Γ(x) = Γ(x + 1) / x keeps the Lanczos sum on [1, 1.5).
        return ln_gamma_unchecked(x + T::one()) - x.ln();
    }
    if x >= c(STIRLING_MIN) {
        return (x - c(0.5)) * x.ln() - x + half_ln_two_pi::<T>() + stirling_corr(x);
    }
    let z = x - T::one();
    let mut sum: T = c(LANCZOS_COEF[0]);
    for (i, &coef) in LANCZOS_COEF.iter().enumerate().skip(1) {
        sum += c::<T>(coef) / (z + T::from_usize(i).unwrap());
    }
    let t = z + c(LANCZOS_G + 0.5);
    half_ln_two_pi::<T>() + (z + c(0.5)) * t.ln() - t + sum.ln()
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma<T: Scalar>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::domain("digamma", format!("x must be positive and finite, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked<T: Scalar>(mut x: T) -> T {
    let mut acc = T::zero();
    // ψ(x) = ψ(x + 1) - 1/x until the asymptotic series is accurate.
    while x < c(10.0) {
        acc -= x.recip();
        x += T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv2
        * (c::<T>(1.0 / 12.0)
            - inv2
                * (c::<T>(1.0 / 120.0)
                    - inv2
                        * (c::<T>(1.0 / 252.0)
                            - inv2
                                * (c::<T>(1.0 / 240.0)
                                    - inv2 * (c::<T>(1.0 / 132.0) - inv2 * c(691.0 / 32_760.0))))));
    acc + x.ln() - c::<T>(0.5) * inv - series
}

/// `ln B(a, b)` for `a, b > 0`.
pub fn ln_beta<T: Scalar>(a: T, b: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero()) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain("ln_beta", format!("a and b must be positive, got ({a}, {b})")));
    }
    Ok(ln_beta_unchecked(a, b))
}

pub(crate) fn ln_beta_unchecked<T: Scalar>(a: T, b: T) -> T {
    let (small, big) = if a <= b { (a, b) } else { (b, a) };
    if big < c(STIRLING_MIN) {
        return ln_gamma_unchecked(small) + ln_gamma_unchecked(big) - ln_gamma_unchecked(a + b);
    }
    let sum = small + big;
    let ratio = small / big;
    if small >= c(STIRLING_MIN) {
        // Both arguments large: regroup the Stirling expansions so the
        // O(a ln a) terms cancel analytically.
        let u = -(small - c(0.5)) * (ratio / (T::one() + ratio)).ln();
        let v = big * ratio.ln_1p();
        return -c::<T>(0.5) * big.ln() + half_ln_two_pi::<T>()
            + stirling_corr(small)
            + stirling_corr(big)
            - stirling_corr(sum)
            - u
            - v;
    }
    // One small argument: ln Γ(big) - ln Γ(small + big) without cancellation.
    let diff = -small * big.ln() - (sum - c(0.5)) * ratio.ln_1p() + small + stirling_corr(big)
        - stirling_corr(sum);
    ln_gamma_unchecked(small) + diff
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta<T: Scalar>(x: T, a: T, b: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero()) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(
            "reg_inc_beta",
            format!("a and b must be positive, got ({a}, {b})"),
        ));
    }
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::domain("reg_inc_beta", format!("x must lie in [0, 1], got {x}")));
    }
    Ok(reg_inc_beta_unchecked(x, a, b))
}

pub(crate) fn reg_inc_beta_unchecked<T: Scalar>(x: T, a: T, b: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    if x > a / (a + b) {
        T::one() - lower_tail(T::one() - x, x, b, a)
    } else {
        lower_tail(x, T::one() - x, a, b)
    }
}

/// Upper tail `1 - I_x(a, b)`, computed directly so small tails keep their
/// relative precision.
pub(crate) fn reg_inc_beta_upper_unchecked<T: Scalar>(x: T, a: T, b: T) -> T {
    if x <= T::zero() {
        return T::one();
    }
    if x >= T::one() {
        return T::zero();
    }
    if x > a / (a + b) {
        lower_tail(T::one() - x, x, b, a)
    } else {
        T::one() - lower_tail(x, T::one() - x, a, b)
    }
}

/// `I_x(a, b)` by continued fraction, given `x` and its complement `y = 1 - x`.
fn lower_tail<T: Scalar>(x: T, y: T, a: T, b: T) -> T {
    let ln_front = a * x.ln() + b * y.ln() - ln_beta_unchecked(a, b);
    if ln_front < c(-745.0) {
        return T::zero();
    }
    (ln_front.exp() * continued_fraction(x, a, b) / a).min(T::one())
}

fn continued_fraction<T: Scalar>(x: T, a: T, b: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let max_iter = 200_000usize;

    let qab = a + b;
    let qap = a + T::one();
    let qam = a - T::one();
    let mut cc = T::one();
    let mut d = T::one() - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = d.recip();
    let mut h = d;

    for m in 1..=max_iter {
        let m = T::from_usize(m).unwrap();
        let m2 = m + m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = T::one() + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        cc = T::one() + aa / cc;
        if cc.abs() < tiny {
            cc = tiny;
        }
        d = d.recip();
        h *= d * cc;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = T::one() + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        cc = T::one() + aa / cc;
        if cc.abs() < tiny {
            cc = tiny;
        }
        d = d.recip();
        let del = d * cc;
        h *= del;
        if (del - T::one()).abs() <= eps {
            break;
        }
    }
    h
}
