//! Log-domain arithmetic.
//!
//! World counts here reach `2^10000` and world sizes `e^-6170`, so every count,
//! measure and density is carried as a natural-log magnitude. Zero is a flag,
//! not `-inf`, so sums never see `NaN`.

use std::cmp::Ordering;
use std::f64::consts::{LN_10, LN_2, PI};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul};

use libm::erfc;
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A non-negative real stored as its natural logarithm.
#[derive(Clone, Copy)]
pub struct LogValue {
    log_magnitude: f64,
    is_zero: bool,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        log_magnitude: 0.0,
        is_zero: true,
    };
    pub const ONE: LogValue = LogValue {
        log_magnitude: 0.0,
        is_zero: false,
    };

    /// Wraps a natural log. `-inf` maps to zero; `NaN` and `+inf` are rejected.
    pub fn from_ln(ln: f64) -> LogValue {
        assert!(!ln.is_nan(), "LogValue::from_ln(NaN)");
        assert!(ln != f64::INFINITY, "LogValue::from_ln(+inf)");
        if ln == f64::NEG_INFINITY {
            LogValue::ZERO
        } else {
            LogValue {
                log_magnitude: ln,
                is_zero: false,
            }
        }
    }

    pub fn from_real(x: f64) -> LogValue {
        assert!(x >= 0.0 && x.is_finite(), "LogValue::from_real({x})");
        if x == 0.0 {
            LogValue::ZERO
        } else {
            LogValue::from_ln(x.ln())
        }
    }

    pub fn is_zero(self) -> bool {
        self.is_zero
    }

    /// Natural log, `-inf` for zero.
    pub fn ln(self) -> f64 {
        if self.is_zero {
            f64::NEG_INFINITY
        } else {
            self.log_magnitude
        }
    }

    pub fn log10(self) -> f64 {
        self.ln() / LN_10
    }

    /// The represented real; underflows to 0 and overflows to `inf` outside f64 range.
    pub fn to_f64(self) -> f64 {
        if self.is_zero {
            0.0
        } else {
            self.log_magnitude.exp()
        }
    }

    /// Multiplies by `e^shift`.
    pub fn scale_ln(self, shift: f64) -> LogValue {
        if self.is_zero {
            self
        } else {
            LogValue::from_ln(self.log_magnitude + shift)
        }
    }

    pub fn powf(self, exponent: f64) -> LogValue {
        if self.is_zero {
            if exponent > 0.0 {
                LogValue::ZERO
            } else {
                LogValue::ONE
            }
        } else {
            LogValue::from_ln(self.log_magnitude * exponent)
        }
    }
}

impl Default for LogValue {
    fn default() -> Self {
        LogValue::ZERO
    }
}

impl fmt::Debug for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero {
            write!(f, "LogValue(0)")
        } else {
            write!(f, "LogValue(e^{})", self.log_magnitude)
        }
    }
}

impl PartialEq for LogValue {
    fn eq(&self, other: &Self) -> bool {
        match (self.is_zero, other.is_zero) {
            (true, true) => true,
            (false, false) => self.log_magnitude == other.log_magnitude,
            _ => false,
        }
    }
}

impl PartialOrd for LogValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.ln().partial_cmp(&other.ln())
    }
}

impl Add for LogValue {
    type Output = LogValue;
    fn add(self, rhs: LogValue) -> LogValue {
        log_add(self, rhs)
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero || rhs.is_zero {
            LogValue::ZERO
        } else {
            LogValue::from_ln(self.log_magnitude + rhs.log_magnitude)
        }
    }
}

impl Div for LogValue {
    type Output = LogValue;
    fn div(self, rhs: LogValue) -> LogValue {
        assert!(!rhs.is_zero, "LogValue division by zero");
        self.scale_ln(-rhs.log_magnitude)
    }
}

impl Sum for LogValue {
    fn sum<I: Iterator<Item = LogValue>>(iter: I) -> LogValue {
        let values: Vec<LogValue> = iter.collect();
        log_sum(&values)
    }
}

impl<'a> Sum<&'a LogValue> for LogValue {
    fn sum<I: Iterator<Item = &'a LogValue>>(iter: I) -> LogValue {
        let values: Vec<LogValue> = iter.copied().collect();
        log_sum(&values)
    }
}

pub fn log_add(a: LogValue, b: LogValue) -> LogValue {
    match (a.is_zero, b.is_zero) {
        (true, _) => b,
        (_, true) => a,
        _ => {
            let (hi, lo) = if a.log_magnitude >= b.log_magnitude {
                (a.log_magnitude, b.log_magnitude)
            } else {
                (b.log_magnitude, a.log_magnitude)
            };
            LogValue::from_ln(hi + (lo - hi).exp().ln_1p())
        }
    }
}

/// Sum of all values. Shifts by the maximum and accumulates with Neumaier
/// compensation, so the result is insensitive to input order.
pub fn log_sum(values: &[LogValue]) -> LogValue {
    let max = values
        .iter()
        .filter(|v| !v.is_zero)
        .map(|v| v.log_magnitude)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LogValue::ZERO;
    }
    let mut sum = 0.0_f64;
    let mut compensation = 0.0_f64;
    for v in values.iter().filter(|v| !v.is_zero) {
        let term = (v.log_magnitude - max).exp();
        let t = sum + term;
        if sum.abs() >= term.abs() {
            compensation += (sum - t) + term;
        } else {
            compensation += (term - t) + sum;
        }
        sum = t;
    }
    LogValue::from_ln(max + (sum + compensation).ln())
}

/// `ln C(n, k)`; zero outside `0 <= k <= n`.
pub fn log_binomial(n: u64, k: i64) -> LogValue {
    if k < 0 || k as u64 > n {
        return LogValue::ZERO;
    }
    let k = k as u64;
    LogValue::from_ln(ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))
}

/// Continuous extension of `ln C(n, k)` through log-gamma; zero outside `[0, n]`.
pub fn log_binomial_real(n: f64, k: f64) -> LogValue {
    if !(0.0..=n).contains(&k) {
        return LogValue::ZERO;
    }
    LogValue::from_ln(ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0))
}

/// De Moivre-Laplace approximation of `ln C(n, k)`:
/// `n ln 2 - ln(pi n / 2) / 2 - 2 (k - n/2)^2 / n`.
pub fn log_binomial_gaussian(n: f64, k: f64) -> LogValue {
    if n <= 0.0 {
        return if k == 0.0 { LogValue::ONE } else { LogValue::ZERO };
    }
    let d = k - 0.5 * n;
    LogValue::from_ln(n * LN_2 - 0.5 * (PI * n / 2.0).ln() - 2.0 * d * d / n)
}

/// `ln Phi(z)` for the standard normal CDF, accurate far into the lower tail.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > 5.0 {
        (-0.5 * erfc(z / std::f64::consts::SQRT_2)).ln_1p()
    } else if z > -20.0 {
        (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotic series; truncation error < 1e-12 for z < -20.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)
            + 105.0 / (z2 * z2 * z2 * z2);
        -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// `ln(1 - Phi(z))`.
pub fn log_normal_sf(z: f64) -> f64 {
    log_normal_cdf(-z)
}

/// `ln` of the standard normal density.
pub fn log_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

pub fn ln_to_log10(x: f64) -> f64 {
    x / LN_10
}

/// Bisection for a root of `f` on `[lo, hi]`, stopping once the bracket is
/// narrower than `tol`. The endpoints must give values of opposite sign (or zero).
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoBracket { lo, hi });
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
