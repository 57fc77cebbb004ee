//! Scalar mean values used by two-point fluxes.
//!
//! The logarithmic mean `⟨a⟩_log = (a₊ - a₋) / (log a₊ - log a₋)` needs care
//! when `a₊ ≈ a₋`. All stable variants switch to a truncated series in
//! `u = ((a₋ - a₊)/(a₋ + a₊))²` below the fixed threshold [`LOGMEAN_EPSILON`].

use crate::error::{Error, Result};

/// Switching threshold on `u` for 64-bit floats.
pub const LOGMEAN_EPSILON: f64 = 1.0e-4;

#[inline(always)]
pub fn arithmetic_mean(a_minus: f64, a_plus: f64) -> f64 {
    0.5 * (a_minus + a_plus)
}

/// Product mean `{{a b}} = (a₊ b₋ + a₋ b₊) / 2`.
#[inline(always)]
pub fn product_mean(a_minus: f64, a_plus: f64, b_minus: f64, b_plus: f64) -> f64 {
    0.5 * (a_plus * b_minus + a_minus * b_plus)
}

fn check_positive(a_minus: f64, a_plus: f64) -> Result<()> {
    if a_minus > 0.0 && a_plus > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "logarithmic mean needs positive arguments, got ({a_minus:e}, {a_plus:e})"
        )))
    }
}

/// Textbook formula. Only valid away from `a₋ == a₊`; kept as a reference.
pub fn logmean_reference(a_minus: f64, a_plus: f64) -> Result<f64> {
    check_positive(a_minus, a_plus)?;
    if a_minus == a_plus {
        return Err(Error::Domain(
            "reference logarithmic mean is undefined for equal arguments".into(),
        ));
    }
    Ok((a_plus - a_minus) / (a_plus.ln() - a_minus.ln()))
}

/// Logarithmic mean following Ismail and Roe: `ξ = a₋/a₊`, `f = (ξ-1)/(ξ+1)`.
pub fn logmean_ismail_roe(a_minus: f64, a_plus: f64) -> Result<f64> {
    check_positive(a_minus, a_plus)?;
    let xi = a_minus / a_plus;
    let f = (xi - 1.0) / (xi + 1.0);
    let u = f * f;
    let big_f = if u < LOGMEAN_EPSILON {
        1.0 + u / 3.0 + u * u / 5.0 + u * u * u / 7.0
    } else {
        (xi.ln() / 2.0) / f
    };
    Ok((a_minus + a_plus) / (2.0 * big_f))
}

/// `u = f²` computed with a single division.
#[inline(always)]
pub(crate) fn logmean_u(a_minus: f64, a_plus: f64) -> f64 {
    (a_minus * (a_minus - 2.0 * a_plus) + a_plus * a_plus)
        / (a_minus * (a_minus + 2.0 * a_plus) + a_plus * a_plus)
}

#[inline(always)]
pub(crate) fn series_denominator(u: f64) -> f64 {
    2.0 + u * (2.0 / 3.0 + u * (2.0 / 5.0 + u * (2.0 / 7.0)))
}

#[inline(always)]
fn sorted(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Division-reduced logarithmic mean. Assumes positive arguments.
///
/// Arguments are ordered first so the result is bitwise symmetric; the log
/// branch uses `ln_1p` of the exact difference to keep full accuracy just
/// above the switching threshold.
#[inline(always)]
pub fn logmean(a_minus: f64, a_plus: f64) -> f64 {
    let (lo, hi) = sorted(a_minus, a_plus);
    let u = logmean_u(lo, hi);
    if u < LOGMEAN_EPSILON {
        (lo + hi) / series_denominator(u)
    } else {
        let diff = hi - lo;
        diff / (diff / lo).ln_1p()
    }
}

/// Inverse logarithmic mean `1/⟨a⟩_log` with the same branch structure as
/// [`logmean`]. Assumes positive arguments.
#[inline(always)]
pub fn inv_logmean(a_minus: f64, a_plus: f64) -> f64 {
    let (lo, hi) = sorted(a_minus, a_plus);
    let u = logmean_u(lo, hi);
    if u < LOGMEAN_EPSILON {
        series_denominator(u) / (lo + hi)
    } else {
        let diff = hi - lo;
        (diff / lo).ln_1p() / diff
    }
}

/// Variant of [`logmean`] replacing the series division by a multiplication
/// with a polynomial approximation of the reciprocal.
#[inline(always)]
pub fn logmean_poly_reciprocal(a_minus: f64, a_plus: f64) -> f64 {
    let (lo, hi) = sorted(a_minus, a_plus);
    let u = logmean_u(lo, hi);
    if u < LOGMEAN_EPSILON {
        (lo + hi) * (0.5 + u * (-1.0 / 6.0 + u * (-2.0 / 45.0 + u * (-22.0 / 945.0))))
    } else {
        let diff = hi - lo;
        diff / (diff / lo).ln_1p()
    }
}

/// Checked wrapper around [`logmean`].
pub fn logmean_optimized(a_minus: f64, a_plus: f64) -> Result<f64> {
    check_positive(a_minus, a_plus)?;
    Ok(logmean(a_minus, a_plus))
}

/// Checked wrapper around [`inv_logmean`].
pub fn inv_logmean_optimized(a_minus: f64, a_plus: f64) -> Result<f64> {
    check_positive(a_minus, a_plus)?;
    Ok(inv_logmean(a_minus, a_plus))
}

/// Logarithmic mean given precomputed logarithms of both arguments.
#[inline(always)]
pub fn logmean_with_logs(a_minus: f64, a_plus: f64, log_minus: f64, log_plus: f64) -> f64 {
    let (a_minus, a_plus, log_minus, log_plus) = if a_minus <= a_plus {
        (a_minus, a_plus, log_minus, log_plus)
    } else {
        (a_plus, a_minus, log_plus, log_minus)
    };
    let u = logmean_u(a_minus, a_plus);
    if u < LOGMEAN_EPSILON {
        (a_minus + a_plus) / series_denominator(u)
    } else {
        (a_plus - a_minus) / (log_plus - log_minus)
    }
}

/// Inverse logarithmic mean given precomputed logarithms of both arguments.
#[inline(always)]
pub fn inv_logmean_with_logs(a_minus: f64, a_plus: f64, log_minus: f64, log_plus: f64) -> f64 {
    let (a_minus, a_plus, log_minus, log_plus) = if a_minus <= a_plus {
        (a_minus, a_plus, log_minus, log_plus)
    } else {
        (a_plus, a_minus, log_plus, log_minus)
    };
    let u = logmean_u(a_minus, a_plus);
    if u < LOGMEAN_EPSILON {
        series_denominator(u) / (a_minus + a_plus)
    } else {
        (log_plus - log_minus) / (a_plus - a_minus)
    }
}
