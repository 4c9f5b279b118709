//! Numerical kernels shared by the exact and asymptotic modules.
//!
//! Combinatorial quantities are kept in log space and exponentiated late:
//! the exact series multiply powers of `lambda * T` (up to ~10^3) against
//! factorials of comparable size.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{invalid, AuctionError, Result};

/// Value of a truncated series together with a bound on its truncation and
/// rounding error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub value: f64,
    pub abs_error_bound: f64,
    pub terms_used: usize,
}

impl SeriesResult {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            abs_error_bound: 0.0,
            terms_used: 0,
        }
    }
}

const EXACT_FACTORIALS: [u64; 21] = [
    1,
    1,
    2,
    6,
    24,
    120,
    720,
    5040,
    40320,
    362880,
    3628800,
    39916800,
    479001600,
    6227020800,
    87178291200,
    1307674368000,
    20922789888000,
    355687428096000,
    6402373705728000,
    121645100408832000,
    2432902008176640000,
];

const LN_FACTORIAL_CACHE: usize = 16_384;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..LN_FACTORIAL_CACHE as u64).map(ln_factorial_uncached).collect())
}

/// Stirling series for `ln Gamma(z)`, accurate to double precision for z >= 20.
fn ln_gamma_stirling(z: f64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let correction = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + correction
}

fn ln_factorial_uncached(n: u64) -> f64 {
    if n <= 20 {
        (EXACT_FACTORIALS[n as usize] as f64).ln()
    } else {
        ln_gamma_stirling(n as f64 + 1.0)
    }
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACTORIAL_CACHE {
        ln_factorial_table()[n as usize]
    } else {
        ln_factorial_uncached(n)
    }
}

/// `ln C(n, k)`; symmetric in `k <-> n - k` bit for bit.
pub fn ln_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(invalid(format!("binomial C({n}, {k}) requires k <= n")));
    }
    let k = k.min(n - k);
    Ok(ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))
}

/// `ln P(N = k)` for `N ~ Poisson(mean)`; `-inf` for impossible outcomes.
pub fn ln_poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

/// Chernoff upper bound on `P(N >= s)` for `N ~ Poisson(mean)`.
pub fn poisson_tail_bound(mean: f64, s: u64) -> f64 {
    if s == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    let s = s as f64;
    if s <= mean {
        return 1.0;
    }
    (s - mean - s * (s / mean).ln()).exp().min(1.0)
}

/// Shell cap used by every Poisson-weighted double series.
pub fn shell_cap(intensity: f64) -> u64 {
    (intensity + 12.0 * intensity.sqrt() + 60.0).ceil() as u64
}

/// Relative tolerance of the Kummer series stopping rule.
pub const HYP1F1_REL_TOL: f64 = 1e-16;

/// Number of consecutive negligible terms required before stopping.
const NEGLIGIBLE_RUN: usize = 3;

const RESCALE_THRESHOLD: f64 = 1e280;

/// `ln 1F1(a; b; x)` for `x >= 0`, with a bound on the relative error.
///
/// All terms are positive here, so the sum is accumulated in linear space
/// with an explicit exponent that absorbs overflow.
pub(crate) fn ln_hyp1f1_nonneg(a: u64, b: u64, x: f64, rel_tol: f64) -> Result<(f64, f64, usize)> {
    debug_assert!(x >= 0.0 && b >= 1);
    if a == 0 || x == 0.0 {
        return Ok((0.0, 0.0, 1));
    }
    let (a, b) = (a as f64, b as f64);
    let max_terms = (20.0 * (x + a) + 2000.0) as usize;

    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut ln_scale = 0.0f64;
    let mut run = 0usize;
    let mut j = 0usize;
    loop {
        let jf = j as f64;
        let ratio = (a + jf) / (b + jf) * x / (jf + 1.0);
        term *= ratio;
        sum += term;
        j += 1;
        if sum > RESCALE_THRESHOLD {
            sum /= RESCALE_THRESHOLD;
            term /= RESCALE_THRESHOLD;
            ln_scale += RESCALE_THRESHOLD.ln();
        }
        if term < rel_tol * sum && ratio < 1.0 {
            run += 1;
            if run >= NEGLIGIBLE_RUN {
                // The term ratio is strictly decreasing in j for a, b >= 1, so
                // the remainder is dominated by a geometric series.
                let jf = j as f64;
                let next_ratio = (a + jf) / (b + jf) * x / (jf + 1.0);
                let tail = term * next_ratio / (1.0 - next_ratio);
                let rounding = 2.0 * (j as f64 + 1.0) * f64::EPSILON * sum;
                let rel_err = (tail + rounding) / sum;
                return Ok((sum.ln() + ln_scale, rel_err, j + 1));
            }
        } else {
            run = 0;
        }
        if j > max_terms {
            return Err(AuctionError::ToleranceNotMet {
                achieved: term / sum,
                requested: rel_tol,
            });
        }
    }
}

/// Confluent hypergeometric function `1F1(a; b; x)` for integer parameters.
///
/// Negative arguments go through Kummer's transformation
/// `1F1(a; b; x) = e^x 1F1(b - a; b; -x)` so that only positive series are summed.
pub fn hyp1f1(a: u64, b: u64, x: f64) -> Result<SeriesResult> {
    hyp1f1_with_tol(a, b, x, HYP1F1_REL_TOL)
}

pub fn hyp1f1_with_tol(a: u64, b: u64, x: f64, rel_tol: f64) -> Result<SeriesResult> {
    if b == 0 {
        return Err(invalid("1F1 has a pole at b = 0"));
    }
    if !x.is_finite() {
        return Err(invalid(format!("1F1 argument must be finite, got {x}")));
    }
    if rel_tol.is_nan() || rel_tol <= 0.0 {
        return Err(invalid("relative tolerance must be positive"));
    }
    if x >= 0.0 {
        let (ln_v, rel, n) = ln_hyp1f1_nonneg(a, b, x, rel_tol)?;
        let value = ln_v.exp();
        // Exponentiating a log of size |ln_v| costs about |ln_v| ulps.
        let rel = rel + (ln_v.abs() + 1.0) * f64::EPSILON;
        return Ok(SeriesResult {
            value,
            abs_error_bound: value * rel,
            terms_used: n,
        });
    }
    if b >= a {
        let (ln_v, rel, n) = ln_hyp1f1_nonneg(b - a, b, -x, rel_tol)?;
        let value = (ln_v + x).exp();
        let rel = rel + (ln_v.abs() + x.abs() + 2.0) * f64::EPSILON;
        return Ok(SeriesResult {
            value,
            abs_error_bound: value * rel,
            terms_used: n,
        });
    }
    // a > b with x < 0: b - a is a negative integer and the transformed
    // series terminates. Sum it directly and track cancellation.
    let m = a - b;
    let (af, bf) = ((b as f64) - (a as f64), b as f64);
    let y = -x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut max_abs = 1.0f64;
    for j in 0..m {
        let jf = j as f64;
        term *= (af + jf) / (bf + jf) * y / (jf + 1.0);
        sum += term;
        max_abs = max_abs.max(term.abs());
    }
    let value = x.exp() * sum;
    let bound = x.exp() * (m as f64 + 2.0) * f64::EPSILON * max_abs + value.abs() * 2.0 * f64::EPSILON;
    Ok(SeriesResult {
        value,
        abs_error_bound: bound,
        terms_used: m as usize + 1,
    })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Phi(x)` without cancellation.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of the standard normal distribution function.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("normal quantile requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work in the lower tail, where p carries full relative precision.
    let (q, sign) = if p < 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
    // One Halley step on the lower-tail equation Phi(x) = q.
    let err = std_normal_cdf(x) - q;
    let pdf = std_normal_pdf(x);
    if pdf > 0.0 {
        let u = err / pdf;
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(sign * x)
}

/// Above this argument the scaled Bessel functions use their large-argument expansion.
const BESSEL_ASYMPTOTIC_FROM: f64 = 50.0;

/// `(e^{-s} I_0(s), e^{-s} 2 I_1(s) / s)` for `s >= 0`, where `I_0`, `I_1` are
/// modified Bessel functions of the first kind. The second entry is 1 at `s = 0`.
pub fn bessel_i0_i1_scaled(s: f64) -> (f64, f64) {
    if s < BESSEL_ASYMPTOTIC_FROM {
        let q = 0.25 * s * s;
        let (mut t0, mut t1) = (1.0f64, 1.0f64);
        let (mut i0, mut i1) = (1.0f64, 1.0f64);
        let mut k = 1.0f64;
        while t0 > 1e-17 * i0 {
            t0 *= q / (k * k);
            t1 *= q / (k * (k + 1.0));
            i0 += t0;
            i1 += t1;
            k += 1.0;
        }
        let scale = (-s).exp();
        return (i0 * scale, i1 * scale);
    }
    let asymptotic = |nu: f64| {
        let mu = 4.0 * nu * nu;
        let (mut term, mut sum) = (1.0f64, 1.0f64);
        for k in 1..60 {
            let j = (2 * k - 1) as f64;
            let next = -term * (mu - j * j) / (k as f64 * 8.0 * s);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum / (2.0 * PI * s).sqrt()
    };
    (asymptotic(0.0), 2.0 * asymptotic(1.0) / s)
}

/// `ln(1 - e^{-x})` for `x > 0`.
pub(crate) fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x > LN_2 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    }
}
