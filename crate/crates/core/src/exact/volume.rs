use super::{check_tol, check_tol_arg, ln_pow, side_intensities, DiscretePmf};
use crate::error::Result;
use crate::model::AuctionParams;
use crate::special_fn::{
    ln_binomial, ln_factorial, ln_hyp1f1_nonneg, poisson_tail_bound, shell_cap, CompensatedSum,
    SeriesResult, HYP1F1_REL_TOL,
};

/// Below this `|1 - 2 alpha|` the no-trade probability uses its symmetric form.
const NEAR_SYMMETRIC: f64 = 1e-4;

fn one_sided(k: usize) -> SeriesResult {
    SeriesResult::exact(if k == 0 { 1.0 } else { 0.0 })
}

/// `P(V = k)` as a double series over the surplus asks `i` and bids `j`:
///
/// `e^{-mu} (a b)^k / (k!)^2  sum_{i,j} a^i b^j / (i! j! C(i + j + 2k, i + k))`
///
/// with `a = alpha mu`, `b = (1 - alpha) mu`. Summed by shells `s = i + j`
/// up to [`shell_cap`]; the omitted mass is bounded by a Poisson tail.
pub fn volume_pmf(params: &AuctionParams, k: usize, tol: f64) -> Result<SeriesResult> {
    check_tol_arg(tol)?;
    let (a, b, mu) = side_intensities(params)?;
    if a == 0.0 || b == 0.0 {
        return Ok(one_sided(k));
    }
    let k64 = k as u64;
    let (ln_a, ln_b) = (a.ln(), b.ln());
    let prefix = -mu + ln_pow(k64, ln_a + ln_b) - 2.0 * ln_factorial(k64);
    let cap = shell_cap(mu);

    let mut acc = CompensatedSum::default();
    let mut max_log_mag = 0.0f64;
    let mut terms = 0usize;
    for s in 0..=cap {
        for i in 0..=s {
            let j = s - i;
            let ln_fi = ln_factorial(i);
            let ln_fj = ln_factorial(j);
            let ln_c = ln_binomial(s + 2 * k64, i + k64)?;
            let ln_ai = ln_pow(i, ln_a);
            let ln_bj = ln_pow(j, ln_b);
            let ln_t = prefix + ln_ai + ln_bj - ln_fi - ln_fj - ln_c;
            acc.add(ln_t.exp());
            let mag = prefix.abs() + ln_ai.abs() + ln_bj.abs() + ln_fi + ln_fj + ln_c;
            max_log_mag = max_log_mag.max(mag);
            terms += 1;
        }
    }
    let value = acc.value();
    let tail = poisson_tail_bound(mu, cap + 1 + 2 * k64);
    let rounding = value * f64::EPSILON * (4.0 * max_log_mag + 8.0);
    check_tol(
        SeriesResult {
            value,
            abs_error_bound: tail + rounding,
            terms_used: terms,
        },
        tol,
    )
}

/// `P(V = k)` through the single series
///
/// `e^{-mu} (a b)^k sum_i C(k + i, k) a^i / (i + 2k)!  1F1(k + 1; i + 2k + 1; b)`.
pub fn volume_pmf_hyp(params: &AuctionParams, k: usize, tol: f64) -> Result<SeriesResult> {
    check_tol_arg(tol)?;
    let (a, b, mu) = side_intensities(params)?;
    if a == 0.0 || b == 0.0 {
        return Ok(one_sided(k));
    }
    let k64 = k as u64;
    let ln_a = a.ln();
    let prefix = -mu + ln_pow(k64, a.ln() + b.ln());
    let cap = shell_cap(mu);

    let mut acc = CompensatedSum::default();
    let mut err = 0.0f64;
    let mut terms = 0usize;
    for i in 0..=cap {
        let (ln_f, rel_f, n) = ln_hyp1f1_nonneg(k64 + 1, i + 2 * k64 + 1, b, HYP1F1_REL_TOL)?;
        let ln_c = ln_binomial(k64 + i, k64)?;
        let ln_ai = ln_pow(i, ln_a);
        let ln_fact = ln_factorial(i + 2 * k64);
        let t = (prefix + ln_c + ln_ai - ln_fact + ln_f).exp();
        acc.add(t);
        let mag = prefix.abs() + ln_c + ln_ai.abs() + ln_fact + ln_f.abs();
        err += t * (rel_f + f64::EPSILON * (4.0 * mag + 8.0));
        terms += n;
    }
    let value = acc.value();
    let tail = poisson_tail_bound(a, cap + 1 + k64);
    check_tol(
        SeriesResult {
            value,
            abs_error_bound: tail + err + 2.0 * f64::EPSILON * value,
            terms_used: terms,
        },
        tol,
    )
}

/// Closed form of `P(V = k)` for a balanced market (`alpha = 1/2`):
/// `e^{-mu/2} (mu/2)^{2k} / (2k)! * (1 + mu / (2 (2k + 1)))`.
pub fn volume_pmf_symmetric(lambda_t: f64, k: usize) -> f64 {
    if lambda_t <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let h = lambda_t / 2.0;
    let two_k = 2 * k as u64;
    let ln_head = -h + ln_pow(two_k, h.ln()) - ln_factorial(two_k);
    ln_head.exp() * (1.0 + h / (two_k as f64 + 1.0))
}

/// `P(V = 0)`, the probability that the auction clears without any trade.
///
/// `e^{-a} + alpha / (1 - 2 alpha) (e^{-a} - e^{-b})`, rewritten around
/// `alpha = 1/2` as `e^{-h(1-e)} + (1 - e) e^{-h} h sinh(h e) / (h e)` with
/// `e = 1 - 2 alpha`, `h = mu / 2`, which is exact and free of the `0/0`.
pub fn prob_no_trade(params: &AuctionParams) -> Result<f64> {
    let (a, b, mu) = side_intensities(params)?;
    if a == 0.0 || b == 0.0 {
        return Ok(1.0);
    }
    let alpha = a / mu;
    let eps = 1.0 - 2.0 * alpha;
    if eps.abs() >= NEAR_SYMMETRIC {
        return Ok((-a).exp() + alpha / eps * ((-a).exp() - (-b).exp()));
    }
    let h = mu / 2.0;
    let z = h * eps;
    let sinhc = if z.abs() < 1e-3 {
        1.0 + z * z / 6.0 + z.powi(4) / 120.0
    } else {
        z.sinh() / z
    };
    Ok((-h * (1.0 - eps)).exp() + (1.0 - eps) * (-h).exp() * h * sinhc)
}

/// Masses `P(V = k)` for `k = 0..=k_max`. The tail bound covers both the mass
/// beyond `k_max` and the truncation error of every listed mass.
pub fn volume_distribution(params: &AuctionParams, k_max: usize, tol: f64) -> Result<DiscretePmf> {
    let mut masses = Vec::with_capacity(k_max + 1);
    let mut err = 0.0;
    for k in 0..=k_max {
        let r = volume_pmf(params, k, tol)?;
        masses.push(r.value);
        err += r.abs_error_bound;
    }
    let total: f64 = masses.iter().sum();
    Ok(DiscretePmf {
        masses,
        tail_bound: (1.0 - total).max(0.0) + err,
    })
}

/// Default upper end of a volume table: `ceil(mu) + 10 sqrt(mu) + 20`.
pub fn default_k_max(params: &AuctionParams) -> usize {
    let mu = params.effective().intensity();
    (mu.ceil() + 10.0 * mu.sqrt() + 20.0) as usize
}
