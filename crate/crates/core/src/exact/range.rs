use super::{check_tol, check_tol_arg, ln_both_sides, ln_pow, side_intensities};
use crate::error::{invalid, Result};
use crate::model::AuctionParams;
use crate::price_dist::PriceDistribution;
use crate::quad::integrate;
use crate::special_fn::{bessel_i0_i1_scaled, ln_factorial, SeriesResult};

const INITIAL_PANELS: usize = 16;

/// Density of the clearing range `R = U - L` at `delta` for uniform prices on
/// `(0, 1)`, conditional on both sides being non-empty:
///
/// `mu e^{-mu delta} / Z [1 - (1 - alpha) e^{-a (1 - delta)} - alpha e^{-b (1 - delta)}]`.
pub fn range_density_uniform(params: &AuctionParams, delta: f64) -> Result<f64> {
    let (a, b, mu) = side_intensities(params)?;
    let ln_z = ln_both_sides(a, b)?;
    if !(0.0..1.0).contains(&delta) {
        return Ok(0.0);
    }
    let alpha = a / mu;
    let t = 1.0 - delta;
    // The bracket rewritten as a sum of non-negative terms.
    let bracket = -(1.0 - alpha) * (-a * t).exp_m1() - alpha * (-b * t).exp_m1();
    Ok(mu * (-mu * delta - ln_z).exp() * bracket)
}

/// `u ↦ F(F^{-1}(u) + delta)` is bounded by the support; past this level the
/// shifted density vanishes.
fn upper_level(dist: &dyn PriceDistribution, delta: f64) -> Option<f64> {
    let (lo, hi) = dist.support();
    if hi.is_finite() {
        if delta >= hi - lo {
            return None;
        }
        Some(dist.cdf(hi - delta))
    } else {
        Some(1.0)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("range must be finite and >= 0, got {delta}")))
    }
}

/// Density at `delta` of the gap between the `n`-th and `(n+1)`-th order
/// statistics of an i.i.d. sample of size `n + m` from `F`:
///
/// `(n+m)! / ((n-1)! (m-1)!)  ∫ F(x)^{n-1} f(x) f(x + delta) (1 - F(x + delta))^{m-1} dx`,
///
/// integrated in `u = F(x)` by adaptive quadrature.
pub fn conditional_range_density(
    m: usize,
    n: usize,
    dist: &dyn PriceDistribution,
    delta: f64,
    quad_tol: f64,
) -> Result<SeriesResult> {
    if m == 0 || n == 0 {
        return Err(invalid("conditional range needs m >= 1 and n >= 1"));
    }
    check_delta(delta)?;
    check_tol_arg(quad_tol)?;
    let Some(u_max) = upper_level(dist, delta) else {
        return Ok(SeriesResult::exact(0.0));
    };
    let (m, n) = (m as u64, n as u64);
    let ln_c = ln_factorial(n + m) - ln_factorial(n - 1) - ln_factorial(m - 1);
    let integrand = |u: f64| {
        let y = dist.quantile(u) + delta;
        let f = dist.pdf(y);
        if f <= 0.0 {
            return 0.0;
        }
        let ln_t = ln_c + ln_pow(n - 1, u.ln()) + ln_pow(m - 1, dist.sf(y).ln());
        f * ln_t.exp()
    };
    let r = integrate(integrand, 0.0, u_max, quad_tol, INITIAL_PANELS)?;
    Ok(SeriesResult {
        value: r.value.max(0.0),
        abs_error_bound: r.abs_error,
        terms_used: r.evaluations,
    })
}

/// Poisson mixture of [`conditional_range_density`] over the live counts.
///
/// The sum over counts is taken inside the integral. With `x = b u`,
/// `y = a w`, `w = 1 - F(F^{-1}(u) + delta)` and `s = 2 sqrt(x y)`, the mixed
/// kernel
///
/// `K = sum_{n, m >= 1} P_b(n) P_a(m) (n+m)! / ((n-1)! (m-1)!) u^{n-1} w^{m-1}`
///
/// sums to `a b e^{x + y - mu} [2 I_0(s) + (x + y) 2 I_1(s) / s]`, and
///
/// `f_R(delta) = 1/Z ∫ f(F^{-1}(u) + delta) K du`.
#[derive(Debug, Clone)]
pub struct RangeMixture {
    a: f64,
    b: f64,
    mu: f64,
    ln_z: f64,
}

impl RangeMixture {
    pub fn new(params: &AuctionParams) -> Result<Self> {
        let (a, b, mu) = side_intensities(params)?;
        let ln_z = ln_both_sides(a, b)?;
        Ok(Self { a, b, mu, ln_z })
    }

    /// The mixed kernel divided by `Z`.
    fn kernel(&self, u: f64, w: f64) -> f64 {
        let (x, y) = (self.b * u, self.a * w);
        let s = 2.0 * (x * y).sqrt();
        let (i0, i1_ratio) = bessel_i0_i1_scaled(s);
        // x + y + s = (sqrt x + sqrt y)^2 <= mu, so the exponent never overflows.
        let ln_prefix = self.a.ln() + self.b.ln() + x + y + s - self.mu - self.ln_z;
        ln_prefix.exp() * (2.0 * i0 + (x + y) * i1_ratio)
    }

    pub fn density(&self, dist: &dyn PriceDistribution, delta: f64, tol: f64) -> Result<SeriesResult> {
        check_delta(delta)?;
        check_tol_arg(tol)?;
        let Some(u_max) = upper_level(dist, delta) else {
            return Ok(SeriesResult::exact(0.0));
        };
        let integrand = |u: f64| {
            let y = dist.quantile(u) + delta;
            let f = dist.pdf(y);
            if f <= 0.0 {
                return 0.0;
            }
            f * self.kernel(u, dist.sf(y))
        };
        let r = integrate(integrand, 0.0, u_max, 0.5 * tol, INITIAL_PANELS)?;
        let rounding = r.value.abs() * f64::EPSILON * (8.0 * self.mu + 64.0);
        check_tol(
            SeriesResult {
                value: r.value.max(0.0),
                abs_error_bound: r.abs_error + rounding,
                terms_used: r.evaluations,
            },
            tol,
        )
    }
}

/// Density of the clearing range at `delta` for a general price distribution,
/// conditional on both sides being non-empty.
pub fn range_density_general(
    params: &AuctionParams,
    dist: &dyn PriceDistribution,
    delta: f64,
    tol: f64,
) -> Result<SeriesResult> {
    RangeMixture::new(params)?.density(dist, delta, tol)
}
