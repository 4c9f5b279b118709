use super::{check_tol, check_tol_arg, ln_both_sides, ln_pow, side_intensities};
use crate::error::Result;
use crate::model::AuctionParams;
use crate::price_dist::PriceDistribution;
use crate::special_fn::{
    ln_factorial, ln_hyp1f1_nonneg, poisson_tail_bound, shell_cap, CompensatedSum, SeriesResult,
    HYP1F1_REL_TOL,
};

/// Shell-truncated double series for the density of one clearing-price bound.
///
/// For the lower bound, with `n` bids (intensity `b`), `m` asks (intensity `a`)
/// and `u = F(x)`:
///
/// `f_L(x) = f(x) / Z  sum_{n, m >= 1} P_b(n) P_a(m) (n+m)! / ((n-1)! m!) u^{n-1} (1-u)^m`
///
/// where `Z = (1 - e^{-a})(1 - e^{-b})`. The upper bound uses the same series
/// with the roles of the sides and of `u` and `1 - u` exchanged. The log
/// coefficients do not depend on `x` and are computed once.
#[derive(Debug, Clone)]
pub struct PriceBoundSeries {
    upper: bool,
    /// Intensity of the side counted below the bound.
    below: f64,
    /// Intensity of the other side.
    above: f64,
    mu: f64,
    ln_z: f64,
    cap: u64,
    /// `ln_coef[s][n - 1]` for `n + m = s`, `1 <= n <= s - 1`.
    ln_coef: Vec<Vec<f64>>,
    max_coef_mag: f64,
}

impl PriceBoundSeries {
    /// Series for the lower bound `L`.
    pub fn lower(params: &AuctionParams) -> Result<Self> {
        let (a, b, mu) = side_intensities(params)?;
        Self::build(false, b, a, mu)
    }

    /// Series for the upper bound `U`.
    pub fn upper(params: &AuctionParams) -> Result<Self> {
        let (a, b, mu) = side_intensities(params)?;
        Self::build(true, a, b, mu)
    }

    fn build(upper: bool, below: f64, above: f64, mu: f64) -> Result<Self> {
        let ln_z = ln_both_sides(below, above)?;
        let cap = shell_cap(mu);
        let (ln_below, ln_above) = (below.ln(), above.ln());
        let mut ln_coef = Vec::with_capacity(cap as usize + 1);
        let mut max_coef_mag = 0.0f64;
        for s in 0..=cap {
            let mut row = Vec::with_capacity(s.saturating_sub(1) as usize);
            for n in 1..s {
                let m = s - n;
                let parts = [
                    -mu,
                    ln_pow(n, ln_below),
                    ln_pow(m, ln_above),
                    -ln_factorial(n),
                    -2.0 * ln_factorial(m),
                    ln_factorial(s),
                    -ln_factorial(n - 1),
                ];
                let c: f64 = parts.iter().sum();
                max_coef_mag = max_coef_mag.max(parts.iter().map(|p| p.abs()).sum());
                row.push(c);
            }
            ln_coef.push(row);
        }
        Ok(Self {
            upper,
            below,
            above,
            mu,
            ln_z,
            cap,
            ln_coef,
            max_coef_mag,
        })
    }

    /// Fractions of the price distribution below and above `x`, as seen from
    /// the counted side.
    fn split(&self, dist: &dyn PriceDistribution, x: f64) -> (f64, f64) {
        if self.upper {
            (dist.sf(x), dist.cdf(x))
        } else {
            (dist.cdf(x), dist.sf(x))
        }
    }

    /// Density at `x` by the double series.
    pub fn density(&self, dist: &dyn PriceDistribution, x: f64) -> SeriesResult {
        let f = dist.pdf(x);
        if f <= 0.0 {
            return SeriesResult::exact(0.0);
        }
        let (u, v) = self.split(dist, x);
        let (ln_u, ln_v) = (u.ln(), v.ln());
        let mut acc = CompensatedSum::default();
        let mut terms = 0usize;
        for (s, row) in self.ln_coef.iter().enumerate() {
            for (idx, &c) in row.iter().enumerate() {
                let n = idx as u64 + 1;
                let m = s as u64 - n;
                let ln_t = c + ln_pow(n - 1, ln_u) + ln_pow(m, ln_v);
                acc.add(ln_t.exp());
                terms += 1;
            }
        }
        let inner = acc.value();
        let scale = f * (-self.ln_z).exp();
        let value = inner * scale;
        let ln_mag = self.max_coef_mag
            + self.cap as f64 * (finite_abs(ln_u) + finite_abs(ln_v))
            + self.ln_z.abs();
        let rounding = value * f64::EPSILON * (4.0 * ln_mag + 8.0);
        let tail = scale * self.mu * poisson_tail_bound(self.mu, self.cap);
        SeriesResult {
            value,
            abs_error_bound: tail + rounding,
            terms_used: terms,
        }
    }

    /// Density at `x` by the single series in the counted side,
    ///
    /// `f(x) b / Z [ sum_n e^{-mu} (b u)^n / n!  1F1(n + 2; 1; a (1 - u)) - e^{b u - mu} ]`.
    pub fn density_hyp(&self, dist: &dyn PriceDistribution, x: f64) -> Result<SeriesResult> {
        let f = dist.pdf(x);
        if f <= 0.0 {
            return Ok(SeriesResult::exact(0.0));
        }
        let (u, v) = self.split(dist, x);
        let (b, a, mu) = (self.below, self.above, self.mu);
        let z = a * v;
        let ln_bu = (b * u).ln();
        let mut acc = CompensatedSum::default();
        let mut err = 0.0f64;
        let mut terms = 0usize;
        for n in 0..=self.cap {
            let (ln_h, rel_h, used) = ln_hyp1f1_nonneg(n + 2, 1, z, HYP1F1_REL_TOL)?;
            let ln_p = ln_pow(n, ln_bu);
            let ln_t = -mu + ln_p - ln_factorial(n) + ln_h;
            let t = ln_t.exp();
            acc.add(t);
            let mag = mu + ln_p.abs() + ln_factorial(n) + ln_h.abs();
            err += t * (rel_h + f64::EPSILON * (4.0 * mag + 8.0));
            terms += used;
        }
        let sum = acc.value();
        let sub = (b * u - mu).exp();
        let inner = sum - sub;
        let scale = f * b * (-self.ln_z).exp();
        // Cancellation between the two positive pieces.
        err += f64::EPSILON * (4.0 * (sum + sub) + sub * (4.0 * mu + 8.0));
        let tail = f * (-self.ln_z).exp() * mu * poisson_tail_bound(b, self.cap + 1);
        Ok(SeriesResult {
            value: (inner * scale).max(0.0),
            abs_error_bound: err * scale + tail,
            terms_used: terms,
        })
    }
}

fn finite_abs(x: f64) -> f64 {
    if x.is_finite() {
        x.abs()
    } else {
        0.0
    }
}

fn evaluate(series: &PriceBoundSeries, dist: &dyn PriceDistribution, x: f64, tol: f64) -> Result<SeriesResult> {
    check_tol_arg(tol)?;
    check_tol(series.density(dist, x), tol)
}

fn evaluate_hyp(series: &PriceBoundSeries, dist: &dyn PriceDistribution, x: f64, tol: f64) -> Result<SeriesResult> {
    check_tol_arg(tol)?;
    check_tol(series.density_hyp(dist, x)?, tol)
}

/// Density of the lowest clearing price `L` at `x`, conditional on both sides
/// of the book being non-empty.
pub fn lower_price_density(
    params: &AuctionParams,
    dist: &dyn PriceDistribution,
    x: f64,
    tol: f64,
) -> Result<SeriesResult> {
    evaluate(&PriceBoundSeries::lower(params)?, dist, x, tol)
}

/// Density of the highest clearing price `U` at `x`.
pub fn upper_price_density(
    params: &AuctionParams,
    dist: &dyn PriceDistribution,
    x: f64,
    tol: f64,
) -> Result<SeriesResult> {
    evaluate(&PriceBoundSeries::upper(params)?, dist, x, tol)
}

/// [`lower_price_density`] through the confluent hypergeometric single series.
pub fn lower_price_density_hyp(
    params: &AuctionParams,
    dist: &dyn PriceDistribution,
    x: f64,
    tol: f64,
) -> Result<SeriesResult> {
    evaluate_hyp(&PriceBoundSeries::lower(params)?, dist, x, tol)
}

/// [`upper_price_density`] through the confluent hypergeometric single series.
pub fn upper_price_density_hyp(
    params: &AuctionParams,
    dist: &dyn PriceDistribution,
    x: f64,
    tol: f64,
) -> Result<SeriesResult> {
    evaluate_hyp(&PriceBoundSeries::upper(params)?, dist, x, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::price_dist::{make_normal, make_uniform};
    use crate::quad::integrate;

    fn params(mu: f64, alpha: f64) -> AuctionParams {
        AuctionParams::new(mu, alpha, 1.0).unwrap()
    }

    /// Poisson-weighted order-statistic densities, summed over a square
    /// `n, m <= cap` with weights built by recurrence.
    fn order_stat_oracle(mu: f64, alpha: f64, u: f64, cap: usize) -> f64 {
        let (a, b) = (alpha * mu, (1.0 - alpha) * mu);
        let pois = |mean: f64| {
            let mut w = vec![(-mean).exp()];
            for j in 1..=cap {
                let prev = w[j - 1];
                w.push(prev * mean / j as f64);
            }
            w
        };
        let (wa, wb) = (pois(a), pois(b));
        let z = (1.0 - (-a).exp()) * (1.0 - (-b).exp());
        let mut total = 0.0;
        for n in 1..=cap {
            for m in 1..=cap {
                // Density of the n-th order statistic of n + m uniforms at u.
                let ln_c = ln_factorial((n + m) as u64)
                    - ln_factorial(n as u64 - 1)
                    - ln_factorial(m as u64);
                let d = (ln_c + (n - 1) as f64 * u.ln() + m as f64 * (1.0 - u).ln()).exp();
                total += wa[m] * wb[n] * d;
            }
        }
        total / z
    }

    #[test]
    fn matches_order_statistic_mixture() {
        let u = make_uniform(0.0, 1.0).unwrap();
        for (mu, alpha) in [(3.0, 0.5), (10.0, 0.3)] {
            let p = params(mu, alpha);
            for x in [0.1, 0.45, 0.7, 0.93] {
                let v = lower_price_density(&p, u.as_ref(), x, 1e-10).unwrap().value;
                let o = order_stat_oracle(mu, alpha, x, 120);
                assert!((v - o).abs() < 1e-10, "mu={mu} x={x}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn normalized_on_uniform() {
        let u = make_uniform(0.0, 1.0).unwrap();
        for (mu, alpha) in [(10.0, 0.25), (10.0, 0.5), (40.0, 0.3)] {
            let p = params(mu, alpha);
            for series in [PriceBoundSeries::lower(&p).unwrap(), PriceBoundSeries::upper(&p).unwrap()] {
                let r = integrate(|x| series.density(u.as_ref(), x).value, 0.0, 1.0, 1e-9, 8).unwrap();
                assert!((r.value - 1.0).abs() < 1e-6, "mu={mu} alpha={alpha}: {}", r.value);
            }
        }
    }

    #[test]
    fn balanced_mirror_symmetry() {
        let u = make_uniform(0.0, 1.0).unwrap();
        let p = params(10.0, 0.5);
        for i in 1..20 {
            let x = i as f64 / 20.0;
            let l = lower_price_density(&p, u.as_ref(), x, 1e-10).unwrap().value;
            let h = upper_price_density(&p, u.as_ref(), 1.0 - x, 1e-10).unwrap().value;
            assert!((l - h).abs() < 1e-9);
        }
    }

    #[test]
    fn imbalance_reflection() {
        let n = make_normal(0.0, 1.0).unwrap();
        let p = params(12.0, 0.3);
        let q = params(12.0, 0.7);
        for x in [-1.5, -0.2, 0.4, 1.1] {
            let l = lower_price_density(&p, n.as_ref(), x, 1e-10).unwrap().value;
            let h = upper_price_density(&q, n.as_ref(), -x, 1e-10).unwrap().value;
            assert!((l - h).abs() < 1e-10);
        }
    }

    #[test]
    fn single_series_agrees() {
        let u = make_uniform(0.0, 1.0).unwrap();
        for mu in [5.0, 20.0] {
            for alpha in [0.25, 0.5] {
                let p = params(mu, alpha);
                for i in 0..20 {
                    let x = (i as f64 + 0.5) / 20.0;
                    let d = lower_price_density(&p, u.as_ref(), x, 1e-10).unwrap();
                    let h = lower_price_density_hyp(&p, u.as_ref(), x, 1e-9).unwrap();
                    assert!((d.value - h.value).abs() < 1e-8, "mu={mu} alpha={alpha} x={x}");
                    let du = upper_price_density(&p, u.as_ref(), x, 1e-10).unwrap();
                    let hu = upper_price_density_hyp(&p, u.as_ref(), x, 1e-9).unwrap();
                    assert!((du.value - hu.value).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn single_series_near_lower_edge() {
        let u = make_uniform(0.0, 1.0).unwrap();
        let p = params(20.0, 0.25);
        for x in [1e-12, 1e-6] {
            let d = lower_price_density(&p, u.as_ref(), x, 1e-10).unwrap().value;
            let h = lower_price_density_hyp(&p, u.as_ref(), x, 1e-9).unwrap().value;
            assert!((d - h).abs() < 1e-8);
        }
        assert_eq!(lower_price_density(&p, u.as_ref(), 0.0, 1e-10).unwrap().value, 0.0);
        assert_eq!(lower_price_density(&p, u.as_ref(), 1.5, 1e-10).unwrap().value, 0.0);
    }

    #[test]
    fn degenerate_sides_rejected() {
        let u = make_uniform(0.0, 1.0).unwrap();
        for alpha in [0.0, 1.0] {
            assert!(lower_price_density(&params(10.0, alpha), u.as_ref(), 0.5, 1e-9).is_err());
        }
    }
}
