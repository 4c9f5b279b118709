//! Order price distributions.
//!
//! Bids and asks share one atomless distribution `F`. Every instance declares
//! its support explicitly; the density is zero outside of it.

use std::fmt;

use rand::RngCore;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{invalid, Result};
use crate::special_fn::{std_normal_cdf, std_normal_pdf, std_normal_quantile, std_normal_sf};

pub trait PriceDistribution: fmt::Debug + Send + Sync {
    fn cdf(&self, x: f64) -> f64;

    /// `1 - cdf(x)`; instances override this where the subtraction loses digits.
    fn sf(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    fn pdf(&self, x: f64) -> f64;

    /// Inverse distribution function on `(0, 1)`; the endpoints map to the
    /// support bounds.
    fn quantile(&self, p: f64) -> f64;

    /// Open support interval `(lo, hi)`; bounds may be infinite.
    fn support(&self) -> (f64, f64);

    /// Supremum of the density.
    fn max_density(&self) -> f64;

    /// Round-trippable textual form, e.g. `"uniform:0,1"`.
    fn spec(&self) -> String;

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.quantile(open_unit(rng))
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub(crate) fn open_unit(rng: &mut dyn RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPrice {
    lo: f64,
    hi: f64,
}

impl UniformPrice {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("uniform bounds need lo < hi, got ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Whether this is the uniform law on `(0, 1)`.
    pub fn is_standard(&self) -> bool {
        self.lo == 0.0 && self.hi == 1.0
    }
}

impl PriceDistribution for UniformPrice {
    fn cdf(&self, x: f64) -> f64 {
        ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn sf(&self, x: f64) -> f64 {
        ((self.hi - x) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn pdf(&self, x: f64) -> f64 {
        if x > self.lo && x < self.hi {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        self.lo + p.clamp(0.0, 1.0) * (self.hi - self.lo)
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn max_density(&self) -> f64 {
        1.0 / (self.hi - self.lo)
    }

    fn spec(&self) -> String {
        format!("uniform:{},{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPrice {
    mean: f64,
    sd: f64,
}

impl NormalPrice {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(invalid(format!("normal needs finite mean and sd > 0, got ({mean}, {sd})")));
        }
        Ok(Self { mean, sd })
    }
}

impl PriceDistribution for NormalPrice {
    fn cdf(&self, x: f64) -> f64 {
        std_normal_cdf((x - self.mean) / self.sd)
    }

    fn sf(&self, x: f64) -> f64 {
        std_normal_sf((x - self.mean) / self.sd)
    }

    fn pdf(&self, x: f64) -> f64 {
        std_normal_pdf((x - self.mean) / self.sd) / self.sd
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        self.mean + self.sd * std_normal_quantile(p).unwrap_or(f64::NAN)
    }

    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn max_density(&self) -> f64 {
        std_normal_pdf(0.0) / self.sd
    }

    fn spec(&self) -> String {
        format!("normal:{},{}", self.mean, self.sd)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.sd * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialPrice {
    rate: f64,
}

impl ExponentialPrice {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(invalid(format!("exponential rate must be > 0, got {rate}")));
        }
        Ok(Self { rate })
    }
}

impl PriceDistribution for ExponentialPrice {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.rate * x).exp_m1()
        }
    }

    fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-self.rate * x).exp()
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.rate * (-self.rate * x).exp()
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        -(-p).ln_1p() / self.rate
    }

    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn max_density(&self) -> f64 {
        self.rate
    }

    fn spec(&self) -> String {
        format!("exponential:{}", self.rate)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / self.rate
    }
}

pub fn make_uniform(lo: f64, hi: f64) -> Result<Box<dyn PriceDistribution>> {
    Ok(Box::new(UniformPrice::new(lo, hi)?))
}

pub fn make_normal(mean: f64, sd: f64) -> Result<Box<dyn PriceDistribution>> {
    Ok(Box::new(NormalPrice::new(mean, sd)?))
}

pub fn make_exponential(rate: f64) -> Result<Box<dyn PriceDistribution>> {
    Ok(Box::new(ExponentialPrice::new(rate)?))
}

/// Parses `"uniform:lo,hi"`, `"normal:mean,sd"` or `"exponential:rate"`.
pub fn parse_dist(spec: &str) -> Result<Box<dyn PriceDistribution>> {
    let (kind, args) = spec
        .split_once(':')
        .ok_or_else(|| invalid(format!("distribution spec '{spec}' lacks ':'")))?;
    let values = args
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("bad number '{s}' in distribution spec '{spec}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    match (kind.trim(), values.as_slice()) {
        ("uniform", [lo, hi]) => make_uniform(*lo, *hi),
        ("normal", [mean, sd]) => make_normal(*mean, *sd),
        ("exponential", [rate]) => make_exponential(*rate),
        _ => Err(invalid(format!(
            "unknown distribution spec '{spec}' (expected uniform:lo,hi | normal:mean,sd | exponential:rate)"
        ))),
    }
}

/// Density at the `1 - alpha` quantile, the scale constant of the price limits.
pub fn density_at_quantile(dist: &dyn PriceDistribution, p: f64) -> f64 {
    dist.pdf(dist.quantile(p))
}

/// Convenience used by tests and the simulator.
pub fn sample_n(dist: &dyn PriceDistribution, rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instances() -> Vec<Box<dyn PriceDistribution>> {
        vec![
            make_uniform(0.0, 1.0).unwrap(),
            make_uniform(-2.0, 3.5).unwrap(),
            make_normal(0.0, 1.0).unwrap(),
            make_normal(10.0, 0.25).unwrap(),
            make_exponential(2.0).unwrap(),
        ]
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(make_uniform(1.0, 1.0).is_err());
        assert!(make_uniform(2.0, 1.0).is_err());
        assert!(make_normal(0.0, 0.0).is_err());
        assert!(make_normal(0.0, -1.0).is_err());
        assert!(make_exponential(0.0).is_err());
        assert!(make_exponential(f64::NAN).is_err());
    }

    #[test]
    fn examples() {
        let u = make_uniform(0.0, 1.0).unwrap();
        assert!((u.cdf(0.3) - 0.3).abs() < 1e-15);
        for x in [0.01, 0.2, 0.5, 0.99] {
            assert_eq!(u.pdf(x), 1.0);
        }
        let n = make_normal(0.0, 1.0).unwrap();
        // Bisection on the normal cdf as an independent quantile oracle.
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < 0.7 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((n.quantile(0.7) - lo).abs() < 1e-12);
        assert!((n.quantile(0.7) - 0.524401).abs() < 1e-6);
        assert_eq!(make_normal(3.0, 2.0).unwrap().quantile(0.5), 3.0);
    }

    #[test]
    fn quantile_round_trip() {
        for d in instances() {
            let mut p = 0.001;
            while p < 0.999 {
                assert!((d.cdf(d.quantile(p)) - p).abs() < 1e-9, "{} at {p}", d.spec());
                p += 0.00137;
            }
        }
    }

    #[test]
    fn pdf_matches_cdf_difference() {
        let h = 1e-5;
        for d in instances() {
            for i in 1..=100 {
                let x = d.quantile(i as f64 / 101.0);
                let fd = (d.cdf(x + h) - d.cdf(x - h)) / (2.0 * h);
                assert!((d.pdf(x) - fd).abs() < 1e-5, "{} at {x}", d.spec());
                assert!(d.pdf(x) > 0.0);
            }
        }
    }

    #[test]
    fn cdf_monotone_and_density_zero_outside_support() {
        for d in instances() {
            let mut prev = 0.0;
            for i in 0..=400 {
                let x = -25.0 + i as f64 * 0.125;
                let c = d.cdf(x);
                assert!(c >= prev);
                prev = c;
                let (lo, hi) = d.support();
                if x <= lo || x >= hi {
                    assert_eq!(d.pdf(x), 0.0);
                }
            }
        }
    }

    #[test]
    fn sampler_passes_ks() {
        use rand::SeedableRng;

        use crate::montecarlo::{ks_critical_value, ks_statistic};

        let n = 100_000;
        let crit = ks_critical_value(n, 0.001);
        for (i, d) in instances().iter().enumerate() {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7 + i as u64);
            let xs = sample_n(d.as_ref(), &mut rng, n);
            let ks = ks_statistic(&xs, |x| d.cdf(x)).unwrap();
            assert!(ks < crit, "{}: ks {ks} vs {crit}", d.spec());
        }
    }

    #[test]
    fn spec_round_trip() {
        for d in instances() {
            let back = parse_dist(&d.spec()).unwrap();
            assert_eq!(back.spec(), d.spec());
        }
        assert!(parse_dist("uniform:1").is_err());
        assert!(parse_dist("cauchy:0,1").is_err());
        assert!(parse_dist("normal0,1").is_err());
        assert!(parse_dist("normal:0,x").is_err());
    }
}
