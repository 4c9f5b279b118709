//! Limit laws for a large expected number of orders.
//!
//! Each law is evaluated at the effective parameters, so cancellation is
//! covered by the same formulas.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AuctionError, Result};
use crate::model::AuctionParams;
use crate::price_dist::PriceDistribution;
use crate::special_fn::{std_normal_cdf, std_normal_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalLaw {
    pub mean: f64,
    pub sd: f64,
}

impl NormalLaw {
    pub fn pdf(&self, x: f64) -> f64 {
        std_normal_pdf((x - self.mean) / self.sd) / self.sd
    }

    pub fn cdf(&self, x: f64) -> f64 {
        std_normal_cdf((x - self.mean) / self.sd)
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }
}

/// Exponential law with the given rate (inverse of the mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialLaw {
    pub rate: f64,
}

impl ExponentialLaw {
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.rate * (-self.rate * x).exp()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.rate * x).exp_m1()
        }
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.rate
    }
}

/// `(lambda' T, alpha')`, rejecting one-sided markets.
fn two_sided(params: &AuctionParams) -> Result<(f64, f64)> {
    params.validate()?;
    let eff = params.effective();
    if eff.alpha <= 0.0 || eff.alpha >= 1.0 {
        return Err(AuctionError::Degenerate(format!(
            "limit laws need 0 < alpha < 1, got {}",
            eff.alpha
        )));
    }
    Ok((eff.intensity(), eff.alpha))
}

/// Density of `F` at its `1 - alpha` quantile, required to be positive.
fn density_at_clearing_quantile(dist: &dyn PriceDistribution, alpha: f64) -> Result<(f64, f64)> {
    let q = dist.quantile(1.0 - alpha);
    let f = dist.pdf(q);
    if !(f > 0.0 && f.is_finite()) {
        return Err(invalid(format!(
            "price density at the {} quantile is {f}; the limit laws need it positive",
            1.0 - alpha
        )));
    }
    Ok((q, f))
}

/// Normal limit of the traded volume: mean `mu alpha (1 - alpha)`, variance
/// `mu alpha (1 - alpha) (1 - 2 alpha (1 - alpha))`.
pub fn asymptotic_volume(params: &AuctionParams) -> Result<NormalLaw> {
    let (mu, alpha) = two_sided(params)?;
    let p = alpha * (1.0 - alpha);
    Ok(NormalLaw {
        mean: mu * p,
        sd: (mu * p * (1.0 - 2.0 * p)).sqrt(),
    })
}

/// Normal limit shared by the lower and the upper clearing price, marginally.
pub fn asymptotic_price(params: &AuctionParams, dist: &dyn PriceDistribution) -> Result<NormalLaw> {
    let (mu, alpha) = two_sided(params)?;
    let (q, f) = density_at_clearing_quantile(dist, alpha)?;
    Ok(NormalLaw {
        mean: q,
        sd: (2.0 * alpha * (1.0 - alpha) / mu).sqrt() / f,
    })
}

/// Exponential limit of the clearing range, rate `mu f(F^{-1}(1 - alpha))`.
pub fn asymptotic_range(params: &AuctionParams, dist: &dyn PriceDistribution) -> Result<ExponentialLaw> {
    let (mu, alpha) = two_sided(params)?;
    let (_, f) = density_at_clearing_quantile(dist, alpha)?;
    Ok(ExponentialLaw { rate: mu * f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::price_dist::{make_normal, make_uniform};
    use crate::special_fn::std_normal_quantile;

    fn params(mu: f64, alpha: f64) -> AuctionParams {
        AuctionParams::new(mu, alpha, 1.0).unwrap()
    }

    #[test]
    fn volume_examples() {
        let v = asymptotic_volume(&params(100.0, 0.5)).unwrap();
        assert!((v.mean - 25.0).abs() < 1e-12);
        assert!((v.sd - 12.5f64.sqrt()).abs() < 1e-12);
        let v = asymptotic_volume(&params(100.0, 0.3)).unwrap();
        assert!((v.mean - 21.0).abs() < 1e-12);
        assert!((v.sd - 3.48999).abs() < 1e-5);
    }

    #[test]
    fn equal_cancellation_mean() {
        let (lambda, theta, t, alpha) = (50.0, 2.0, 1.5, 0.3);
        let p = AuctionParams::with_cancellation(lambda, alpha, t, theta, theta).unwrap();
        let v = asymptotic_volume(&p).unwrap();
        let expected = lambda / theta * (1.0 - (-theta * t).exp()) * alpha * (1.0 - alpha);
        assert!((v.mean - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn price_examples() {
        let u = make_uniform(0.0, 1.0).unwrap();
        assert!((asymptotic_price(&params(50.0, 0.5), u.as_ref()).unwrap().mean - 0.5).abs() < 1e-15);
        let law = asymptotic_price(&params(100.0, 0.3), u.as_ref()).unwrap();
        assert!((law.mean - 0.7).abs() < 1e-12);
        assert!((law.sd - 0.0042f64.sqrt()).abs() < 1e-12);
        let n = make_normal(0.0, 1.0).unwrap();
        let law = asymptotic_price(&params(100.0, 0.3), n.as_ref()).unwrap();
        assert!((law.mean - std_normal_quantile(0.7).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn range_examples() {
        let u = make_uniform(0.0, 1.0).unwrap();
        for alpha in [0.1, 0.3, 0.5] {
            let r = asymptotic_range(&params(200.0, alpha), u.as_ref()).unwrap();
            assert!((r.rate - 200.0).abs() < 1e-9);
        }
        let n = make_normal(0.0, 1.0).unwrap();
        let r = asymptotic_range(&params(10.0, 0.3), n.as_ref()).unwrap();
        let expected = 10.0 * std_normal_pdf(std_normal_quantile(0.7).unwrap());
        assert!((r.rate - expected).abs() < 1e-12);
        let r2 = asymptotic_range(&params(20.0, 0.3), n.as_ref()).unwrap();
        assert_eq!(r2.rate, 2.0 * r.rate);
    }

    #[test]
    fn imbalance_reflection() {
        let n = make_normal(1.0, 2.0).unwrap();
        let a = asymptotic_volume(&params(80.0, 0.2)).unwrap();
        let b = asymptotic_volume(&params(80.0, 0.8)).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12 && (a.sd - b.sd).abs() < 1e-12);
        let pa = asymptotic_price(&params(80.0, 0.2), n.as_ref()).unwrap();
        assert!((pa.mean - n.quantile(0.8)).abs() < 1e-12);
        let pb = asymptotic_price(&params(80.0, 0.8), n.as_ref()).unwrap();
        assert!((pb.mean - n.quantile(0.2)).abs() < 1e-12);
    }

    #[test]
    fn cancellation_composes_exactly() {
        let n = make_normal(0.0, 1.0).unwrap();
        let p = AuctionParams::with_cancellation(40.0, 0.35, 2.0, 0.8, 1.7).unwrap();
        let e = p.effective();
        assert_eq!(asymptotic_volume(&p).unwrap(), asymptotic_volume(&e).unwrap());
        assert_eq!(asymptotic_price(&p, n.as_ref()).unwrap(), asymptotic_price(&e, n.as_ref()).unwrap());
        assert_eq!(asymptotic_range(&p, n.as_ref()).unwrap(), asymptotic_range(&e, n.as_ref()).unwrap());
    }

    #[test]
    fn degenerate_rejected() {
        let u = make_uniform(0.0, 1.0).unwrap();
        for alpha in [0.0, 1.0] {
            assert!(asymptotic_volume(&params(10.0, alpha)).is_err());
            assert!(asymptotic_price(&params(10.0, alpha), u.as_ref()).is_err());
            assert!(asymptotic_range(&params(10.0, alpha), u.as_ref()).is_err());
        }
    }
}
