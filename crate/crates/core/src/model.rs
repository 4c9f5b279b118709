//! Auction parameters and the cancellation-to-effective-rate mapping.
//!
//! With exponential order lifetimes the number of live orders of each side
//! at the close is still Poisson, only with a reduced mean. Every formula
//! written for the no-cancellation model therefore applies after replacing
//! the total rate and the imbalance by their effective counterparts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Below this value of `theta * T` the survival factor uses its Taylor series.
const SMALL_DECAY: f64 = 1e-8;

/// Order flow of one call auction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionParams {
    /// Total order arrival rate (bids and asks together).
    pub lambda_total: f64,
    /// Share of the flow made of ask orders.
    pub alpha: f64,
    /// Auction length.
    pub horizon: f64,
    /// Cancellation rate of ask orders (0 disables cancellation).
    pub theta_ask: f64,
    /// Cancellation rate of bid orders.
    pub theta_bid: f64,
}

impl AuctionParams {
    /// Parameters of an auction without cancellation.
    pub fn new(lambda_total: f64, alpha: f64, horizon: f64) -> Result<Self> {
        Self::with_cancellation(lambda_total, alpha, horizon, 0.0, 0.0)
    }

    pub fn with_cancellation(
        lambda_total: f64,
        alpha: f64,
        horizon: f64,
        theta_ask: f64,
        theta_bid: f64,
    ) -> Result<Self> {
        let params = Self {
            lambda_total,
            alpha,
            horizon,
            theta_ask,
            theta_bid,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_total.is_finite() && self.lambda_total > 0.0) {
            return Err(invalid(format!(
                "arrival rate must be finite and > 0, got {}",
                self.lambda_total
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid(format!(
                "horizon must be finite and > 0, got {}",
                self.horizon
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        for (name, theta) in [("theta_ask", self.theta_ask), ("theta_bid", self.theta_bid)] {
            if !(theta.is_finite() && theta >= 0.0) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {theta}")));
            }
        }
        Ok(())
    }

    pub fn lambda_ask(&self) -> f64 {
        self.alpha * self.lambda_total
    }

    pub fn lambda_bid(&self) -> f64 {
        (1.0 - self.alpha) * self.lambda_total
    }

    /// `lambda * T`, the expected number of submitted orders.
    pub fn intensity(&self) -> f64 {
        self.lambda_total * self.horizon
    }

    pub fn has_cancellation(&self) -> bool {
        self.theta_ask > 0.0 || self.theta_bid > 0.0
    }
}

/// Rate and imbalance of the orders still live at the close.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub lambda_eff: f64,
    pub alpha_eff: f64,
}

impl EffectiveParams {
    /// Expected number of live orders at the close, `lambda' * T`.
    pub fn intensity(&self, horizon: f64) -> f64 {
        self.lambda_eff * horizon
    }

    /// Expected live ask count, `alpha' * lambda' * T`.
    pub fn ask_intensity(&self, horizon: f64) -> f64 {
        self.alpha_eff * self.lambda_eff * horizon
    }

    /// Expected live bid count.
    pub fn bid_intensity(&self, horizon: f64) -> f64 {
        (1.0 - self.alpha_eff) * self.lambda_eff * horizon
    }
}

/// `(1 - exp(-theta T)) / theta`, the expected live time of an order submitted
/// uniformly over the auction, times the number of such orders per unit rate.
/// Equals `T` at `theta = 0`.
pub fn survival_factor(theta: f64, horizon: f64) -> f64 {
    let x = theta * horizon;
    if x == 0.0 {
        return horizon;
    }
    let ratio = if x < SMALL_DECAY {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    };
    horizon * ratio
}

/// Maps cancellation rates onto the rate and imbalance of the live order flow.
///
/// The live ask count at the close is Poisson with mean
/// `lambda_A (1 - exp(-theta_A T)) / theta_A`, and similarly for bids.
pub fn effective_params(params: &AuctionParams) -> EffectiveParams {
    let AuctionParams {
        lambda_total,
        alpha,
        horizon,
        theta_ask,
        theta_bid,
    } = *params;

    if theta_ask == 0.0 && theta_bid == 0.0 {
        return EffectiveParams {
            lambda_eff: lambda_total,
            alpha_eff: alpha,
        };
    }

    let g_ask = survival_factor(theta_ask, horizon);
    let g_bid = survival_factor(theta_bid, horizon);
    let ask_part = alpha * g_ask;
    let bid_part = (1.0 - alpha) * g_bid;
    let lambda_eff = lambda_total / horizon * (ask_part + bid_part);
    let alpha_eff = if theta_ask == theta_bid {
        alpha
    } else {
        ask_part / (ask_part + bid_part)
    };
    EffectiveParams {
        lambda_eff,
        alpha_eff,
    }
}

impl AuctionParams {
    /// Cancellation-free parameters with the same live-order law.
    pub fn effective(&self) -> AuctionParams {
        let eff = effective_params(self);
        AuctionParams {
            lambda_total: eff.lambda_eff,
            alpha: eff.alpha_eff,
            horizon: self.horizon,
            theta_ask: 0.0,
            theta_bid: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(AuctionParams::new(0.0, 0.5, 1.0).is_err());
        assert!(AuctionParams::new(1.0, 1.5, 1.0).is_err());
        assert!(AuctionParams::new(1.0, 0.5, -1.0).is_err());
        assert!(AuctionParams::with_cancellation(1.0, 0.5, 1.0, -0.1, 0.0).is_err());
        assert!(AuctionParams::new(1.0, 0.0, 1.0).is_ok());
        assert!(AuctionParams::new(1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn side_rates_recovered() {
        let p = AuctionParams::new(10.0, 0.25, 1.0).unwrap();
        assert_eq!(p.lambda_ask(), 2.5);
        assert_eq!(p.lambda_bid(), 7.5);
    }

    #[test]
    fn no_cancellation_is_identity() {
        let p = AuctionParams::new(10.0, 0.3, 2.0).unwrap();
        let e = effective_params(&p);
        assert_eq!(e.lambda_eff, 10.0);
        assert_eq!(e.alpha_eff, 0.3);
    }

    #[test]
    fn equal_thetas_keep_alpha() {
        for theta in [1e-12, 0.1, 1.0, 7.5] {
            let p = AuctionParams::with_cancellation(10.0, 0.37, 1.0, theta, theta).unwrap();
            assert_eq!(effective_params(&p).alpha_eff, 0.37);
        }
    }

    #[test]
    fn unit_theta_value() {
        let p = AuctionParams::with_cancellation(10.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        let e = effective_params(&p);
        let expected = 10.0 * (1.0 - (-1.0f64).exp());
        assert!((e.lambda_eff - expected).abs() < 1e-14);
        assert!((e.lambda_eff - 6.32121).abs() < 1e-5);
    }

    #[test]
    fn continuity_at_zero_theta() {
        let p0 = AuctionParams::new(10.0, 0.4, 1.0).unwrap();
        let p = AuctionParams::with_cancellation(10.0, 0.4, 1.0, 1e-12, 1e-12).unwrap();
        let l0 = effective_params(&p0).lambda_eff;
        let l = effective_params(&p).lambda_eff;
        assert!(((l - l0) / l0).abs() < 1e-9);
    }

    #[test]
    fn one_sided_markets_stay_one_sided() {
        let p = AuctionParams::with_cancellation(10.0, 0.0, 1.0, 0.5, 2.0).unwrap();
        assert_eq!(effective_params(&p).alpha_eff, 0.0);
        let p = AuctionParams::with_cancellation(10.0, 1.0, 1.0, 0.5, 2.0).unwrap();
        assert_eq!(effective_params(&p).alpha_eff, 1.0);
    }

    #[test]
    fn survival_factor_series_branch_matches_direct() {
        let t = 2.0f64;
        let theta = 4e-9;
        let direct = (1.0 - (-theta * t).exp()) / theta;
        assert!((survival_factor(theta, t) - direct).abs() / t < 1e-7);
        assert!((survival_factor(1e-20, t) - t).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn swapping_sides_mirrors_alpha(
            alpha in 0.01f64..0.99,
            ta in 0.0f64..5.0,
            tb in 0.0f64..5.0,
            t in 0.1f64..3.0,
        ) {
            let p = AuctionParams::with_cancellation(20.0, alpha, t, ta, tb).unwrap();
            let q = AuctionParams::with_cancellation(20.0, 1.0 - alpha, t, tb, ta).unwrap();
            let (e, f) = (effective_params(&p), effective_params(&q));
            prop_assert!((e.lambda_eff - f.lambda_eff).abs() <= 1e-12 * e.lambda_eff);
            prop_assert!((e.alpha_eff - (1.0 - f.alpha_eff)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&e.alpha_eff));
        }

        #[test]
        fn lambda_eff_non_increasing_in_theta(
            alpha in 0.0f64..=1.0,
            ta in 0.0f64..5.0,
            tb in 0.0f64..5.0,
            bump in 0.0f64..2.0,
        ) {
            let base = AuctionParams::with_cancellation(10.0, alpha, 1.0, ta, tb).unwrap();
            let more_a = AuctionParams::with_cancellation(10.0, alpha, 1.0, ta + bump, tb).unwrap();
            let more_b = AuctionParams::with_cancellation(10.0, alpha, 1.0, ta, tb + bump).unwrap();
            let l = effective_params(&base).lambda_eff;
            prop_assert!(effective_params(&more_a).lambda_eff <= l * (1.0 + 1e-15));
            prop_assert!(effective_params(&more_b).lambda_eff <= l * (1.0 + 1e-15));
        }
    }
}
