//! Exact finite-intensity laws.
//!
//! Price densities (`f_L`, `f_U`, `f_R`) are conditional on at least one bid
//! and one ask being live at the close; this is what their normalising
//! constants `(1 - e^{-alpha lambda T})(1 - e^{-(1 - alpha) lambda T})` encode.
//! Every function folds cancellation in through [`AuctionParams::effective`].

mod prices;
mod range;
mod volume;

use serde::{Deserialize, Serialize};

pub use prices::{
    lower_price_density, lower_price_density_hyp, upper_price_density, upper_price_density_hyp,
    PriceBoundSeries,
};
pub use range::{
    conditional_range_density, range_density_general, range_density_uniform, RangeMixture,
};
pub use volume::{
    default_k_max, prob_no_trade, volume_distribution, volume_pmf, volume_pmf_hyp,
    volume_pmf_symmetric,
};

use crate::error::{AuctionError, Result};
use crate::model::AuctionParams;
use crate::special_fn::{ln_one_minus_exp_neg, SeriesResult};

/// Default absolute tolerance on truncated series.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Number of points on a tabulation grid.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Probability masses on `0..masses.len()`, with a bound on the omitted mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    pub masses: Vec<f64>,
    pub tail_bound: f64,
}

impl DiscretePmf {
    pub fn mass(&self, k: usize) -> f64 {
        self.masses.get(k).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.masses.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

/// A density tabulated on a grid, with per-point error bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub support: (f64, f64),
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub abs_error_bounds: Vec<f64>,
}

impl DensityCurve {
    /// Evaluates `density` at each grid point.
    pub fn tabulate<F>(support: (f64, f64), xs: Vec<f64>, mut density: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<SeriesResult>,
    {
        let mut values = Vec::with_capacity(xs.len());
        let mut abs_error_bounds = Vec::with_capacity(xs.len());
        for &x in &xs {
            let r = density(x)?;
            values.push(r.value);
            abs_error_bounds.push(r.abs_error_bound);
        }
        Ok(Self {
            support,
            xs,
            values,
            abs_error_bounds,
        })
    }

    /// Trapezoidal integral over the grid.
    pub fn trapezoid(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Intensities of the live ask and bid counts, `(alpha' lambda' T, (1 - alpha') lambda' T)`.
pub(crate) fn side_intensities(params: &AuctionParams) -> Result<(f64, f64, f64)> {
    params.validate()?;
    let eff = params.effective();
    let mu = eff.intensity();
    Ok((eff.alpha * mu, (1.0 - eff.alpha) * mu, mu))
}

/// `ln[(1 - e^{-a})(1 - e^{-b})]`, the log-probability that both sides are non-empty.
pub(crate) fn ln_both_sides(a: f64, b: f64) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 {
        return Err(AuctionError::Degenerate(
            "one side of the book is empty almost surely; price laws are undefined".into(),
        ));
    }
    Ok(ln_one_minus_exp_neg(a) + ln_one_minus_exp_neg(b))
}

pub(crate) fn check_tol(result: SeriesResult, tol: f64) -> Result<SeriesResult> {
    if result.abs_error_bound <= tol {
        Ok(result)
    } else {
        Err(AuctionError::ToleranceNotMet {
            achieved: result.abs_error_bound,
            requested: tol,
        })
    }
}

pub(crate) fn check_tol_arg(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(crate::error::invalid(format!("tolerance must be > 0, got {tol}")))
    }
}

/// `k * ln_x`, with `0 * ln 0 = 0`.
#[inline]
pub(crate) fn ln_pow(k: u64, ln_x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_x
    }
}
