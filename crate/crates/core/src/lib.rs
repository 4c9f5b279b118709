//! Call-auction analytics: exact and asymptotic laws of the traded volume,
//! the clearing-price bounds and the clearing-price range when orders arrive
//! as Poisson flows with i.i.d. prices, plus a seeded Monte Carlo clearing
//! simulator used to cross-check every formula.

pub mod asymptotic;
pub mod clearing;
pub mod cli;
pub mod error;
pub mod exact;
pub mod model;
pub mod montecarlo;
pub mod price_dist;
pub mod quad;
pub mod special_fn;
pub mod validate;

pub use error::{AuctionError, Result};
pub use model::{effective_params, AuctionParams, EffectiveParams};
pub use price_dist::PriceDistribution;
