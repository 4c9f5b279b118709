//! Seeded Monte Carlo simulation of the auction model.
//!
//! Replication `r` of a batch draws from the ChaCha8 stream `r` of the batch
//! seed, so a batch is a pure function of its inputs whatever the number of
//! worker threads.

mod stats;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{
    chi_square, fit_exponential_mle, freedman_diaconis, ks_critical_value, ks_statistic,
    total_variation, ChiSquare, FitResult, Histogram,
};

use crate::clearing::{clear_auction, clear_orders, ClearingOutcome, Order, Side};
use crate::error::{invalid, Result};
use crate::model::AuctionParams;
use crate::price_dist::{open_unit, PriceDistribution};

/// Address of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngState {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn poisson_count(mean: f64, rng: &mut ChaCha8Rng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    d.sample(rng) as usize
}

/// Orders of one side submitted over `[0, T]`, each with an exponential lifetime.
fn submit_with_lifetimes(
    side: Side,
    rate: f64,
    theta: f64,
    horizon: f64,
    dist: &dyn PriceDistribution,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Order>,
) {
    let count = poisson_count(rate * horizon, rng);
    for _ in 0..count {
        let submit_time = open_unit(rng) * horizon;
        let e: f64 = Exp1.sample(rng);
        let price = dist.sample(rng);
        out.push(Order {
            side,
            price,
            submit_time,
            lifetime: Some(e / theta),
        });
    }
}

/// Simulates and clears one auction.
///
/// Without cancellation the live counts are drawn first and the prices after.
/// With cancellation, every submitted order gets a uniform submission time and
/// an exponential lifetime, and only orders still live at `T` are cleared.
pub fn simulate_auction(params: &AuctionParams, dist: &dyn PriceDistribution, state: RngState) -> Result<ClearingOutcome> {
    params.validate()?;
    simulate_with(params, dist, &mut state.rng())
}

fn simulate_with(params: &AuctionParams, dist: &dyn PriceDistribution, rng: &mut ChaCha8Rng) -> Result<ClearingOutcome> {
    let t = params.horizon;
    if !params.has_cancellation() {
        let asks = poisson_count(params.lambda_ask() * t, rng);
        let bids = poisson_count(params.lambda_bid() * t, rng);
        let ask_prices: Vec<f64> = (0..asks).map(|_| dist.sample(rng)).collect();
        let bid_prices: Vec<f64> = (0..bids).map(|_| dist.sample(rng)).collect();
        return clear_auction(&bid_prices, &ask_prices);
    }
    let mut orders = Vec::new();
    let sides = [
        (Side::Ask, params.lambda_ask(), params.theta_ask),
        (Side::Bid, params.lambda_bid(), params.theta_bid),
    ];
    for (side, rate, theta) in sides {
        if theta > 0.0 {
            submit_with_lifetimes(side, rate, theta, t, dist, rng, &mut orders);
        } else {
            for _ in 0..poisson_count(rate * t, rng) {
                orders.push(Order {
                    side,
                    price: dist.sample(rng),
                    submit_time: open_unit(rng) * t,
                    lifetime: None,
                });
            }
        }
    }
    clear_orders(&orders, t)
}

/// Empirical distributions from a batch of auctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n_reps: usize,
    pub volume_counts: BTreeMap<usize, u64>,
    pub live_ask_counts: BTreeMap<usize, u64>,
    pub live_bid_counts: BTreeMap<usize, u64>,
    /// Samples of `L`, `U` and `R`, from replications with both sides non-empty.
    pub l_samples: Vec<f64>,
    pub u_samples: Vec<f64>,
    pub r_samples: Vec<f64>,
    pub n_conditioned: usize,
}

impl SampleSummary {
    fn from_outcomes(outcomes: &[ClearingOutcome]) -> Self {
        let mut s = Self {
            n_reps: outcomes.len(),
            volume_counts: BTreeMap::new(),
            live_ask_counts: BTreeMap::new(),
            live_bid_counts: BTreeMap::new(),
            l_samples: Vec::new(),
            u_samples: Vec::new(),
            r_samples: Vec::new(),
            n_conditioned: 0,
        };
        for o in outcomes {
            *s.volume_counts.entry(o.volume).or_default() += 1;
            *s.live_ask_counts.entry(o.n_asks).or_default() += 1;
            *s.live_bid_counts.entry(o.n_bids).or_default() += 1;
            if let Some((l, u)) = o.bounds {
                s.l_samples.push(l);
                s.u_samples.push(u);
                s.r_samples.push(u - l);
                s.n_conditioned += 1;
            }
        }
        s
    }

    /// Empirical probability of `V = k`.
    pub fn volume_frequency(&self, k: usize) -> f64 {
        self.volume_counts.get(&k).copied().unwrap_or(0) as f64 / self.n_reps as f64
    }

    /// Sample mean and standard error of the live ask count.
    pub fn live_ask_mean(&self) -> (f64, f64) {
        count_mean(&self.live_ask_counts, self.n_reps)
    }

    pub fn live_bid_mean(&self) -> (f64, f64) {
        count_mean(&self.live_bid_counts, self.n_reps)
    }

    /// JSON form with the conditioned samples thinned to every `stride`-th value.
    pub fn to_json(&self, stride: usize) -> serde_json::Value {
        let stride = stride.max(1);
        let thin = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<f64>>();
        serde_json::json!({
            "n_reps": self.n_reps,
            "n_conditioned": self.n_conditioned,
            "volume_counts": self.volume_counts,
            "live_ask_counts": self.live_ask_counts,
            "live_bid_counts": self.live_bid_counts,
            "sample_stride": stride,
            "l_samples": thin(&self.l_samples),
            "u_samples": thin(&self.u_samples),
            "r_samples": thin(&self.r_samples),
        })
    }
}

fn count_mean(counts: &BTreeMap<usize, u64>, n: usize) -> (f64, f64) {
    let n = n as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for (&k, &c) in counts {
        let (k, c) = (k as f64, c as f64);
        s1 += c * k;
        s2 += c * k * k;
    }
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Runs `n_reps` auctions on the current rayon pool.
pub fn run_batch(params: &AuctionParams, dist: &dyn PriceDistribution, n_reps: usize, seed: u64) -> Result<SampleSummary> {
    if n_reps == 0 {
        return Err(invalid("a batch needs at least one replication"));
    }
    params.validate()?;
    let outcomes = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| simulate_with(params, dist, &mut RngState::new(seed, r).rng()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSummary::from_outcomes(&outcomes))
}

/// [`run_batch`] on a dedicated pool of `workers` threads.
pub fn run_batch_with_workers(
    params: &AuctionParams,
    dist: &dyn PriceDistribution,
    n_reps: usize,
    seed: u64,
    workers: usize,
) -> Result<SampleSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_batch(params, dist, n_reps, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::prob_no_trade;
    use crate::price_dist::{make_normal, make_uniform};

    #[test]
    fn deterministic_and_worker_independent() {
        let p = AuctionParams::with_cancellation(30.0, 0.4, 1.0, 0.5, 0.0).unwrap();
        let d = make_normal(0.0, 1.0).unwrap();
        let a = run_batch_with_workers(&p, d.as_ref(), 2000, 17, 1).unwrap();
        let b = run_batch_with_workers(&p, d.as_ref(), 2000, 17, 4).unwrap();
        let c = run_batch(&p, d.as_ref(), 2000, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.to_json(7).to_string(), b.to_json(7).to_string());
        assert_ne!(a, run_batch(&p, d.as_ref(), 2000, 18).unwrap());
    }

    #[test]
    fn single_rep_and_bookkeeping() {
        let p = AuctionParams::new(10.0, 0.3, 1.0).unwrap();
        let d = make_uniform(0.0, 1.0).unwrap();
        let s = run_batch(&p, d.as_ref(), 1, 3).unwrap();
        assert_eq!(s.n_reps, 1);
        assert_eq!(s.volume_counts.values().sum::<u64>(), 1);
        let s = run_batch(&p, d.as_ref(), 5000, 3).unwrap();
        assert_eq!(s.volume_counts.values().sum::<u64>(), 5000);
        assert_eq!(s.l_samples.len(), s.n_conditioned);
        assert_eq!(s.u_samples.len(), s.n_conditioned);
        assert_eq!(s.r_samples.len(), s.n_conditioned);
        assert!(s.r_samples.iter().all(|&r| r >= 0.0));
        assert!(s.l_samples.iter().zip(&s.u_samples).all(|(l, u)| l <= u));
        assert!(run_batch(&p, d.as_ref(), 0, 3).is_err());
    }

    #[test]
    fn tiny_intensity_gives_empty_auctions() {
        let p = AuctionParams::new(1e-9, 0.5, 1.0).unwrap();
        let d = make_uniform(0.0, 1.0).unwrap();
        let s = run_batch(&p, d.as_ref(), 1000, 1).unwrap();
        assert_eq!(s.volume_counts.get(&0), Some(&1000));
        assert_eq!(s.n_conditioned, 0);
        let one_sided = AuctionParams::new(10.0, 1.0, 1.0).unwrap();
        let o = simulate_auction(&one_sided, d.as_ref(), RngState::new(1, 0)).unwrap();
        assert_eq!((o.n_bids, o.volume, o.bounds), (0, 0, None));
    }

    #[test]
    fn no_trade_frequency_matches_exact() {
        let p = AuctionParams::new(10.0, 0.25, 1.0).unwrap();
        let d = make_uniform(0.0, 1.0).unwrap();
        let n = 100_000;
        let s = run_batch(&p, d.as_ref(), n, 99).unwrap();
        let exact = prob_no_trade(&p).unwrap();
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((s.volume_frequency(0) - exact).abs() < 3.0 * se);
    }

    #[test]
    fn conditioning_frequency() {
        let p = AuctionParams::new(3.0, 0.3, 1.0).unwrap();
        let d = make_uniform(0.0, 1.0).unwrap();
        let n = 100_000;
        let s = run_batch(&p, d.as_ref(), n, 5).unwrap();
        let z = (1.0 - (-0.9f64).exp()) * (1.0 - (-2.1f64).exp());
        let se = (z * (1.0 - z) / n as f64).sqrt();
        assert!((s.n_conditioned as f64 / n as f64 - z).abs() < 3.0 * se);
    }

    #[test]
    fn cancellation_thins_live_counts() {
        let (lambda, alpha, t, theta) = (20.0, 0.4, 1.5, 1.3);
        let p = AuctionParams::with_cancellation(lambda, alpha, t, theta, 0.0).unwrap();
        let d = make_uniform(0.0, 1.0).unwrap();
        let s = run_batch(&p, d.as_ref(), 100_000, 11).unwrap();
        let (mean, se) = s.live_ask_mean();
        let expected = alpha * lambda / theta * (1.0 - (-theta * t).exp());
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} (se {se})");
        let (bid_mean, bid_se) = s.live_bid_mean();
        assert!((bid_mean - (1.0 - alpha) * lambda * t).abs() < 3.0 * bid_se);
    }

    #[test]
    fn vanishing_cancellation_matches_counts_first_path() {
        let d = make_uniform(0.0, 1.0).unwrap();
        let plain = AuctionParams::new(8.0, 0.5, 1.0).unwrap();
        let thin = AuctionParams::with_cancellation(8.0, 0.5, 1.0, 1e-15, 1e-15).unwrap();
        let a = run_batch(&plain, d.as_ref(), 100_000, 1).unwrap();
        let b = run_batch(&thin, d.as_ref(), 100_000, 2).unwrap();
        let ((ma, sa), (mb, sb)) = (a.live_ask_mean(), b.live_ask_mean());
        assert!((ma - mb).abs() < 3.0 * (sa * sa + sb * sb).sqrt());
        assert!((ma - 4.0).abs() < 3.0 * sa);
    }
}
