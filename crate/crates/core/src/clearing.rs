//! Clearing of a closed call auction.
//!
//! With `n` bids and `m` asks pooled and sorted by price, every price strictly
//! between the `n`-th and `(n+1)`-th pooled prices equates cumulative supply
//! and demand, and the traded volume is the number of bids among the `m`
//! highest prices.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{AuctionError, Result};
use crate::exact::DiscretePmf;
use crate::special_fn::ln_binomial;

/// Default cap on `m + n` for [`conditional_volume_pmf`].
pub const DEFAULT_ORDER_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    /// Asks sort before bids at equal price.
    fn tie_rank(self) -> u8 {
        match self {
            Side::Ask => 0,
            Side::Bid => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub side: Side,
    pub price: f64,
    pub submit_time: f64,
    /// Time until cancellation; `None` means the order is never cancelled.
    pub lifetime: Option<f64>,
}

impl Order {
    pub fn is_live_at(&self, close: f64) -> bool {
        match self.lifetime {
            None => true,
            Some(life) => self.submit_time + life > close,
        }
    }
}

/// Result of clearing one auction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearingOutcome {
    pub n_bids: usize,
    pub n_asks: usize,
    pub volume: usize,
    /// `(L, U)`, present iff both sides are non-empty.
    pub bounds: Option<(f64, f64)>,
}

impl ClearingOutcome {
    fn one_sided(n_bids: usize, n_asks: usize) -> Self {
        Self {
            n_bids,
            n_asks,
            volume: 0,
            bounds: None,
        }
    }

    pub fn lower(&self) -> Option<f64> {
        self.bounds.map(|(l, _)| l)
    }

    pub fn upper(&self) -> Option<f64> {
        self.bounds.map(|(_, u)| u)
    }

    /// `R = U - L`.
    pub fn range(&self) -> Option<f64> {
        self.bounds.map(|(l, u)| u - l)
    }
}

fn check_finite(prices: &[f64]) -> Result<()> {
    match prices.iter().find(|p| !p.is_finite()) {
        Some(&p) => Err(AuctionError::NonFinitePrice(p)),
        None => Ok(()),
    }
}

fn pooled_key(a: &(f64, Side), b: &(f64, Side)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.tie_rank().cmp(&b.1.tie_rank()))
}

/// Clears an auction by the order-statistics construction, in
/// `O((n + m) log(n + m))`.
pub fn clear_auction(bid_prices: &[f64], ask_prices: &[f64]) -> Result<ClearingOutcome> {
    check_finite(bid_prices)?;
    check_finite(ask_prices)?;
    let (n, m) = (bid_prices.len(), ask_prices.len());
    if n == 0 || m == 0 {
        return Ok(ClearingOutcome::one_sided(n, m));
    }

    let mut pooled: Vec<(f64, Side)> = Vec::with_capacity(n + m);
    pooled.extend(bid_prices.iter().map(|&p| (p, Side::Bid)));
    pooled.extend(ask_prices.iter().map(|&p| (p, Side::Ask)));
    pooled.sort_by(pooled_key);

    let lower = pooled[n - 1].0;
    let upper = pooled[n].0;
    let volume = pooled[n..].iter().filter(|(_, s)| *s == Side::Bid).count();
    Ok(ClearingOutcome {
        n_bids: n,
        n_asks: m,
        volume,
        bounds: Some((lower, upper)),
    })
}

/// Clears a set of orders, keeping only those live at `close`.
pub fn clear_orders(orders: &[Order], close: f64) -> Result<ClearingOutcome> {
    let live = orders.iter().filter(|o| o.is_live_at(close));
    let (mut bids, mut asks) = (Vec::new(), Vec::new());
    for o in live {
        match o.side {
            Side::Bid => bids.push(o.price),
            Side::Ask => asks.push(o.price),
        }
    }
    clear_auction(&bids, &asks)
}

/// Reference clearing straight from the supply/demand definition.
///
/// `A(p)` counts asks priced at or below `p`, `B(p)` counts bids at or above
/// `p`, and `p` clears the auction iff `A(p) = B(p)`. Candidate prices are the
/// open gaps between consecutive pooled orders; equal prices are separated by
/// an infinitesimal perturbation that puts asks below bids (and otherwise keeps
/// input order), which is the tie rule of [`clear_auction`]. Quadratic time.
pub fn clear_auction_oracle(bid_prices: &[f64], ask_prices: &[f64]) -> Result<ClearingOutcome> {
    check_finite(bid_prices)?;
    check_finite(ask_prices)?;
    let (n, m) = (bid_prices.len(), ask_prices.len());
    if n == 0 || m == 0 {
        return Ok(ClearingOutcome::one_sided(n, m));
    }

    // Perturbed price: (price, tie rank, input position).
    type Key = (f64, u8, usize);
    let cmp = |a: &Key, b: &Key| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2));
    let bids: Vec<Key> = bid_prices.iter().enumerate().map(|(i, &p)| (p, 1, i)).collect();
    let asks: Vec<Key> = ask_prices.iter().enumerate().map(|(i, &p)| (p, 0, n + i)).collect();
    let mut points: Vec<Key> = bids.iter().chain(asks.iter()).copied().collect();
    points.sort_by(cmp);

    // Gap g lies just above points[g - 1] and just below points[g];
    // g = 0 is the -inf side and g = n + m the +inf side.
    let supply = |g: usize| -> usize {
        match g {
            0 => 0,
            _ => asks.iter().filter(|a| cmp(a, &points[g - 1]) != Ordering::Greater).count(),
        }
    };
    let demand = |g: usize| -> usize {
        if g == points.len() {
            0
        } else {
            bids.iter().filter(|b| cmp(b, &points[g]) != Ordering::Less).count()
        }
    };

    let mut best = 0usize;
    let mut clearing: Vec<usize> = Vec::new();
    for g in 0..=points.len() {
        let (a, b) = (supply(g), demand(g));
        best = best.max(a.min(b));
        if a == b {
            clearing.push(g);
        }
    }
    let (first, last) = match (clearing.first(), clearing.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => unreachable!("A - B steps by one at every order, so it crosses zero"),
    };
    debug_assert_eq!(supply(first), best);
    let lower = points[first - 1].0;
    let upper = points[last].0;
    Ok(ClearingOutcome {
        n_bids: n,
        n_asks: m,
        volume: best,
        bounds: Some((lower, upper)),
    })
}

/// Law of the traded volume given `m` asks and `n` bids:
/// `P(V = k) = C(m, k) C(n, k) / C(m + n, n)`.
pub fn conditional_volume_pmf(m: usize, n: usize) -> Result<DiscretePmf> {
    conditional_volume_pmf_capped(m, n, DEFAULT_ORDER_CAP)
}

pub fn conditional_volume_pmf_capped(m: usize, n: usize, cap: usize) -> Result<DiscretePmf> {
    if m == 0 || n == 0 {
        return Err(crate::error::invalid(format!(
            "conditional volume law needs m, n >= 1, got m = {m}, n = {n}"
        )));
    }
    if m + n > cap {
        return Err(AuctionError::CapExceeded { total: m + n, cap });
    }
    let (mu, nu) = (m as u64, n as u64);
    let ln_total = ln_binomial(mu + nu, nu)?;
    let masses = (0..=m.min(n) as u64)
        .map(|k| Ok((ln_binomial(mu, k)? + ln_binomial(nu, k)? - ln_total).exp()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DiscretePmf {
        masses,
        tail_bound: 0.0,
    })
}
