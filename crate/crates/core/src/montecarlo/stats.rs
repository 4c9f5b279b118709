use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AuctionError, Result};
use crate::exact::DiscretePmf;

/// Minimum expected count of a pooled chi-square bin.
const MIN_EXPECTED: f64 = 5.0;

fn sorted(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(AuctionError::EmptySample);
    }
    if let Some(&x) = sample.iter().find(|x| x.is_nan()) {
        return Err(AuctionError::NonFinitePrice(x));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    let v = sorted(sample)?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let c = cdf(x);
        d = d.max((i + 1) as f64 / n - c).max(c - i as f64 / n);
    }
    Ok(d)
}

/// Asymptotic critical value of the one-sample KS statistic at significance `level`.
pub fn ks_critical_value(n: usize, level: f64) -> f64 {
    (-0.5 * (level / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Pearson statistic over pooled bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    /// `(first k, observed, expected)` of each pooled bin; the last bin is open-ended.
    pub bins: Vec<(usize, f64, f64)>,
}

/// Pearson chi-square of observed volume counts against `expected`.
///
/// Adjacent values are pooled left to right until each bin expects at least
/// five counts; values beyond the tabulated masses form a final tail bin and
/// a short last group is merged into its neighbour.
pub fn chi_square(observed: &BTreeMap<usize, u64>, expected: &DiscretePmf, n_reps: usize) -> Result<ChiSquare> {
    if n_reps == 0 || expected.is_empty() {
        return Err(AuctionError::InsufficientCoverage("no expected counts".into()));
    }
    let n = n_reps as f64;
    let len = expected.len();
    let mut cells: Vec<(usize, f64, f64)> = (0..len)
        .map(|k| (k, observed.get(&k).copied().unwrap_or(0) as f64, expected.mass(k) * n))
        .collect();
    let tail_obs: u64 = observed.range(len..).map(|(_, &c)| c).sum();
    cells.push((len, tail_obs as f64, (1.0 - expected.total()).max(0.0) * n));

    let mut bins: Vec<(usize, f64, f64)> = Vec::new();
    let mut open: Option<(usize, f64, f64)> = None;
    for (k, o, e) in cells {
        let cur = match open {
            Some((k0, o0, e0)) => (k0, o0 + o, e0 + e),
            None => (k, o, e),
        };
        if cur.2 >= MIN_EXPECTED {
            bins.push(cur);
            open = None;
        } else {
            open = Some(cur);
        }
    }
    if let Some((_, o, e)) = open {
        match bins.last_mut() {
            Some(last) => {
                last.1 += o;
                last.2 += e;
            }
            None => bins.push(open.unwrap()),
        }
    }
    if bins.len() < 2 {
        return Err(AuctionError::InsufficientCoverage(format!(
            "{} pooled bin(s) with expected count >= {MIN_EXPECTED}",
            bins.len()
        )));
    }
    let mut statistic = 0.0;
    for &(k, o, e) in &bins {
        if e <= 0.0 {
            return Err(AuctionError::InsufficientCoverage(format!("bin starting at {k} has zero expectation")));
        }
        statistic += (o - e) * (o - e) / e;
    }
    Ok(ChiSquare {
        statistic,
        dof: bins.len() - 1,
        bins,
    })
}

/// Total variation distance between observed frequencies and `pmf`, counting
/// the untabulated mass on both sides.
pub fn total_variation(observed: &BTreeMap<usize, u64>, pmf: &DiscretePmf, n_reps: usize) -> f64 {
    let n = n_reps as f64;
    let mut tv = 0.0;
    for k in 0..pmf.len() {
        let f = observed.get(&k).copied().unwrap_or(0) as f64 / n;
        tv += (f - pmf.mass(k)).abs();
    }
    let beyond: u64 = observed.range(pmf.len()..).map(|(_, &c)| c).sum();
    tv += (beyond as f64 / n - (1.0 - pmf.total()).max(0.0)).abs();
    0.5 * tv
}

/// Maximum-likelihood exponential fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rate: f64,
    pub sample_size: usize,
    /// KS distance between the sample and the fitted law.
    pub ks_stat: f64,
}

pub fn fit_exponential_mle(sample: &[f64]) -> Result<FitResult> {
    if sample.is_empty() {
        return Err(AuctionError::EmptySample);
    }
    if let Some((index, &value)) = sample.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
        return Err(AuctionError::NonPositiveValue { index, value });
    }
    let sum: f64 = sample.iter().sum();
    let rate = sample.len() as f64 / sum;
    let ks_stat = ks_statistic(sample, |x| -(-rate * x).exp_m1())?;
    Ok(FitResult {
        rate,
        sample_size: sample.len(),
        ks_stat,
    })
}

/// Histogram normalized as a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub rule: String,
}

impl Histogram {
    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Density estimate of bin `i` and its binomial standard error.
    pub fn density(&self, i: usize) -> (f64, f64) {
        let n = self.total() as f64;
        let p = self.counts[i] as f64 / n;
        let w = self.width(i);
        (p / w, (p * (1.0 - p) / n).sqrt() / w)
    }
}

fn interpolated_quantile(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    v[i] + (h - i as f64) * (v[j] - v[i])
}

/// Histogram with the Freedman–Diaconis bin width `2 IQR n^{-1/3}`.
pub fn freedman_diaconis(sample: &[f64]) -> Result<Histogram> {
    let v = sorted(sample)?;
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let iqr = interpolated_quantile(&v, 0.75) - interpolated_quantile(&v, 0.25);
    let width = 2.0 * iqr * (v.len() as f64).powf(-1.0 / 3.0);
    let bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, 10_000)
    } else {
        1
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + span * i as f64 / bins as f64).collect();
    let mut counts = vec![0u64; bins];
    for &x in &v {
        let i = (((x - lo) / span) * bins as f64).floor() as usize;
        counts[i.min(bins - 1)] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        rule: "freedman-diaconis".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::RngState;
    use crate::price_dist::{make_exponential, make_uniform};
    use proptest::prelude::*;

    #[test]
    fn ks_examples() {
        assert!(ks_statistic(&[], |x| x).is_err());
        for c in [0.2, 0.5, 0.9] {
            let d = ks_statistic(&[c; 5], |x: f64| x.clamp(0.0, 1.0)).unwrap();
            assert!((d - c.max(1.0 - c)).abs() < 1e-15);
        }
        let n = 1000;
        let s: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        assert!((ks_statistic(&s, |x| x).unwrap() - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_critical_value_calibration() {
        let u = make_uniform(0.0, 1.0).unwrap();
        let n = 10_000;
        let crit = 1.63 / (n as f64).sqrt();
        assert!((ks_critical_value(n, 0.01) - crit).abs() < 5e-3 / (n as f64).sqrt());
        let mut passes = 0;
        for trial in 0..200 {
            let mut rng = RngState::new(2024, trial).rng();
            let s: Vec<f64> = (0..n).map(|_| u.sample(&mut rng)).collect();
            if ks_statistic(&s, |x| u.cdf(x)).unwrap() < crit {
                passes += 1;
            }
        }
        // Binomial(200, 0.99): at least 193 passes with overwhelming probability.
        assert!(passes >= 193, "{passes}");
    }

    #[test]
    fn chi_square_examples() {
        let pmf = DiscretePmf {
            masses: vec![0.25, 0.5, 0.25],
            tail_bound: 0.0,
        };
        let exact: BTreeMap<usize, u64> = [(0, 25), (1, 50), (2, 25)].into_iter().collect();
        let r = chi_square(&exact, &pmf, 100).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 2);
        let off: BTreeMap<usize, u64> = [(0, 25), (1, 53), (2, 25)].into_iter().collect();
        let r = chi_square(&off, &pmf, 100).unwrap();
        assert!((r.statistic - 9.0 / 50.0).abs() < 1e-12);
        assert!(chi_square(&exact, &pmf, 10).is_err());
    }

    #[test]
    fn chi_square_pools_small_cells() {
        let pmf = DiscretePmf {
            masses: vec![0.01, 0.01, 0.48, 0.48, 0.01, 0.005],
            tail_bound: 0.005,
        };
        let obs: BTreeMap<usize, u64> = [(0, 1), (2, 48), (3, 49), (4, 1), (7, 1)].into_iter().collect();
        let r = chi_square(&obs, &pmf, 100).unwrap();
        let expected_total: f64 = r.bins.iter().map(|b| b.2).sum();
        let observed_total: f64 = r.bins.iter().map(|b| b.1).sum();
        assert!((expected_total - 100.0).abs() < 1e-9);
        assert_eq!(observed_total, 100.0);
        assert!(r.bins.iter().all(|b| b.2 >= MIN_EXPECTED));
    }

    #[test]
    fn mle_examples() {
        let f = fit_exponential_mle(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(f.rate, 1.0);
        assert_eq!(fit_exponential_mle(&[2.0]).unwrap().rate, 0.5);
        assert!(matches!(fit_exponential_mle(&[]), Err(AuctionError::EmptySample)));
        assert!(matches!(
            fit_exponential_mle(&[1.0, 0.0]),
            Err(AuctionError::NonPositiveValue { index: 1, .. })
        ));
        let e = make_exponential(200.0).unwrap();
        let mut rng = RngState::new(7, 0).rng();
        let s: Vec<f64> = (0..10_000).map(|_| e.sample(&mut rng)).collect();
        let f = fit_exponential_mle(&s).unwrap();
        assert!((f.rate / 200.0 - 1.0).abs() < 0.02);
        assert!(f.ks_stat < ks_critical_value(s.len(), 0.001));
    }

    #[test]
    fn histogram_counts_everything() {
        let h = freedman_diaconis(&[0.0, 0.1, 0.1, 0.5, 0.9, 1.0, 3.0]).unwrap();
        assert_eq!(h.total(), 7);
        assert_eq!(h.rule, "freedman-diaconis");
        let flat = freedman_diaconis(&[2.0; 4]).unwrap();
        assert_eq!(flat.counts, vec![4]);
    }

    proptest! {
        #[test]
        fn ks_in_unit_interval(sample in prop::collection::vec(-2.0f64..2.0, 1..200)) {
            let d = ks_statistic(&sample, |x: f64| ((x + 2.0) / 4.0).clamp(0.0, 1.0)).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!(d >= 0.5 / sample.len() as f64 - 1e-12);
        }

        #[test]
        fn mle_rate_is_inverse_mean(sample in prop::collection::vec(1e-3f64..1e3, 1..100)) {
            let f = fit_exponential_mle(&sample).unwrap();
            let mean = sample.iter().sum::<f64>() / sample.len() as f64;
            prop_assert!((f.rate * mean - 1.0).abs() < 1e-12);
            prop_assert_eq!(f.sample_size, sample.len());
        }
    }
}
