//! Small statistical toolkit shared by the estimators and the tests:
//! means with standard errors, chi-square and Kolmogorov–Smirnov tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// A point estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub method: String,
}

impl EstimatorReport {
    /// Mean of `xs` with `se = sd / sqrt(n)`.
    pub fn from_samples(xs: &[f64], method: &str) -> Self {
        let (value, std_error) = mean_se(xs);
        Self {
            value,
            std_error,
            n_samples: xs.len(),
            method: method.to_string(),
        }
    }

    /// `|value - target| <= k * se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    (mean(xs), (variance(xs) / n as f64).sqrt())
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Lag-`k` sample autocorrelation.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if lag >= n {
        return f64::NAN;
    }
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum();
    num / denom
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

pub fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)).exp()
}

pub fn poisson_cdf(k: u64, lambda: f64) -> f64 {
    (0..=k).map(|j| poisson_pmf(j, lambda)).sum::<f64>().min(1.0)
}

/// Outcome of a hypothesis test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

impl TestOutcome {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    if dof < 1.0 {
        return 1.0;
    }
    ChiSquared::new(dof).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
}

/// Chi-square goodness of fit for counts over bins `0..k-1` plus an
/// implicit upper tail. `probs[i]` is the model probability of bin `i`;
/// the remaining mass goes to the tail bin. Adjacent bins are merged until
/// every expected count is at least 5.
pub fn chi_square_gof(observed: &[u64], tail_observed: u64, probs: &[f64]) -> TestOutcome {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum::<u64>() + tail_observed;
    let nf = n as f64;
    let tail_p = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let mut bins: Vec<(f64, f64)> = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| (o as f64, p * nf))
        .collect();
    bins.push((tail_observed as f64, tail_p * nf));
    let merged = merge_small(bins);
    let stat: f64 = merged
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = merged.len() as f64 - 1.0;
    TestOutcome {
        statistic: stat,
        dof,
        p_value: chi_square_sf(stat, dof),
    }
}

/// Merges consecutive (observed, expected) bins left to right until each has
/// expected count >= 5; a short remainder joins the last full bin.
fn merge_small(bins: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (o, e) in bins {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= 5.0 {
            out.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match out.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => out.push(acc),
        }
    }
    out
}

/// Two-sample chi-square test of homogeneity on categorical data. Categories
/// whose pooled expected count falls below 5 in either sample are lumped
/// into a single rare category.
pub fn chi_square_homogeneity<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> TestOutcome {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let n = (na + nb) as f64;
    let (fa, fb) = (na as f64 / n, nb as f64 / n);
    let mut keys: Vec<K> = a.keys().chain(b.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut rare = (0.0, 0.0);
    for k in keys {
        let oa = *a.get(&k).unwrap_or(&0) as f64;
        let ob = *b.get(&k).unwrap_or(&0) as f64;
        let tot = oa + ob;
        if tot * fa.min(fb) < 5.0 {
            rare.0 += oa;
            rare.1 += ob;
        } else {
            cells.push((oa, ob));
        }
    }
    if rare.0 + rare.1 > 0.0 {
        if (rare.0 + rare.1) * fa.min(fb) >= 5.0 || cells.is_empty() {
            cells.push(rare);
        } else {
            // Fold the rare remainder into the smallest regular cell.
            let idx = (0..cells.len())
                .min_by(|&i, &j| (cells[i].0 + cells[i].1).total_cmp(&(cells[j].0 + cells[j].1)))
                .unwrap();
            cells[idx].0 += rare.0;
            cells[idx].1 += rare.1;
        }
    }
    let mut stat = 0.0;
    for &(oa, ob) in &cells {
        let tot = oa + ob;
        let (ea, eb) = (tot * fa, tot * fb);
        if ea > 0.0 {
            stat += (oa - ea) * (oa - ea) / ea;
        }
        if eb > 0.0 {
            stat += (ob - eb) * (ob - eb) / eb;
        }
    }
    let dof = cells.len() as f64 - 1.0;
    TestOutcome {
        statistic: stat,
        dof,
        p_value: chi_square_sf(stat, dof),
    }
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_continuous<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> TestOutcome {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    TestOutcome {
        statistic: d,
        dof: nf,
        p_value: ks_p_value(d, n),
    }
}

/// One-sample KS test for integer data against a discrete CDF; the
/// continuous null distribution makes this conservative.
pub fn ks_discrete<F: Fn(u64) -> f64>(samples: &[u64], cdf: F) -> TestOutcome {
    let n = samples.len();
    let nf = n as f64;
    let max = samples.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0u64; max as usize + 1];
    for &s in samples {
        counts[s as usize] += 1;
    }
    let mut cum = 0u64;
    let mut d: f64 = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        let before = cum as f64 / nf;
        let model_before = if k == 0 { 0.0 } else { cdf(k as u64 - 1) };
        cum += c;
        d = d
            .max((cum as f64 / nf - cdf(k as u64)).abs())
            .max((before - model_before).abs());
    }
    TestOutcome {
        statistic: d,
        dof: nf,
        p_value: ks_p_value(d, n),
    }
}
