//! Goodness-of-fit tests and summary fits comparing simulations with their
//! limit predictions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::analytic::Wave;
use crate::lineage::Tau;
use crate::sim::Snapshot;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("a line fit needs at least two distinct times")]
    DegenerateTimes,
    #[error("every coalescence time is censored")]
    AllCensored,
    #[error("chi-square test needs at least two categories with positive expectation")]
    TooFewCategories,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub size: usize,
    pub p_value: f64,
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    Ok(xs)
}

/// One-sample two-sided Kolmogorov-Smirnov statistic against a continuous
/// reference CDF. Tied sample values are handled as one jump of the
/// empirical CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    let xs = sorted(sample)?;
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    Ok(d)
}

pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, StatsError> {
    let d = ks_statistic(sample, cdf)?;
    let size = sample.len();
    Ok(KsResult { statistic: d, size, p_value: kolmogorov_survival((size as f64).sqrt() * d) })
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    let xs = sorted(a)?;
    let ys = sorted(b)?;
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    Ok(KsResult { statistic: d, size: xs.len() + ys.len(), p_value: kolmogorov_survival(ne.sqrt() * d) })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Theta-function form converges fast for small arguments.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1.. {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * c).exp();
            sum += term;
            if term < 1e-12 * sum.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1.. {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Least-squares line through `(t, position)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedFit {
    pub speed: f64,
    pub intercept: f64,
    /// Root-mean-square deviation from the line.
    pub residual: f64,
}

pub fn front_speed_fit(series: &[(f64, f64)]) -> Result<SpeedFit, StatsError> {
    let n = series.len() as f64;
    if series.len() < 2 {
        return Err(StatsError::DegenerateTimes);
    }
    let tm = series.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = series.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = series.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(StatsError::DegenerateTimes);
    }
    let sty: f64 = series.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let speed = sty / stt;
    let intercept = ym - speed * tm;
    let sse: f64 = series.iter().map(|p| (p.1 - intercept - speed * p.0).powi(2)).sum();
    Ok(SpeedFit { speed, intercept, residual: (sse / n).sqrt() })
}

/// Sites trimmed at each window edge by [`profile_error`].
pub const PROFILE_TRIM: usize = 5;

/// `sup |p(x) - g(x - center)|` over the snapshot, excluding
/// [`PROFILE_TRIM`] sites at each end.
pub fn profile_error(snapshot: &Snapshot, wave: &Wave, n: u32, deme_size: u32, center: f64) -> f64 {
    let len = snapshot.counts.len();
    if len <= 2 * PROFILE_TRIM {
        return 0.0;
    }
    let nn = f64::from(deme_size);
    (PROFILE_TRIM..len - PROFILE_TRIM)
        .map(|k| {
            let x = f64::from(snapshot.first_site + k as i32) / f64::from(n);
            (f64::from(snapshot.counts[k]) / nn - wave.profile(x - center)).abs()
        })
        .fold(0.0, f64::max)
}

/// Finite coalescence times multiplied by a rate, with censoring reported
/// separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescaled {
    pub values: Vec<f64>,
    pub censored: usize,
    pub censored_fraction: f64,
}

pub fn coalescent_rescale<I: IntoIterator<Item = Tau>>(taus: I, rate: f64) -> Result<Rescaled, StatsError> {
    let mut values = Vec::new();
    let mut censored = 0;
    for t in taus {
        match t {
            Tau::Finite(v) => values.push(v * rate),
            Tau::Censored => censored += 1,
        }
    }
    if values.is_empty() {
        return Err(StatsError::AllCensored);
    }
    let total = values.len() + censored;
    Ok(Rescaled { values, censored, censored_fraction: censored as f64 / total as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against a uniform law.
pub fn chi_square_uniform(counts: &[u64]) -> Result<ChiSquareResult, StatsError> {
    if counts.len() < 2 {
        return Err(StatsError::TooFewCategories);
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::TooFewCategories);
    }
    let expected = total as f64 / counts.len() as f64;
    let statistic: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = counts.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    Ok(ChiSquareResult { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// CDF of the unit exponential.
pub fn exp1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Brute-force sup over the empirical jump points.
    fn ks_oracle(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = sample.len() as f64;
        let mut d: f64 = 0.0;
        for &x in sample {
            let below = sample.iter().filter(|&&y| y < x).count() as f64 / n;
            let upto = sample.iter().filter(|&&y| y <= x).count() as f64 / n;
            d = d.max((upto - cdf(x)).abs()).max((cdf(x) - below).abs());
        }
        d
    }

    #[test]
    fn ks_matches_enumeration_on_a_fixed_sample() {
        let sample = [0.05, 0.31, 2.2, 0.9, 0.31, 1.7, 0.12, 3.9, 0.6, 1.05];
        let d = ks_statistic(&sample, exp1_cdf).unwrap();
        assert!((d - ks_oracle(&sample, exp1_cdf)).abs() < 1e-12);
    }

    #[test]
    fn ks_plug_in_and_point_mass() {
        let n = 1000;
        let sample: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        let f = |x: f64| exp1_cdf(x);
        let d = ks_statistic(&[0.7; 5], f).unwrap();
        assert!((d - f(0.7).max(1.0 - f(0.7))).abs() < 1e-15);
        assert_eq!(ks_test(&[], f), Err(StatsError::EmptySample));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Reference values of P(K > x).
        for (x, q) in [(0.5, 0.963_945_2), (1.0, 0.269_999_7), (1.36, 0.049_485_9), (2.0, 0.000_670_9)] {
            assert!((kolmogorov_survival(x) - q).abs() < 1e-6, "{x}");
        }
        let below = kolmogorov_survival(1.0 - 1e-12);
        let above = kolmogorov_survival(1.0);
        assert!((below - above).abs() < 1e-9);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn null_p_values_are_uniform() {
        let mut rng = stream_rng(9, Stream::Custom(1));
        let p: Vec<f64> = (0..1000)
            .map(|_| {
                let s: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
                ks_test(&s, |x| x.clamp(0.0, 1.0)).unwrap().p_value
            })
            .collect();
        assert!(ks_statistic(&p, |x| x.clamp(0.0, 1.0)).unwrap() < 0.05);
    }

    #[test]
    fn two_sample_ks() {
        let mut rng = stream_rng(2, Stream::Custom(2));
        let a: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..3000).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        let shifted = ks_two_sample(&a, &c).unwrap();
        assert!(shifted.statistic > 0.15 && shifted.p_value < 1e-6);
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
    }

    #[test]
    fn speed_fit_on_exact_lines() {
        let line: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 2.0 + 0.25 * k as f64)).collect();
        let fit = front_speed_fit(&line).unwrap();
        assert!((fit.speed - 0.25).abs() < 1e-12 && (fit.intercept - 2.0).abs() < 1e-12 && fit.residual < 1e-12);
        let two = front_speed_fit(&[(1.0, 3.0), (3.0, 4.0)]).unwrap();
        assert!((two.speed - 0.5).abs() < 1e-15 && (two.intercept - 2.5).abs() < 1e-15 && two.residual < 1e-15);
        assert_eq!(front_speed_fit(&[(1.0, 1.0)]), Err(StatsError::DegenerateTimes));
        assert_eq!(front_speed_fit(&[(1.0, 1.0), (1.0, 2.0)]), Err(StatsError::DegenerateTimes));
    }

    #[test]
    fn speed_fit_with_known_noise() {
        let sigma = 0.05;
        let nu = 0.5;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rng = stream_rng(3, Stream::Custom(3));
        let times: Vec<f64> = (0..=150).map(|k| 5.0 + k as f64 * 0.1).collect();
        let series: Vec<(f64, f64)> = times.iter().map(|&t| (t, nu * t + noise.sample(&mut rng))).collect();
        let fit = front_speed_fit(&series).unwrap();
        // Closed-form least squares with its standard error.
        let n = times.len() as f64;
        let tm = times.iter().sum::<f64>() / n;
        let ym = series.iter().map(|p| p.1).sum::<f64>() / n;
        let stt: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
        let b = series.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum::<f64>() / stt;
        assert!((fit.speed - b).abs() < 1e-12);
        let se = sigma / stt.sqrt();
        assert!((fit.speed - nu).abs() < 4.0 * se);
        assert!((fit.residual - sigma).abs() < 0.3 * sigma);
    }

    fn snapshot(first: i32, counts: Vec<u32>) -> Snapshot {
        Snapshot { time: 0.0, first_site: first, counts }
    }

    #[test]
    fn profile_error_cases() {
        let wave = Wave { kappa: 1.0 };
        let (n, nn) = (4u32, 1000u32);
        let first = -80;
        let counts: Vec<u32> = (0..161)
            .map(|k| (f64::from(nn) * wave.profile(f64::from(first + k) / 4.0 - 0.3)).round() as u32)
            .collect();
        let e = profile_error(&snapshot(first, counts.clone()), &wave, n, nn, 0.3);
        assert!(e <= 0.5 / f64::from(nn) + 1e-15);
        let zero = profile_error(&snapshot(first, vec![0; 161]), &wave, n, nn, 0.3);
        assert!((zero - wave.profile(f64::from(first + 5) / 4.0 - 0.3)).abs() < 1e-15);
        let moved = profile_error(&snapshot(first + 3, counts), &wave, n, nn, 0.3 + 0.75);
        assert!((moved - e).abs() < 1e-15);
    }

    #[test]
    fn rescaling() {
        let taus = vec![Tau::Finite(1.0), Tau::Censored, Tau::Finite(2.5), Tau::Finite(0.5)];
        let id = coalescent_rescale(taus.clone(), 1.0).unwrap();
        assert_eq!(id.values, vec![1.0, 2.5, 0.5]);
        assert_eq!(id.censored, 1);
        assert_eq!(id.censored_fraction, 0.25);
        let doubled = coalescent_rescale(taus, 2.0).unwrap();
        assert_eq!(doubled.values, vec![2.0, 5.0, 1.0]);
        assert_eq!(coalescent_rescale(vec![Tau::Censored], 1.0), Err(StatsError::AllCensored));
    }

    #[test]
    fn rescaled_kingman_times_pass_ks() {
        let mut rng = stream_rng(5, Stream::Reference);
        let taus: Vec<Tau> =
            (0..10_000).map(|_| crate::reference::kingman_sample_with(2, &mut rng).unwrap().tau.get(0, 1)).collect();
        let r = coalescent_rescale(taus, 1.0).unwrap();
        assert!(ks_test(&r.values, exp1_cdf).unwrap().p_value > 0.01);
    }

    #[test]
    fn chi_square() {
        let even = chi_square_uniform(&[100, 100, 100, 100]).unwrap();
        assert_eq!(even.statistic, 0.0);
        assert!((even.p_value - 1.0).abs() < 1e-12);
        let skew = chi_square_uniform(&[10, 90]).unwrap();
        assert!((skew.statistic - 64.0).abs() < 1e-12 && skew.p_value < 1e-10);
        assert_eq!(chi_square_uniform(&[5]), Err(StatsError::TooFewCategories));
    }
}
