use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::estimate::Interval;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
    /// Redraws allowed for one resample whose estimate is undefined.
    pub max_retries: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: 2000,
            level: 0.95,
            seed: 0,
            max_retries: 10,
        }
    }
}

/// Linear-interpolated quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval from a case-resampling bootstrap.
///
/// Each resample gets its own ChaCha stream derived from `(seed, resample,
/// attempt)`, so the result does not depend on scheduling.
pub fn bootstrap_ci<T, F>(data: &[T], estimator: F, cfg: &BootstrapConfig) -> Result<Interval>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<f64> + Sync,
{
    if data.is_empty() || cfg.n_resamples == 0 {
        return Err(Error::Bootstrap("no data or no resamples".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Bootstrap(format!("confidence level {} outside (0, 1)", cfg.level)));
    }
    let attempts = cfg.max_retries as u64 + 1;
    let results: Vec<(Option<f64>, usize)> = (0..cfg.n_resamples as u64)
        .into_par_iter()
        .map(|k| {
            let mut failed = 0;
            let mut buf = Vec::with_capacity(data.len());
            for attempt in 0..attempts {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(k * attempts + attempt);
                buf.clear();
                buf.extend((0..data.len()).map(|_| data[rng.random_range(0..data.len())].clone()));
                match estimator(&buf) {
                    Ok(v) if v.is_finite() => return (Some(v), failed),
                    _ => failed += 1,
                }
            }
            (None, failed)
        })
        .collect();

    let undefined: usize = results.iter().map(|r| r.1).sum();
    let draws = undefined + results.iter().filter(|r| r.0.is_some()).count();
    if undefined * 2 > draws {
        return Err(Error::Bootstrap(format!("{undefined} of {draws} resamples were undefined")));
    }
    let mut values: Vec<f64> = results.into_iter().filter_map(|r| r.0).collect();
    if values.is_empty() {
        return Err(Error::Bootstrap("every resample was undefined".into()));
    }
    values.sort_unstable_by(f64::total_cmp);
    let alpha = 1.0 - cfg.level;
    Ok(Interval {
        low: quantile_sorted(&values, alpha / 2.0),
        high: quantile_sorted(&values, 1.0 - alpha / 2.0),
        level: cfg.level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(xs: &[f64]) -> Result<f64> {
        Ok(xs.iter().sum::<f64>() / xs.len() as f64)
    }

    #[test]
    fn mean_interval_brackets_truth() {
        let data: Vec<f64> = (1..=100).map(f64::from).collect();
        let ci = bootstrap_ci(&data, mean, &BootstrapConfig { seed: 3, ..Default::default() }).unwrap();
        assert!(ci.low < 50.5 && 50.5 < ci.high);
        // Standard error is ~2.9; a 95% interval is roughly ±5.7.
        assert!(ci.high - ci.low > 8.0 && ci.high - ci.low < 15.0);
    }

    #[test]
    fn constant_data_zero_width() {
        let ci = bootstrap_ci(&[4.0; 30], mean, &BootstrapConfig::default()).unwrap();
        assert_eq!((ci.low, ci.high), (4.0, 4.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let data: Vec<f64> = (0..50).map(|k| (k * k % 17) as f64).collect();
        let cfg = BootstrapConfig { seed: 42, n_resamples: 500, ..Default::default() };
        let a = bootstrap_ci(&data, mean, &cfg).unwrap();
        let b = bootstrap_ci(&data, mean, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_undefined() {
        let data = [1.0, 2.0, 3.0];
        let cfg = BootstrapConfig { n_resamples: 100, ..Default::default() };
        let err = bootstrap_ci(&data, |_: &[f64]| Err(Error::UndefinedEstimate("x".into())), &cfg).unwrap_err();
        assert!(matches!(err, Error::Bootstrap(_)));
    }

    #[test]
    fn occasional_undefined_is_redrawn() {
        let data: Vec<f64> = (0..20).map(f64::from).collect();
        let cfg = BootstrapConfig { n_resamples: 200, seed: 9, ..Default::default() };
        // Undefined when the resample happens to miss index 0's value.
        let est = |xs: &[f64]| {
            if xs.contains(&0.0) {
                mean(xs)
            } else {
                Err(Error::UndefinedEstimate("no zero".into()))
            }
        };
        assert!(bootstrap_ci(&data, est, &cfg).is_ok());
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
    }
}
