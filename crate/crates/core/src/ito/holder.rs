use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::field::PathEnsemble;
use crate::noise::GridSpec;
use crate::stats::{linear_fit, mean, quantile};

pub const BOOTSTRAP_RESAMPLES: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub lags: Vec<f64>,
    /// Mean squared increment per lag.
    pub msq: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile bootstrap interval of the slope.
    pub ci: (f64, f64),
}

impl HolderEstimate {
    /// Smallest `c` with `msq ≤ c·lag^exponent` at every lag.
    pub fn constant(&self, exponent: f64) -> f64 {
        self.lags
            .iter()
            .zip(&self.msq)
            .map(|(l, m)| m / l.powf(exponent))
            .fold(0.0, f64::max)
    }
}

/// Lags `2dt, 4dt, 8dt, ...` up to a quarter of the horizon, in steps.
pub fn dyadic_lags(grid: &GridSpec) -> Vec<usize> {
    let max = grid.n_time / 4;
    std::iter::successors(Some(2usize), |l| Some(l * 2))
        .take_while(|&l| l <= max)
        .collect()
}

/// Log-log regression of the mean squared increment `E|X(t+ℓ) - X(t)|²`
/// (averaged over paths and start times) on the lag `ℓ`.
pub fn holder_estimate(ens: &PathEnsemble, lags: &[usize], seed: u64) -> Result<HolderEstimate> {
    let n = ens.grid.n_time;
    let valid = lags
        .iter()
        .all(|&l| l >= 2 && l <= n / 4 && l.is_power_of_two());
    if lags.len() < 4 || !valid {
        return input(format!(
            "need at least 4 dyadic lags within [2dt, T/4] (in steps: [2, {}]), got {lags:?}",
            n / 4
        ));
    }
    // per path, per lag: mean over start times
    let per_path: Vec<Vec<f64>> = ens
        .samples
        .par_iter()
        .map(|s| {
            lags.iter()
                .map(|&l| {
                    let sq: Vec<f64> = (0..=n - l).map(|i| (s.values[i + l] - s.values[i]).powi(2)).collect();
                    mean(&sq)
                })
                .collect()
        })
        .collect();
    let dt = ens.grid.dt();
    let log_lag: Vec<f64> = lags.iter().map(|&l| (l as f64 * dt).ln()).collect();
    let fit = |idx: &[usize]| -> (f64, f64, Vec<f64>) {
        let msq: Vec<f64> = (0..lags.len())
            .map(|k| mean(&idx.iter().map(|&p| per_path[p][k]).collect::<Vec<_>>()))
            .collect();
        let ly: Vec<f64> = msq.iter().map(|m| m.ln()).collect();
        let (a, b) = linear_fit(&log_lag, &ly);
        (a, b, msq)
    };
    let np = per_path.len();
    let all: Vec<usize> = (0..np).collect();
    let (intercept, slope, msq) = fit(&all);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<usize>> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..np).map(|_| rng.gen_range(0..np)).collect())
        .collect();
    let mut slopes: Vec<f64> = draws.par_iter().map(|d| fit(d).1).collect();
    slopes.sort_by(f64::total_cmp);
    Ok(HolderEstimate {
        lags: lags.iter().map(|&l| l as f64 * dt).collect(),
        msq,
        slope,
        intercept,
        ci: (quantile(&slopes, 0.025), quantile(&slopes, 0.975)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSample;
    use crate::kernels::fbm::HurstParam;
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, StandardNormal};

    // fBm paths by Cholesky of the exact covariance: a synthetic input whose
    // increments have exponent 2H.
    fn fbm_ensemble(h: f64, n: usize, paths: usize) -> PathEnsemble {
        let grid = GridSpec::new(1.0, n, 2).unwrap();
        let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            0.5 * (t[i].powf(2.0 * h) + t[j].powf(2.0 * h) - (t[i] - t[j]).abs().powf(2.0 * h))
        });
        let l = cov.cholesky().unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = (0..paths)
            .map(|p| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let mut values = vec![0.0];
                values.extend((&l * z).iter());
                FieldSample {
                    grid,
                    x: 0.5,
                    eps: 0.0,
                    seed: p as u64,
                    values,
                }
            })
            .collect();
        PathEnsemble {
            n_paths: paths,
            master_seed: 0,
            hurst: HurstParam::new(h).unwrap(),
            x: 0.5,
            eps: 0.0,
            grid,
            samples,
            derivatives: None,
        }
    }

    #[test]
    fn recovers_the_fbm_exponent() {
        let ens = fbm_ensemble(0.7, 128, 400);
        let lags = dyadic_lags(&ens.grid);
        assert_eq!(lags, vec![2, 4, 8, 16, 32]);
        let est = holder_estimate(&ens, &lags, 1).unwrap();
        assert!(est.ci.0 <= 1.4 && 1.4 <= est.ci.1, "{est:?}");
        assert!((est.slope - 1.4).abs() < 0.05);
        assert!(est.constant(1.4) >= est.msq[0] / est.lags[0].powf(1.4));
    }

    #[test]
    fn rejects_bad_lags() {
        let ens = fbm_ensemble(0.7, 32, 4);
        assert!(holder_estimate(&ens, &[2, 4, 8], 1).is_err());
        assert!(holder_estimate(&ens, &[1, 2, 4, 8], 1).is_err());
        assert!(holder_estimate(&ens, &[2, 4, 8, 16], 1).is_err());
    }
}
