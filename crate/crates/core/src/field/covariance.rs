use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, input, numerical, Error, Result};
use crate::kernels::heat::heat_kernel;
use crate::noise::derive_seed;
use crate::quadrature::QuadratureConfig;
use crate::rules::integrate_adaptive;

/// `Cov(X(t,x), X(t2,x2)) = H(2H-1) ∫_0^t∫_0^{t2} G_{t+t2-s-r}(x,x2) |s-r|^{2H-2} dr ds`.
///
/// Nested adaptive Gauss-Kronrod in the backward lags `a = t - s`,
/// `b = t2 - r`. The diagonal singularity is removed by `b = b* ± z^{1/(2H-1)}`
/// and the corner one by `a = v^{1/(2H-1/2)}`.
pub fn x_covariance(t: f64, x: f64, t2: f64, x2: f64, cfg: &QuadratureConfig) -> Result<f64> {
    for &p in &[x, x2] {
        if !(0.0..=1.0).contains(&p) {
            return domain(format!("spatial point must lie in [0,1], got {p}"));
        }
    }
    if t < 0.0 || t2 < 0.0 {
        return domain(format!("times must be nonnegative, got {t}, {t2}"));
    }
    if t == 0.0 || t2 == 0.0 || x == 0.0 || x == 1.0 || x2 == 0.0 || x2 == 1.0 {
        return Ok(0.0);
    }
    // canonical argument order makes the result exactly symmetric
    let ((t, x), (t2, x2)) = if (t, x) <= (t2, x2) { ((t, x), (t2, x2)) } else { ((t2, x2), (t, x)) };
    let (xl, xr) = (x.min(x2), x.max(x2));
    let h = cfg.hurst.get();
    let p = 1.0 / (2.0 * h - 1.0);
    let q = 1.0 / (2.0 * h - 0.5);
    let mut failure: Option<Error> = None;
    let g = |tau: f64, failure: &mut Option<Error>| match heat_kernel(tau, xl, xr, &cfg.heat) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let inner = |a: f64, failure: &mut Option<Error>| -> f64 {
        let bs = a - (t - t2);
        let mut acc = 0.0;
        // b above the diagonal: b = b* + z^p
        let (z0, z1) = ((-bs).max(0.0).powf(1.0 / p), (t2 - bs).powf(1.0 / p));
        if z1 > z0 {
            let r = integrate_adaptive(|z| p * g(a + bs + z.powf(p), failure), z0, z1, 1e-300, 1e-12, 2000);
            acc += r.unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            });
        }
        // b below the diagonal: b = b* - z^p
        if bs > 0.0 {
            let (z0, z1) = ((bs - t2).max(0.0).powf(1.0 / p), bs.powf(1.0 / p));
            if z1 > z0 {
                let r = integrate_adaptive(|z| p * g(a + bs - z.powf(p), failure), z0, z1, 1e-300, 1e-12, 2000);
                acc += r.unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    f64::NAN
                });
            }
        }
        acc
    };
    let outer = integrate_adaptive(
        |v| {
            let a = v.powf(q);
            q * v.powf(q - 1.0) * inner(a, &mut failure)
        },
        0.0,
        t.powf(1.0 / q),
        1e-300,
        1e-11,
        2000,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(h * (2.0 * h - 1.0) * outer?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub points: Vec<(f64, f64)>,
    pub matrix: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn assemble(points: &[(f64, f64)], cfg: &QuadratureConfig) -> Result<Self> {
        if points.is_empty() {
            return input("covariance needs at least one probe point");
        }
        let n = points.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let vals: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| x_covariance(points[i].0, points[i].1, points[j].0, points[j].1, cfg))
            .collect::<Result<_>>()?;
        let mut matrix = DMatrix::zeros(n, n);
        for (&(i, j), v) in pairs.iter().zip(vals) {
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
        Ok(Self {
            points: points.to_vec(),
            matrix,
        })
    }

    /// Lower Cholesky factor after the diagonal jitter `1e-12·trace/n`.
    /// Points with zero variance get a zero row.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        let n = self.matrix.nrows();
        let live: Vec<usize> = (0..n).filter(|&i| self.matrix[(i, i)] != 0.0).collect();
        let mut out = DMatrix::zeros(n, n);
        if live.is_empty() {
            return Ok(out);
        }
        let k = live.len();
        let sub = DMatrix::from_fn(k, k, |i, j| self.matrix[(live[i], live[j])]);
        let eig = sub.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo < -1e-10 * hi {
            return numerical(format!(
                "covariance has eigenvalue {lo:e} against largest {hi:e} (condition report: ratio {:e})",
                lo / hi
            ));
        }
        let jitter = 1e-12 * sub.trace() / k as f64;
        let jittered = &sub + DMatrix::identity(k, k) * jitter;
        let chol = jittered.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "Cholesky failed after jitter {jitter:e}; eigenvalues in [{lo:e}, {hi:e}]"
            ))
        })?;
        let l = chol.l();
        for i in 0..k {
            for j in 0..=i {
                out[(live[i], live[j])] = l[(i, j)];
            }
        }
        Ok(out)
    }
}

/// Exact joint samples of `X` at the probe points, one row per path.
pub fn exact_sample_x(
    points: &[(f64, f64)],
    n_paths: usize,
    seed: u64,
    cfg: &QuadratureConfig,
) -> Result<DMatrix<f64>> {
    let l = CovarianceMatrix::assemble(points, cfg)?.factor()?;
    let k = points.len();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let z = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            (&l * z).iter().copied().collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n_paths, k, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::fbm::HurstParam;
    use crate::quadrature::kx;
    use crate::stats::{mean, variance, variance_std_error};

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::new(HurstParam::new(0.75).unwrap())
    }

    #[test]
    fn diagonal_matches_kx() {
        let c = x_covariance(0.5, 0.5, 0.5, 0.5, &cfg()).unwrap();
        let k = kx(0.5, 0.5, &cfg()).unwrap();
        assert!((c - k).abs() < 1e-8 * k, "{c} {k}");
    }

    #[test]
    fn symmetry_and_boundary() {
        let a = x_covariance(0.3, 0.2, 0.5, 0.6, &cfg()).unwrap();
        let b = x_covariance(0.5, 0.6, 0.3, 0.2, &cfg()).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
        assert_eq!(x_covariance(0.5, 0.0, 0.5, 0.5, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn exact_sampler_moments() {
        let s = exact_sample_x(&[(0.5, 0.0)], 10, 1, &cfg()).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
        let pts = [(0.5, 0.5), (0.25, 0.3)];
        let cov = CovarianceMatrix::assemble(&pts, &cfg()).unwrap();
        let n = 100_000;
        let s = exact_sample_x(&pts, n, 9, &cfg()).unwrap();
        let c0: Vec<f64> = s.column(0).iter().copied().collect();
        let c1: Vec<f64> = s.column(1).iter().copied().collect();
        let v0 = variance(&c0);
        assert!((v0 - cov.matrix[(0, 0)]).abs() < 3.0 * variance_std_error(&c0));
        let prod: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| a * b).collect();
        let want_rho = cov.matrix[(0, 1)] / (cov.matrix[(0, 0)] * cov.matrix[(1, 1)]).sqrt();
        let rho = mean(&prod) / (v0 * variance(&c1)).sqrt();
        // SE of a sample correlation is about (1 - ρ²)/√n
        assert!((rho - want_rho).abs() < 3.0 * (1.0 - want_rho * want_rho) / (n as f64).sqrt(), "{rho} {want_rho}");
    }
}
