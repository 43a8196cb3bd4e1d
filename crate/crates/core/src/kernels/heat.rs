//! Dirichlet heat kernel on [0, 1], by images for small times and by sine
//! modes for large ones.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelConfig {
    /// Image terms |n| ≤ image_truncation.
    pub image_truncation: usize,
    /// Sine modes k = 1..=spectral_truncation.
    pub spectral_truncation: usize,
    /// Image series below this time, spectral series at or above it.
    pub crossover_time: f64,
    pub tail_tolerance: f64,
}

impl Default for HeatKernelConfig {
    fn default() -> Self {
        Self {
            image_truncation: 4,
            spectral_truncation: 8,
            crossover_time: 0.2,
            tail_tolerance: 1e-16,
        }
    }
}

impl HeatKernelConfig {
    /// Checks both tail bounds at the crossover time.
    pub fn validate(&self) -> Result<()> {
        if self.image_truncation < 1 || self.spectral_truncation < 1 {
            return input("heat kernel truncations must be at least 1");
        }
        if !(self.crossover_time > 0.0) || !(self.tail_tolerance > 0.0) {
            return input("crossover time and tail tolerance must be positive");
        }
        let n = self.image_truncation as f64;
        let k = self.spectral_truncation as f64;
        let image_tail = (-n * n / self.crossover_time).exp();
        let spectral_tail = (-k * k * PI * PI * self.crossover_time).exp();
        if image_tail >= self.tail_tolerance {
            return input(format!(
                "image tail {image_tail:e} exceeds tolerance at t = {}",
                self.crossover_time
            ));
        }
        if spectral_tail >= self.tail_tolerance {
            return input(format!(
                "spectral tail {spectral_tail:e} exceeds tolerance at t = {}",
                self.crossover_time
            ));
        }
        Ok(())
    }
}

/// Smallest image count whose first dropped term is below `tol` relative to
/// the leading Gaussian.
pub fn image_terms_for(t: f64, tol: f64) -> usize {
    // the nearest dropped image sits at distance ≥ 2N - 1
    let need = (4.0 * t * (1.0 / tol).ln()).sqrt();
    (((need + 1.0) / 2.0).ceil() as usize).max(1)
}

/// Smallest mode count whose tail is below `tol` relative to the first mode.
pub fn spectral_modes_for(t: f64, tol: f64) -> usize {
    let need = ((1.0 / tol).ln() / (PI * PI * t)).sqrt();
    (need.ceil() as usize + 1).max(1)
}

fn check_args(t: f64, x: f64, y: f64) -> Result<()> {
    if !(t > 0.0) {
        return domain(format!("heat kernel needs t > 0, got {t}"));
    }
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return domain(format!("heat kernel points must lie in [0,1], got x={x}, y={y}"));
    }
    Ok(())
}

fn on_boundary(x: f64, y: f64) -> bool {
    x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0
}

/// Image series with |n| ≤ `terms`.
pub fn image_series(t: f64, x: f64, y: f64, terms: usize) -> f64 {
    let n = terms as i64;
    let c = 1.0 / (4.0 * t);
    let mut s = 0.0;
    for k in -n..=n {
        let shift = 2.0 * k as f64;
        let a = y - x - shift;
        let b = y + x - shift;
        s += (-a * a * c).exp() - (-b * b * c).exp();
    }
    s / (4.0 * PI * t).sqrt()
}

/// Time derivative of the image series.
pub fn image_series_dt(t: f64, x: f64, y: f64, terms: usize) -> f64 {
    let n = terms as i64;
    let c = 1.0 / (4.0 * t);
    let half_t = 0.5 / t;
    let mut s = 0.0;
    for k in -n..=n {
        let shift = 2.0 * k as f64;
        let a2 = (y - x - shift).powi(2);
        let b2 = (y + x - shift).powi(2);
        s += (-a2 * c).exp() * (a2 * c / t - half_t) - (-b2 * c).exp() * (b2 * c / t - half_t);
    }
    s / (4.0 * PI * t).sqrt()
}

/// Eigenfunction series `2 Σ_{k ≤ modes} sin(kπx) sin(kπy) e^{-k²π²t}`.
pub fn spectral_series(t: f64, x: f64, y: f64, modes: usize) -> f64 {
    (1..=modes)
        .map(|k| {
            let kp = k as f64 * PI;
            2.0 * (kp * x).sin() * (kp * y).sin() * (-kp * kp * t).exp()
        })
        .sum()
}

pub fn spectral_series_dt(t: f64, x: f64, y: f64, modes: usize) -> f64 {
    (1..=modes)
        .map(|k| {
            let kp = k as f64 * PI;
            -2.0 * kp * kp * (kp * x).sin() * (kp * y).sin() * (-kp * kp * t).exp()
        })
        .sum()
}

/// `G_t(x, y)`.
pub fn heat_kernel(t: f64, x: f64, y: f64, cfg: &HeatKernelConfig) -> Result<f64> {
    check_args(t, x, y)?;
    if on_boundary(x, y) {
        return Ok(0.0);
    }
    Ok(if t < cfg.crossover_time {
        image_series(t, x, y, cfg.image_truncation)
    } else {
        spectral_series(t, x, y, cfg.spectral_truncation)
    })
}

/// `∂_t G_t(x, y)`.
pub fn heat_kernel_dt(t: f64, x: f64, y: f64, cfg: &HeatKernelConfig) -> Result<f64> {
    check_args(t, x, y)?;
    if on_boundary(x, y) {
        return Ok(0.0);
    }
    Ok(if t < cfg.crossover_time {
        image_series_dt(t, x, y, cfg.image_truncation)
    } else {
        spectral_series_dt(t, x, y, cfg.spectral_truncation)
    })
}

/// The explicit three-Gaussian part `G₁` of the kernel.
pub fn heat_kernel_g1(t: f64, x: f64, y: f64) -> Result<f64> {
    check_args(t, x, y)?;
    let c = 1.0 / (4.0 * t);
    let g = |d: f64| (-d * d * c).exp();
    Ok((g(y - x) - g(y + x) - g(y + x - 2.0)) / (4.0 * PI * t).sqrt())
}

/// `R = G − G₁`, bounded on [0, T] × [0, 1]².
pub fn heat_kernel_remainder(t: f64, x: f64, y: f64, cfg: &HeatKernelConfig) -> Result<f64> {
    Ok(heat_kernel(t, x, y, cfg)? - heat_kernel_g1(t, x, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::integrate_doubling;
    use proptest::prelude::*;

    fn cfg() -> HeatKernelConfig {
        HeatKernelConfig::default()
    }

    #[test]
    fn default_config_is_valid() {
        cfg().validate().unwrap();
        let bad = HeatKernelConfig {
            image_truncation: 1,
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dirichlet_boundary_is_exact_zero() {
        assert_eq!(heat_kernel(0.1, 0.5, 0.0, &cfg()).unwrap(), 0.0);
        assert_eq!(heat_kernel(0.7, 1.0, 0.3, &cfg()).unwrap(), 0.0);
        assert_eq!(heat_kernel_dt(0.1, 0.5, 0.0, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(heat_kernel(0.0, 0.5, 0.5, &cfg()).is_err());
        assert!(heat_kernel(0.1, 1.5, 0.5, &cfg()).is_err());
        assert!(heat_kernel_dt(-1.0, 0.5, 0.5, &cfg()).is_err());
    }

    #[test]
    fn matches_eigenfunction_oracle_on_diagonal() {
        let oracle: f64 = (1..200)
            .map(|k| {
                let kp = k as f64 * PI;
                2.0 * (kp * 0.5).sin().powi(2) * (-kp * kp * 0.1).exp()
            })
            .sum();
        let v = heat_kernel(0.1, 0.5, 0.5, &cfg()).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-5;
        let c = cfg();
        let fd = (heat_kernel(0.2 + h, 0.4, 0.6, &c).unwrap()
            - heat_kernel(0.2 - h, 0.4, 0.6, &c).unwrap())
            / (2.0 * h);
        let d = heat_kernel_dt(0.2, 0.4, 0.6, &c).unwrap();
        assert!((d - fd).abs() < 1e-6, "{d} vs {fd}");
    }

    #[test]
    fn diagonal_decays_at_small_time() {
        let d = heat_kernel_dt(0.05, 0.5, 0.5, &cfg()).unwrap();
        let oracle = spectral_series_dt(0.05, 0.5, 0.5, 60);
        assert!(d < 0.0 && oracle < 0.0);
        assert!((d - oracle).abs() < 1e-9);
    }

    #[test]
    fn g1_displayed_formula() {
        let t: f64 = 0.1;
        let expect = ((-0.25f64 / 0.4).exp() - (-0.25f64 / 0.4).exp() - (-2.25f64 / 0.4).exp())
            / (0.4 * PI).sqrt();
        let g1 = heat_kernel_g1(t, 0.5, 0.0).unwrap();
        assert!((g1 - expect).abs() < 1e-15);
        assert!(g1 < 0.0);
    }

    #[test]
    fn remainder_decomposition() {
        let c = cfg();
        let (t, x, y) = (0.1, 0.3, 0.8);
        let sum = heat_kernel_g1(t, x, y).unwrap() + heat_kernel_remainder(t, x, y, &c).unwrap();
        assert!((sum - heat_kernel(t, x, y, &c).unwrap()).abs() < 1e-12);
        assert!(heat_kernel_remainder(0.01, 0.5, 0.5, &c).unwrap().abs() < 1e-8);
    }

    #[test]
    fn remainder_is_uniformly_bounded() {
        let c = cfg();
        let grid = |n: usize| (0..=n).map(move |i| i as f64 / n as f64);
        let scan_max = |ts: &[f64], n: usize| {
            let mut m: f64 = 0.0;
            for &t in ts {
                for x in grid(n) {
                    for y in grid(n) {
                        m = m.max(heat_kernel_remainder(t, x, y, &c).unwrap().abs());
                    }
                }
            }
            m
        };
        let coarse = scan_max(&[0.01, 0.1, 0.5, 1.0], 10);
        let fine_t: Vec<f64> = (1..=40).map(|i| 1e-4 * 1.25f64.powi(i)).collect();
        let fine = scan_max(&fine_t, 40);
        assert!(fine <= 10.0 * coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn semigroup_property() {
        let c = cfg();
        for &(t, s, x, y) in &[(0.05, 0.1, 0.3, 0.6), (0.3, 0.02, 0.5, 0.5), (0.01, 0.01, 0.2, 0.25)] {
            let lhs = integrate_doubling(
                |z| heat_kernel(t, x, z, &c).unwrap() * heat_kernel(s, z, y, &c).unwrap(),
                0.0,
                1.0,
                16,
                1e-12,
                0.0,
                1 << 16,
            )
            .unwrap();
            let rhs = heat_kernel(t + s, x, y, &c).unwrap();
            assert!((lhs - rhs).abs() < 1e-8, "({t},{s},{x},{y}): {lhs} vs {rhs}");
        }
    }

    #[test]
    fn mass_is_sub_stochastic_and_tends_to_one() {
        let c = cfg();
        let mass = |t: f64| {
            integrate_doubling(|y| heat_kernel(t, 0.5, y, &c).unwrap(), 0.0, 1.0, 16, 1e-13, 0.0, 1 << 16)
                .unwrap()
        };
        let mut prev = 1.0 + 1e-10;
        for &t in &[1e-4, 1e-3, 1e-2, 0.1, 0.5] {
            let m = mass(t);
            assert!(m <= 1.0 + 1e-10);
            assert!(m <= prev + 1e-12);
            prev = m;
        }
        assert!((mass(1e-4) - 1.0).abs() < 1e-10);
        assert!(mass(0.5) < 0.1);
    }

    #[test]
    fn truncation_helpers() {
        assert!(image_terms_for(1.0, 1e-16) >= 7);
        assert!(spectral_modes_for(0.01, 1e-16) >= 20);
    }

    proptest! {
        #[test]
        fn symmetric_in_space(t in 1e-3f64..2.0, x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let c = cfg();
            let a = heat_kernel(t, x, y, &c).unwrap();
            let b = heat_kernel(t, y, x, &c).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }

        #[test]
        fn nonnegative_up_to_tail(t in 1e-3f64..2.0, x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            prop_assert!(heat_kernel(t, x, y, &cfg()).unwrap() >= -1e-14);
        }
    }
}
