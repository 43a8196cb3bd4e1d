//! Sine-mode coefficients of the transfer kernel and their cell averages.
//!
//! With `λ_r = r²π²`,
//! `M^ε_{t,s}(x, y) = Σ_r 2 sin(rπx) sin(rπy) m_r(t, s)` where
//! `m_r(t, s) = ∫_s^t e^{-λ_r(t-u+ε)} ∂_u K_H(u+ε, s) du`.
//! One node set per `(t, s)` serves every mode; the exponentials come from a
//! multiplicative recurrence in `r`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{input, Result};
use crate::kernels::fbm::HurstParam;
use crate::rules::{jacobi, legendre};

const PANEL_ORDER: usize = 10;
/// `e^{-40}` is below double precision relative to the leading mode.
const EXP_CUTOFF: f64 = 40.0;

pub fn lambda(r: usize) -> f64 {
    let r = r as f64;
    r * r * PI * PI
}

/// Largest mode that survives the factor `e^{-λ_r ε}`, capped at `cap`.
pub fn modes_for_eps(eps: f64, cap: usize) -> usize {
    if eps <= 0.0 {
        return cap;
    }
    let r = ((EXP_CUTOFF / eps).sqrt() / PI).floor() as usize + 1;
    r.min(cap).max(1)
}

/// Geometric panel breakpoints `0 < b_0 < 2b_0 < ... < len` down to `scale`.
fn geometric(len: f64, scale: f64) -> Vec<f64> {
    let mut pts = vec![len];
    let mut b = len;
    while b > scale && pts.len() < 80 {
        b *= 0.5;
        pts.push(b);
    }
    pts.reverse();
    pts
}

/// Exponent offsets `δ_k = t - u_k + ε` and weights `W_k` with
/// `m_r(t, s) = Σ_k W_k e^{-λ_r δ_k}`.
#[derive(Debug, Clone, Default)]
pub struct ModeNodes {
    pub delta: Vec<f64>,
    pub weight: Vec<f64>,
}

impl ModeNodes {
    pub fn build(t: f64, s: f64, eps: f64, hurst: HurstParam, max_mode: usize) -> Result<Self> {
        if !(s > 0.0) || !(t > s) {
            return input(format!("mode nodes need 0 < s < t, got s={s}, t={t}"));
        }
        let h = hurst.get();
        let a = hurst.alpha();
        let c = hurst.c_h();
        let tau = t - s;
        let half = 0.5 * tau;
        let dk = |w: f64| c * ((s + w + eps) / s).powf(a) * (w + eps).powf(h - 1.5);
        let gl = legendre(PANEL_ORDER);
        let mut out = Self::default();

        // left half, w = u - s in [0, τ/2]
        let mut scale = 0.25 * s.min(half);
        if eps > 0.0 {
            scale = scale.min(0.25 * eps);
        }
        let pts = geometric(half, scale);
        if eps > 0.0 {
            for (w, q) in gl.mapped(0.0, pts[0]) {
                out.push(tau - w + eps, q * dk(w));
            }
        } else {
            let jr = jacobi(PANEL_ORDER, 0.0, h - 1.5)?;
            for (w, q) in jr.mapped(0.0, pts[0]) {
                out.push(tau - w, q * c * ((s + w) / s).powf(a));
            }
        }
        for p in pts.windows(2) {
            for (w, q) in gl.mapped(p[0], p[1]) {
                out.push(tau - w + eps, q * dk(w));
            }
        }

        // right half, d = t - u in [0, τ/2]
        let rscale = 0.25 * (1.0 / lambda(max_mode.max(1))).min(half);
        let pts = geometric(half, rscale);
        let mut panels = vec![(0.0, pts[0])];
        panels.extend(pts.windows(2).map(|p| (p[0], p[1])));
        for (lo, hi) in panels {
            for (d, q) in gl.mapped(lo, hi) {
                out.push(d + eps, q * dk(tau - d));
            }
        }
        Ok(out)
    }

    fn push(&mut self, delta: f64, weight: f64) {
        self.delta.push(delta);
        self.weight.push(weight);
    }

    /// Adds `scale · m_r` to `acc[r-1]` for `r = 1..=acc.len()`.
    pub fn accumulate(&self, scale: f64, acc: &mut [f64]) {
        let g0 = (-PI * PI).exp();
        for (&delta, &w) in self.delta.iter().zip(&self.weight) {
            let w = w * scale;
            let e = g0.powf(delta);
            let mut val = w * e;
            let mut step = e * e * e;
            let ratio = e * e;
            for slot in acc.iter_mut() {
                *slot += val;
                if val.abs() <= 1e-18 * w.abs() {
                    break;
                }
                val *= step;
                step *= ratio;
            }
        }
    }

    pub fn coefficients(&self, modes: usize) -> Vec<f64> {
        let mut acc = vec![0.0; modes];
        self.accumulate(1.0, &mut acc);
        acc
    }
}

/// `m_r(t, s)` for `r = 1..=modes`.
pub fn mode_coefficients(t: f64, s: f64, eps: f64, hurst: HurstParam, modes: usize) -> Result<Vec<f64>> {
    Ok(ModeNodes::build(t, s, eps, hurst, modes)?.coefficients(modes))
}

/// Source-cell quadrature: nodes and weights that average over `[s_j, s_{j+1}]`.
///
/// The first cell carries the `s^{1/2-H}` blow-up of the kernel at `s = 0`
/// and uses a Gauss-Jacobi rule; every other cell uses 4-point Gauss-Legendre.
pub fn cell_rule(j: usize, dt: f64, hurst: HurstParam) -> Result<Vec<(f64, f64)>> {
    const ORDER: usize = 4;
    let lo = j as f64 * dt;
    if j == 0 {
        let a = hurst.alpha();
        let jr = jacobi(ORDER, 0.0, -a)?;
        Ok(jr.mapped(0.0, dt).map(|(s, q)| (s, q * s.powf(a) / dt)).collect())
    } else {
        Ok(legendre(ORDER).mapped(lo, lo + dt).map(|(s, q)| (s, q / dt)).collect())
    }
}

/// Cell-averaged mode coefficients on a uniform time grid.
///
/// `value(m, i, j)` is the average over source cell `j` of `m_{r}(t_i, ·)` for
/// the `m`-th retained mode `r = modes[m]`; it vanishes unless `j < i`.
#[derive(Debug, Clone)]
pub struct ModeTables {
    pub dt: f64,
    pub n_steps: usize,
    pub eps: f64,
    pub modes: Vec<usize>,
    /// `[mode][i][j]`, `(n_steps + 1) × n_steps` per mode.
    pub a: Vec<f64>,
    /// Same layout, time derivative. Present only for `eps > 0`.
    pub d: Option<Vec<f64>>,
}

impl ModeTables {
    pub fn build(
        dt: f64,
        n_steps: usize,
        eps: f64,
        hurst: HurstParam,
        modes: Vec<usize>,
        with_derivative: bool,
    ) -> Result<Self> {
        if modes.is_empty() {
            return input("mode tables need at least one mode");
        }
        if with_derivative && !(eps > 0.0) {
            return input("the time derivative needs eps > 0");
        }
        let r_max = *modes.iter().max().unwrap();
        let rows = n_steps + 1;
        let cells: Vec<Vec<(f64, f64)>> = (0..n_steps)
            .map(|j| cell_rule(j, dt, hurst))
            .collect::<Result<_>>()?;
        let lam: Vec<f64> = modes.iter().map(|&r| lambda(r)).collect();
        let damp: Vec<f64> = lam.iter().map(|l| (-l * eps).exp()).collect();
        let (h, a, c) = (hurst.get(), hurst.alpha(), hurst.c_h());

        // one row i at a time: (a_row, d_row), each [mode][j]
        let per_row: Vec<(Vec<f64>, Vec<f64>)> = (0..rows)
            .into_par_iter()
            .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
                let t = i as f64 * dt;
                let nm = modes.len();
                let mut arow = vec![0.0; nm * n_steps];
                let mut drow = vec![0.0; if with_derivative { nm * n_steps } else { 0 }];
                let mut full = vec![0.0; r_max];
                for j in 0..i {
                    for &(s, w) in &cells[j] {
                        full.iter_mut().for_each(|v| *v = 0.0);
                        ModeNodes::build(t, s, eps, hurst, r_max)?.accumulate(1.0, &mut full);
                        let edge = if with_derivative {
                            c * ((t + eps) / s).powf(a) * (t + eps - s).powf(h - 1.5)
                        } else {
                            0.0
                        };
                        for (m, &r) in modes.iter().enumerate() {
                            let mr = full[r - 1];
                            arow[m * n_steps + j] += w * mr;
                            if with_derivative {
                                drow[m * n_steps + j] += w * (-lam[m] * mr + damp[m] * edge);
                            }
                        }
                    }
                }
                Ok((arow, drow))
            })
            .collect::<Result<_>>()?;

        let nm = modes.len();
        let mut at = vec![0.0; nm * rows * n_steps];
        let mut dtab = vec![0.0; if with_derivative { nm * rows * n_steps } else { 0 }];
        for (i, (arow, drow)) in per_row.into_iter().enumerate() {
            for m in 0..nm {
                let dst = (m * rows + i) * n_steps;
                at[dst..dst + n_steps].copy_from_slice(&arow[m * n_steps..(m + 1) * n_steps]);
                if with_derivative {
                    dtab[dst..dst + n_steps].copy_from_slice(&drow[m * n_steps..(m + 1) * n_steps]);
                }
            }
        }
        Ok(Self {
            dt,
            n_steps,
            eps,
            modes,
            a: at,
            d: with_derivative.then_some(dtab),
        })
    }

    pub fn rows(&self) -> usize {
        self.n_steps + 1
    }

    /// Table block of one mode, row-major `(n_steps + 1) × n_steps`.
    pub fn block(&self, m: usize) -> &[f64] {
        let len = self.rows() * self.n_steps;
        &self.a[m * len..(m + 1) * len]
    }

    pub fn deriv_block(&self, m: usize) -> Option<&[f64]> {
        let len = self.rows() * self.n_steps;
        self.d.as_ref().map(|d| &d[m * len..(m + 1) * len])
    }

    /// Exact variance of the discrete field at `(t_i, x)` when the mode
    /// projections are independent `N(0, dt/2)`.
    pub fn discrete_variance(&self, i: usize, x: f64) -> f64 {
        let mut total = 0.0;
        for (m, &r) in self.modes.iter().enumerate() {
            let row = &self.block(m)[i * self.n_steps..(i + 1) * self.n_steps];
            let sq: f64 = row.iter().map(|v| v * v).sum();
            total += 2.0 * (r as f64 * PI * x).sin().powi(2) * sq * self.dt;
        }
        total
    }
}

/// Modes up to `cap` whose sine does not vanish at any of `xs`.
pub fn active_modes(xs: &[f64], cap: usize) -> Vec<usize> {
    (1..=cap)
        .filter(|&r| xs.iter().any(|&x| (r as f64 * PI * x).sin().abs() > 1e-9))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::transfer::{m_eps_kernel, KernelConfig};
    use crate::rules::integrate_adaptive;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    // m_r by adaptive Gauss-Kronrod after w = z^{1/(H-1/2)}, which removes the
    // endpoint singularity of ∂K.
    fn brute(t: f64, s: f64, r: usize, h: f64) -> f64 {
        let hpar = hp(h);
        let (a, c) = (hpar.alpha(), hpar.c_h());
        let p = 1.0 / (h - 0.5);
        let lam = lambda(r);
        let tau = t - s;
        let half = 0.5 * tau;
        // left half: ∫_0^{τ/2} e^{-λ(τ-w)} ((s+w)/s)^a w^{h-3/2} dw with w = z^p
        let f = |z: f64| {
            let w = z.powf(p);
            p * (-lam * (tau - w)).exp() * ((s + w) / s).powf(a) * c
        };
        let left = integrate_adaptive(f, 0.0, half.powf(h - 0.5), 1e-300, 1e-12, 4000).unwrap();
        // right half in d = τ - w, split where the exponential has decayed
        let g = |d: f64| (-lam * d).exp() * c * ((t - d) / s).powf(a) * (tau - d).powf(h - 1.5);
        let cut = (20.0 / lam).min(half);
        let mut right = integrate_adaptive(g, 0.0, cut, 1e-300, 1e-12, 4000).unwrap();
        if cut < half {
            right += integrate_adaptive(g, cut, half, 1e-300, 1e-12, 4000).unwrap();
        }
        left + right
    }

    #[test]
    fn coefficients_match_direct_quadrature() {
        for &h in &[0.6, 0.75, 0.9] {
            for &(t, s) in &[(0.5, 0.25), (0.5, 0.49), (0.3, 1e-4), (1.0, 0.0025)] {
                let m = mode_coefficients(t, s, 0.0, hp(h), 64).unwrap();
                for &r in &[1usize, 2, 7, 30, 64] {
                    let want = brute(t, s, r, h);
                    let got = m[r - 1];
                    assert!(
                        (got - want).abs() <= 1e-8 * want.abs().max(1e-10),
                        "h={h} t={t} s={s} r={r}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn mode_sum_reproduces_regularized_kernel() {
        let cfg = KernelConfig::new(hp(0.75));
        for &(t, s, x, y, eps) in &[
            (0.5, 0.25, 0.5, 0.3, 0.01),
            (0.5, 0.45, 0.25, 0.25, 0.01),
            (0.8, 0.1, 0.7, 0.2, 0.1),
            (0.5, 0.499, 0.5, 0.5, 0.001),
        ] {
            let r_max = modes_for_eps(eps, 2000);
            let m = mode_coefficients(t, s, eps, hp(0.75), r_max).unwrap();
            let series: f64 = m
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let r = (k + 1) as f64;
                    2.0 * (r * PI * x).sin() * (r * PI * y).sin() * v
                })
                .sum();
            let direct = m_eps_kernel(t, s, x, y, eps, &cfg).unwrap();
            assert!(
                (series - direct).abs() < 1e-7 * direct.abs().max(1e-3),
                "{series} vs {direct}"
            );
        }
    }

    #[test]
    fn cell_rules_average_constants() {
        for j in 1..4 {
            let cr = cell_rule(j, 0.01, hp(0.75)).unwrap();
            let sum: f64 = cr.iter().map(|p| p.1).sum();
            assert!((sum - 1.0).abs() < 1e-13);
            assert!(cr.iter().all(|p| p.0 > j as f64 * 0.01 && p.0 < (j + 1) as f64 * 0.01));
        }
        // first-cell rule is exact for s^{-a}·poly
        let cr = cell_rule(0, 0.01, hp(0.75)).unwrap();
        let got: f64 = cr.iter().map(|&(s, w)| w * s.powf(-0.25)).sum();
        let want = 0.01f64.powf(0.75) / 0.75 / 0.01;
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn tables_vanish_above_diagonal_and_derivative_is_consistent() {
        let dt = 0.002;
        let tab = ModeTables::build(dt, 60, 0.05, hp(0.75), vec![1, 3, 5], true).unwrap();
        let n = tab.n_steps;
        for m in 0..3 {
            let a = tab.block(m);
            let d = tab.deriv_block(m).unwrap();
            for i in 0..=n {
                for j in i..n {
                    assert_eq!(a[i * n + j], 0.0);
                }
            }
            // old cells: a(i+1, j) - a(i, j) ≈ trapezoid of the derivative
            for i in 30..n {
                let j = 2;
                let diff = a[(i + 1) * n + j] - a[i * n + j];
                let trap = 0.5 * dt * (d[(i + 1) * n + j] + d[i * n + j]);
                assert!((diff - trap).abs() < 1e-3 * diff.abs().max(1e-8), "{diff} {trap}");
            }
        }
        assert!(ModeTables::build(dt, 4, 0.0, hp(0.75), vec![1], true).is_err());
    }

    #[test]
    fn active_modes_skip_nodal_lines() {
        assert_eq!(active_modes(&[0.5], 6), vec![1, 3, 5]);
        assert_eq!(active_modes(&[0.5, 0.25], 8), vec![1, 2, 3, 5, 6, 7]);
    }
}
