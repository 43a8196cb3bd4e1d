//! Transfer kernels `M`, `M^ε` and `∂_t M^ε`, which carry the white noise
//! directly to the solution.

use serde::{Deserialize, Serialize};

use super::fbm::{FbmKernelConfig, HurstParam};
use super::heat::{heat_kernel, heat_kernel_dt, HeatKernelConfig};
use crate::error::{domain, Result};
use crate::rules::{integrate_split, Grading};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub heat: HeatKernelConfig,
    pub fbm: FbmKernelConfig,
    /// Relative tolerance of the node-doubling quadratures.
    pub rel_tol: f64,
    /// Node cap of a single quadrature.
    pub max_nodes: usize,
}

impl KernelConfig {
    pub fn new(hurst: HurstParam) -> Self {
        Self {
            heat: HeatKernelConfig::default(),
            fbm: FbmKernelConfig::new(hurst),
            rel_tol: 1e-8,
            max_nodes: 1 << 14,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.fbm.horizon = horizon;
        self
    }

    pub fn hurst(&self) -> f64 {
        self.fbm.hurst.get()
    }

    pub fn validate(&self) -> Result<()> {
        self.heat.validate()?;
        self.fbm.validate()
    }
}

fn check_points(x: f64, y: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return domain(format!("kernel points must lie in [0,1], got x={x}, y={y}"));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return domain(format!("regularization needs eps > 0, got {eps}"));
    }
    Ok(())
}

fn boundary(x: f64, y: f64) -> bool {
    x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0
}

/// Scale of the Gaussian transition of `G_d(x, y)` as `d -> 0`.
fn gaussian_scale(x: f64, y: f64, tau: f64) -> f64 {
    let d2 = (x - y).powi(2);
    (d2.min(tau) / 16.0).max(1e-14 * tau)
}

/// `M_{t,s}(x, y) = ∫_s^t G_{t-u}(x,y) ∂_u K_H(u,s) du`.
pub fn m_kernel(t: f64, s: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    m_kernel_tol(t, s, x, y, cfg, cfg.rel_tol)
}

fn m_kernel_tol(t: f64, s: f64, x: f64, y: f64, cfg: &KernelConfig, rel_tol: f64) -> Result<f64> {
    cfg.fbm.check_s(s)?;
    check_points(x, y)?;
    if s >= t || boundary(x, y) {
        return Ok(0.0);
    }
    let h = cfg.hurst();
    let a = h - 0.5;
    let tau = t - s;
    // u = s + w: w^{H-3/2} at w = 0 and d^{-1/2} at d = t - u = 0
    let n = cfg.fbm.quadrature_nodes;
    let left = Grading::new(n).left(h - 1.5, 0.25 * s.min(tau));
    let right = Grading::new(n).left(-0.5, gaussian_scale(x, y, tau));
    let mut err = None;
    let v = integrate_split(
        |w, d| match heat_kernel(d, x, y, &cfg.heat) {
            Ok(gv) => gv * ((s + w) / s).powf(a) * w.powf(h - 1.5),
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        },
        tau,
        left,
        right,
        rel_tol,
        0.0,
        cfg.max_nodes,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(cfg.fbm.c_h * v?)
}

/// `∂_t M_{t,s}(x, y)` by central difference with step `min(1e-4, (t-s)/100)`.
pub fn m_kernel_dt_fd(t: f64, s: f64, x: f64, y: f64, cfg: &KernelConfig) -> Result<f64> {
    cfg.fbm.check_s(s)?;
    check_points(x, y)?;
    if s >= t || boundary(x, y) {
        return Ok(0.0);
    }
    let step = (1e-4f64).min((t - s) / 100.0);
    // the difference quotient amplifies quadrature noise by 1/step
    let tol = 1e-12;
    let hi = m_kernel_tol(t + step, s, x, y, cfg, tol)?;
    let lo = m_kernel_tol(t - step, s, x, y, cfg, tol)?;
    Ok((hi - lo) / (2.0 * step))
}

fn eps_gradings(s: f64, tau: f64, eps: f64, nodes: usize) -> (Grading, Grading) {
    (
        Grading::new(nodes).left(0.0, 0.25 * eps.min(s).min(tau)),
        Grading::new(nodes).left(0.0, 0.25 * eps.min(tau)),
    )
}

/// `M^ε_{t,s}(x, y) = ∫_s^t G_{t-u+ε}(x,y) ∂_u K_H(u+ε, s) du`.
pub fn m_eps_kernel(t: f64, s: f64, x: f64, y: f64, eps: f64, cfg: &KernelConfig) -> Result<f64> {
    check_eps(eps)?;
    cfg.fbm.check_s(s)?;
    check_points(x, y)?;
    if s >= t || boundary(x, y) {
        return Ok(0.0);
    }
    let h = cfg.hurst();
    let a = h - 0.5;
    let tau = t - s;
    let (left, right) = eps_gradings(s, tau, eps, cfg.fbm.quadrature_nodes);
    let v = integrate_split(
        |w, d| {
            let gv = heat_kernel(d + eps, x, y, &cfg.heat).unwrap_or(f64::NAN);
            gv * ((s + w + eps) / s).powf(a) * (w + eps).powf(h - 1.5)
        },
        tau,
        left,
        right,
        cfg.rel_tol,
        0.0,
        cfg.max_nodes,
    )?;
    Ok(cfg.fbm.c_h * v)
}

/// `∂_t M^ε_{t,s}(x, y) = ∫_s^t ∂_t G_{t-u+ε} ∂_u K_H(u+ε, s) du + G_ε(x,y) ∂_t K_H(t+ε, s)`.
pub fn m_eps_kernel_dt(
    t: f64,
    s: f64,
    x: f64,
    y: f64,
    eps: f64,
    cfg: &KernelConfig,
) -> Result<f64> {
    check_eps(eps)?;
    cfg.fbm.check_s(s)?;
    check_points(x, y)?;
    if boundary(x, y) {
        return Ok(0.0);
    }
    let h = cfg.hurst();
    let a = h - 0.5;
    let dk = |r: f64| cfg.fbm.c_h * (r / s).powf(a) * (r - s).powf(h - 1.5);
    let edge = heat_kernel(eps, x, y, &cfg.heat)? * dk(t + eps);
    if s >= t {
        return Ok(edge);
    }
    let tau = t - s;
    let (left, right) = eps_gradings(s, tau, eps, cfg.fbm.quadrature_nodes);
    let v = integrate_split(
        |w, d| {
            let gv = heat_kernel_dt(d + eps, x, y, &cfg.heat).unwrap_or(f64::NAN);
            gv * ((s + w + eps) / s).powf(a) * (w + eps).powf(h - 1.5)
        },
        tau,
        left,
        right,
        cfg.rel_tol,
        // the two terms can cancel; anchor the stopping rule on the edge term
        1e-3 * cfg.rel_tol * edge.abs(),
        cfg.max_nodes,
    )?;
    Ok(cfg.fbm.c_h * v + edge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::fbm::fbm_kernel_dt;
    use crate::rules::integrate_adaptive;

    fn cfg() -> KernelConfig {
        KernelConfig::new(HurstParam::new(0.75).unwrap())
    }

    /// Brute force: `z = (u - s)^{H-1/2}` on the left half removes the
    /// `(u-s)^{H-3/2}` factor, `t - u = q²` on the right half removes the
    /// `(t-u)^{-1/2}`; both halves by adaptive Gauss-Kronrod.
    fn m_oracle(t: f64, s: f64, x: f64, y: f64, c: &KernelConfig) -> f64 {
        let a = c.hurst() - 0.5;
        let tau = t - s;
        let g = |d: f64| heat_kernel(d, x, y, &c.heat).unwrap();
        let left = integrate_adaptive(
            |z| {
                let u = s + z.powf(1.0 / a);
                g(t - u) * c.fbm.c_h * (u / s).powf(a) / a
            },
            0.0,
            (0.5 * tau).powf(a),
            1e-15,
            1e-12,
            20000,
        )
        .unwrap();
        let right = integrate_adaptive(
            |q| {
                if q == 0.0 {
                    return 0.0;
                }
                let u = t - q * q;
                g(q * q) * fbm_kernel_dt(u, s, &c.fbm).unwrap() * 2.0 * q
            },
            0.0,
            (0.5 * tau).sqrt(),
            1e-15,
            1e-12,
            20000,
        )
        .unwrap();
        left + right
    }

    #[test]
    fn vanishes_at_the_boundary_and_diagonal() {
        let c = cfg();
        assert_eq!(m_kernel(0.5, 0.25, 0.5, 0.0, &c).unwrap(), 0.0);
        assert_eq!(m_kernel(0.5, 0.25, 0.5, 1.0, &c).unwrap(), 0.0);
        assert_eq!(m_kernel(0.5, 0.5, 0.5, 0.5, &c).unwrap(), 0.0);
        assert_eq!(m_eps_kernel(0.5, 0.5, 0.5, 0.5, 0.01, &c).unwrap(), 0.0);
        assert_eq!(m_eps_kernel_dt(0.5, 0.25, 0.5, 0.0, 0.01, &c).unwrap(), 0.0);
        assert!(m_eps_kernel(0.5, 0.25, 0.5, 0.5, 0.0, &c).is_err());
        assert!(m_kernel(0.5, 1e-8, 0.5, 0.5, &c).is_err());
    }

    #[test]
    fn m_matches_brute_force() {
        let c = cfg();
        for &(t, s, x, y) in &[(0.5, 0.25, 0.5, 0.5), (0.5, 0.25, 0.3, 0.45), (0.3, 0.01, 0.2, 0.2), (1.0, 0.9, 0.5, 0.52)] {
            let m = m_kernel(t, s, x, y, &c).unwrap();
            let o = m_oracle(t, s, x, y, &c);
            assert!((m - o).abs() < 1e-6 * o.abs(), "({t},{s},{x},{y}): {m} vs {o}");
        }
    }

    #[test]
    fn m_eps_converges_to_m() {
        let c = cfg();
        let m = m_kernel(0.5, 0.25, 0.5, 0.5, &c).unwrap();
        let mut prev = f64::INFINITY;
        let mut diffs = Vec::new();
        for &eps in &[1e-2, 1e-3, 1e-4, 1e-5] {
            let d = (m_eps_kernel(0.5, 0.25, 0.5, 0.5, eps, &c).unwrap() - m).abs();
            assert!(d < prev, "eps={eps}: {d} !< {prev}");
            prev = d;
            diffs.push(d);
        }
        // the shifted fbm factor limits the rate to eps^{H-1/2}
        let rate = (diffs[2] / diffs[3]).log10();
        assert!((rate - 0.25).abs() < 0.1, "rate {rate}");
    }

    #[test]
    fn m_eps_dt_matches_finite_difference() {
        let c = cfg();
        let (t, s, x, y, eps) = (0.5, 0.25, 0.5, 0.5, 0.01);
        let h = 1e-5;
        let fd = (m_eps_kernel(t + h, s, x, y, eps, &c).unwrap() - m_eps_kernel(t - h, s, x, y, eps, &c).unwrap())
            / (2.0 * h);
        let d = m_eps_kernel_dt(t, s, x, y, eps, &c).unwrap();
        assert!((fd - d).abs() < 1e-4 * d.abs(), "{fd} vs {d}");
    }

    #[test]
    fn m_dt_fd_is_consistent() {
        let c = cfg();
        let (t, s) = (0.5, 0.25);
        let d = m_kernel_dt_fd(t, s, 0.5, 0.5, &c).unwrap();
        // integrate the derivative back over [t, t + 0.01]
        let back = integrate_adaptive(|r| m_kernel_dt_fd(r, s, 0.5, 0.5, &c).unwrap(), t, t + 0.01, 0.0, 1e-9, 200).unwrap();
        let diff = m_kernel(t + 0.01, s, 0.5, 0.5, &c).unwrap() - m_kernel(t, s, 0.5, 0.5, &c).unwrap();
        assert!((back - diff).abs() < 1e-6 * diff.abs().max(1e-3), "{back} vs {diff}");
        assert!(d.is_finite());
    }
}
