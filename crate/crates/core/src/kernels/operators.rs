//! The adjoint-type operators `M*` and `K*` acting on deterministic paths.

use serde::{Deserialize, Serialize};

use super::fbm::fbm_kernel_dt;
use super::transfer::{m_eps_kernel, m_eps_kernel_dt, m_kernel, m_kernel_dt_fd, KernelConfig};
use crate::error::{domain, input, Result};
use crate::rules::{integrate_graded, Grading};

/// A path sampled on the uniform grid `t_i = i dt`, linear in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimePath {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || values.len() < 2 {
            return input("a time path needs dt > 0 and at least two nodes");
        }
        Ok(Self { dt, values })
    }

    /// Samples `f` at `n + 1` nodes on `[0, t_max]`.
    pub fn from_fn(t_max: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dt = t_max / n as f64;
        Self::new(dt, (0..=n).map(|i| f(i as f64 * dt)).collect())
    }

    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let last = self.values.len() - 1;
        let pos = t / self.dt;
        if !(pos >= 0.0) || pos > last as f64 * (1.0 + 1e-12) {
            return input(format!(
                "path defined on [0, {}], evaluated at {t}",
                self.t_max()
            ));
        }
        let i = (pos.floor() as usize).min(last - 1);
        let frac = (pos - i as f64).min(1.0);
        Ok(self.values[i] + frac * (self.values[i + 1] - self.values[i]))
    }
}

/// `[M*_{T,x} φ](s, y) = ∫_s^T (φ(t) - φ(s)) ∂_t M_{t,s}(x,y) dt + φ(s) M_{T,s}(x,y)`.
///
/// `eps > 0` uses `M^ε`; `eps = 0` uses `M` with a finite-difference time
/// derivative.
pub fn mstar_apply(
    phi: &TimePath,
    t_end: f64,
    x: f64,
    s: f64,
    y: f64,
    eps: f64,
    cfg: &KernelConfig,
) -> Result<f64> {
    if eps < 0.0 {
        return domain(format!("eps must be non-negative, got {eps}"));
    }
    if !(s < t_end) {
        return domain(format!("M* needs s < T, got s={s}, T={t_end}"));
    }
    phi.eval(t_end)?;
    let phi_s = phi.eval(s)?;
    let m_end = if eps > 0.0 {
        m_eps_kernel(t_end, s, x, y, eps, cfg)?
    } else {
        m_kernel(t_end, s, x, y, cfg)?
    };
    let tail = phi_s * m_end;
    if phi.values.iter().all(|&v| v == phi_s) {
        return Ok(tail);
    }
    let h = cfg.hurst();
    let len = t_end - s;
    let grading = if eps > 0.0 {
        Grading::new(cfg.fbm.quadrature_nodes).left(0.0, 0.25 * eps.min(len))
    } else {
        // (φ(t) - φ(s)) ∂_t M ~ (t - s)^{H-1} near the diagonal
        Grading::new(cfg.fbm.quadrature_nodes).left(h - 1.0, 1e-3 * len)
    };
    let mut err = None;
    let body = integrate_graded(
        |t| {
            let dm = if eps > 0.0 {
                m_eps_kernel_dt(t, s, x, y, eps, cfg)
            } else {
                m_kernel_dt_fd(t, s, x, y, cfg)
            };
            match (phi.eval(t), dm) {
                (Ok(p), Ok(d)) => (p - phi_s) * d,
                (Err(e), _) | (_, Err(e)) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        s,
        t_end,
        &grading,
        cfg.rel_tol,
        1e-12 * tail.abs(),
        cfg.max_nodes,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(body? + tail)
}

/// `[K*_{H,T} 1_{[0,t]} φ](u, y) = 1_{u ≤ t} ∫_u^t φ(r, y) ∂_r K_H(r, u) dr`.
///
/// `jumps` lists times where `φ` may be discontinuous; the integral is split
/// there.
pub fn kstar_apply<F: Fn(f64, f64) -> f64>(
    phi: F,
    jumps: &[f64],
    t: f64,
    u: f64,
    y: f64,
    cfg: &KernelConfig,
) -> Result<f64> {
    cfg.fbm.check_s(u)?;
    if !(0.0..=1.0).contains(&y) {
        return domain(format!("y must lie in [0,1], got {y}"));
    }
    if u >= t {
        return Ok(0.0);
    }
    let h = cfg.hurst();
    let mut cuts: Vec<f64> = jumps.iter().copied().filter(|&j| j > u && j < t).collect();
    cuts.sort_by(f64::total_cmp);
    let mut pts = vec![u];
    pts.extend(cuts);
    pts.push(t);
    let n = cfg.fbm.quadrature_nodes;
    let mut total = 0.0;
    let last = pts.len() - 2;
    for (k, w) in pts.windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        let mut g = Grading::new(n).right(0.0, if k == last { 1e-12 * len } else { 1e-6 * len });
        if k == 0 {
            // the (r - u)^{H-3/2} factor of ∂_r K_H is handled by a Jacobi end panel
            g = g.left(h - 1.5, 0.25 * u.min(len));
        } else {
            g = g.left(0.0, 1e-6 * len);
        }
        let v = integrate_graded(
            |r| {
                let dk = if r > u {
                    fbm_kernel_dt(r, u, &cfg.fbm).unwrap_or(f64::NAN)
                } else {
                    f64::NAN
                };
                phi(r, y) * dk
            },
            lo,
            hi,
            &g,
            cfg.rel_tol,
            0.0,
            cfg.max_nodes,
        )?;
        total += v;
    }
    Ok(total)
}
