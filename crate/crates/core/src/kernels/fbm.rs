//! Volterra kernel of fractional Brownian motion for `H > 1/2`.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;

use crate::error::{domain, input, Error, Result};
use crate::rules::{integrate_graded, legendre, Grading};

/// Hurst index, restricted to the open interval (1/2, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.5 && h < 1.0 {
            Ok(Self(h))
        } else {
            input(format!("Hurst parameter must lie in (0.5, 1), got {h}"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `H - 1/2`.
    pub fn alpha(self) -> f64 {
        self.0 - 0.5
    }

    /// `[H(2H-1) / B(2-2H, H-1/2)]^{1/2}`.
    pub fn c_h(self) -> f64 {
        let h = self.0;
        (h * (2.0 * h - 1.0) / beta(2.0 - 2.0 * h, h - 0.5)).sqrt()
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbmKernelConfig {
    pub hurst: HurstParam,
    pub c_h: f64,
    /// Gauss-Legendre nodes per panel.
    pub quadrature_nodes: usize,
    /// Time horizon `T`; arguments below `1e-6 T` are rejected.
    pub horizon: f64,
}

/// Smallest admissible second argument, relative to the horizon.
pub const S_MIN_REL: f64 = 1e-6;

impl FbmKernelConfig {
    pub fn new(hurst: HurstParam) -> Self {
        Self {
            hurst,
            c_h: hurst.c_h(),
            quadrature_nodes: 16,
            horizon: 1.0,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn s_min(&self) -> f64 {
        S_MIN_REL * self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        if self.quadrature_nodes < 8 {
            return input("fbm kernel needs at least 8 quadrature nodes");
        }
        if !(self.c_h > 0.0) || !(self.horizon > 0.0) {
            return input("C_H and the horizon must be positive");
        }
        Ok(())
    }

    pub(crate) fn check_s(&self, s: f64) -> Result<()> {
        if !(s >= self.s_min()) {
            return domain(format!(
                "fbm kernel needs s >= {:e}, got {s}",
                self.s_min()
            ));
        }
        Ok(())
    }
}

/// `K_H(t, s)`.
///
/// With `u - s = (t - s) v^p`, `p = 1/(H - 1/2)`, the inner integral becomes
/// `p (t-s)^{H-1/2} ∫_0^1 (s + (t-s) v^p)^{H-1/2} dv`, whose integrand has a
/// kink of width `v_c = (s/(t-s))^{1/p}`; panels are graded around it.
pub fn fbm_kernel(t: f64, s: f64, cfg: &FbmKernelConfig) -> Result<f64> {
    cfg.check_s(s)?;
    Ok(kernel_unchecked(t, s, cfg))
}

pub(crate) fn kernel_unchecked(t: f64, s: f64, cfg: &FbmKernelConfig) -> f64 {
    if s >= t {
        return 0.0;
    }
    let a = cfg.hurst.alpha();
    let p = 1.0 / a;
    let tau = t - s;
    let rule = legendre(cfg.quadrature_nodes);
    let integrand = |v: f64| (s + tau * v.powf(p)).powf(a);
    let vc = (s / tau).powf(a).min(1.0);
    let mut pts = vec![0.0];
    let mut lo = vc;
    let mut below = Vec::new();
    for _ in 0..6 {
        lo *= 0.25;
        below.push(lo);
    }
    pts.extend(below.into_iter().rev());
    let mut v = vc;
    while v < 1.0 {
        pts.push(v);
        v *= 2.0;
    }
    pts.push(1.0);
    let inner: f64 = pts
        .windows(2)
        .map(|w| rule.integrate(w[0], w[1], integrand))
        .sum();
    cfg.c_h * s.powf(-a) * p * tau.powf(a) * inner
}

/// `∫_0^{min(t,s)} K_H(t,u) K_H(s,u) du`, which equals the fBm covariance
/// `½(t^{2H} + s^{2H} - |t-s|^{2H})` for the chosen `C_H`.
///
/// The integrand behaves like `u^{1-2H}` at zero, so this integrates below
/// the pointwise `s_min` cut-off on purpose.
pub fn fbm_inner_product(t: f64, s: f64, cfg: &FbmKernelConfig) -> Result<f64> {
    if !(t > 0.0 && s > 0.0) {
        return domain(format!("fbm inner product needs t, s > 0, got ({t}, {s})"));
    }
    let h = cfg.hurst.get();
    let a = cfg.hurst.alpha();
    let m = t.min(s);
    let right_exp = if t == s { 2.0 * a } else { a };
    let g = Grading::new(cfg.quadrature_nodes)
        .left(1.0 - 2.0 * h, 1e-12 * m)
        .right(right_exp, 1e-6 * m);
    integrate_graded(
        |u| kernel_unchecked(t, u, cfg) * kernel_unchecked(s, u, cfg),
        0.0,
        m,
        &g,
        1e-10,
        0.0,
        1 << 16,
    )
}

/// `∂_t K_H(t, s) = C_H (t/s)^{H-1/2} (t-s)^{H-3/2}`.
pub fn fbm_kernel_dt(t: f64, s: f64, cfg: &FbmKernelConfig) -> Result<f64> {
    cfg.check_s(s)?;
    if s >= t {
        return Err(Error::Singular(format!(
            "∂_t K_H(t, s) is unbounded as s -> t (t={t}, s={s})"
        )));
    }
    let h = cfg.hurst.get();
    Ok(cfg.c_h * (t / s).powf(h - 0.5) * (t - s).powf(h - 1.5))
}
