//! Bound shapes for the transfer kernels and the auxiliary function `f(r,t)`
//! used to derive them, plus scan helpers that fit the constants.
//!
//! The constants in these bounds are not constructive; a scan fits them as
//! the largest observed ratio `kernel / envelope`, and a second scan checks
//! the fit holds elsewhere.

use serde::{Deserialize, Serialize};

use super::transfer::{m_eps_kernel, m_eps_kernel_dt, m_kernel, m_kernel_dt_fd, KernelConfig};
use crate::error::{domain, Result};
use crate::rules::{integrate_split, Grading};

/// `f(r,t) = ∫_r^t (t-u)^{-1/2} (u-r)^{-α} exp(-κ x² / (t-u)) du`.
pub fn aux_f(r: f64, t: f64, x: f64, alpha: f64, kappa: f64) -> Result<f64> {
    if !(r < t) {
        return domain(format!("f(r,t) needs r < t, got r={r}, t={t}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(kappa > 0.0) {
        return domain(format!("f(r,t) needs α in (0,1) and κ > 0, got α={alpha}, κ={kappa}"));
    }
    let tau = t - r;
    let a2 = kappa * x * x;
    let scale = if a2 > 0.0 { (a2 / 8.0).min(tau) } else { tau };
    integrate_split(
        |w, d| {
            let e = if a2 > 0.0 { (-a2 / d).exp() } else { 1.0 };
            d.powf(-0.5) * w.powf(-alpha) * e
        },
        tau,
        Grading::new(16).left(-alpha, f64::INFINITY),
        Grading::new(16).left(-0.5, scale),
        1e-11,
        0.0,
        1 << 15,
    )
}

/// `∂_t f(r,t)` by central difference.
pub fn aux_f_dt(r: f64, t: f64, x: f64, alpha: f64, kappa: f64) -> Result<f64> {
    let h = 1e-4 * (t - r);
    Ok((aux_f(r, t + h, x, alpha, kappa)? - aux_f(r, t - h, x, alpha, kappa)?) / (2.0 * h))
}

/// One scan location. Unused coordinates are ignored by a shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    pub eps: f64,
}

/// A kernel together with its bound envelope (all constants set to one,
/// except the Gaussian rates, which are fixed per shape).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundShape {
    /// `f ≤ c₁ (t-r)^{1/2-α} exp(-c₂ x²/(t-r))`, with `c₂ = κ`.
    AuxF { kappa: f64 },
    /// `|∂_t f| ≤ c₃ (t-r)^{-(α+1/2)} exp(-c₄ x²/(t-r))`, with `c₄ = κ/2`.
    AuxFDt { kappa: f64 },
    /// `M ≤ c₅ (t-s)^{H-1} (t/s)^{H-1/2} [e^{-c₆(x-y)²/(t-s)} + e^{-c₆(x+y-2)²/(t-s)}]`.
    M { c6: f64 },
    /// `|∂_t M| ≤ c₇ (t-s)^{H-2} (t/s)^{H-1/2} [..c₈..]`.
    MDt { c8: f64 },
    /// `|M^ε| ≤ c (t-s)^{H-1} s^{1/2-H}`.
    MEps,
    /// `|∂_t M^ε| ≤ c ((t+ε)/s)^{H-1/2} (t-s+ε)^{H-2} [Gaussians at scale ε + t - s]`.
    MEpsDt { c1: f64 },
}

impl BoundShape {
    pub fn name(&self) -> &'static str {
        match self {
            BoundShape::AuxF { .. } => "f",
            BoundShape::AuxFDt { .. } => "dt_f",
            BoundShape::M { .. } => "M",
            BoundShape::MDt { .. } => "dt_M",
            BoundShape::MEps => "M_eps",
            BoundShape::MEpsDt { .. } => "dt_M_eps",
        }
    }

    /// Absolute kernel value at `p`.
    pub fn kernel(&self, p: &ScanPoint, cfg: &KernelConfig) -> Result<f64> {
        Ok(match *self {
            BoundShape::AuxF { kappa } => aux_f(p.s, p.t, p.x, p.alpha, kappa)?,
            BoundShape::AuxFDt { kappa } => aux_f_dt(p.s, p.t, p.x, p.alpha, kappa)?.abs(),
            BoundShape::M { .. } => m_kernel(p.t, p.s, p.x, p.y, cfg)?,
            BoundShape::MDt { .. } => m_kernel_dt_fd(p.t, p.s, p.x, p.y, cfg)?.abs(),
            BoundShape::MEps => m_eps_kernel(p.t, p.s, p.x, p.y, p.eps, cfg)?.abs(),
            BoundShape::MEpsDt { .. } => m_eps_kernel_dt(p.t, p.s, p.x, p.y, p.eps, cfg)?.abs(),
        })
    }

    /// Envelope at `p` with unit leading constant.
    pub fn envelope(&self, p: &ScanPoint, cfg: &KernelConfig) -> f64 {
        let h = cfg.hurst();
        let tau = p.t - p.s;
        let gauss = |c: f64, width: f64| {
            (-c * (p.x - p.y).powi(2) / width).exp() + (-c * (p.x + p.y - 2.0).powi(2) / width).exp()
        };
        match *self {
            BoundShape::AuxF { kappa } => tau.powf(0.5 - p.alpha) * (-kappa * p.x * p.x / tau).exp(),
            BoundShape::AuxFDt { kappa } => {
                tau.powf(-(p.alpha + 0.5)) * (-0.5 * kappa * p.x * p.x / tau).exp()
            }
            BoundShape::M { c6 } => tau.powf(h - 1.0) * (p.t / p.s).powf(h - 0.5) * gauss(c6, tau),
            BoundShape::MDt { c8 } => tau.powf(h - 2.0) * (p.t / p.s).powf(h - 0.5) * gauss(c8, tau),
            BoundShape::MEps => tau.powf(h - 1.0) * p.s.powf(0.5 - h),
            BoundShape::MEpsDt { c1 } => {
                let w = tau + p.eps;
                ((p.t + p.eps) / p.s).powf(h - 0.5) * w.powf(h - 2.0) * gauss(c1, w)
            }
        }
    }

    pub fn ratio(&self, p: &ScanPoint, cfg: &KernelConfig) -> Result<f64> {
        Ok(self.kernel(p, cfg)? / self.envelope(p, cfg))
    }
}

/// Largest ratio over `points`, i.e. the fitted constant.
pub fn fit_constant(shape: BoundShape, points: &[ScanPoint], cfg: &KernelConfig) -> Result<f64> {
    use rayon::prelude::*;
    let ratios: Result<Vec<f64>> = points.par_iter().map(|p| shape.ratio(p, cfg)).collect();
    Ok(ratios?.into_iter().fold(0.0, f64::max))
}

/// Nodes per axis of the fitting grid.
pub const FIT_NODES: usize = 7;

/// The shapes checked by default, with their Gaussian rates.
pub fn default_shapes() -> Vec<BoundShape> {
    vec![
        BoundShape::AuxF { kappa: 0.25 },
        BoundShape::AuxFDt { kappa: 0.25 },
        BoundShape::M { c6: 0.125 },
        BoundShape::MDt { c8: 0.0625 },
        BoundShape::MEps,
        BoundShape::MEpsDt { c1: 0.125 },
    ]
}

/// Parameter box for a scan. `tau = t - s` and `eps` are sampled on a log
/// scale; `t` never exceeds `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanBox {
    pub s: (f64, f64),
    pub tau: (f64, f64),
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub alpha: (f64, f64),
    pub eps: (f64, f64),
    pub t_max: f64,
}

impl ScanBox {
    /// Default box for `shape` on `[0, 1]`.
    pub fn for_shape(shape: &BoundShape) -> Self {
        let base = ScanBox {
            s: (0.02, 0.8),
            tau: (1e-3, 0.5),
            x: (0.0, 1.0),
            y: (0.0, 1.0),
            alpha: (0.5, 0.5),
            eps: (0.0, 0.0),
            t_max: 1.0,
        };
        match shape {
            BoundShape::AuxF { .. } | BoundShape::AuxFDt { .. } => ScanBox {
                s: (0.0, 0.5),
                x: (0.0, 1.0),
                y: (0.0, 0.0),
                alpha: (0.1, 0.9),
                ..base
            },
            BoundShape::M { .. } | BoundShape::MDt { .. } => base,
            BoundShape::MEps | BoundShape::MEpsDt { .. } => ScanBox { eps: (1e-3, 0.1), ..base },
        }
    }

    fn point(&self, u: [f64; 6]) -> ScanPoint {
        let lin = |(a, b): (f64, f64), v: f64| a + (b - a) * v;
        let log = |(a, b): (f64, f64), v: f64| if a > 0.0 { a * (b / a).powf(v) } else { 0.0 };
        let s = lin(self.s, u[0]);
        let tau = log(self.tau, u[1]).min(self.t_max - s);
        ScanPoint {
            s,
            t: s + tau,
            x: lin(self.x, u[2]),
            y: lin(self.y, u[3]),
            alpha: lin(self.alpha, u[4]),
            eps: log(self.eps, u[5]),
        }
    }

    /// Tensor grid with `n` nodes on every non-degenerate axis, endpoints included.
    pub fn grid(&self, n: usize) -> Vec<ScanPoint> {
        let axes = [self.s, self.tau, self.x, self.y, self.alpha, self.eps];
        let nodes: Vec<Vec<f64>> = axes
            .iter()
            .map(|&(a, b)| {
                if a == b || n < 2 {
                    vec![0.0]
                } else {
                    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
                }
            })
            .collect();
        let mut out = Vec::new();
        for &a in &nodes[0] {
            for &b in &nodes[1] {
                for &c in &nodes[2] {
                    for &d in &nodes[3] {
                        for &e in &nodes[4] {
                            for &f in &nodes[5] {
                                out.push(self.point([a, b, c, d, e, f]));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `n` points drawn uniformly (log-uniformly for `tau`, `eps`) from a seeded stream.
    pub fn random(&self, n: usize, seed: u64) -> Vec<ScanPoint> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.point(std::array::from_fn(|_| rng.gen::<f64>()))).collect()
    }
}

/// Outcome of checking a fitted constant against an independent scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub shape: String,
    pub fitted: f64,
    pub max_ratio: f64,
    pub n_points: usize,
    /// Points whose ratio exceeds `fitted · (1 + slack)`.
    pub n_over: usize,
}

impl BoundCheck {
    pub fn pass(&self) -> bool {
        self.n_over == 0
    }
}

/// Fit on `fit_points`, then count scan points above the fit by more than `slack`.
pub fn check_bound(
    shape: BoundShape,
    fit_points: &[ScanPoint],
    scan: &[ScanPoint],
    slack: f64,
    cfg: &KernelConfig,
) -> Result<BoundCheck> {
    use rayon::prelude::*;
    let fitted = fit_constant(shape, fit_points, cfg)?;
    let ratios: Result<Vec<f64>> = scan.par_iter().map(|p| shape.ratio(p, cfg)).collect();
    let ratios = ratios?;
    Ok(BoundCheck {
        shape: shape.name().to_string(),
        fitted,
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        n_points: ratios.len(),
        n_over: ratios.iter().filter(|&&r| r > fitted * (1.0 + slack)).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::fbm::HurstParam;
    use statrs::function::beta::beta;

    #[test]
    fn aux_f_closed_form_at_zero() {
        // x = 0: f = B(1/2, 1-α) (t-r)^{1/2-α}
        for &alpha in &[0.2, 0.5, 0.8] {
            let v = aux_f(0.1, 0.6, 0.0, alpha, 0.25).unwrap();
            let exact = beta(0.5, 1.0 - alpha) * 0.5f64.powf(0.5 - alpha);
            assert!((v - exact).abs() < 1e-10 * exact, "{v} vs {exact}");
        }
    }

    #[test]
    fn aux_f_derivative_matches_split_formula() {
        // ∂_t f = g₁ + g₂ after v = (u-r)/(t-r)
        let (r, t, x, alpha, kappa) = (0.1, 0.4, 0.3, 0.4, 0.25);
        let tau: f64 = t - r;
        let a2 = kappa * x * x;
        let integral = |pw: f64| {
            integrate_split(
                |w: f64, d: f64| d.powf(pw) * w.powf(-alpha) * (-a2 / (d * tau)).exp(),
                1.0,
                Grading::new(16).left(-alpha, f64::INFINITY),
                Grading::new(16).left(0.0, 1e-3),
                1e-12,
                0.0,
                1 << 15,
            )
            .unwrap()
        };
        let g1 = a2 * tau.powf(-(alpha + 1.5)) * integral(-1.5);
        let g2 = (0.5 - alpha) * tau.powf(-(alpha + 0.5)) * integral(-0.5);
        let fd = aux_f_dt(r, t, x, alpha, kappa).unwrap();
        assert!((fd - (g1 + g2)).abs() < 1e-6 * (g1 + g2).abs(), "{fd} vs {}", g1 + g2);
    }

    #[test]
    fn aux_f_first_bound_constant_is_the_beta_value() {
        let shape = BoundShape::AuxF { kappa: 0.25 };
        let cfg = KernelConfig::new(HurstParam::new(0.75).unwrap());
        let mut pts = Vec::new();
        for &tau in &[1e-3, 1e-2, 0.1, 0.5] {
            for &x in &[0.0, 0.05, 0.3, 1.0, 2.0] {
                pts.push(ScanPoint { s: 0.1, t: 0.1 + tau, x, y: 0.0, alpha: 0.5, eps: 0.0 });
            }
        }
        let c = fit_constant(shape, &pts, &cfg).unwrap();
        let b = beta(0.5, 0.5);
        assert!(c <= b * (1.0 + 1e-9) && c >= 0.999 * b, "{c} vs {b}");
    }

    #[test]
    fn grid_fit_covers_a_random_scan() {
        let cfg = KernelConfig::new(HurstParam::new(0.75).unwrap());
        let shape = BoundShape::AuxFDt { kappa: 0.25 };
        let b = ScanBox::for_shape(&shape);
        let grid = b.grid(FIT_NODES);
        assert_eq!(grid.len(), FIT_NODES.pow(4));
        assert!(grid.iter().all(|p| p.t <= b.t_max && p.t > p.s));
        let scan = b.random(200, 3);
        assert_eq!(scan, b.random(200, 3));
        let c = check_bound(shape, &grid, &scan, 0.01, &cfg).unwrap();
        assert!(c.pass() && c.max_ratio <= c.fitted, "{c:?}");
    }
}
