//! Double integrals against the fBm weight `|s - u|^{2H-2}`: the variance
//! function `K_x`, its regularised counterpart `K_{ε,x}`, and a general
//! weighted-integral driver.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, input, numerical, Error, Result};
use crate::export::sig17;
use crate::kernels::fbm::HurstParam;
use crate::kernels::heat::{heat_kernel, HeatKernelConfig};
use crate::modes::{modes_for_eps, ModeNodes};
use crate::noise::GridSpec;
use crate::rules::{integrate_graded, jacobi, Grading};

/// Largest per-axis node count of the doubling drivers.
pub const MAX_AXIS_NODES: usize = 1 << 14;

/// Tensor rule for `∫∫_{[0,1]²} f(s,u) |s-u|^{2H-2} ds du`.
///
/// Each triangle of the diagonal split is mapped to the unit square with
/// `u = s(1 - ρ)`, which turns the weight into `s^{2H-1} ρ^{2H-2}`; both
/// factors go into Gauss-Jacobi rules.
#[derive(Debug, Clone)]
pub struct SingularRule {
    pub exponent: f64,
    pub order: usize,
    pub nodes: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

impl SingularRule {
    pub fn new(hurst: HurstParam, order: usize) -> Result<Self> {
        let h = hurst.get();
        let rs = jacobi(order, 0.0, 2.0 * h - 1.0)?;
        let rr = jacobi(order, 0.0, 2.0 * h - 2.0)?;
        let mut nodes = Vec::with_capacity(2 * order * order);
        let mut weights = Vec::with_capacity(2 * order * order);
        for (s, ws) in rs.mapped(0.0, 1.0) {
            for (rho, wr) in rr.mapped(0.0, 1.0) {
                let u = s * (1.0 - rho);
                nodes.push((s, u));
                weights.push(ws * wr);
                nodes.push((u, s));
                weights.push(ws * wr);
            }
        }
        Ok(Self {
            exponent: 2.0 * h - 2.0,
            order,
            nodes,
            weights,
        })
    }

    /// `∫∫_{[a,b]²} f(s,u) |s-u|^{2H-2} ds du`.
    pub fn apply<F: FnMut(f64, f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> Result<f64> {
        let len = b - a;
        let scale = len.powf(self.exponent + 2.0);
        let mut acc = 0.0;
        for (&(s, u), &w) in self.nodes.iter().zip(&self.weights) {
            let (s, u) = (a + len * s, a + len * u);
            let v = f(s, u);
            if !v.is_finite() {
                return numerical(format!("integrand is {v} at (s={s}, u={u})"));
            }
            acc += w * v;
        }
        Ok(acc * scale)
    }
}

/// `H(2H-1) ∫∫_{[a,b]²} f(s,u) |s-u|^{2H-2} ds du`, doubling the rule order
/// until two passes agree to 1e-8 relative.
pub fn fbm_weighted_integral<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    s_range: (f64, f64),
    hurst: HurstParam,
) -> Result<f64> {
    let (a, b) = s_range;
    if !(b > a) {
        return input(format!("empty integration range [{a}, {b}]"));
    }
    let h = hurst.get();
    let norm = h * (2.0 * h - 1.0);
    let mut order = 8;
    let mut prev = SingularRule::new(hurst, order)?.apply(a, b, &mut f)?;
    loop {
        order *= 2;
        if order > MAX_AXIS_NODES {
            return numerical("fbm-weighted integral did not converge within the node cap");
        }
        let cur = SingularRule::new(hurst, order)?.apply(a, b, &mut f)?;
        if (cur - prev).abs() <= 1e-8 * cur.abs() || (cur - prev).abs() < 1e-300 {
            return Ok(norm * cur);
        }
        prev = cur;
    }
}

/// Settings for the `K_x` quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub hurst: HurstParam,
    pub heat: HeatKernelConfig,
    pub rel_tol: f64,
    pub order: usize,
}

impl QuadratureConfig {
    pub fn new(hurst: HurstParam) -> Self {
        Self {
            hurst,
            heat: HeatKernelConfig::default(),
            rel_tol: 1e-11,
            order: 12,
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("spatial point must lie in [0,1], got {x}"));
    }
    Ok(())
}

/// `K_x(s) = H(2H-1) ∫_0^s∫_0^s G_{2s-v₁-v₂}(x,x) |v₁-v₂|^{2H-2} dv₁ dv₂`.
///
/// In backward lags `a ≥ b` with `b = a(1-ρ)` this is
/// `2H(2H-1) ∫_0^s a^{2H-1} ∫_0^1 ρ^{2H-2} G_{a(2-ρ)}(x,x) dρ da`; the outer
/// integrand behaves like `a^{2H-3/2}` at the corner.
pub fn kx(s: f64, x: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_x(x)?;
    if s <= 0.0 || x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    let h = cfg.hurst.get();
    let tol = cfg.rel_tol;
    let inner_grading = Grading::new(cfg.order).left(2.0 * h - 2.0, f64::INFINITY);
    let mut failure: Option<Error> = None;
    let inner = |a: f64, failure: &mut Option<Error>| -> f64 {
        let g = |rho: f64| {
            rho.powf(2.0 * h - 2.0) * heat_kernel(a * (2.0 - rho), x, x, &cfg.heat).unwrap_or(f64::NAN)
        };
        match integrate_graded(g, 0.0, 1.0, &inner_grading, tol, 0.0, MAX_AXIS_NODES) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let edge = x.min(1.0 - x);
    let outer_grading = Grading::new(cfg.order).left(2.0 * h - 1.5, 0.25 * (edge * edge).min(s));
    let outer = integrate_graded(
        |a| a.powf(2.0 * h - 1.0) * inner(a, &mut failure),
        0.0,
        s,
        &outer_grading,
        tol,
        0.0,
        MAX_AXIS_NODES,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(2.0 * h * (2.0 * h - 1.0) * outer?)
}

/// `K_x` on every grid time with its increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KxTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `increments[i] = values[i+1] - values[i]`.
    pub increments: Vec<f64>,
    pub x: f64,
    pub hurst: HurstParam,
}

impl KxTable {
    pub fn from_values(times: Vec<f64>, values: Vec<f64>, x: f64, hurst: HurstParam) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return input("K_x table needs one value per time");
        }
        let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some((i, d)) = increments.iter().enumerate().find(|(_, d)| **d < -1e-12) {
            return numerical(format!(
                "K_x decreases by {d:e} between s={} and s={}",
                times[i],
                times[i + 1]
            ));
        }
        Ok(Self {
            times,
            values,
            increments,
            x,
            hurst,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Table truncated to its first `n + 1` times.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n + 1 > self.len() {
            return input(format!("K_x table has only {} entries", self.len()));
        }
        Self::from_values(self.times[..=n].to_vec(), self.values[..=n].to_vec(), self.x, self.hurst)
    }

    /// Every value multiplied by `factor` (used by the mutation hook).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out.increments.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// CSV `s,K_x,dK_x` where `dK_x` is the increment that ends at `s`
    /// (zero on the first row), so the column sums to `K_x`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "s,K_x,dK_x")?;
        for (i, (&s, &k)) in self.times.iter().zip(&self.values).enumerate() {
            let dk = if i == 0 { 0.0 } else { self.increments[i - 1] };
            writeln!(out, "{},{},{}", sig17(s), sig17(k), sig17(dk))?;
        }
        Ok(())
    }
}

pub fn kx_table(grid: &GridSpec, x: f64, cfg: &QuadratureConfig) -> Result<KxTable> {
    grid.validate()?;
    check_x(x)?;
    let times = grid.times();
    let values: Vec<f64> = times
        .par_iter()
        .map(|&s| kx(s, x, cfg))
        .collect::<Result<_>>()?;
    KxTable::from_values(times, values, x, cfg.hurst)
}

/// `K_{ε,x}(s) = ½ ∫_0^s∫_0^1 (M^ε_{s,u}(x,y))² dy du`, with the `y`
/// integral done by Parseval over the sine modes:
/// `∫_0^1 (M^ε)² dy = Σ_r 2 sin²(rπx) m_r(s,u)²`.
pub fn k_eps_x(s: f64, x: f64, eps: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_x(x)?;
    if !(eps > 0.0) {
        return domain(format!("K_eps needs eps > 0, got {eps}"));
    }
    if s <= 0.0 || x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    let hurst = cfg.hurst;
    let r_max = modes_for_eps(eps, 1 << 12);
    let sin2: Vec<f64> = (1..=r_max).map(|r| (r as f64 * PI * x).sin().powi(2)).collect();
    let mut failure: Option<Error> = None;
    let mut coeffs = vec![0.0; r_max];
    let integrand = |u: f64| -> f64 {
        if u >= s {
            return 0.0;
        }
        match ModeNodes::build(s, u, eps, hurst, r_max) {
            Ok(nodes) => {
                coeffs.iter_mut().for_each(|c| *c = 0.0);
                nodes.accumulate(1.0, &mut coeffs);
                coeffs.iter().zip(&sin2).map(|(m, w)| w * m * m).sum()
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let lam_scale = 1.0 / (PI * r_max as f64).powi(2);
    let grading = Grading::new(cfg.order)
        .left(1.0 - 2.0 * hurst.get(), 0.25 * eps.min(s))
        .right(0.0, 0.25 * eps.min(lam_scale));
    let v = integrate_graded(integrand, 0.0, s, &grading, 1e-9, 0.0, MAX_AXIS_NODES);
    if let Some(e) = failure {
        return Err(e);
    }
    // ½ · Σ_r 2 sin² ∫ m_r²
    Ok(v?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::integrate_adaptive;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn singular_rule_exactness() {
        for &h in &[0.6, 0.75, 0.9] {
            let rule = SingularRule::new(hp(h), 6).unwrap();
            let total: f64 = rule.weights.iter().sum();
            let want = 2.0 / ((2.0 * h - 1.0) * 2.0 * h);
            assert!((total - want).abs() < 1e-12 * want, "{total} {want}");
        }
    }

    #[test]
    fn weighted_integral_examples() {
        for &h in &[0.6, 0.75, 0.9] {
            let one = fbm_weighted_integral(|_, _| 1.0, (0.0, 1.0), hp(h)).unwrap();
            assert!((one - 1.0).abs() < 1e-12);
        }
        let f = |s: f64, u: f64| (s * 3.0).sin() * u.exp();
        let a = fbm_weighted_integral(f, (0.2, 1.1), hp(0.7)).unwrap();
        let b = fbm_weighted_integral(|s, u| f(u, s), (0.2, 1.1), hp(0.7)).unwrap();
        assert!((a - b).abs() <= 1e-14 * a.abs());
    }

    #[test]
    fn weighted_integral_matches_closed_form_for_su() {
        // ∫∫ s u |s-u|^{2H-2} over [0,1]², by expanding s u = ((s+u)² - (s-u)²)/4
        // and integrating in the rotated coordinates p = s+u, q = s-u.
        let h = 0.75;
        let e = 2.0 * h - 2.0;
        // ∫_{-1}^{1} |q|^e ∫_{|q|}^{2-|q|} (p² - q²)/4 · ½ dp dq
        let inner = |q: f64| {
            let lo = q.abs();
            let hi = 2.0 - lo;
            ((hi.powi(3) - lo.powi(3)) / 3.0 - q * q * (hi - lo)) / 8.0
        };
        // symmetric in q; substitute q = z^{1/(e+1)} to absorb the weight
        let p = 1.0 / (e + 1.0);
        let half = integrate_adaptive(|z| p * inner(z.powf(p)), 0.0, 1.0, 1e-16, 1e-14, 2000).unwrap();
        let want = h * (2.0 * h - 1.0) * 2.0 * half;
        let got = fbm_weighted_integral(|s, u| s * u, (0.0, 1.0), hp(h)).unwrap();
        assert!((got - want).abs() < 1e-8 * want, "{got} {want}");
    }

    #[test]
    fn kx_boundary_and_small_time_scaling() {
        let cfg = QuadratureConfig::new(hp(0.75));
        assert_eq!(kx(0.5, 0.0, &cfg).unwrap(), 0.0);
        assert_eq!(kx(0.0, 0.5, &cfg).unwrap(), 0.0);
        let r: Vec<f64> = [0.01, 0.02, 0.04]
            .iter()
            .map(|&s| kx(s, 0.5, &cfg).unwrap() / s.powf(1.0))
            .collect();
        for w in r.windows(2) {
            assert!((w[0] / w[1] - 1.0).abs() < 0.1, "{r:?}");
        }
    }

    #[test]
    fn kx_matches_brute_force_in_original_variables() {
        // nested adaptive quadrature on the square with the power substitution
        // v₂ = v₁ ± z^{1/(2H-1)} on each side of the diagonal
        let h: f64 = 0.75;
        let (s, x) = (0.3, 0.4);
        let heat = HeatKernelConfig::default();
        let p = 1.0 / (2.0 * h - 1.0);
        let g = |tau: f64| heat_kernel(tau, x, x, &heat).unwrap();
        let outer = |v1: f64| {
            let below = integrate_adaptive(|z| p * g(2.0 * s - 2.0 * v1 + z.powf(p)), 0.0, v1.powf(1.0 / p), 1e-15, 1e-12, 4000).unwrap();
            let above = integrate_adaptive(|z| p * g(2.0 * s - 2.0 * v1 - z.powf(p)), 0.0, (s - v1).powf(1.0 / p), 1e-15, 1e-12, 4000).unwrap();
            below + above
        };
        // corner singularity at v₁ = s: substitute v₁ = s - w^2
        let total = integrate_adaptive(|w| 2.0 * w * outer(s - w * w), 0.0, s.sqrt(), 1e-14, 1e-11, 4000).unwrap();
        let want = h * (2.0 * h - 1.0) * total;
        let got = kx(s, x, &QuadratureConfig::new(hp(h))).unwrap();
        assert!((got - want).abs() < 1e-8 * want, "{got} {want}");
    }

    #[test]
    fn kx_table_contract() {
        let cfg = QuadratureConfig::new(hp(0.75));
        let grid = GridSpec::new(1.0, 40, 10).unwrap();
        let tab = kx_table(&grid, 0.5, &cfg).unwrap();
        assert_eq!(tab.values[0], 0.0);
        assert!(tab.increments.iter().all(|d| *d >= -1e-12));
        let sum: f64 = tab.increments.iter().sum();
        assert!((sum - tab.values[40]).abs() < 1e-14);
        let fine = kx_table(&GridSpec::new(1.0, 80, 10).unwrap(), 0.5, &cfg).unwrap();
        for i in 0..=40 {
            assert!((fine.values[2 * i] - tab.values[i]).abs() <= 1e-8 * tab.values[i].max(1e-300));
        }
        let mut buf = Vec::new();
        tab.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,K_x,dK_x\n0,0,0\n"));
        assert_eq!(text.lines().count(), 42);
        assert!(KxTable::from_values(vec![0.0, 1.0], vec![1.0, 0.5], 0.5, hp(0.75)).is_err());
    }

    #[test]
    fn k_eps_contract() {
        let cfg = QuadratureConfig::new(hp(0.75));
        assert!(k_eps_x(0.5, 0.5, 0.0, &cfg).is_err());
        assert_eq!(k_eps_x(0.5, 0.0, 0.1, &cfg).unwrap(), 0.0);
        let half_k = 0.5 * kx(0.5, 0.5, &cfg).unwrap();
        let gaps: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&e| (k_eps_x(0.5, 0.5, e, &cfg).unwrap() - half_k).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}
