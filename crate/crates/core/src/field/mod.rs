//! Paths of `X` and `X^ε` at fixed spatial points, ensembles of them, and
//! exact Gaussian sampling from the analytic covariance.
//!
//! A path is driven by the grid white noise through the sine modes of the
//! interval: the projections `ξ_{jr} = Σ_k sin(rπ y_k) ΔW_{jk}` at the
//! cell-centre points `y_k` are independent `N(0, dt/2)` for `r < n_space`,
//! and `X(t_i, x) = Σ_r 2 sin(rπx) Σ_{j<i} ā_r(i, j) ξ_{jr}` where `ā_r` is
//! the cell average of the mode coefficient (see [`crate::modes`]).

mod covariance;

pub use covariance::{exact_sample_x, x_covariance, CovarianceMatrix};

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Result};
use crate::export::sig17;
use crate::kernels::fbm::HurstParam;
use crate::modes::{active_modes, modes_for_eps, ModeTables};
use crate::noise::{derive_seed, fill_noise_rows, GridSpec, WhiteNoiseField};
use crate::stats::{mean, pairwise_sum, variance};

/// Paths simulated together in one block of matrix products. Fixed so that
/// results do not depend on the worker count.
const BLOCK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub hurst: HurstParam,
    /// Sine modes kept for `eps = 0`; capped at `n_space - 1`.
    pub modes: usize,
}

impl FieldConfig {
    pub fn new(hurst: HurstParam) -> Self {
        Self { hurst, modes: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: GridSpec,
    pub x: f64,
    pub eps: f64,
    pub seed: u64,
    /// `X(t_i, x)` for `i = 0..=n_time`.
    pub values: Vec<f64>,
}

fn check_point(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("spatial point must lie in [0,1], got {x}"));
    }
    Ok(())
}

fn on_boundary(x: f64) -> bool {
    x == 0.0 || x == 1.0
}

/// Precomputed mode tables for one grid, point set and `eps`.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub grid: GridSpec,
    pub xs: Vec<f64>,
    pub eps: f64,
    pub hurst: HurstParam,
    modes: Vec<usize>,
    /// `sin(rπ y_k)`, `n_space × modes`.
    projection: DMatrix<f64>,
    /// `2 sin(rπ x)` per point and mode.
    weights: Vec<Vec<f64>>,
    a: Vec<DMatrix<f64>>,
    d: Option<Vec<DMatrix<f64>>>,
}

impl SimulationPlan {
    /// Plan on `grid`; `with_derivative` also tabulates `∂_t X^ε` (needs `eps > 0`).
    pub fn new(grid: &GridSpec, xs: &[f64], eps: f64, cfg: &FieldConfig, with_derivative: bool) -> Result<Self> {
        grid.validate()?;
        if xs.is_empty() {
            return input("a simulation plan needs at least one point");
        }
        for &x in xs {
            check_point(x)?;
        }
        if !(eps >= 0.0) {
            return domain(format!("eps must be nonnegative, got {eps}"));
        }
        if with_derivative && eps == 0.0 {
            return domain("∂_t X exists only for eps > 0");
        }
        let cap = modes_for_eps(eps, cfg.modes.min(grid.n_space - 1).max(1));
        let interior: Vec<f64> = xs.iter().copied().filter(|&x| !on_boundary(x)).collect();
        let mut modes = active_modes(&interior, cap);
        if modes.is_empty() {
            modes.push(1);
        }
        let tables = ModeTables::build(grid.dt(), grid.n_time, eps, cfg.hurst, modes.clone(), with_derivative)?;
        let (rows, cols) = (tables.rows(), tables.n_steps);
        let a = (0..modes.len())
            .map(|m| DMatrix::from_row_slice(rows, cols, tables.block(m)))
            .collect();
        let d = with_derivative.then(|| {
            (0..modes.len())
                .map(|m| DMatrix::from_row_slice(rows, cols, tables.deriv_block(m).expect("derivative tabulated")))
                .collect()
        });
        let dy = grid.dy();
        let projection = DMatrix::from_fn(grid.n_space, modes.len(), |k, m| {
            (modes[m] as f64 * PI * (k as f64 + 0.5) * dy).sin()
        });
        let weights = xs
            .iter()
            .map(|&x| {
                modes
                    .iter()
                    .map(|&r| if on_boundary(x) { 0.0 } else { 2.0 * (r as f64 * PI * x).sin() })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid: *grid,
            xs: xs.to_vec(),
            eps,
            hurst: cfg.hurst,
            modes,
            projection,
            weights,
            a,
            d,
        })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn has_derivative(&self) -> bool {
        self.d.is_some()
    }

    /// Paths for a block of noise fields given as consecutive row-major
    /// `n_time × n_space` slabs. Returns `[path][point] -> values` for `X`
    /// and, when tabulated, for `∂_t X^ε`.
    fn run_block(&self, noise: &[f64], n_paths: usize) -> (Vec<Vec<Vec<f64>>>, Option<Vec<Vec<Vec<f64>>>>) {
        let n = self.grid.n_time;
        let ns = self.grid.n_space;
        let nm = self.modes.len();
        let w = DMatrix::from_row_slice(n_paths * n, ns, &noise[..n_paths * n * ns]);
        let xi = w * &self.projection;
        let combine = |tabs: &[DMatrix<f64>]| -> Vec<Vec<Vec<f64>>> {
            let mut out = vec![vec![vec![0.0; n + 1]; self.xs.len()]; n_paths];
            for m in 0..nm {
                let xim = DMatrix::from_fn(n, n_paths, |j, p| xi[(p * n + j, m)]);
                let z = &tabs[m] * xim;
                for (q, wq) in self.weights.iter().enumerate() {
                    let c = wq[m];
                    if c == 0.0 {
                        continue;
                    }
                    for (p, path) in out.iter_mut().enumerate() {
                        let dst = &mut path[q];
                        for (i, v) in dst.iter_mut().enumerate() {
                            *v += c * z[(i, p)];
                        }
                    }
                }
            }
            out
        };
        let x = combine(&self.a);
        let dx = self.d.as_ref().map(|d| combine(d));
        (x, dx)
    }

    /// Paths driven by a given noise field; the field's grid must match.
    pub fn run_noise(&self, w: &WhiteNoiseField) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
        if w.grid != self.grid {
            return input("noise grid does not match the simulation plan");
        }
        let (mut x, dx) = self.run_block(&w.increments, 1);
        Ok((x.swap_remove(0), dx.map(|mut d| d.swap_remove(0))))
    }

    /// `n_paths` paths with seeds `derive_seed(master_seed, i)`, one
    /// ensemble per plan point. The noise of path `i` is the first
    /// `n_time` rows of `sample_white_noise(grid, seed_i)` on any grid with
    /// the same `dt` and `n_space`.
    pub fn ensemble(&self, n_paths: usize, master_seed: u64) -> Result<Vec<PathEnsemble>> {
        if n_paths == 0 {
            return input("an ensemble needs at least one path");
        }
        let n = self.grid.n_time;
        let ns = self.grid.n_space;
        let blocks: Vec<_> = (0..n_paths.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let lo = b * BLOCK;
                let hi = (lo + BLOCK).min(n_paths);
                let mut noise = vec![0.0; (hi - lo) * n * ns];
                for (p, slab) in noise.chunks_mut(n * ns).enumerate() {
                    fill_noise_rows(&self.grid, derive_seed(master_seed, (lo + p) as u64), slab);
                }
                self.run_block(&noise, hi - lo)
            })
            .collect();
        let mut out: Vec<PathEnsemble> = self
            .xs
            .iter()
            .map(|&x| PathEnsemble {
                n_paths,
                master_seed,
                hurst: self.hurst,
                x,
                eps: self.eps,
                grid: self.grid,
                samples: Vec::with_capacity(n_paths),
                derivatives: self.d.as_ref().map(|_| Vec::with_capacity(n_paths)),
            })
            .collect();
        let mut index = 0u64;
        for (xb, dxb) in blocks {
            let mut dxb = dxb.map(|d| d.into_iter());
            for per_point in xb {
                let seed = derive_seed(master_seed, index);
                index += 1;
                let dpp = dxb.as_mut().map(|it| it.next().expect("aligned derivative block"));
                for (q, values) in per_point.into_iter().enumerate() {
                    let e = &mut out[q];
                    e.samples.push(FieldSample {
                        grid: self.grid,
                        x: e.x,
                        eps: self.eps,
                        seed,
                        values,
                    });
                }
                if let Some(dpp) = dpp {
                    for (q, d) in dpp.into_iter().enumerate() {
                        out[q].derivatives.as_mut().expect("derivative ensemble").push(d);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `X(t_i, x)` (or `X^ε` for `eps > 0`) driven by `w`.
pub fn simulate_x(w: &WhiteNoiseField, x: f64, eps: f64, cfg: &FieldConfig) -> Result<FieldSample> {
    let plan = SimulationPlan::new(&w.grid, &[x], eps, cfg, false)?;
    let (mut values, _) = plan.run_noise(w)?;
    Ok(FieldSample {
        grid: w.grid,
        x,
        eps,
        seed: w.seed,
        values: values.swap_remove(0),
    })
}

/// `∂_t X^ε(t_i, x)` driven by `w`.
pub fn simulate_dx_eps(w: &WhiteNoiseField, x: f64, eps: f64, cfg: &FieldConfig) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return domain(format!("∂_t X^ε needs eps > 0, got {eps}"));
    }
    let plan = SimulationPlan::new(&w.grid, &[x], eps, cfg, true)?;
    let (_, dx) = plan.run_noise(w)?;
    Ok(dx.expect("derivative tabulated").swap_remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub master_seed: u64,
    pub hurst: HurstParam,
    pub x: f64,
    pub eps: f64,
    pub grid: GridSpec,
    pub samples: Vec<FieldSample>,
    /// `∂_t X^ε` per path, aligned with `samples`, when simulated.
    pub derivatives: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub grid: GridSpec,
    pub hurst: HurstParam,
    pub eps: f64,
    pub x: f64,
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Standard error of the mean.
    pub stderr: Vec<f64>,
}

impl PathEnsemble {
    /// Values of every path at time index `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.values[i]).collect()
    }

    pub fn summary(&self) -> EnsembleSummary {
        let steps = self.grid.n_time + 1;
        let cols: Vec<Vec<f64>> = (0..steps).map(|i| self.column(i)).collect();
        let n = self.n_paths as f64;
        let var: Vec<f64> = cols
            .iter()
            .map(|c| if c.len() > 1 { variance(c) } else { 0.0 })
            .collect();
        EnsembleSummary {
            n_paths: self.n_paths,
            grid: self.grid,
            hurst: self.hurst,
            eps: self.eps,
            x: self.x,
            t: self.grid.times(),
            mean: cols.iter().map(|c| mean(c)).collect(),
            stderr: var.iter().map(|v| (v / n).sqrt()).collect(),
            var,
        }
    }

    /// CSV `path_id,t,x,eps,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path_id,t,x,eps,value")?;
        let (x, eps) = (sig17(self.x), sig17(self.eps));
        for (p, s) in self.samples.iter().enumerate() {
            for (i, v) in s.values.iter().enumerate() {
                writeln!(out, "{p},{},{x},{eps},{}", sig17(self.grid.time(i)), sig17(*v))?;
            }
        }
        Ok(())
    }

    /// Mean of `g(path)` over paths, by pairwise summation.
    pub fn mean_of<F: Fn(&[f64]) -> f64 + Sync>(&self, g: F) -> f64 {
        let vals: Vec<f64> = self.samples.par_iter().map(|s| g(&s.values)).collect();
        pairwise_sum(&vals) / vals.len() as f64
    }
}
