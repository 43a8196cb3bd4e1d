//! Space-time white noise on a uniform grid and the fractional field `B`
//! synthesised from it.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::kernels::fbm::{fbm_kernel, FbmKernelConfig};
use crate::stats::{mean, pairwise_sum};

/// Uniform discretisation of `[0, T] × [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub n_time: usize,
    pub n_space: usize,
}

impl GridSpec {
    pub fn new(t_max: f64, n_time: usize, n_space: usize) -> Result<Self> {
        let g = Self {
            t_max,
            n_time,
            n_space,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return input(format!("grid horizon must be positive, got {}", self.t_max));
        }
        if self.n_time < 2 || self.n_space < 2 {
            return input("grid needs at least 2 cells per axis");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_time as f64
    }

    pub fn dy(&self) -> f64 {
        1.0 / self.n_space as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dt() * self.dy()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    pub fn space(&self, k: usize) -> f64 {
        k as f64 * self.dy()
    }

    /// Grid times `t_0 = 0, ..., t_{n_time} = T`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_time).map(|i| self.time(i)).collect()
    }

    /// Index of `t` if it is a grid time.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        node_index(t, self.dt(), self.n_time)
    }

    pub fn space_index(&self, x: f64) -> Option<usize> {
        node_index(x, self.dy(), self.n_space)
    }

    /// The first `n_steps` time rows of this grid, same `dt` and `n_space`.
    pub fn prefix(&self, n_steps: usize) -> Result<Self> {
        if n_steps < 2 || n_steps > self.n_time {
            return input(format!(
                "prefix of {n_steps} steps outside [2, {}]",
                self.n_time
            ));
        }
        Ok(Self {
            t_max: self.time(n_steps),
            n_time: n_steps,
            n_space: self.n_space,
        })
    }
}

fn node_index(v: f64, h: f64, n: usize) -> Option<usize> {
    let pos = v / h;
    let k = pos.round();
    if k < 0.0 || k > n as f64 || (pos - k).abs() > 1e-9 * pos.abs().max(1.0) {
        return None;
    }
    Some(k as usize)
}

/// Per-path seed derived from a master seed by a SplitMix64 step.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Gaussian increments of `W` over the grid cells, row-major in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteNoiseField {
    pub grid: GridSpec,
    pub seed: u64,
    pub increments: Vec<f64>,
}

impl WhiteNoiseField {
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.increments[i * self.grid.n_space + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.n_space;
        &self.increments[i * n..(i + 1) * n]
    }

    /// Entry-wise `a·self + b·other`; the result keeps this field's seed.
    pub fn combine(&self, a: f64, other: &WhiteNoiseField, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return input("cannot combine noise fields on different grids");
        }
        Ok(Self {
            grid: self.grid,
            seed: self.seed,
            increments: self
                .increments
                .iter()
                .zip(&other.increments)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// Little-endian dump: `n_time, n_space, T bits, seed` as u64, then the
    /// increments row-major as f64.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.grid.n_time as u64).to_le_bytes())?;
        out.write_all(&(self.grid.n_space as u64).to_le_bytes())?;
        out.write_all(&self.grid.t_max.to_bits().to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in &self.increments {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut src: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |src: &mut R| -> Result<u64> {
            src.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let n_time = next(&mut src)? as usize;
        let n_space = next(&mut src)? as usize;
        let t_max = f64::from_bits(next(&mut src)?);
        let seed = next(&mut src)?;
        let grid = GridSpec::new(t_max, n_time, n_space)?;
        let mut increments = Vec::with_capacity(n_time * n_space);
        for _ in 0..n_time * n_space {
            increments.push(f64::from_bits(next(&mut src)?));
        }
        Ok(Self {
            grid,
            seed,
            increments,
        })
    }
}

/// Fills `out` with the first `out.len() / n_space` rows of the field for
/// `seed`. Rows are drawn in order, so any prefix matches the full field.
pub fn fill_noise_rows(grid: &GridSpec, seed: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = grid.cell_area().sqrt();
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = sd * z;
    }
}

/// Independent `N(0, dt·dy)` increments, deterministic in `(grid, seed)`.
pub fn sample_white_noise(grid: &GridSpec, seed: u64) -> WhiteNoiseField {
    let mut increments = vec![0.0; grid.n_time * grid.n_space];
    fill_noise_rows(grid, seed, &mut increments);
    WhiteNoiseField {
        grid: *grid,
        seed,
        increments,
    }
}

/// Halves the time step: each increment is split into two by a Brownian
/// bridge draw, so the fine increments sum back to the coarse ones.
pub fn refine_time(w: &WhiteNoiseField, seed: u64) -> Result<WhiteNoiseField> {
    let g = w.grid;
    let fine = GridSpec::new(g.t_max, 2 * g.n_time, g.n_space)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (0.25 * g.cell_area()).sqrt();
    let ns = g.n_space;
    let mut increments = vec![0.0; fine.n_time * ns];
    for i in 0..g.n_time {
        for k in 0..ns {
            let z: f64 = StandardNormal.sample(&mut rng);
            let coarse = w.get(i, k);
            let first = 0.5 * coarse + sd * z;
            increments[2 * i * ns + k] = first;
            increments[(2 * i + 1) * ns + k] = coarse - first;
        }
    }
    Ok(WhiteNoiseField {
        grid: fine,
        seed: w.seed,
        increments,
    })
}

/// `B(t, x) = Σ_{s_i < t, y_k < x} K_H(t, s_i + dt/2) ΔW_{ik}` at grid nodes.
pub fn b_field(w: &WhiteNoiseField, t: f64, x: f64, cfg: &FbmKernelConfig) -> Result<f64> {
    let g = &w.grid;
    let (Some(i), Some(k)) = (g.time_index(t), g.space_index(x)) else {
        return input(format!("b_field is only defined at grid nodes, got (t={t}, x={x})"));
    };
    let dt = g.dt();
    let t = g.time(i);
    let mut terms = Vec::with_capacity(i);
    for j in 0..i {
        let kh = fbm_kernel(t, (j as f64 + 0.5) * dt, cfg)?;
        terms.push(kh * pairwise_sum(&w.row(j)[..k]));
    }
    Ok(pairwise_sum(&terms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    /// Mean over all cells and samples.
    pub mean: f64,
    /// Per-cell sample variance, averaged over cells.
    pub variance: f64,
    /// Smallest and largest per-cell sample variance.
    pub cell_variance_min: f64,
    pub cell_variance_max: f64,
    /// Largest |correlation| between neighbouring cells (lags (1,0), (0,1), (1,1)).
    pub max_cross_correlation: f64,
    pub n_samples: usize,
}

pub fn noise_diagnostics(fields: &[WhiteNoiseField]) -> Result<NoiseSummary> {
    if fields.len() < 2 {
        return input("noise diagnostics need at least two samples");
    }
    let grid = fields[0].grid;
    if fields.iter().any(|f| f.grid != grid) {
        return input("noise diagnostics need samples on identical grids");
    }
    let mut seeds: Vec<u64> = fields.iter().map(|f| f.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.len() < 2 {
        return input("noise diagnostics need at least two distinct seeds");
    }
    let n = fields.len();
    let cells = grid.n_time * grid.n_space;
    let column = |c: usize| -> Vec<f64> { fields.iter().map(|f| f.increments[c]).collect() };
    let mut means = Vec::with_capacity(cells);
    let mut vars = Vec::with_capacity(cells);
    for c in 0..cells {
        let col = column(c);
        means.push(mean(&col));
        vars.push(crate::stats::variance(&col));
    }
    let corr = |a: usize, b: usize| -> f64 {
        let (ca, cb) = (column(a), column(b));
        let prods: Vec<f64> = ca
            .iter()
            .zip(&cb)
            .map(|(x, y)| (x - means[a]) * (y - means[b]))
            .collect();
        pairwise_sum(&prods) / (n - 1) as f64 / (vars[a] * vars[b]).sqrt()
    };
    let mut max_corr: f64 = 0.0;
    let ns = grid.n_space;
    for i in 0..grid.n_time {
        for k in 0..ns {
            let c = i * ns + k;
            if k + 1 < ns {
                max_corr = max_corr.max(corr(c, c + 1).abs());
            }
            if i + 1 < grid.n_time {
                max_corr = max_corr.max(corr(c, c + ns).abs());
                if k + 1 < ns {
                    max_corr = max_corr.max(corr(c, c + ns + 1).abs());
                }
            }
        }
    }
    Ok(NoiseSummary {
        mean: mean(&means),
        variance: mean(&vars),
        cell_variance_min: vars.iter().copied().fold(f64::INFINITY, f64::min),
        cell_variance_max: vars.iter().copied().fold(0.0, f64::max),
        max_cross_correlation: max_corr,
        n_samples: n,
    })
}
