//! Flat run configuration shared by the suite and the command line.

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::ito::TestFunction;
use crate::kernels::fbm::HurstParam;
use crate::noise::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub hurst: f64,
    pub t_max: f64,
    pub n_time: usize,
    pub n_space: usize,
    pub x_probes: Vec<f64>,
    pub t_probes: Vec<f64>,
    pub eps_ladder: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub functions: Vec<String>,
    pub out_dir: String,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Sine modes kept by the simulator.
    pub modes: usize,
    pub pathwise_eps: f64,
    pub pathwise_seeds: usize,
    pub pathwise_tol: f64,
    pub refinement_ratio: f64,
    pub semigroup_tol: f64,
    pub c_disc: f64,
    pub slope_halfwidth: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hurst: 0.75,
            t_max: 1.0,
            n_time: 400,
            n_space: 200,
            x_probes: vec![0.5, 0.25],
            t_probes: vec![0.25, 0.5],
            eps_ladder: vec![0.1, 0.01, 0.001],
            n_paths: 10_000,
            seed: 20_240_517,
            functions: ["cos", "sin", "rational", "tanh", "z", "z2"].map(String::from).to_vec(),
            out_dir: "out".to_string(),
            threads: 0,
            modes: 64,
            pathwise_eps: 0.05,
            pathwise_seeds: 20,
            pathwise_tol: 1e-2,
            refinement_ratio: 1.8,
            semigroup_tol: 1e-6,
            c_disc: crate::ito::C_DISC,
            slope_halfwidth: 0.1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| crate::Error::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serialises")
    }

    pub fn hurst_param(&self) -> Result<HurstParam> {
        HurstParam::new(self.hurst)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.t_max, self.n_time, self.n_space)
    }

    pub fn test_functions(&self) -> Result<Vec<TestFunction>> {
        self.functions.iter().map(|n| TestFunction::by_name(n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.hurst_param()?;
        let grid = self.grid()?;
        if self.x_probes.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return input("x probes must lie in [0,1]");
        }
        for &t in &self.t_probes {
            if !(t > 0.0 && t <= self.t_max) || grid.time_index(t).is_none() {
                return input(format!("t probe {t} is not a grid time in (0, T]"));
            }
        }
        if self.eps_ladder.iter().any(|e| !(*e > 0.0)) || !(self.pathwise_eps > 0.0) {
            return input("regularisation parameters must be positive");
        }
        if self.n_paths < 1 {
            return input("n_paths must be at least 1");
        }
        if self.modes < 1 {
            return input("modes must be at least 1");
        }
        self.test_functions()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_use_defaults_and_bad_values_are_rejected() {
        let cfg = RunConfig::from_toml("hurst = 0.6\nn_paths = 10\n").unwrap();
        assert_eq!(cfg.hurst, 0.6);
        assert_eq!(cfg.n_time, 400);
        assert!(RunConfig::from_toml("hurst = 0.4").is_err());
        assert!(RunConfig::from_toml("t_probes = [0.3333]").is_err());
        assert!(RunConfig::from_toml("functions = [\"exp\"]").is_err());
        assert!(RunConfig::from_toml("colour = 1").is_err());
        assert!(RunConfig::from_toml("n_paths = 0").is_err());
    }
}
