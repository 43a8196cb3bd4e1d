//! Shared fixtures for the benchmarks.

use fracheat::field::FieldConfig;
use fracheat::kernels::HurstParam;
use fracheat::noise::GridSpec;

pub fn hurst() -> HurstParam {
    HurstParam::new(0.75).expect("valid Hurst index")
}

pub fn field_config() -> FieldConfig {
    FieldConfig::new(hurst())
}

/// Half-horizon prefix of the default 400x200 grid.
pub fn default_grid() -> GridSpec {
    GridSpec::new(1.0, 400, 200).and_then(|g| g.prefix(200)).expect("valid grid")
}
