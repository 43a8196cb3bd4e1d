//! Deterministic kernel evaluators.

pub mod bounds;
pub mod fbm;
pub mod heat;
pub mod operators;
pub mod transfer;

pub use fbm::{fbm_inner_product, fbm_kernel, fbm_kernel_dt, FbmKernelConfig, HurstParam};
pub use heat::{heat_kernel, heat_kernel_dt, heat_kernel_g1, heat_kernel_remainder, HeatKernelConfig};
pub use bounds::{check_bound, default_shapes, fit_constant, aux_f, aux_f_dt, BoundCheck, BoundShape, ScanBox, ScanPoint};
pub use transfer::{m_eps_kernel, m_eps_kernel_dt, m_kernel, m_kernel_dt_fd, KernelConfig};
pub use operators::{kstar_apply, mstar_apply, TimePath};
