use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Sup-norm bounds of `f`, `f'`, `f''` on the real line; `None` when unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupBounds {
    pub f: Option<f64>,
    pub df: Option<f64>,
    pub d2f: Option<f64>,
}

/// A test function with its first two derivatives.
#[derive(Debug, Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub f: fn(f64) -> f64,
    pub df: fn(f64) -> f64,
    pub d2f: fn(f64) -> f64,
    pub bounds: SupBounds,
}

const fn bounded(f: f64, df: f64, d2f: f64) -> SupBounds {
    SupBounds {
        f: Some(f),
        df: Some(df),
        d2f: Some(d2f),
    }
}

impl TestFunction {
    pub fn cos() -> Self {
        Self {
            name: "cos",
            f: f64::cos,
            df: |z| -z.sin(),
            d2f: |z| -z.cos(),
            bounds: bounded(1.0, 1.0, 1.0),
        }
    }

    pub fn sin() -> Self {
        Self {
            name: "sin",
            f: f64::sin,
            df: f64::cos,
            d2f: |z| -z.sin(),
            bounds: bounded(1.0, 1.0, 1.0),
        }
    }

    /// `1/(1+z²)`.
    pub fn rational() -> Self {
        Self {
            name: "rational",
            f: |z| 1.0 / (1.0 + z * z),
            df: |z| -2.0 * z / (1.0 + z * z).powi(2),
            d2f: |z| (6.0 * z * z - 2.0) / (1.0 + z * z).powi(3),
            bounds: bounded(1.0, 3.0 * 3f64.sqrt() / 8.0, 2.0),
        }
    }

    pub fn tanh() -> Self {
        Self {
            name: "tanh",
            f: f64::tanh,
            df: |z| 1.0 - z.tanh().powi(2),
            d2f: |z| {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            },
            bounds: bounded(1.0, 1.0, 4.0 / (3.0 * 3f64.sqrt())),
        }
    }

    /// Diagnostic, not bounded.
    pub fn linear() -> Self {
        Self {
            name: "z",
            f: |z| z,
            df: |_| 1.0,
            d2f: |_| 0.0,
            bounds: SupBounds {
                f: None,
                df: Some(1.0),
                d2f: Some(0.0),
            },
        }
    }

    /// Diagnostic, not bounded.
    pub fn square() -> Self {
        Self {
            name: "z2",
            f: |z| z * z,
            df: |z| 2.0 * z,
            d2f: |_| 2.0,
            bounds: SupBounds {
                f: None,
                df: None,
                d2f: Some(2.0),
            },
        }
    }

    pub fn constant() -> Self {
        Self {
            name: "one",
            f: |_| 1.0,
            df: |_| 0.0,
            d2f: |_| 0.0,
            bounds: bounded(1.0, 0.0, 0.0),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "cos" => Self::cos(),
            "sin" => Self::sin(),
            "rational" => Self::rational(),
            "tanh" => Self::tanh(),
            "z" => Self::linear(),
            "z2" => Self::square(),
            "one" => Self::constant(),
            other => return input(format!("unknown test function '{other}'")),
        })
    }

    pub fn names() -> &'static [&'static str] {
        &["cos", "sin", "rational", "tanh", "z", "z2", "one"]
    }

    pub fn is_cb2(&self) -> bool {
        self.bounds.f.is_some() && self.bounds.df.is_some() && self.bounds.d2f.is_some()
    }
}
