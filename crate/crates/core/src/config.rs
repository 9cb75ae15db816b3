//! Run configuration and the default tolerances shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for sign decisions, multiplied by `‖f‖∞`.
pub const SIGN_TOL: f64 = 1e-9;
/// Distance to the integers below which a mode counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-9;
/// Normalized Gram determinant below which two functions are dependent.
pub const GRAM_TOL: f64 = 1e-8;
/// Width of one cluster of ratio values.
pub const CLUSTER_WIDTH: f64 = 1e-3;
/// Shell ratio below which `α = o(β)` is accepted.
pub const LITTLE_O_TOL: f64 = 0.05;
/// Relative derivative tolerance used when counting vanishing orders.
pub const DERIV_TOL: f64 = 1e-7;
/// Highest vanishing order that is reported.
pub const MAX_ZERO_ORDER: u32 = 12;
/// Largest real part of an exponent tolerated before a mode is given up.
pub const EXPONENT_BUDGET: f64 = 4000.0;
/// Exponent budget of the shooting oracle.
pub const ORACLE_EXPONENT_BUDGET: f64 = 200.0;
/// Polynomial exponent that a rapidly decaying sequence must beat.
pub const K_RAPID: f64 = 8.0;
/// Largest exponent tried by the liminf shortcut.
pub const LIMINF_MAX_EXPONENT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub ximax_scan: u64,
    pub ximax_solve: u64,
    pub grid: usize,
    pub sign_tol: f64,
    pub resonance_tol: f64,
    pub gram_tol: f64,
    pub cluster_width: f64,
    pub little_o_tol: f64,
    pub precision_bits: u32,
    pub liouville_threshold: f64,
    pub k_rapid: f64,
    pub seed: u64,
    /// Lattice points sampled per dyadic shell when `N ≥ 2`.
    pub shell_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ximax_scan: 65536,
            ximax_solve: 4096,
            grid: 1024,
            sign_tol: SIGN_TOL,
            resonance_tol: RESONANCE_TOL,
            gram_tol: GRAM_TOL,
            cluster_width: CLUSTER_WIDTH,
            little_o_tol: LITTLE_O_TOL,
            precision_bits: 256,
            liouville_threshold: 10.0,
            k_rapid: K_RAPID,
            seed: 0x5eed,
            shell_samples: 4096,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.grid.is_power_of_two() || self.grid < 8 {
            return Err(Error::BadInput(format!("grid {} is not a power of two >= 8", self.grid)));
        }
        let positive = [
            self.sign_tol,
            self.resonance_tol,
            self.gram_tol,
            self.cluster_width,
            self.little_o_tol,
            self.liouville_threshold,
            self.k_rapid,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::BadInput("tolerances must be positive".into()));
        }
        if self.ximax_scan < 64 || self.ximax_solve < 1 || self.precision_bits < 64 || self.shell_samples == 0 {
            return Err(Error::BadInput("scan radius >= 64, precision >= 64 bits required".into()));
        }
        Ok(())
    }
}
