//! Numerical tolerances shared across modules.
//!
//! All values are absolute unless noted. The constants are defaults; solver
//! entry points that accept a [`Tolerances`] value can override them.

use serde::{Deserialize, Serialize};

/// Constraint satisfaction (budget, RoS) in currency units.
pub const TOL_FEAS: f64 = 1e-7;

/// Simplex feasibility/optimality tolerance (relative).
pub const TOL_LP: f64 = 1e-9;

/// Complementary slackness and stationarity residuals.
pub const TOL_KKT: f64 = 1e-6;

/// Bid-equality threshold, multiplied by `v_bar`.
pub const TOL_TIE_REL: f64 = 1e-8;

/// Pivot magnitude below which the simplex refuses to pivot.
pub const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feas: f64,
    pub lp: f64,
    pub kkt: f64,
    pub tie_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: TOL_FEAS,
            lp: TOL_LP,
            kkt: TOL_KKT,
            tie_rel: TOL_TIE_REL,
        }
    }
}

impl Tolerances {
    /// Absolute tie threshold on bids for an instance with valuation bound `v_bar`.
    pub fn tie(&self, v_bar: f64) -> f64 {
        self.tie_rel * v_bar
    }
}
