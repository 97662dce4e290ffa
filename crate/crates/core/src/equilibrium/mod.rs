//! Market-clearing equilibrium of the budget- and RoS-constrained
//! Eisenberg-Gale market.
//!
//! The equilibrium is computed on the dual side. With prices eliminated at
//! their binding value `p_j = max_i w_i v_ij`, the dual becomes
//!
//! ```text
//! F(w) = sum_j max_i w_i v_ij - sum_i lambda_i ln w_i + sum_i lambda_i (ln lambda_i - 1)
//! ```
//!
//! minimized over the box `w_lower_i <= w_i <= 1 / tau_i`. `F` is strongly
//! convex on the box with modulus `min_i lambda_i tau_i^2`, so the minimizer
//! is unique. The primal allocation is recovered from the minimizer: items
//! with a unique highest bid go to that bidder, tied items are split by the
//! seller so that budget-binding buyers spend exactly their budget.

mod kkt;
mod recovery;
mod solver;

pub use kkt::{kkt_verify, verify_buyer_optimality, BuyerOptimality, KktReport};
pub use recovery::{recover_allocation, tie_sets, RecoveredAllocation};
pub use solver::{
    projected_subgradient, solve_dual, solve_dual_detailed, Certificate, DualSolve, DualSolverOptions,
    StartPoint, SubgradientRun,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Allocation, MarketInstance, PaymentProfile};
use crate::tolerance::Tolerances;

/// Pacing multipliers inside the dual box `[w_lower_i, 1 / tau_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualPoint {
    w: Vec<f64>,
}

impl DualPoint {
    /// Validates box membership; entries within `1e-12` relative of a bound
    /// are snapped onto it.
    pub fn new(inst: &MarketInstance, w: Vec<f64>) -> Result<Self> {
        if w.len() != inst.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} multipliers for {} buyers",
                w.len(),
                inst.n()
            )));
        }
        let lo = inst.w_lower();
        let hi = inst.w_upper();
        let mut w = w;
        for i in 0..w.len() {
            let slack = 1e-12 * hi[i];
            if !w[i].is_finite() || w[i] < lo[i] - slack || w[i] > hi[i] + slack {
                return Err(Error::InvariantViolation(format!(
                    "w[{i}] = {} outside [{}, {}]",
                    w[i], lo[i], hi[i]
                )));
            }
            w[i] = w[i].clamp(lo[i], hi[i]);
        }
        Ok(DualPoint { w })
    }

    /// Euclidean projection of arbitrary values onto the box.
    pub fn projected(inst: &MarketInstance, w: &[f64]) -> Self {
        let lo = inst.w_lower();
        let hi = inst.w_upper();
        DualPoint {
            w: w.iter()
                .zip(lo.iter().zip(&hi))
                .map(|(x, (l, h))| if x.is_nan() { *h } else { x.clamp(*l, *h) })
                .collect(),
        }
    }

    pub fn upper_corner(inst: &MarketInstance) -> Self {
        DualPoint { w: inst.w_upper() }
    }

    pub fn lower_corner(inst: &MarketInstance) -> Self {
        DualPoint { w: inst.w_lower() }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    pub fn distance(&self, other: &DualPoint) -> f64 {
        self.w
            .iter()
            .zip(&other.w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Which constraint pins a buyer at the equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    BudgetBinding,
    RoSBinding,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub w: DualPoint,
    pub p: Vec<f64>,
    pub x: Allocation,
    /// Value slack `d_i`; positive only for buyers at their RoS cap.
    pub d: Vec<f64>,
    pub payments: Vec<f64>,
    pub binding: Vec<Binding>,
    pub dual_objective: f64,
}

impl EquilibriumSolution {
    pub fn revenue(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn payment_profile(&self) -> PaymentProfile {
        PaymentProfile::from_prices(&self.x, &self.p)
    }

    pub fn value(&self, inst: &MarketInstance, i: usize) -> f64 {
        self.x.value_of(inst, i)
    }
}

/// `max_i w_i v_ij` for one item.
#[inline]
pub(crate) fn top_bid(inst: &MarketInstance, w: &[f64], j: usize) -> f64 {
    (0..inst.n()).map(|i| w[i] * inst.value(i, j)).fold(0.0, f64::max)
}

/// Buyer with the highest bid on item `j`, lowest index on exact ties.
#[inline]
pub(crate) fn winner(inst: &MarketInstance, w: &[f64], j: usize) -> usize {
    let mut best = 0;
    let mut best_bid = w[0] * inst.value(0, j);
    for i in 1..inst.n() {
        let bid = w[i] * inst.value(i, j);
        if bid > best_bid {
            best = i;
            best_bid = bid;
        }
    }
    best
}

/// Constant term `sum_i lambda_i (ln lambda_i - 1)` of the dual objective.
pub fn dual_constant(inst: &MarketInstance) -> f64 {
    inst.lambda().iter().map(|l| l * (l.ln() - 1.0)).sum()
}

pub(crate) fn objective_raw(inst: &MarketInstance, w: &[f64]) -> f64 {
    let revenue: f64 = (0..inst.m()).map(|j| top_bid(inst, w, j)).sum();
    let barrier: f64 = inst.lambda().iter().zip(w).map(|(l, w)| l * w.ln()).sum();
    revenue - barrier + dual_constant(inst)
}

/// Dual objective at `w` with prices set to the highest bids.
pub fn dual_objective(inst: &MarketInstance, w: &DualPoint) -> f64 {
    objective_raw(inst, w.as_slice())
}

pub(crate) fn subgradient_raw(inst: &MarketInstance, w: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = inst
        .lambda()
        .iter()
        .zip(w)
        .map(|(l, w)| -l / w)
        .collect();
    for j in 0..inst.m() {
        let i = winner(inst, w, j);
        g[i] += inst.value(i, j);
    }
    g
}

/// A subgradient of the dual objective: each buyer's value on the items it
/// wins (lowest index on ties) minus `lambda_i / w_i`.
pub fn subgradient(inst: &MarketInstance, w: &DualPoint) -> Vec<f64> {
    subgradient_raw(inst, w.as_slice())
}

/// First-price clearing prices `p_j = max_i w_i v_ij`.
pub fn prices(inst: &MarketInstance, w: &DualPoint) -> Vec<f64> {
    (0..inst.m()).map(|j| top_bid(inst, w.as_slice(), j)).collect()
}

/// Binding label of each buyer under the rule: budget-binding strictly below
/// the RoS cap, RoS-binding at the cap, both when additionally the budget is spent.
pub fn binding_labels(
    inst: &MarketInstance,
    w: &DualPoint,
    payments: &[f64],
    tol: &Tolerances,
) -> Vec<Binding> {
    (0..inst.n())
        .map(|i| {
            let cap = 1.0 / inst.tau()[i];
            if w.as_slice()[i] < cap - tol.kkt {
                Binding::BudgetBinding
            } else {
                let lambda = inst.lambda()[i];
                if payments[i] >= lambda - tol.feas && payments[i] <= lambda + tol.feas {
                    Binding::Both
                } else {
                    Binding::RoSBinding
                }
            }
        })
        .collect()
}

/// Assembles the full equilibrium from multipliers.
pub fn equilibrium_from_dual(
    inst: &MarketInstance,
    w: DualPoint,
    tol: &Tolerances,
) -> Result<EquilibriumSolution> {
    let p = prices(inst, &w);
    let rec = recover_allocation(inst, &w, &p, tol)?;
    let binding = binding_labels(inst, &w, &rec.payments, tol);
    let dual_objective = dual_objective(inst, &w);
    Ok(EquilibriumSolution {
        w,
        p,
        x: rec.x,
        d: rec.d,
        payments: rec.payments,
        binding,
        dual_objective,
    })
}

/// Solves the dual and recovers the full equilibrium.
pub fn solve_equilibrium(
    inst: &MarketInstance,
    opts: &DualSolverOptions,
) -> Result<EquilibriumSolution> {
    let w = solve_dual(inst, opts)?;
    equilibrium_from_dual(inst, w, &opts.tolerances)
}
