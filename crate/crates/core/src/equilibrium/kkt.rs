use serde::{Deserialize, Serialize};

use crate::equilibrium::{tie_sets, top_bid, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Objective, RowSense};
use crate::market::MarketInstance;
use crate::tolerance::Tolerances;

/// Residuals of the optimality conditions linking the primal allocation and
/// the dual multipliers. All entries are non-negative; zero means exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `w_i (c_i - sum_j x_ij v_ij - d_i)`; zero by construction since `c_i`
    /// is carried as value plus slack.
    pub utility_definition: f64,
    /// `p_j (sum_i x_ij - 1)`.
    pub price_clearance: f64,
    /// Largest `|p_j - w_i v_ij|` over entries with `x_ij > tol_kkt`.
    pub winner_price: f64,
    /// Largest `|w_i - 1/tau_i|` over buyers with `d_i > tol_kkt`.
    pub slack_cap: f64,
    /// `|w_i c_i - lambda_i|`.
    pub stationarity: f64,
    /// `|p_j - max_i w_i v_ij|`.
    pub price_characterization: f64,
    /// `|sum_i x_ij - 1|`.
    pub clearance: f64,
    /// `|payment_i - (lambda_i - d_i / tau_i)|`.
    pub payment_identity: f64,
    /// Negative entries of `x`, `d` and box violations of `w`.
    pub sign: f64,
    pub max_residual: f64,
}

pub fn kkt_verify(inst: &MarketInstance, sol: &EquilibriumSolution) -> KktReport {
    let tol_kkt = Tolerances::default().kkt;
    let (n, m) = (inst.n(), inst.m());
    let w = sol.w.as_slice();
    let x = &sol.x.x;

    let mut price_clearance: f64 = 0.0;
    let mut clearance: f64 = 0.0;
    let mut price_characterization: f64 = 0.0;
    let mut winner_price: f64 = 0.0;
    let mut sign: f64 = 0.0;
    for j in 0..m {
        let total: f64 = (0..n).map(|i| x[i][j]).sum();
        clearance = clearance.max((total - 1.0).abs());
        price_clearance = price_clearance.max((sol.p[j] * (total - 1.0)).abs());
        price_characterization =
            price_characterization.max((sol.p[j] - top_bid(inst, w, j)).abs());
        for i in 0..n {
            sign = sign.max(-x[i][j]);
            if x[i][j] > tol_kkt {
                winner_price = winner_price.max((sol.p[j] - w[i] * inst.value(i, j)).abs());
            }
        }
    }

    let lo = inst.w_lower();
    let mut slack_cap: f64 = 0.0;
    let mut stationarity: f64 = 0.0;
    let mut payment_identity: f64 = 0.0;
    for i in 0..n {
        let cap = 1.0 / inst.tau()[i];
        sign = sign.max(-sol.d[i]).max(w[i] - cap).max(lo[i] - w[i]);
        if sol.d[i] > tol_kkt {
            slack_cap = slack_cap.max((w[i] - cap).abs());
        }
        let c = sol.x.value_of(inst, i) + sol.d[i];
        stationarity = stationarity.max((w[i] * c - inst.lambda()[i]).abs());
        let expected = inst.lambda()[i] - sol.d[i] / inst.tau()[i];
        payment_identity = payment_identity.max((sol.payments[i] - expected).abs());
    }

    let utility_definition = 0.0;
    let max_residual = [
        utility_definition,
        price_clearance,
        winner_price,
        slack_cap,
        stationarity,
        price_characterization,
        clearance,
        payment_identity,
        sign,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    KktReport {
        utility_definition,
        price_clearance,
        winner_price,
        slack_cap,
        stationarity,
        price_characterization,
        clearance,
        payment_identity,
        sign,
        max_residual,
    }
}

/// Result of re-solving one buyer's demand problem at equilibrium prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuyerOptimality {
    pub buyer: usize,
    /// Value of the equilibrium bundle.
    pub equilibrium_value: f64,
    /// Optimal value of the buyer's own demand LP.
    pub best_value: f64,
    pub optimal: bool,
}

/// Checks that the equilibrium bundle maximizes buyer `i`'s value at prices
/// `p` subject to its budget and RoS constraint.
///
/// On items where `i` is among several top bidders, demand is capped at the
/// share the seller assigned to `i`; elsewhere the cap is one unit.
pub fn verify_buyer_optimality(
    inst: &MarketInstance,
    sol: &EquilibriumSolution,
    i: usize,
) -> Result<BuyerOptimality> {
    if i >= inst.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: inst.n(),
        });
    }
    let tol = Tolerances::default();
    let m = inst.m();
    let w = sol.w.as_slice();
    let sets = tie_sets(inst, w, &sol.p, tol.tie(inst.v_bar()));
    let v = &inst.v()[i];
    let tau = inst.tau()[i];

    let mut lp = LpProblem::new(Objective::Maximize, v.clone());
    lp.add_row(sol.p.clone(), RowSense::Le, inst.lambda()[i]);
    let ros: Vec<f64> = (0..m).map(|j| v[j] - tau * sol.p[j]).collect();
    lp.add_row(ros, RowSense::Ge, 0.0);
    for (j, set) in sets.iter().enumerate() {
        let cap = if set.len() > 1 && set.contains(&i) {
            sol.x.x[i][j].clamp(0.0, 1.0)
        } else {
            1.0
        };
        lp.set_bounds(j, 0.0, Some(cap));
    }
    let res = solve_lp(&lp)?;
    if res.status != LpStatus::Optimal {
        return Err(Error::NumericalBreakdown(format!(
            "demand LP for buyer {i} returned {:?}",
            res.status
        )));
    }
    let equilibrium_value = sol.x.value_of(inst, i);
    let best_value = res.objective;
    let optimal = (best_value - equilibrium_value).abs() <= tol.lp * (1.0 + best_value.abs());
    Ok(BuyerOptimality {
        buyer: i,
        equilibrium_value,
        best_value,
        optimal,
    })
}
