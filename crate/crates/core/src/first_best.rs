//! First-best revenue: the largest revenue over all allocations and payments
//! that respect every buyer's budget and RoS constraint, ignoring incentives.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_equilibrium, DualSolverOptions};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Objective, RowSense};
use crate::market::{Allocation, MarketInstance};
use crate::tolerance::TOL_LP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstBestSolution {
    pub x_fb: Allocation,
    /// Payment of each buyer.
    pub t_fb: Vec<f64>,
    /// Budget multipliers.
    pub alpha: Vec<f64>,
    /// RoS multipliers; item `j` goes to a maximizer of `beta_i v_ij`.
    pub beta: Vec<f64>,
    /// Item multipliers.
    pub p_fb: Vec<f64>,
    pub revenue: f64,
    /// `sum_i alpha_i lambda_i + sum_j p_j`.
    pub dual_objective: f64,
    /// Buyers whose RoS multiplier came out as zero. Kept as reported by the
    /// LP; they are degenerate vertices of the dual optimal set.
    pub zero_beta: Vec<usize>,
}

impl FirstBestSolution {
    pub fn duality_gap(&self) -> f64 {
        (self.revenue - self.dual_objective).abs()
    }

    /// Largest violation of the dual constraints.
    pub fn dual_infeasibility(&self, inst: &MarketInstance) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..inst.n() {
            worst = worst
                .max(1.0 - self.alpha[i] - inst.tau()[i] * self.beta[i])
                .max(-self.alpha[i])
                .max(-self.beta[i]);
            for j in 0..inst.m() {
                worst = worst.max(self.beta[i] * inst.value(i, j) - self.p_fb[j]);
            }
        }
        worst
    }

    /// Largest violation of the primal constraints.
    pub fn primal_infeasibility(&self, inst: &MarketInstance) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..inst.n() {
            let value = self.x_fb.value_of(inst, i);
            worst = worst
                .max(self.t_fb[i] - inst.lambda()[i])
                .max(self.t_fb[i] - value / inst.tau()[i]);
        }
        for j in 0..inst.m() {
            worst = worst.max(self.x_fb.item_total(j) - 1.0);
        }
        worst
    }
}

/// Solves the first-best program together with its dual.
pub fn solve_first_best(inst: &MarketInstance) -> Result<FirstBestSolution> {
    let (n, m) = (inst.n(), inst.m());
    // Variables: t_0..t_{n-1}, then x_ij at n + i*m + j.
    let nv = n + n * m;
    let xi = |i: usize, j: usize| n + i * m + j;
    let mut c = vec![0.0; nv];
    c[..n].fill(1.0);
    let mut lp = LpProblem::new(Objective::Maximize, c);
    for i in 0..n {
        lp.add_sparse_row(&[(i, 1.0)], RowSense::Le, inst.lambda()[i]);
    }
    for i in 0..n {
        let mut terms = vec![(i, inst.tau()[i])];
        terms.extend((0..m).filter(|&j| inst.value(i, j) > 0.0).map(|j| (xi(i, j), -inst.value(i, j))));
        lp.add_sparse_row(&terms, RowSense::Le, 0.0);
    }
    for j in 0..m {
        let terms: Vec<(usize, f64)> = (0..n).map(|i| (xi(i, j), 1.0)).collect();
        lp.add_sparse_row(&terms, RowSense::Le, 1.0);
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalBreakdown(format!(
            "first-best program returned {:?}",
            sol.status
        )));
    }

    let mut x = Allocation::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            x.x[i][j] = sol.x[xi(i, j)].clamp(0.0, 1.0);
        }
    }
    let t_fb: Vec<f64> = sol.x[..n].iter().map(|t| t.max(0.0)).collect();
    let alpha: Vec<f64> = sol.dual[..n].iter().map(|a| a.max(0.0)).collect();
    let beta: Vec<f64> = sol.dual[n..2 * n].iter().map(|b| b.max(0.0)).collect();
    let p_fb: Vec<f64> = sol.dual[2 * n..].iter().map(|p| p.max(0.0)).collect();
    let revenue = t_fb.iter().sum();
    let dual_objective =
        alpha.iter().zip(inst.lambda()).map(|(a, l)| a * l).sum::<f64>() + p_fb.iter().sum::<f64>();
    let zero_beta = (0..n).filter(|&i| beta[i] <= TOL_LP).collect();
    Ok(FirstBestSolution {
        x_fb: x,
        t_fb,
        alpha,
        beta,
        p_fb,
        revenue,
        dual_objective,
        zero_beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueRatio {
    /// Revenue of the market-clearing mechanism.
    pub rev_star: f64,
    pub rev_fb: f64,
    pub ratio: f64,
    /// `ratio >= 1/2 - 1e-6`.
    pub half_approx: bool,
}

pub fn revenue_ratio(inst: &MarketInstance, opts: &DualSolverOptions) -> Result<RevenueRatio> {
    let eq = solve_equilibrium(inst, opts)?;
    let fb = solve_first_best(inst)?;
    Ok(ratio_of(eq.revenue(), fb.revenue))
}

pub fn ratio_of(rev_star: f64, rev_fb: f64) -> RevenueRatio {
    let ratio = rev_star / rev_fb;
    RevenueRatio {
        rev_star,
        rev_fb,
        ratio,
        half_approx: ratio >= 0.5 - 1e-6,
    }
}
