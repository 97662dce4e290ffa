use crate::equilibrium::DualPoint;
use crate::error::{Error, Result};
use crate::lp::{solve_feasibility, LpProblem, LpStatus, RowSense};
use crate::market::{Allocation, MarketInstance};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredAllocation {
    pub x: Allocation,
    pub d: Vec<f64>,
    pub payments: Vec<f64>,
}

/// Buyers whose bid on each item is within `tol` of the item's price.
pub fn tie_sets(inst: &MarketInstance, w: &[f64], p: &[f64], tol: f64) -> Vec<Vec<usize>> {
    (0..inst.m())
        .map(|j| {
            (0..inst.n())
                .filter(|&i| {
                    let bid = w[i] * inst.value(i, j);
                    bid > 0.0 && p[j] - bid <= tol
                })
                .collect()
        })
        .collect()
}

/// Primal allocation, value slacks and payments at multipliers `w` and prices `p`.
///
/// Items with a single highest bidder go wholly to it. Items whose top bids
/// agree within the tie tolerance are split by a feasibility LP: every tied
/// item is fully allocated among its top bidders, buyers strictly below
/// their RoS cap spend exactly their budget, the others at most their budget.
pub fn recover_allocation(
    inst: &MarketInstance,
    w: &DualPoint,
    p: &[f64],
    tol: &Tolerances,
) -> Result<RecoveredAllocation> {
    let (n, m) = (inst.n(), inst.m());
    if p.len() != m {
        return Err(Error::DimensionMismatch(format!("{} prices for {m} items", p.len())));
    }
    let w = w.as_slice();
    let sets = tie_sets(inst, w, p, tol.tie(inst.v_bar()));
    let mut x = Allocation::zeros(n, m);
    let mut fixed_pay = vec![0.0; n];

    // (buyer, item) pairs whose share is decided by the LP.
    let mut vars: Vec<(usize, usize)> = Vec::new();
    let mut tied_items: Vec<usize> = Vec::new();
    for (j, set) in sets.iter().enumerate() {
        match set.as_slice() {
            [] => {
                return Err(Error::InvariantViolation(format!(
                    "item {j} has no bidder at price {}",
                    p[j]
                )))
            }
            [i] => {
                x.x[*i][j] = 1.0;
                fixed_pay[*i] += p[j];
            }
            many => {
                tied_items.push(j);
                vars.extend(many.iter().map(|&i| (i, j)));
            }
        }
    }

    if !vars.is_empty() {
        // Exact budget equalities first; a band of width tol_feas absorbs
        // bid noise below the tie tolerance.
        let exact = split_ties(inst, w, p, tol, &vars, &tied_items, &fixed_pay, 0.0)?;
        let shares = match exact {
            Ok(shares) => shares,
            Err(certificate) => {
                match split_ties(inst, w, p, tol, &vars, &tied_items, &fixed_pay, tol.feas)? {
                    Ok(shares) => shares,
                    Err(_) => return Err(Error::TieResolutionInfeasible { certificate }),
                }
            }
        };
        for (k, &(i, j)) in vars.iter().enumerate() {
            x.x[i][j] = shares[k].clamp(0.0, 1.0);
        }
    }
    for i in 0..n {
        if vars.iter().any(|&(ii, _)| ii == i) {
            continue;
        }
        let lambda = inst.lambda()[i];
        let budget_binding = w[i] < 1.0 / inst.tau()[i] - tol.kkt;
        let over = fixed_pay[i] > lambda + tol.feas;
        let under = budget_binding && fixed_pay[i] < lambda - tol.feas;
        if over || under {
            let mut certificate = vec![0.0; n];
            certificate[i] = if over { 1.0 } else { -1.0 };
            return Err(Error::TieResolutionInfeasible { certificate });
        }
    }

    let payments: Vec<f64> = (0..n)
        .map(|i| x.x[i].iter().zip(p).map(|(x, p)| x * p).sum())
        .collect();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let budget_binding = w[i] < 1.0 / inst.tau()[i] - tol.kkt;
            if budget_binding {
                0.0
            } else {
                (inst.lambda()[i] * inst.tau()[i] - x.value_of(inst, i)).max(0.0)
            }
        })
        .collect();
    Ok(RecoveredAllocation { x, d, payments })
}

/// Solves the tie-splitting system; `Err` carries the Farkas multipliers.
#[allow(clippy::too_many_arguments)]
fn split_ties(
    inst: &MarketInstance,
    w: &[f64],
    p: &[f64],
    tol: &Tolerances,
    vars: &[(usize, usize)],
    tied_items: &[usize],
    fixed_pay: &[f64],
    band: f64,
) -> Result<std::result::Result<Vec<f64>, Vec<f64>>> {
    let mut lp = LpProblem::feasibility(vars.len());
    for &j in tied_items {
        let terms: Vec<(usize, f64)> = vars
            .iter()
            .enumerate()
            .filter(|(_, (_, jj))| *jj == j)
            .map(|(k, _)| (k, 1.0))
            .collect();
        lp.add_sparse_row(&terms, RowSense::Eq, 1.0);
    }
    for i in 0..inst.n() {
        let terms: Vec<(usize, f64)> = vars
            .iter()
            .enumerate()
            .filter(|(_, (ii, _))| *ii == i)
            .map(|(k, &(_, j))| (k, p[j]))
            .collect();
        if terms.is_empty() {
            continue;
        }
        let rhs = inst.lambda()[i] - fixed_pay[i];
        let budget_binding = w[i] < 1.0 / inst.tau()[i] - tol.kkt;
        if budget_binding && band == 0.0 {
            lp.add_sparse_row(&terms, RowSense::Eq, rhs);
        } else {
            if budget_binding {
                lp.add_sparse_row(&terms, RowSense::Ge, rhs - band);
            }
            lp.add_sparse_row(&terms, RowSense::Le, rhs + band);
        }
    }
    let sol = solve_feasibility(&lp)?;
    if sol.status == LpStatus::Optimal {
        Ok(Ok(sol.x))
    } else {
        Ok(Err(sol.farkas.unwrap_or_default()))
    }
}
