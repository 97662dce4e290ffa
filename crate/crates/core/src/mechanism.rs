//! The market-clearing mechanism as a map from reported constraints to
//! allocations and payments, and a harness that probes it with misreports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_equilibrium, DualSolverOptions, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::market::{buyer_outcome, Allocation, BuyerOutcome, MarketInstance, PaymentProfile, Utility};

/// Reported budgets and RoS targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub lambda_hat: Vec<f64>,
    pub tau_hat: Vec<f64>,
}

impl Report {
    pub fn truthful(inst: &MarketInstance) -> Self {
        Report {
            lambda_hat: inst.lambda().to_vec(),
            tau_hat: inst.tau().to_vec(),
        }
    }

    /// Truthful for everyone except buyer `i`.
    pub fn deviation(inst: &MarketInstance, i: usize, lambda_hat: f64, tau_hat: f64) -> Result<Self> {
        if i >= inst.n() {
            return Err(Error::IndexOutOfRange { index: i, len: inst.n() });
        }
        let mut r = Report::truthful(inst);
        r.lambda_hat[i] = lambda_hat;
        r.tau_hat[i] = tau_hat;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub alloc: Allocation,
    pub pay: PaymentProfile,
    /// Evaluated against the true constraints.
    pub buyers: Vec<BuyerOutcome>,
    pub prices: Vec<f64>,
    pub revenue: f64,
}

impl MechanismOutcome {
    fn from_solution(inst: &MarketInstance, sol: &EquilibriumSolution) -> Result<Self> {
        let pay = sol.payment_profile();
        let buyers = (0..inst.n())
            .map(|i| buyer_outcome(inst, &sol.x, &pay, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(MechanismOutcome {
            revenue: pay.totals().iter().sum(),
            alloc: sol.x.clone(),
            pay,
            buyers,
            prices: sol.p.clone(),
        })
    }

    pub fn utility(&self, i: usize) -> Utility {
        self.buyers[i].utility
    }
}

/// Runs the mechanism on `rep` and scores each buyer against its true type in `inst`.
pub fn run_mechanism(
    inst: &MarketInstance,
    rep: &Report,
    opts: &DualSolverOptions,
) -> Result<MechanismOutcome> {
    let reported = inst.with_constraints(rep.lambda_hat.clone(), rep.tau_hat.clone())?;
    let sol = solve_equilibrium(&reported, opts)?;
    MechanismOutcome::from_solution(inst, &sol)
}

/// Individual rationality: every buyer ends with a finite, non-negative utility.
pub fn ir_check(_inst: &MarketInstance, outcome: &MechanismOutcome) -> bool {
    outcome
        .buyers
        .iter()
        .all(|b| matches!(b.utility, Utility::Finite(u) if u >= 0.0))
}

/// Misreports as multiples of the true budget and RoS target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisreportGrid {
    pub lambda_factors: Vec<f64>,
    pub tau_factors: Vec<f64>,
}

impl MisreportGrid {
    pub fn new(lambda_factors: Vec<f64>, tau_factors: Vec<f64>) -> Self {
        MisreportGrid { lambda_factors, tau_factors }
    }

    /// `k x k` under-report grid: budgets in `[0.2, 1]` times the truth,
    /// RoS targets in `[1, 3]` times the truth.
    pub fn under_reports(k: usize) -> Self {
        let lin = |a: f64, b: f64| -> Vec<f64> {
            if k <= 1 {
                return vec![b];
            }
            (0..k).map(|s| a + (b - a) * s as f64 / (k - 1) as f64).collect()
        };
        MisreportGrid::new(lin(0.2, 1.0), lin(1.0, 3.0))
    }

    /// Budgets inflated and RoS targets deflated.
    pub fn over_reports() -> Self {
        MisreportGrid::new(vec![1.0, 1.5, 2.0, 4.0], vec![1.0, 0.9, 0.75, 0.5])
    }
}

impl Default for MisreportGrid {
    fn default() -> Self {
        MisreportGrid::under_reports(5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Truthful,
    /// `lambda_hat <= lambda` and `tau_hat >= tau`.
    Under,
    /// `lambda_hat >= lambda` and `tau_hat <= tau`.
    Over,
    Mixed,
}

impl ReportKind {
    fn classify(lambda: f64, tau: f64, lambda_hat: f64, tau_hat: f64) -> Self {
        let under = lambda_hat <= lambda && tau_hat >= tau;
        let over = lambda_hat >= lambda && tau_hat <= tau;
        match (under, over) {
            (true, true) => ReportKind::Truthful,
            (true, false) => ReportKind::Under,
            (false, true) => ReportKind::Over,
            (false, false) => ReportKind::Mixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcRow {
    pub buyer: usize,
    pub lambda_hat: f64,
    pub tau_hat: f64,
    pub kind: ReportKind,
    pub feasible: bool,
    pub utility: Option<f64>,
    /// Utility minus truthful utility; `None` when infeasible or unsolved.
    pub gain: Option<f64>,
    /// Whether the allocation differs from the truthful one.
    pub allocation_changed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub truthful_utility: Vec<f64>,
    pub rows: Vec<IcRow>,
}

impl IcReport {
    /// Largest finite gain over truthful reporting (zero if none).
    pub fn max_gain(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.gain).fold(0.0, f64::max)
    }

    /// Over-reports that change the allocation yet stay feasible with a
    /// positive gain above `tol`.
    pub fn profitable_over_reports(&self, tol: f64) -> Vec<&IcRow> {
        self.rows
            .iter()
            .filter(|r| r.kind == ReportKind::Over && r.allocation_changed)
            .filter(|r| r.gain.is_some_and(|g| g > tol))
            .collect()
    }

    pub fn merge(&mut self, other: IcReport) {
        if self.truthful_utility.is_empty() {
            self.truthful_utility = other.truthful_utility;
        }
        self.rows.extend(other.rows);
    }

    /// Writes `buyer,lambda_hat,tau_hat,feasible,utility,gain`; infeasible
    /// rows leave utility and gain empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["buyer", "lambda_hat", "tau_hat", "feasible", "utility", "gain"])?;
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.buyer.to_string(),
                format!("{:.16e}", r.lambda_hat),
                format!("{:.16e}", r.tau_hat),
                r.feasible.to_string(),
                fmt(r.utility),
                fmt(r.gain),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn allocations_differ(a: &Allocation, b: &Allocation) -> bool {
    a.x.iter()
        .flatten()
        .zip(b.x.iter().flatten())
        .any(|(p, q)| (p - q).abs() > 1e-9)
}

/// Re-solves the market for every misreport of buyer `i` in `grid`, others
/// truthful. Reported RoS targets are floored at 1.
pub fn ic_probe(
    inst: &MarketInstance,
    i: usize,
    grid: &MisreportGrid,
    opts: &DualSolverOptions,
) -> Result<IcReport> {
    if i >= inst.n() {
        return Err(Error::IndexOutOfRange { index: i, len: inst.n() });
    }
    let truthful = run_mechanism(inst, &Report::truthful(inst), opts)?;
    let base = truthful.utility(i).finite().ok_or_else(|| {
        Error::InvariantViolation(format!("buyer {i} is infeasible under truthful reporting"))
    })?;
    let (lambda, tau) = (inst.lambda()[i], inst.tau()[i]);
    let mut rows = Vec::new();
    for &fl in &grid.lambda_factors {
        for &ft in &grid.tau_factors {
            let (lambda_hat, tau_hat) = (fl * lambda, (ft * tau).max(1.0));
            let kind = ReportKind::classify(lambda, tau, lambda_hat, tau_hat);
            let outcome = Report::deviation(inst, i, lambda_hat, tau_hat)
                .and_then(|rep| run_mechanism(inst, &rep, opts));
            let row = match outcome {
                Ok(out) => {
                    let u = out.utility(i);
                    IcRow {
                        buyer: i,
                        lambda_hat,
                        tau_hat,
                        kind,
                        feasible: u.is_feasible(),
                        utility: u.finite(),
                        gain: u.finite().map(|u| u - base),
                        allocation_changed: allocations_differ(&out.alloc, &truthful.alloc),
                        error: None,
                    }
                }
                Err(e) => IcRow {
                    buyer: i,
                    lambda_hat,
                    tau_hat,
                    kind,
                    feasible: false,
                    utility: None,
                    gain: None,
                    allocation_changed: false,
                    error: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    let truthful_utility = truthful.buyers.iter().map(|b| b.value).collect();
    Ok(IcReport { truthful_utility, rows })
}
