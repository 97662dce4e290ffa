//! Market primitives: instances, allocations, payments and the buyer utility.

use std::cmp::Ordering;
use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::tolerance::{TOL_FEAS, TOL_KKT};

/// Public inputs of the market: valuations, budgets and RoS targets.
///
/// Valuations are stored row-major, one row per buyer. Instances are
/// validated on construction and immutable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct MarketInstance {
    n: usize,
    m: usize,
    v: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    tau: Vec<f64>,
    v_bar: f64,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    n: usize,
    m: usize,
    v: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    tau: Vec<f64>,
    v_bar: f64,
}

impl TryFrom<RawInstance> for MarketInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        if raw.v.len() != raw.n {
            return Err(Error::DimensionMismatch(format!(
                "n = {} but v has {} rows",
                raw.n,
                raw.v.len()
            )));
        }
        if let Some(row) = raw.v.iter().find(|row| row.len() != raw.m) {
            return Err(Error::DimensionMismatch(format!(
                "m = {} but a row of v has {} entries",
                raw.m,
                row.len()
            )));
        }
        MarketInstance::new(raw.v, raw.lambda, raw.tau, raw.v_bar)
    }
}

impl From<MarketInstance> for RawInstance {
    fn from(inst: MarketInstance) -> Self {
        RawInstance {
            n: inst.n,
            m: inst.m,
            v: inst.v,
            lambda: inst.lambda,
            tau: inst.tau,
            v_bar: inst.v_bar,
        }
    }
}

impl MarketInstance {
    pub fn new(v: Vec<Vec<f64>>, lambda: Vec<f64>, tau: Vec<f64>, v_bar: f64) -> Result<Self> {
        let n = v.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("no buyers".into()));
        }
        let m = v[0].len();
        if m == 0 {
            return Err(Error::DimensionMismatch("no items".into()));
        }
        if let Some(i) = v.iter().position(|row| row.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} of v has {} entries, expected {m}",
                v[i].len()
            )));
        }
        if lambda.len() != n || tau.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} buyers but {} budgets and {} RoS targets",
                lambda.len(),
                tau.len()
            )));
        }
        if !(v_bar.is_finite() && v_bar > 0.0) {
            return Err(Error::InvariantViolation(format!("v_bar must be positive, got {v_bar}")));
        }
        for (i, row) in v.iter().enumerate() {
            for (j, &vij) in row.iter().enumerate() {
                if !(vij.is_finite() && (0.0..=v_bar).contains(&vij)) {
                    return Err(Error::InvariantViolation(format!(
                        "v[{i}][{j}] = {vij} outside [0, v_bar = {v_bar}]"
                    )));
                }
            }
        }
        for j in 0..m {
            if v.iter().all(|row| row[j] <= 0.0) {
                return Err(Error::InvariantViolation(format!(
                    "item {j} has no buyer with positive valuation"
                )));
            }
        }
        for (i, &l) in lambda.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvariantViolation(format!("lambda[{i}] = {l} must be > 0")));
            }
        }
        for (i, &t) in tau.iter().enumerate() {
            if !(t.is_finite() && t >= 1.0) {
                return Err(Error::InvariantViolation(format!("tau[{i}] = {t} must be >= 1")));
            }
        }
        Ok(MarketInstance {
            n,
            m,
            v,
            lambda,
            tau,
            v_bar,
        })
    }

    /// Two buyers, two items, unit budgets and unit RoS targets; buyer 1 values
    /// the items at `(1, 1/eps)` and buyer 2 at `(0, 1 - eps)`.
    ///
    /// This family makes the market-clearing revenue exactly half the
    /// first-best revenue in the limit `eps -> 0`.
    pub fn tight_example(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::BadParams(format!("eps must lie in (0, 1), got {eps}")));
        }
        let v = vec![vec![1.0, 1.0 / eps], vec![0.0, 1.0 - eps]];
        MarketInstance::new(v, vec![1.0, 1.0], vec![1.0, 1.0], 1.0 / eps)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn v(&self) -> &[Vec<f64>] {
        &self.v
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.v[i][j]
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn v_bar(&self) -> f64 {
        self.v_bar
    }

    /// Upper end of each buyer's multiplier interval, `1 / tau_i`.
    pub fn w_upper(&self) -> Vec<f64> {
        self.tau.iter().map(|t| 1.0 / t).collect()
    }

    /// Lower end of each buyer's multiplier interval, `min(lambda_i / (m v_bar), 1 / tau_i)`.
    pub fn w_lower(&self) -> Vec<f64> {
        self.lambda
            .iter()
            .zip(&self.tau)
            .map(|(l, t)| (l / (self.m as f64 * self.v_bar)).min(1.0 / t))
            .collect()
    }

    /// Strong-convexity modulus of the log regularizer on the multiplier box.
    pub fn sigma(&self) -> f64 {
        self.lambda
            .iter()
            .zip(&self.tau)
            .map(|(l, t)| l * t * t)
            .fold(f64::INFINITY, f64::min)
    }

    /// Same valuations, different constraint profile.
    pub fn with_constraints(&self, lambda: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        MarketInstance::new(self.v.clone(), lambda, tau, self.v_bar)
    }

    /// Total value of buyer `i` over all items.
    pub fn total_value(&self, i: usize) -> f64 {
        self.v[i].iter().sum()
    }
}

/// Valuation distributions for generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ValueFamily {
    /// Uniform on `(lo, hi)`; `hi` doubles as the valuation bound.
    Uniform { lo: f64, hi: f64 },
    /// Lognormal with log-mean `mu` and log-sd `sigma`, conditioned on `< v_bar`.
    TruncatedLogNormal { mu: f64, sigma: f64, v_bar: f64 },
}

impl ValueFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ValueFamily::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi {
                    return Err(Error::BadFamilyParams(format!(
                        "uniform needs 0 <= lo < hi, got lo = {lo}, hi = {hi}"
                    )));
                }
            }
            ValueFamily::TruncatedLogNormal { mu, sigma, v_bar } => {
                if !(mu.is_finite() && sigma.is_finite() && v_bar.is_finite())
                    || sigma <= 0.0
                    || v_bar <= 0.0
                {
                    return Err(Error::BadFamilyParams(format!(
                        "lognormal needs sigma > 0 and v_bar > 0, got mu = {mu}, sigma = {sigma}, v_bar = {v_bar}"
                    )));
                }
                // Require at least ~1e-4 of the mass below the truncation point.
                if (v_bar.ln() - mu) / sigma < -3.7 {
                    return Err(Error::BadFamilyParams(format!(
                        "truncation at v_bar = {v_bar} keeps almost no lognormal mass"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn v_bar(&self) -> f64 {
        match *self {
            ValueFamily::Uniform { hi, .. } => hi,
            ValueFamily::TruncatedLogNormal { v_bar, .. } => v_bar,
        }
    }

    /// A sampler drawing values strictly inside `(0, v_bar)`.
    pub fn sampler(&self) -> Result<ValueSampler> {
        self.validate()?;
        let inner = match *self {
            ValueFamily::Uniform { lo, hi } => SamplerKind::Uniform(Uniform::new(lo, hi)),
            ValueFamily::TruncatedLogNormal { mu, sigma, .. } => SamplerKind::LogNormal(
                LogNormal::new(mu, sigma).map_err(|e| Error::BadFamilyParams(e.to_string()))?,
            ),
        };
        Ok(ValueSampler {
            inner,
            v_bar: self.v_bar(),
        })
    }
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Uniform(Uniform<f64>),
    LogNormal(LogNormal<f64>),
}

#[derive(Debug, Clone)]
pub struct ValueSampler {
    inner: SamplerKind,
    v_bar: f64,
}

impl ValueSampler {
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match &self.inner {
                SamplerKind::Uniform(u) => u.sample(rng),
                SamplerKind::LogNormal(l) => l.sample(rng),
            };
            if x > 0.0 && x < self.v_bar {
                return x;
            }
        }
    }
}

/// How generated instances draw budgets and RoS targets.
///
/// Budgets scale with the number of items: `lambda_i = m * rho_i` with
/// `rho_i` uniform on `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub family: ValueFamily,
    pub rho: (f64, f64),
    pub tau: (f64, f64),
}

impl SampleSpec {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        SampleSpec {
            family: ValueFamily::Uniform { lo, hi },
            rho: (0.05, 0.2),
            tau: (1.0, 1.0),
        }
    }

    pub fn with_rho(mut self, lo: f64, hi: f64) -> Self {
        self.rho = (lo, hi);
        self
    }

    pub fn with_tau(mut self, lo: f64, hi: f64) -> Self {
        self.tau = (lo, hi);
        self
    }

    fn validate(&self) -> Result<()> {
        self.family.validate()?;
        let (rl, rh) = self.rho;
        if !(rl.is_finite() && rh.is_finite() && rl > 0.0 && rl <= rh) {
            return Err(Error::BadFamilyParams(format!("rho range ({rl}, {rh}) invalid")));
        }
        let (tl, th) = self.tau;
        if !(tl.is_finite() && th.is_finite() && tl >= 1.0 && tl <= th) {
            return Err(Error::BadFamilyParams(format!("tau range ({tl}, {th}) invalid")));
        }
        Ok(())
    }
}

fn draw_range<R: rand::Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Generates an instance deterministically from `(n, m, spec, seed)`.
///
/// Valuations are drawn row-major first, then per-buyer `rho`, then `tau`.
pub fn sample_instance(n: usize, m: usize, spec: &SampleSpec, seed: u64) -> Result<MarketInstance> {
    spec.validate()?;
    if n == 0 || m == 0 {
        return Err(Error::DimensionMismatch(format!("n = {n}, m = {m}")));
    }
    let sampler = spec.family.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| sampler.draw(&mut rng)).collect())
        .collect();
    let lambda = (0..n).map(|_| m as f64 * draw_range(&mut rng, spec.rho)).collect();
    let tau = (0..n).map(|_| draw_range(&mut rng, spec.tau)).collect();
    MarketInstance::new(v, lambda, tau, spec.family.v_bar())
}

/// Fractional allocation, `x[i][j]` of item `j` to buyer `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation {
    pub x: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn zeros(n: usize, m: usize) -> Self {
        Allocation {
            x: vec![vec![0.0; m]; n],
        }
    }

    /// Entries clamped into `[0, 1]`; used when reporting.
    pub fn clamped(&self) -> Self {
        Allocation {
            x: self
                .x
                .iter()
                .map(|row| row.iter().map(|v| v.clamp(0.0, 1.0)).collect())
                .collect(),
        }
    }

    pub fn item_total(&self, j: usize) -> f64 {
        self.x.iter().map(|row| row[j]).sum()
    }

    pub fn value_of(&self, inst: &MarketInstance, i: usize) -> f64 {
        self.x[i].iter().zip(&inst.v()[i]).map(|(x, v)| x * v).sum()
    }
}

/// Per-item payments `t[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaymentProfile {
    pub t: Vec<Vec<f64>>,
}

impl PaymentProfile {
    /// Payments `p_j x_ij`.
    pub fn from_prices(alloc: &Allocation, prices: &[f64]) -> Self {
        PaymentProfile {
            t: alloc
                .x
                .iter()
                .map(|row| row.iter().zip(prices).map(|(x, p)| (p * x).max(0.0)).collect())
                .collect(),
        }
    }

    pub fn total(&self, i: usize) -> f64 {
        self.t[i].iter().sum()
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.t.len()).map(|i| self.total(i)).collect()
    }
}

/// Buyer utility: realized value when both constraints hold, otherwise infeasible.
///
/// `Infeasible` compares below every finite utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    Finite(f64),
    Infeasible,
}

impl Utility {
    pub fn finite(self) -> Option<f64> {
        match self {
            Utility::Finite(u) => Some(u),
            Utility::Infeasible => None,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, Utility::Finite(_))
    }
}

impl PartialOrd for Utility {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Utility::Finite(a), Utility::Finite(b)) => a.partial_cmp(b),
            (Utility::Infeasible, Utility::Infeasible) => Some(Ordering::Equal),
            (Utility::Infeasible, Utility::Finite(_)) => Some(Ordering::Less),
            (Utility::Finite(_), Utility::Infeasible) => Some(Ordering::Greater),
        }
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::Finite(u) => write!(f, "{u}"),
            Utility::Infeasible => f.write_str("INFEASIBLE"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuyerOutcome {
    pub value: f64,
    pub payment: f64,
    pub feasible: bool,
    pub utility: Utility,
}

impl BuyerOutcome {
    /// Evaluates value and payment totals against a budget and RoS target.
    pub fn evaluate(value: f64, payment: f64, lambda: f64, tau: f64, tol: f64) -> Self {
        let feasible = payment <= lambda + tol && value + tol >= tau * payment;
        BuyerOutcome {
            value,
            payment,
            feasible,
            utility: if feasible {
                Utility::Finite(value)
            } else {
                Utility::Infeasible
            },
        }
    }
}

/// Outcome of buyer `i` under `(alloc, pay)` with the budget and RoS checks
/// applied at tolerance [`TOL_FEAS`].
pub fn buyer_outcome(
    inst: &MarketInstance,
    alloc: &Allocation,
    pay: &PaymentProfile,
    i: usize,
) -> Result<BuyerOutcome> {
    if i >= inst.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: inst.n(),
        });
    }
    if alloc.x.len() != inst.n() || pay.t.len() != inst.n() {
        return Err(Error::DimensionMismatch("allocation/payment rows differ from n".into()));
    }
    let value = alloc.value_of(inst, i);
    let payment = pay.total(i);
    Ok(BuyerOutcome::evaluate(
        value,
        payment,
        inst.lambda()[i],
        inst.tau()[i],
        TOL_FEAS,
    ))
}

/// Post-hoc proxy for the competitive-market assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitivenessReport {
    pub pass: bool,
    /// Buyers allocated every item in full (warning only).
    pub wins_all_items: Vec<usize>,
    /// Buyers with neither budget nor RoS binding (failure).
    pub slack_buyers: Vec<usize>,
}

pub fn check_competitive(inst: &MarketInstance, sol: &EquilibriumSolution) -> CompetitivenessReport {
    let mut wins_all_items = Vec::new();
    let mut slack_buyers = Vec::new();
    for i in 0..inst.n() {
        if sol.x.x[i].iter().all(|&x| x >= 1.0 - TOL_KKT) {
            wins_all_items.push(i);
        }
        let value = sol.x.value_of(inst, i);
        let payment = sol.payments[i];
        let budget_slack = inst.lambda()[i] - payment > TOL_KKT;
        let ros_slack = value - inst.tau()[i] * payment > TOL_KKT;
        if budget_slack && ros_slack {
            slack_buyers.push(i);
        }
    }
    CompetitivenessReport {
        pass: slack_buyers.is_empty(),
        wins_all_items,
        slack_buyers,
    }
}
