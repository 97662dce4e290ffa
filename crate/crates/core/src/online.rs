//! Decentralized online market clearing by regularized dual averaging.
//!
//! Items arrive one at a time and are sold by first-price auction. Each buyer
//! bids its value scaled by a pacing multiplier and, after every auction,
//! re-solves `min_{w in W_i} g_bar * w - rho * ln w` using only its own
//! average realized value `g_bar`. The minimizer is `rho / g_bar` clamped to
//! `W_i = [min(rho / v_bar, 1 / tau), 1 / tau]`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_dual, DualPoint, DualSolverOptions};
use crate::error::{Error, Result};
use crate::market::{sample_instance, MarketInstance, SampleSpec};

/// One bidder's private learning state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Per-auction budget.
    pub rho: f64,
    pub tau: f64,
    pub w_lower: f64,
    /// Multiplier used in the next auction.
    pub omega: f64,
    /// Average realized value over the auctions seen so far.
    pub g_bar: f64,
    /// Index of the next auction, starting at 1.
    pub j: usize,
}

impl AgentState {
    pub fn w_upper(&self) -> f64 {
        1.0 / self.tau
    }
}

pub fn init_agent(rho: f64, tau: f64, v_bar: f64) -> Result<AgentState> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::BadParams(format!("rho must be positive, got {rho}")));
    }
    if !(tau >= 1.0 && tau.is_finite()) {
        return Err(Error::BadParams(format!("tau must be at least 1, got {tau}")));
    }
    if !(v_bar > 0.0 && v_bar.is_finite()) {
        return Err(Error::BadParams(format!("v_bar must be positive, got {v_bar}")));
    }
    Ok(AgentState {
        rho,
        tau,
        w_lower: (rho / v_bar).min(1.0 / tau),
        omega: 1.0 / tau,
        g_bar: 0.0,
        j: 1,
    })
}

/// `argmin_{w in [lo, hi]} s * w - rho * ln w`, with `s = 0` mapping to `hi`.
pub fn rda_argmin(s: f64, rho: f64, lo: f64, hi: f64) -> f64 {
    if s <= 0.0 {
        hi
    } else {
        (rho / s).clamp(lo, hi)
    }
}

/// Folds the outcome of auction `a.j` into the agent's average and re-solves
/// for the next multiplier.
pub fn update_agent(a: &AgentState, v: f64, won: bool) -> AgentState {
    let j = a.j as f64;
    let gain = if won { v } else { 0.0 };
    let g_bar = ((j - 1.0) * a.g_bar + gain) / j;
    AgentState {
        g_bar,
        omega: rda_argmin(g_bar, a.rho, a.w_lower, a.w_upper()),
        j: a.j + 1,
        ..a.clone()
    }
}

/// Highest bidder, lowest index on exact ties.
fn argmax_bid(bids: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..bids.len() {
        if bids[i] > bids[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub j: usize,
    pub values: Vec<f64>,
    pub bids: Vec<f64>,
    pub winner: usize,
    pub price: f64,
    pub won: Vec<bool>,
}

/// Runs one first-price auction at the agents' current multipliers.
pub fn step_auction(agents: &[AgentState], values: &[f64]) -> Result<AuctionRecord> {
    if agents.is_empty() {
        return Err(Error::EmptyMarket);
    }
    if values.len() != agents.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} agents",
            values.len(),
            agents.len()
        )));
    }
    let bids: Vec<f64> = agents.iter().zip(values).map(|(a, v)| a.omega * v).collect();
    let winner = argmax_bid(&bids);
    let mut won = vec![false; agents.len()];
    won[winner] = true;
    Ok(AuctionRecord {
        j: agents[0].j,
        values: values.to_vec(),
        price: bids[winner],
        bids,
        winner,
        won,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub rho: Vec<f64>,
    pub tau: Vec<f64>,
    pub v_bar: f64,
    pub records: Vec<AuctionRecord>,
    /// `omega_path[i][k]` is buyer `i`'s multiplier in auction `k + 1`; the
    /// last entry is the multiplier after the final auction.
    pub omega_path: Vec<Vec<f64>>,
    pub cum_value: Vec<f64>,
    pub cum_payment: Vec<f64>,
    pub revenue: f64,
}

impl SimulationTrace {
    pub fn n(&self) -> usize {
        self.rho.len()
    }

    pub fn m(&self) -> usize {
        self.records.len()
    }

    pub fn final_omega(&self) -> Vec<f64> {
        self.omega_path.iter().map(|p| *p.last().unwrap()).collect()
    }

    /// `j,winner,price,omega_1..omega_n` with the multipliers used in auction `j`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["j".to_string(), "winner".to_string(), "price".to_string()];
        header.extend((1..=self.n()).map(|i| format!("omega_{i}")));
        w.write_record(&header)?;
        for (k, r) in self.records.iter().enumerate() {
            let mut row = vec![r.j.to_string(), (r.winner + 1).to_string(), fmt17(r.price)];
            row.extend(self.omega_path.iter().map(|p| fmt17(p[k])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Float formatting used by every export: 17 significant digits.
pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs the algorithm on the columns of `inst` in order, with per-auction
/// budgets `rho_i = lambda_i / m`.
pub fn simulate(inst: &MarketInstance) -> Result<SimulationTrace> {
    let (n, m) = (inst.n(), inst.m());
    let rho: Vec<f64> = inst.lambda().iter().map(|l| l / m as f64).collect();
    let mut agents = (0..n)
        .map(|i| init_agent(rho[i], inst.tau()[i], inst.v_bar()))
        .collect::<Result<Vec<_>>>()?;
    let mut omega_path: Vec<Vec<f64>> = agents
        .iter()
        .map(|a| {
            let mut p = Vec::with_capacity(m + 1);
            p.push(a.omega);
            p
        })
        .collect();
    let mut records = Vec::with_capacity(m);
    let mut cum_value = vec![0.0; n];
    let mut cum_payment = vec![0.0; n];
    let mut revenue = 0.0;
    let mut values = vec![0.0; n];
    for j in 0..m {
        for i in 0..n {
            values[i] = inst.value(i, j);
        }
        let rec = step_auction(&agents, &values)?;
        cum_value[rec.winner] += values[rec.winner];
        cum_payment[rec.winner] += rec.price;
        revenue += rec.price;
        for i in 0..n {
            // Each agent sees only its own value and win flag.
            agents[i] = update_agent(&agents[i], values[i], rec.won[i]);
            omega_path[i].push(agents[i].omega);
        }
        records.push(rec);
    }
    Ok(SimulationTrace {
        rho,
        tau: inst.tau().to_vec(),
        v_bar: inst.v_bar(),
        records,
        omega_path,
        cum_value,
        cum_payment,
        revenue,
    })
}

/// Draws a value stream and simulates it.
pub fn simulate_sampled(n: usize, m: usize, spec: &SampleSpec, seed: u64) -> Result<(MarketInstance, SimulationTrace)> {
    let inst = sample_instance(n, m, spec, seed)?;
    let trace = simulate(&inst)?;
    Ok((inst, trace))
}

/// Multiplier path of one agent rebuilt from its private history alone.
pub fn replay_agent(rho: f64, tau: f64, v_bar: f64, values: &[f64], won: &[bool]) -> Result<Vec<f64>> {
    if values.len() != won.len() {
        return Err(Error::StreamMismatch(format!("{} values, {} flags", values.len(), won.len())));
    }
    let mut a = init_agent(rho, tau, v_bar)?;
    let mut path = vec![a.omega];
    for (&v, &w) in values.iter().zip(won) {
        a = update_agent(&a, v, w);
        path.push(a.omega);
    }
    Ok(path)
}

/// Offline optimum of the dual on the realized stream; `inst` already carries
/// `lambda_i = m rho_i`.
pub fn offline_w_star(inst: &MarketInstance) -> Result<DualPoint> {
    solve_dual(inst, &DualSolverOptions::default())
}

fn check_stream(trace: &SimulationTrace, w_star: &[f64]) -> Result<()> {
    if w_star.len() != trace.n() {
        return Err(Error::StreamMismatch(format!(
            "{} multipliers for {} agents",
            w_star.len(),
            trace.n()
        )));
    }
    if trace.omega_path.iter().any(|p| p.len() != trace.m() + 1) {
        return Err(Error::StreamMismatch("multiplier path length differs from m + 1".into()));
    }
    Ok(())
}

/// `R^j` for `j = 0..=m`: cumulative per-auction dual objective of the online
/// multipliers minus that of `w_star`.
pub fn auxiliary_regret(trace: &SimulationTrace, w_star: &DualPoint) -> Result<Vec<f64>> {
    let ws = w_star.as_slice();
    check_stream(trace, ws)?;
    let n = trace.n();
    let reg_star: f64 = (0..n).map(|i| trace.rho[i] * ws[i].ln()).sum();
    let mut out = Vec::with_capacity(trace.m() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for (k, rec) in trace.records.iter().enumerate() {
        let p_star = (0..n).map(|i| ws[i] * rec.values[i]).fold(0.0, f64::max);
        let reg: f64 = (0..n).map(|i| trace.rho[i] * trace.omega_path[i][k].ln()).sum();
        acc += (rec.price - reg) - (p_star - reg_star);
        out.push(acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub w_star: Vec<f64>,
    pub r_obj: Vec<f64>,
    /// `|omega^{m+1}_i - w*_i|`.
    pub strategy_gap: Vec<f64>,
    /// Value under the fixed multipliers `w*` on the same stream.
    pub utility_star: Vec<f64>,
    pub utility_online: Vec<f64>,
    /// `u*_i - u^m_i`.
    pub utility_regret: Vec<f64>,
    pub revenue_star: f64,
    pub revenue_online: f64,
    /// `revenue_star - revenue_online`; negative when the online run earns more.
    pub revenue_gap: f64,
    /// `max(0, spend_i - lambda_i)`.
    pub budget_overshoot: Vec<f64>,
}

impl RegretReport {
    pub fn r_obj_final(&self) -> f64 {
        *self.r_obj.last().unwrap()
    }

    pub fn mean_strategy_gap(&self) -> f64 {
        self.strategy_gap.iter().sum::<f64>() / self.strategy_gap.len() as f64
    }

    pub fn max_abs_utility_regret(&self) -> f64 {
        self.utility_regret.iter().map(|u| u.abs()).fold(0.0, f64::max)
    }

    /// Serializable summary with `r_obj` sampled at `j = 1, 2, 4, ...` and `m`.
    pub fn downsampled(&self) -> RegretExport {
        let m = self.r_obj.len() - 1;
        let mut js = Vec::new();
        let mut j = 1;
        while j <= m {
            js.push(j);
            j *= 2;
        }
        if js.last() != Some(&m) && m > 0 {
            js.push(m);
        }
        RegretExport {
            m,
            w_star: self.w_star.clone(),
            strategy_gap: self.strategy_gap.clone(),
            utility_star: self.utility_star.clone(),
            utility_online: self.utility_online.clone(),
            utility_regret: self.utility_regret.clone(),
            revenue_star: self.revenue_star,
            revenue_online: self.revenue_online,
            revenue_gap: self.revenue_gap,
            budget_overshoot: self.budget_overshoot.clone(),
            r_obj: js.into_iter().map(|j| RegretSample { j, value: self.r_obj[j] }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSample {
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretExport {
    pub m: usize,
    pub w_star: Vec<f64>,
    pub strategy_gap: Vec<f64>,
    pub utility_star: Vec<f64>,
    pub utility_online: Vec<f64>,
    pub utility_regret: Vec<f64>,
    pub revenue_star: f64,
    pub revenue_online: f64,
    pub revenue_gap: f64,
    pub budget_overshoot: Vec<f64>,
    pub r_obj: Vec<RegretSample>,
}

/// Regret metrics of `trace` against fixed multipliers `w_star`, replaying
/// the same values with the same tie rule for the baseline.
pub fn regret_report(trace: &SimulationTrace, w_star: &DualPoint) -> Result<RegretReport> {
    let ws = w_star.as_slice();
    let r_obj = auxiliary_regret(trace, w_star)?;
    let n = trace.n();
    let mut utility_star = vec![0.0; n];
    let mut revenue_star = 0.0;
    let mut bids = vec![0.0; n];
    for rec in &trace.records {
        for i in 0..n {
            bids[i] = ws[i] * rec.values[i];
        }
        let k = argmax_bid(&bids);
        utility_star[k] += rec.values[k];
        revenue_star += bids[k];
    }
    let omega = trace.final_omega();
    let m = trace.m() as f64;
    Ok(RegretReport {
        w_star: ws.to_vec(),
        strategy_gap: (0..n).map(|i| (omega[i] - ws[i]).abs()).collect(),
        utility_regret: (0..n).map(|i| utility_star[i] - trace.cum_value[i]).collect(),
        utility_online: trace.cum_value.clone(),
        utility_star,
        revenue_star,
        revenue_online: trace.revenue,
        revenue_gap: revenue_star - trace.revenue,
        budget_overshoot: (0..n)
            .map(|i| (trace.cum_payment[i] - m * trace.rho[i]).max(0.0))
            .collect(),
        r_obj,
    })
}

/// Grid of stream lengths and seeds for regret scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ms: Vec<usize>,
    pub n: usize,
    pub seeds: usize,
    pub spec: SampleSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ms: vec![1 << 10, 1 << 12, 1 << 14, 1 << 16],
            n: 5,
            seeds: 20,
            spec: SampleSpec::uniform(0.0, 1.0).with_rho(0.05, 0.2),
        }
    }
}

/// Seed of the stream for length `m` and replicate `s`.
pub fn stream_seed(m: usize, s: usize) -> u64 {
    ((m as u64) << 32) | s as u64
}

/// Scalar statistics of one simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: usize,
    pub seed: u64,
    pub r_obj: f64,
    pub r_obj_over_log_m: f64,
    /// Mean over agents of `|omega^{m+1}_i - w*_i|`.
    pub strategy_gap: f64,
    /// `max_i |u*_i - u^m_i|`.
    pub utility_regret: f64,
    pub revenue_gap: f64,
    pub max_budget_overshoot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub r_obj_over_log_m: f64,
    pub strategy_gap: f64,
    /// Median of `max(utility_regret, 1)`.
    pub utility_regret: f64,
    /// Median of `max(revenue_gap, 1)`.
    pub revenue_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Medians over seeds, one row per `m`.
    pub medians: Vec<SweepRow>,
    pub slope_strategy_gap: f64,
    pub slope_utility_regret: f64,
    pub slope_revenue_gap: f64,
}

impl SweepResult {
    /// Median `R_obj / log m` never increases along the grid.
    pub fn aux_ratio_non_increasing(&self) -> bool {
        self.medians
            .windows(2)
            .all(|w| w[1].r_obj_over_log_m <= w[0].r_obj_over_log_m)
    }

    pub fn write_points_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "m",
            "seed",
            "r_obj",
            "r_obj_over_log_m",
            "strategy_gap",
            "utility_regret",
            "revenue_gap",
            "max_budget_overshoot",
        ])?;
        for p in &self.points {
            w.write_record([
                p.m.to_string(),
                p.seed.to_string(),
                fmt17(p.r_obj),
                fmt17(p.r_obj_over_log_m),
                fmt17(p.strategy_gap),
                fmt17(p.utility_regret),
                fmt17(p.revenue_gap),
                fmt17(p.max_budget_overshoot),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_medians_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "r_obj_over_log_m", "strategy_gap", "utility_regret", "revenue_gap"])?;
        for r in &self.medians {
            w.write_record([
                r.m.to_string(),
                fmt17(r.r_obj_over_log_m),
                fmt17(r.strategy_gap),
                fmt17(r.utility_regret),
                fmt17(r.revenue_gap),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Simulates one stream and measures it against its offline optimum.
pub fn sweep_point(n: usize, m: usize, spec: &SampleSpec, seed: u64) -> Result<(SweepPoint, RegretReport)> {
    let (inst, trace) = simulate_sampled(n, m, spec, seed)?;
    let w_star = offline_w_star(&inst)?;
    let rep = regret_report(&trace, &w_star)?;
    let point = SweepPoint {
        m,
        seed,
        r_obj: rep.r_obj_final(),
        r_obj_over_log_m: rep.r_obj_final() / (m as f64).ln(),
        strategy_gap: rep.mean_strategy_gap(),
        utility_regret: rep.max_abs_utility_regret(),
        revenue_gap: rep.revenue_gap,
        max_budget_overshoot: rep.budget_overshoot.iter().cloned().fold(0.0, f64::max),
    };
    Ok((point, rep))
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.ms.len() < 2 || cfg.seeds == 0 {
        return Err(Error::BadParams("sweep needs at least two lengths and one seed".into()));
    }
    let mut points = Vec::new();
    let mut medians = Vec::new();
    for &m in &cfg.ms {
        let batch = (0..cfg.seeds)
            .map(|s| sweep_point(cfg.n, m, &cfg.spec, stream_seed(m, s)).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        let col = |f: fn(&SweepPoint) -> f64| median(&batch.iter().map(f).collect::<Vec<_>>());
        medians.push(SweepRow {
            m,
            r_obj_over_log_m: col(|p| p.r_obj_over_log_m),
            strategy_gap: col(|p| p.strategy_gap),
            utility_regret: col(|p| p.utility_regret.max(1.0)),
            revenue_gap: col(|p| p.revenue_gap.max(1.0)),
        });
        points.extend(batch);
    }
    let xs: Vec<f64> = medians.iter().map(|r| r.m as f64).collect();
    let slope = |f: fn(&SweepRow) -> f64| log_log_slope(&xs, &medians.iter().map(f).collect::<Vec<_>>());
    Ok(SweepResult {
        slope_strategy_gap: slope(|r| r.strategy_gap),
        slope_utility_regret: slope(|r| r.utility_regret),
        slope_revenue_gap: slope(|r| r.revenue_gap),
        points,
        medians,
    })
}
