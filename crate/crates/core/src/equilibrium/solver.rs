use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    equilibrium_from_dual, kkt_verify, objective_raw, subgradient_raw, top_bid, DualPoint,
};
use crate::error::{Error, Result};
use crate::market::MarketInstance;
use crate::tolerance::Tolerances;

/// Where the iterates start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum StartPoint {
    #[default]
    UpperCorner,
    LowerCorner,
    Given(Vec<f64>),
}

impl StartPoint {
    fn resolve(&self, inst: &MarketInstance) -> Result<DualPoint> {
        match self {
            StartPoint::UpperCorner => Ok(DualPoint::upper_corner(inst)),
            StartPoint::LowerCorner => Ok(DualPoint::lower_corner(inst)),
            StartPoint::Given(w) => DualPoint::new(inst, w.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolverOptions {
    /// Relative objective tolerance used for epoch termination.
    pub tol: f64,
    pub max_epochs: usize,
    /// Subgradient iterations per epoch.
    pub epoch_len: usize,
    pub start: StartPoint,
    pub tolerances: Tolerances,
    /// Refine the subgradient iterate with smoothed Newton steps and an exact
    /// polish. Without it the result is the plain averaged subgradient iterate.
    pub refine: bool,
}

impl Default for DualSolverOptions {
    fn default() -> Self {
        DualSolverOptions {
            tol: 1e-10,
            max_epochs: 50,
            epoch_len: 200,
            start: StartPoint::UpperCorner,
            tolerances: Tolerances::default(),
            refine: true,
        }
    }
}

impl DualSolverOptions {
    pub fn with_start(mut self, start: StartPoint) -> Self {
        self.start = start;
        self
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }
}

/// Output of a plain projected subgradient run.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientRun {
    /// Weighted average iterate with weights proportional to `k`.
    pub average: DualPoint,
    /// Iterate with the lowest objective seen, averages included.
    pub best: DualPoint,
    pub best_objective: f64,
    pub epochs: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected subgradient descent on the dual box with step `2 / (sigma (k + 1))`.
///
/// Stops when the best objective improves by less than `tol (1 + |F|)` over an
/// epoch of `epoch_len` iterations, or after `max_epochs` epochs.
pub fn projected_subgradient(
    inst: &MarketInstance,
    start: &DualPoint,
    tol: f64,
    max_epochs: usize,
    epoch_len: usize,
) -> SubgradientRun {
    let n = inst.n();
    let lo = inst.w_lower();
    let hi = inst.w_upper();
    let sigma = inst.sigma();
    let mut w = start.as_slice().to_vec();
    let mut avg = w.clone();
    let mut weight = 0.0;
    let mut best = w.clone();
    let mut best_obj = objective_raw(inst, &w);
    let mut epochs = 0;
    let mut iterations = 0;
    let mut converged = false;
    let epoch_len = epoch_len.max(1);

    while epochs < max_epochs {
        let before = best_obj;
        for _ in 0..epoch_len {
            let k = iterations + 1;
            let g = subgradient_raw(inst, &w);
            let eta = 2.0 / (sigma * (k as f64 + 1.0));
            for i in 0..n {
                w[i] = (w[i] - eta * g[i]).clamp(lo[i], hi[i]);
            }
            let kw = k as f64;
            weight += kw;
            for i in 0..n {
                avg[i] += (kw / weight) * (w[i] - avg[i]);
            }
            iterations = k;
        }
        epochs += 1;
        for cand in [&w, &avg] {
            let f = objective_raw(inst, cand);
            if f < best_obj {
                best_obj = f;
                best = cand.clone();
            }
        }
        if before - best_obj < tol * (1.0 + best_obj.abs()) {
            converged = true;
            break;
        }
    }
    SubgradientRun {
        average: DualPoint::projected(inst, &avg),
        best: DualPoint::projected(inst, &best),
        best_objective: best_obj,
        epochs,
        iterations,
        converged,
    }
}

/// How the returned multipliers were certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certificate {
    /// Exact tie structure found and the recovered equilibrium passed the KKT check.
    Exact,
    /// Smoothed optimum whose suboptimality is bounded by the smoothing gap.
    Smoothed,
    /// Averaged subgradient iterate.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolve {
    pub w: DualPoint,
    pub objective: f64,
    /// Upper bound on `F(w) - F(w*)` (zero when certified exact).
    pub residual: f64,
    pub certificate: Certificate,
    pub epochs: usize,
    pub subgradient_iterations: usize,
    pub newton_iterations: usize,
}

/// Minimizes the dual and returns the multipliers.
pub fn solve_dual(inst: &MarketInstance, opts: &DualSolverOptions) -> Result<DualPoint> {
    solve_dual_detailed(inst, opts).map(|s| s.w)
}

/// Subgradient iterations allowed before handing over to the smoothed solver.
const WARM_START_WORK: usize = 20_000_000;

pub fn solve_dual_detailed(inst: &MarketInstance, opts: &DualSolverOptions) -> Result<DualSolve> {
    if !(opts.tol > 0.0) {
        return Err(Error::BadParams(format!("tol must be positive, got {}", opts.tol)));
    }
    let start = opts.start.resolve(inst)?;
    let (n, m) = (inst.n(), inst.m());

    let (max_epochs, epoch_len) = if opts.refine {
        let cap = (WARM_START_WORK / (n * m).max(1)).max(1);
        let len = opts.epoch_len.min(cap).max(1);
        (opts.max_epochs.min((cap / len).max(1)), len)
    } else {
        (opts.max_epochs, opts.epoch_len)
    };
    let run = projected_subgradient(inst, &start, opts.tol, max_epochs, epoch_len);

    if !opts.refine {
        let residual = if run.converged { 0.0 } else { f64::INFINITY };
        if !run.converged {
            return Err(Error::NoConvergence {
                epochs: run.epochs,
                residual,
                best: Box::new(run.best),
            });
        }
        return Ok(DualSolve {
            objective: run.best_objective,
            w: run.best,
            residual,
            certificate: Certificate::Subgradient,
            epochs: run.epochs,
            subgradient_iterations: run.iterations,
            newton_iterations: 0,
        });
    }

    let finish = |w: Vec<f64>, certificate, residual, newton_iterations| -> Result<DualSolve> {
        let w = DualPoint::new(inst, w)?;
        Ok(DualSolve {
            objective: objective_raw(inst, w.as_slice()),
            w,
            residual,
            certificate,
            epochs: run.epochs,
            subgradient_iterations: run.iterations,
            newton_iterations,
        })
    };

    if let Some(w) = polish(inst, run.best.as_slice(), &opts.tolerances, &[1e-6, 1e-4, 1e-3]) {
        return finish(w, Certificate::Exact, 0.0, 0);
    }

    let scale = (0..m)
        .map(|j| top_bid(inst, run.best.as_slice(), j))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut w = run.best.as_slice().to_vec();
    let mut newton_iterations = 0;
    let mut smoothed_residual = f64::INFINITY;
    for k in 1..=7 {
        let mu = scale * 100f64.powi(-k);
        let stage = newton_stage(inst, &mut w, mu);
        newton_iterations += stage.iterations;
        if stage.converged {
            smoothed_residual = mu * m as f64 * (n as f64).ln();
        }
        if k >= 2 {
            if let Some(exact) = polish(inst, &w, &opts.tolerances, &[1e-10, 1e-8, 1e-6, 1e-4, 1e-3]) {
                return finish(exact, Certificate::Exact, 0.0, newton_iterations);
            }
        }
    }

    let objective = objective_raw(inst, &w);
    if smoothed_residual <= 10.0 * opts.tol * (1.0 + objective.abs()) {
        return finish(w, Certificate::Smoothed, smoothed_residual, newton_iterations);
    }
    Err(Error::NoConvergence {
        epochs: run.epochs,
        residual: smoothed_residual,
        best: Box::new(DualPoint::projected(inst, &w)),
    })
}

struct Stage {
    iterations: usize,
    converged: bool,
}

/// Value, gradient and Hessian of the log-sum-exp smoothed dual.
fn smoothed(inst: &MarketInstance, w: &[f64], mu: f64, hessian: bool) -> (f64, Vec<f64>, DMatrix<f64>) {
    let n = inst.n();
    let lambda = inst.lambda();
    let v = inst.v();
    let mut f = 0.0;
    let mut g: Vec<f64> = (0..n).map(|i| -lambda[i] / w[i]).collect();
    let mut h = vec![0.0; if hessian { n * n } else { 0 }];
    let mut s = vec![0.0; n];
    for j in 0..inst.m() {
        let mut top = 0.0f64;
        let mut arg = 0;
        for i in 0..n {
            let bid = w[i] * v[i][j];
            if bid > top {
                top = bid;
                arg = i;
            }
        }
        let mut z = 0.0;
        let mut second = 0.0f64;
        for i in 0..n {
            let t = (w[i] * v[i][j] - top) / mu;
            // exp(-745) underflows to zero anyway.
            let e = if t < -745.0 { 0.0 } else { t.exp() };
            s[i] = e;
            z += e;
            if i != arg {
                second = second.max(e);
            }
        }
        f += top + mu * z.ln();
        if second == 0.0 {
            g[arg] += v[arg][j];
            continue;
        }
        for i in 0..n {
            s[i] /= z;
            g[i] += s[i] * v[i][j];
        }
        if hessian && second > 1e-20 {
            for a in 0..n {
                let sa = s[a] * v[a][j];
                if sa == 0.0 {
                    continue;
                }
                h[a * n + a] += sa * v[a][j] / mu;
                for b in 0..n {
                    h[a * n + b] -= sa * s[b] * v[b][j] / mu;
                }
            }
        }
    }
    for i in 0..n {
        f -= lambda[i] * w[i].ln();
        if hessian {
            h[i * n + i] += lambda[i] / (w[i] * w[i]);
        }
    }
    let h = if hessian { DMatrix::from_row_slice(n, n, &h) } else { DMatrix::zeros(0, 0) };
    (f, g, h)
}

/// Projected Newton on the smoothed dual at fixed `mu`, updating `w` in place.
fn newton_stage(inst: &MarketInstance, w: &mut Vec<f64>, mu: f64) -> Stage {
    let n = inst.n();
    let lo = inst.w_lower();
    let hi = inst.w_upper();
    let mut iterations = 0;
    for _ in 0..100 {
        let (f, g, h) = smoothed(inst, w, mu, true);
        let pg = (0..n)
            .map(|i| (w[i] - (w[i] - g[i]).clamp(lo[i], hi[i])).abs() / hi[i])
            .fold(0.0, f64::max);
        if pg <= 1e-14 {
            return Stage { iterations, converged: true };
        }
        iterations += 1;

        let near = pg.min(1e-3);
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let at_lo = w[i] <= lo[i] + near * hi[i] && g[i] > 0.0;
                let at_hi = w[i] >= hi[i] - near * hi[i] && g[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let mut dir = vec![0.0; n];
        for i in 0..n {
            if !free.contains(&i) {
                dir[i] = -g[i] * (hi[i] - lo[i]).max(hi[i] * 1e-3);
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let mut hf = DMatrix::<f64>::from_fn(k, k, |a, b| h[(free[a], free[b])]);
            let gf = DVector::<f64>::from_fn(k, |a, _| g[free[a]]);
            let mut shift = 0.0;
            let step = loop {
                if let Some(chol) = hf.clone().cholesky() {
                    break Some(chol.solve(&gf));
                }
                let diag_max = (0..k).map(|a| hf[(a, a)].abs()).fold(0.0, f64::max).max(1.0);
                let add = if shift == 0.0 { 1e-12 * diag_max } else { shift * 9.0 };
                for a in 0..k {
                    hf[(a, a)] += add;
                }
                shift += add;
                if shift > 1e6 * diag_max {
                    break None;
                }
            };
            match step {
                Some(s) => {
                    for a in 0..k {
                        dir[free[a]] = -s[a];
                    }
                }
                None => {
                    for &i in &free {
                        dir[i] = -g[i];
                    }
                }
            }
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..n)
                .map(|i| (w[i] + alpha * dir[i]).clamp(lo[i], hi[i]))
                .collect();
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - w[i])).sum();
            let (ft, _, _) = smoothed(inst, &trial, mu, false);
            if ft <= f + 1e-4 * decrease {
                let moved = (0..n).map(|i| (trial[i] - w[i]).abs() / hi[i]).fold(0.0, f64::max);
                *w = trial;
                accepted = true;
                if moved <= 1e-15 {
                    return Stage { iterations, converged: true };
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No representable decrease left at this smoothing level.
            return Stage { iterations, converged: pg <= 1e-9 };
        }
    }
    Stage { iterations, converged: false }
}

/// Buyers bidding within `rel` of the price on each item.
fn tie_structure(inst: &MarketInstance, w: &[f64], rel: f64) -> Vec<Vec<usize>> {
    (0..inst.m())
        .map(|j| {
            let p = top_bid(inst, w, j);
            (0..inst.n())
                .filter(|&i| {
                    let bid = w[i] * inst.value(i, j);
                    bid > 0.0 && bid >= p * (1.0 - rel)
                })
                .collect()
        })
        .collect()
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Multipliers implied by a tie structure.
///
/// Buyers linked by tied items form components whose multipliers share one
/// scale. The scale either spends the component's combined budget on its
/// items or puts some member at its RoS cap, whichever is smaller.
fn exact_from_structure(inst: &MarketInstance, sets: &[Vec<usize>]) -> Option<Vec<f64>> {
    let n = inst.n();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut tied_items_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return None;
        }
        if set.len() > 1 {
            for &i in set {
                tied_items_of[i].push(j);
            }
            for &i in &set[1..] {
                let (a, b) = (find(&mut parent, set[0]), find(&mut parent, i));
                parent[a.max(b)] = a.min(b);
            }
        }
    }

    let mut ratio = vec![0.0; n];
    let mut assigned = vec![false; n];
    for root in 0..n {
        if assigned[root] {
            continue;
        }
        assigned[root] = true;
        ratio[root] = 1.0;
        let mut queue = vec![root];
        while let Some(a) = queue.pop() {
            for &j in &tied_items_of[a] {
                for &b in &sets[j] {
                    if !assigned[b] {
                        assigned[b] = true;
                        ratio[b] = ratio[a] * inst.value(a, j) / inst.value(b, j);
                        queue.push(b);
                    }
                }
            }
        }
    }

    let comp: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut budget = vec![0.0; n];
    let mut base = vec![0.0; n];
    let mut cap_scale = vec![f64::INFINITY; n];
    for i in 0..n {
        budget[comp[i]] += inst.lambda()[i];
        cap_scale[comp[i]] = cap_scale[comp[i]].min(1.0 / (inst.tau()[i] * ratio[i]));
    }
    for (j, set) in sets.iter().enumerate() {
        let c = comp[set[0]];
        base[c] += set.iter().map(|&i| ratio[i] * inst.value(i, j)).fold(0.0, f64::max);
    }

    let lo = inst.w_lower();
    let hi = inst.w_upper();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let c = comp[i];
        let budget_scale = if base[c] > 0.0 { budget[c] / base[c] } else { f64::INFINITY };
        let theta = budget_scale.min(cap_scale[c]);
        let mut wi = theta * ratio[i];
        if (wi - hi[i]).abs() <= 1e-14 * hi[i] {
            wi = hi[i];
        }
        if !wi.is_finite() || wi < lo[i] * (1.0 - 1e-12) || wi > hi[i] * (1.0 + 1e-12) {
            return None;
        }
        w[i] = wi.clamp(lo[i], hi[i]);
    }
    Some(w)
}

/// Tries to turn an approximate minimizer into the exact one by guessing the
/// tie structure at several thresholds, iterating the guess to a fixed point
/// and verifying the recovered equilibrium.
fn polish(inst: &MarketInstance, w: &[f64], tol: &Tolerances, thresholds: &[f64]) -> Option<Vec<f64>> {
    let lam_max = inst.lambda().iter().cloned().fold(0.0, f64::max);
    for &rel in thresholds {
        let mut sets = tie_structure(inst, w, rel);
        let mut cand = None;
        for _ in 0..10 {
            let Some(exact) = exact_from_structure(inst, &sets) else {
                break;
            };
            let next = tie_structure(inst, &exact, 1e-11);
            let stable = next == sets;
            cand = Some(exact);
            if stable {
                break;
            }
            sets = next;
        }
        let Some(exact) = cand else { continue };
        let Ok(point) = DualPoint::new(inst, exact.clone()) else {
            continue;
        };
        let Ok(sol) = equilibrium_from_dual(inst, point, tol) else {
            continue;
        };
        if kkt_verify(inst, &sol).max_residual <= 1e-8 * (1.0 + lam_max) {
            return Some(sol.w.into_vec());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{dual_objective, subgradient};
    use crate::market::{sample_instance, SampleSpec};

    fn hand() -> MarketInstance {
        MarketInstance::new(vec![vec![2.0], vec![1.0]], vec![1.0, 1.0], vec![1.0, 2.0], 2.0).unwrap()
    }

    #[test]
    fn tight_example_multipliers() {
        let eps = 0.01;
        let inst = MarketInstance::tight_example(eps).unwrap();
        let w = solve_dual(&inst, &DualSolverOptions::default()).unwrap();
        assert!((w.as_slice()[0] - eps / (1.0 + eps)).abs() < 1e-5);
        assert!((w.as_slice()[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn hand_instance_matches_grid_search() {
        let inst = hand();
        let lo = inst.w_lower();
        let hi = inst.w_upper();
        let steps = 10_000;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        // Resolution 1e-4 over the box.
        for a in 0..=steps {
            let w1 = lo[0] + (hi[0] - lo[0]) * a as f64 / steps as f64;
            for b in (0..=steps).step_by(50) {
                let w2 = lo[1] + (hi[1] - lo[1]) * b as f64 / steps as f64;
                let f = objective_raw(&inst, &[w1, w2]);
                if f < best.0 {
                    best = (f, w1, w2);
                }
            }
        }
        let w = solve_dual(&inst, &DualSolverOptions::default()).unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-6);
        assert!((w.as_slice()[1] - 0.5).abs() < 1e-6);
        assert!((best.1 - 0.5).abs() <= 1e-4);
        assert!(dual_objective(&inst, &w) <= best.0 + 1e-12);
    }

    #[test]
    fn single_buyer_huge_budget_sits_at_cap() {
        let inst = MarketInstance::new(vec![vec![0.5, 0.9, 0.3]], vec![100.0], vec![1.5], 1.0).unwrap();
        let w = solve_dual(&inst, &DualSolverOptions::default()).unwrap();
        assert_eq!(w.as_slice(), &[1.0 / 1.5]);
    }

    #[test]
    fn single_buyer_small_budget_spends_it() {
        let inst = MarketInstance::new(vec![vec![0.5, 0.9, 0.3]], vec![0.34], vec![1.0], 1.0).unwrap();
        let w = solve_dual(&inst, &DualSolverOptions::default()).unwrap();
        assert!((w.as_slice()[0] - 0.34 / 1.7).abs() < 1e-12);
    }

    #[test]
    fn plain_subgradient_approaches_optimum() {
        let inst = hand();
        let run = projected_subgradient(&inst, &DualPoint::upper_corner(&inst), 1e-12, 200, 500);
        assert!((run.best.as_slice()[0] - 0.5).abs() < 1e-2);
        assert!(run.best_objective >= dual_objective(&inst, &DualPoint::new(&inst, vec![0.5, 0.5]).unwrap()) - 1e-12);
    }

    #[test]
    fn finite_differences_match_subgradient() {
        let inst = sample_instance(3, 6, &SampleSpec::uniform(0.0, 1.0), 11).unwrap();
        let lo = inst.w_lower();
        let hi = inst.w_upper();
        let w: Vec<f64> = (0..3).map(|i| 0.5 * (lo[i] + hi[i]) + 0.013 * i as f64).collect();
        let point = DualPoint::new(&inst, w.clone()).unwrap();
        let g = subgradient(&inst, &point);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (objective_raw(&inst, &up) - objective_raw(&inst, &dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-4, "buyer {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn corners_agree() {
        for seed in 0..10 {
            let spec = SampleSpec::uniform(0.0, 1.0).with_tau(1.0, 2.0);
            let inst = sample_instance(4, 20, &spec, seed).unwrap();
            let a = solve_dual(&inst, &DualSolverOptions::default()).unwrap();
            let b = solve_dual(
                &inst,
                &DualSolverOptions::default().with_start(StartPoint::LowerCorner),
            )
            .unwrap();
            assert!(a.distance(&b) < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn given_start_is_validated() {
        let inst = hand();
        let opts = DualSolverOptions::default().with_start(StartPoint::Given(vec![5.0, 0.5]));
        assert!(solve_dual(&inst, &opts).is_err());
    }

    #[test]
    fn strong_convexity_inequality() {
        use rand::{Rng, SeedableRng};
        let inst = sample_instance(4, 15, &SampleSpec::uniform(0.0, 1.0).with_tau(1.0, 2.0), 3).unwrap();
        let sigma = inst.sigma();
        let lo = inst.w_lower();
        let hi = inst.w_upper();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u: Vec<f64> = (0..4).map(|i| rng.gen_range(lo[i]..=hi[i])).collect();
            let v: Vec<f64> = (0..4).map(|i| rng.gen_range(lo[i]..=hi[i])).collect();
            let g = subgradient_raw(&inst, &u);
            let lin: f64 = (0..4).map(|i| g[i] * (v[i] - u[i])).sum();
            let dist2: f64 = (0..4).map(|i| (v[i] - u[i]).powi(2)).sum();
            let slack = objective_raw(&inst, &v) - objective_raw(&inst, &u) - lin - 0.5 * sigma * dist2;
            assert!(slack >= -1e-9);
        }
    }
}

