#![allow(dead_code)]

use egmarket::lp::{LpProblem, Objective, RowSense};
use egmarket::market::{sample_instance, MarketInstance, SampleSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Budget scales: tiny (budgets bind), moderate, and large (RoS caps bind).
const RHO_SCALES: [(f64, f64); 4] = [(0.001, 0.01), (0.02, 0.1), (0.05, 0.2), (0.3, 1.5)];

/// Random instance with `n` in 2..=6, `m` in 5..=50 and a budget scale
/// picked per instance.
pub fn mixed_instance(seed: u64) -> MarketInstance {
    let mut r = rng(seed ^ 0x5eed);
    let n = r.gen_range(2..=6);
    let m = r.gen_range(5..=50);
    let (lo, hi) = RHO_SCALES[r.gen_range(0..RHO_SCALES.len())];
    let tau_hi = if r.gen_bool(0.5) { 1.0 } else { 2.5 };
    let spec = SampleSpec::uniform(0.0, 1.0).with_rho(lo, hi).with_tau(1.0, tau_hi);
    sample_instance(n, m, &spec, seed).unwrap()
}

/// `Z(w) = s (w - w1) - c ln w`, compared through differences so that the
/// search stays accurate where `Z` is flat.
fn z_less(s: f64, c: f64, a: f64, b: f64) -> bool {
    // Z(a) - Z(b) = s (a - b) - c ln(a / b)
    s * (a - b) - c * ((a - b) / b).ln_1p() < 0.0
}

/// Golden-section minimizer of `s w - c ln w` over `[lo, hi]`.
pub fn golden_argmin(s: f64, c: f64, lo: f64, hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    for _ in 0..200 {
        if b - a <= 1e-15 * b {
            break;
        }
        if z_less(s, c, x1, x2) {
            b = x2;
            x2 = x1;
            x1 = b - g * (b - a);
        } else {
            a = x1;
            x1 = x2;
            x2 = a + g * (b - a);
        }
    }
    let mid = 0.5 * (a + b);
    // The minimum may sit on an end point; keep whichever is best.
    [lo, hi]
        .into_iter()
        .fold(mid, |best, e| if z_less(s, c, e, best) { e } else { best })
}

/// Best objective over all basic feasible points, or `None` if there are none.
///
/// Every row, lower bound and finite upper bound is a candidate active
/// constraint; equality rows are always active.
pub fn vertex_enumeration(p: &LpProblem) -> Option<f64> {
    let nv = p.num_vars();
    let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &p.rows {
        match row.sense {
            RowSense::Eq => eq.push((row.coeffs.clone(), row.rhs)),
            _ => ineq.push((row.coeffs.clone(), row.rhs)),
        }
    }
    for j in 0..nv {
        let mut e = vec![0.0; nv];
        e[j] = 1.0;
        ineq.push((e.clone(), p.lower[j]));
        if let Some(u) = p.upper[j] {
            ineq.push((e, u));
        }
    }
    let need = nv.checked_sub(eq.len())?;
    let sign = if p.objective == Objective::Maximize { 1.0 } else { -1.0 };
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(need);
    combinations(ineq.len(), need, 0, &mut pick, &mut |idx| {
        let rows: Vec<&(Vec<f64>, f64)> = eq.iter().chain(idx.iter().map(|&k| &ineq[k])).collect();
        let a = DMatrix::from_fn(nv, nv, |r, c| rows[r].0[c]);
        let b = DVector::from_fn(nv, |r, _| rows[r].1);
        let Some(x) = a.lu().solve(&b) else { return };
        if x.iter().any(|v| !v.is_finite()) || p.feasibility_residual(x.as_slice()) > 1e-9 {
            return;
        }
        let obj = p.objective_at(x.as_slice());
        if best.map_or(true, |b| sign * obj > sign * b) {
            best = Some(obj);
        }
    });
    best
}

fn combinations(n: usize, k: usize, from: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in from..n {
        if n - i < k - pick.len() {
            break;
        }
        pick.push(i);
        combinations(n, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Random bounded LP with at most 12 variables.
///
/// When `feasible` is set the right-hand sides are built around a known
/// point; otherwise they are random and the problem may be infeasible.
pub fn random_lp(seed: u64, feasible: bool) -> LpProblem {
    let mut r = rng(seed);
    let nv = r.gen_range(2..=12);
    let extra = if nv > 9 { r.gen_range(0..=4) } else { r.gen_range(1..=5) };
    let objective = if r.gen_bool(0.5) { Objective::Maximize } else { Objective::Minimize };
    let c: Vec<f64> = (0..nv).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut p = LpProblem::new(objective, c);
    let x0: Vec<f64> = (0..nv).map(|_| r.gen_range(0.0..1.0)).collect();
    // A positive row keeps the feasible set bounded.
    p.add_row(vec![1.0; nv], RowSense::Le, nv as f64);
    for _ in 0..extra {
        let a: Vec<f64> = (0..nv).map(|_| r.gen_range(-1.0..1.0)).collect();
        let ax: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
        let sense = match r.gen_range(0..6) {
            0 => RowSense::Eq,
            1 | 2 => RowSense::Ge,
            _ => RowSense::Le,
        };
        let rhs = if feasible {
            let slack = r.gen_range(0.0..0.5);
            match sense {
                RowSense::Le => ax + slack,
                RowSense::Ge => ax - slack,
                RowSense::Eq => ax,
            }
        } else {
            r.gen_range(-1.0..1.0)
        };
        p.add_row(a, sense, rhs);
    }
    if r.gen_bool(0.3) {
        let j = r.gen_range(0..nv);
        p.set_bounds(j, 0.0, Some(x0[j] + 0.25));
    }
    p
}
