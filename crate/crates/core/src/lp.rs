//! Dense two-phase simplex.
//!
//! Small, dense problems only: the first-best benchmark, the seller's
//! tie-splitting system and single-buyer demand checks. Every optimal solve
//! reports one dual multiplier per row; infeasible solves carry a Farkas
//! certificate.
//!
//! Pricing is Dantzig's rule, switching to Bland's rule while the solver is
//! stuck on degenerate pivots so that cycling cannot occur.

use crate::error::{Error, Result};
use crate::tolerance::{PIVOT_EPS, TOL_LP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl RowSense {
    fn flipped(self) -> Self {
        match self {
            RowSense::Le => RowSense::Ge,
            RowSense::Ge => RowSense::Le,
            RowSense::Eq => RowSense::Eq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// `optimize c.x` subject to `A x (<=|=|>=) b` and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Objective,
    pub c: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

impl LpProblem {
    pub fn new(objective: Objective, c: Vec<f64>) -> Self {
        let n = c.len();
        LpProblem {
            objective,
            c,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    /// A problem with an all-zero objective, for feasibility checks.
    pub fn feasibility(num_vars: usize) -> Self {
        LpProblem::new(Objective::Minimize, vec![0.0; num_vars])
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    /// Adds a row given as `(variable, coefficient)` pairs.
    pub fn add_sparse_row(&mut self, terms: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add_row(coeffs, sense, rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: Option<f64>) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch("bound vectors differ from variable count".into()));
        }
        if self.c.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvariantViolation("non-finite objective coefficient".into()));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {r} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvariantViolation(format!("row {r} has non-finite entries")));
            }
        }
        for j in 0..n {
            if !self.lower[j].is_finite() {
                return Err(Error::InvariantViolation(format!("variable {j} lower bound not finite")));
            }
            if let Some(u) = self.upper[j] {
                if !u.is_finite() || u < self.lower[j] {
                    return Err(Error::InvariantViolation(format!("variable {j} has upper < lower")));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of the row senses and variable bounds at `x`.
    pub fn feasibility_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let ax: f64 = row.coeffs.iter().zip(x).map(|(a, x)| a * x).sum();
            let viol = match row.sense {
                RowSense::Le => ax - row.rhs,
                RowSense::Ge => row.rhs - ax,
                RowSense::Eq => (ax - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj);
            if let Some(u) = self.upper[j] {
                worst = worst.max(xj - u);
            }
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; meaningful only when `Optimal`.
    pub x: Vec<f64>,
    /// One multiplier per user row. For a maximization with `<=` rows the
    /// multipliers are non-negative.
    pub dual: Vec<f64>,
    /// Multipliers of the variable upper bounds, indexed by variable (zero
    /// where no upper bound is set).
    pub bound_dual: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `y.A <= 0`, `y_r <= 0` on `<=` rows,
    /// `y_r >= 0` on `>=` rows and `y.b > 0`. Only set when `Infeasible`;
    /// covers user rows followed by one entry per upper-bounded variable.
    pub farkas: Option<Vec<f64>>,
}

/// Solves `p` to optimality.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    Tableau::build(p)?.run(p, true)
}

/// Finds any feasible point of `p`, ignoring its objective.
pub fn solve_feasibility(p: &LpProblem) -> Result<LpSolution> {
    Tableau::build(p)?.run(p, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Surplus,
    Artificial,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows x (cols + 1)`, last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
    kind: Vec<ColKind>,
    /// For each internal row: column whose reduced cost yields its dual.
    dual_col: Vec<usize>,
    /// `true` where the row was multiplied by -1 to make its rhs non-negative.
    flipped: Vec<bool>,
    nvars: usize,
    user_rows: usize,
    /// Variables carrying an upper-bound row, in row order.
    bounded: Vec<usize>,
    /// Internal (minimization) objective on structural columns.
    cost: Vec<f64>,
    scale_b: f64,
    scale_c: f64,
}

impl Tableau {
    fn build(p: &LpProblem) -> Result<Self> {
        p.validate()?;
        let nvars = p.num_vars();
        let sign = match p.objective {
            Objective::Minimize => 1.0,
            Objective::Maximize => -1.0,
        };
        let cost: Vec<f64> = p.c.iter().map(|c| sign * c).collect();

        // Internal rows: user rows, then one row per finite upper bound.
        let mut coeffs: Vec<Vec<f64>> = Vec::new();
        let mut senses = Vec::new();
        let mut rhs = Vec::new();
        for row in &p.rows {
            let shift: f64 = row.coeffs.iter().zip(&p.lower).map(|(a, l)| a * l).sum();
            coeffs.push(row.coeffs.clone());
            senses.push(row.sense);
            rhs.push(row.rhs - shift);
        }
        let mut bounded = Vec::new();
        for j in 0..nvars {
            if let Some(u) = p.upper[j] {
                let mut a = vec![0.0; nvars];
                a[j] = 1.0;
                coeffs.push(a);
                senses.push(RowSense::Le);
                rhs.push(u - p.lower[j]);
                bounded.push(j);
            }
        }
        let rows = coeffs.len();
        let mut flipped = vec![false; rows];
        for r in 0..rows {
            if rhs[r] < 0.0 {
                flipped[r] = true;
                rhs[r] = -rhs[r];
                coeffs[r].iter_mut().for_each(|a| *a = -*a);
                senses[r] = senses[r].flipped();
            }
        }

        let n_ineq = senses.iter().filter(|s| **s != RowSense::Eq).count();
        let n_art = senses.iter().filter(|s| **s != RowSense::Le).count();
        let cols = nvars + n_ineq + n_art;
        let mut kind = vec![ColKind::Structural; nvars];
        let mut t = vec![0.0; rows * (cols + 1)];
        let mut basis = vec![usize::MAX; rows];
        let mut dual_col = vec![0; rows];
        let mut next = nvars;
        for r in 0..rows {
            let base = r * (cols + 1);
            t[base..base + nvars].copy_from_slice(&coeffs[r]);
            t[base + cols] = rhs[r];
            match senses[r] {
                RowSense::Le => {
                    t[base + next] = 1.0;
                    kind.push(ColKind::Slack);
                    basis[r] = next;
                    dual_col[r] = next;
                    next += 1;
                }
                RowSense::Ge => {
                    t[base + next] = -1.0;
                    kind.push(ColKind::Surplus);
                    dual_col[r] = next;
                    next += 1;
                }
                RowSense::Eq => {}
            }
        }
        for r in 0..rows {
            if senses[r] != RowSense::Le {
                t[r * (cols + 1) + next] = 1.0;
                kind.push(ColKind::Artificial);
                basis[r] = next;
                if senses[r] == RowSense::Eq {
                    dual_col[r] = next;
                }
                next += 1;
            }
        }
        debug_assert_eq!(next, cols);

        let scale_b = rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        let scale_c = cost.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        Ok(Tableau {
            rows,
            cols,
            t,
            basis,
            kind,
            dual_col,
            flipped,
            nvars,
            user_rows: p.rows.len(),
            bounded,
            cost,
            scale_b,
            scale_c,
        })
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize, d: &mut [f64], z: &mut f64) {
        let w = self.cols + 1;
        let piv = self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] /= piv;
        }
        let prow: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                let row = &mut self.t[r * w..(r + 1) * w];
                for (a, b) in row.iter_mut().zip(&prow) {
                    *a -= f * b;
                }
                row[pc] = 0.0;
            }
        }
        let f = d[pc];
        if f != 0.0 {
            for c in 0..self.cols {
                d[c] -= f * prow[c];
            }
            d[pc] = 0.0;
            *z += f * prow[self.cols];
        }
        self.basis[pr] = pc;
    }

    /// Reduced costs and objective value for column costs `c`.
    fn pricing(&self, c: &[f64]) -> (Vec<f64>, f64) {
        let mut d = c.to_vec();
        let mut z = 0.0;
        for r in 0..self.rows {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                for (col, dc) in d.iter_mut().enumerate() {
                    *dc -= cb * self.at(r, col);
                }
                z += cb * self.rhs(r);
            }
        }
        (d, z)
    }

    /// Minimizes the objective encoded in `d`/`z` over columns allowed by `allowed`.
    fn optimize(
        &mut self,
        d: &mut [f64],
        z: &mut f64,
        allowed: impl Fn(ColKind) -> bool,
        tol_d: f64,
    ) -> Result<bool> {
        let max_iter = 50 * (self.rows + self.cols) + 1000;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate_run > 30;
            let mut enter = None;
            let mut best = -tol_d;
            for c in 0..self.cols {
                if !allowed(self.kind[c]) || d[c] >= -tol_d {
                    continue;
                }
                if bland {
                    enter = Some(c);
                    break;
                }
                if d[c] < best {
                    best = d[c];
                    enter = Some(c);
                }
            }
            let Some(pc) = enter else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            let mut small_pivot = false;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a <= PIVOT_EPS {
                    if a > 0.0 {
                        small_pivot = true;
                    }
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio);
                        if ratio < lratio && !tie
                            || tie && self.basis[r] < self.basis[lr]
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
            let Some((pr, ratio)) = leave else {
                if small_pivot {
                    return Err(Error::NumericalBreakdown(format!(
                        "column {pc} has only pivots below {PIVOT_EPS:e}"
                    )));
                }
                return Ok(false);
            };
            if ratio <= 1e-12 * self.scale_b {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(pr, pc, d, z);
        }
        Err(Error::NumericalBreakdown("iteration limit reached".into()))
    }

    /// Dual values of the internal rows read off reduced costs `d`, given the
    /// column costs used to produce them.
    fn row_duals(&self, d: &[f64], col_cost: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let c = self.dual_col[r];
                // d_c = cost_c - y . A_c, with A_c = +e_r (slack, artificial) or -e_r (surplus).
                let y = match self.kind[c] {
                    ColKind::Surplus => d[c] - col_cost[c],
                    _ => col_cost[c] - d[c],
                };
                if self.flipped[r] {
                    -y
                } else {
                    y
                }
            })
            .collect()
    }

    fn primal(&self, p: &LpProblem) -> Vec<f64> {
        let mut x = p.lower.clone();
        for r in 0..self.rows {
            let b = self.basis[r];
            if b < self.nvars {
                x[b] += self.rhs(r).max(0.0);
            }
        }
        x
    }

    fn run(mut self, p: &LpProblem, optimize: bool) -> Result<LpSolution> {
        let n_user = self.user_rows;
        let has_art = self.kind.contains(&ColKind::Artificial);
        if has_art {
            let c1: Vec<f64> = self
                .kind
                .iter()
                .map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 })
                .collect();
            let (mut d, mut z) = self.pricing(&c1);
            self.optimize(&mut d, &mut z, |_| true, 1e-11)?;
            if z > TOL_LP * self.scale_b {
                let y = self.row_duals(&d, &c1);
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    x: vec![f64::NAN; self.nvars],
                    dual: vec![0.0; n_user],
                    bound_dual: vec![0.0; self.nvars],
                    objective: f64::NAN,
                    farkas: Some(y),
                });
            }
            self.expel_artificials();
        }

        if !optimize {
            let x = self.primal(p);
            return Ok(LpSolution {
                status: LpStatus::Optimal,
                objective: p.objective_at(&x),
                x,
                dual: vec![0.0; n_user],
                bound_dual: vec![0.0; self.nvars],
                farkas: None,
            });
        }

        let mut c2 = vec![0.0; self.cols];
        c2[..self.nvars].copy_from_slice(&self.cost);
        let (mut d, mut z) = self.pricing(&c2);
        let tol_d = 1e-11 * self.scale_c;
        let bounded = self.optimize(&mut d, &mut z, |k| k != ColKind::Artificial, tol_d)?;
        let x = self.primal(p);
        if !bounded {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x,
                dual: vec![0.0; n_user],
                bound_dual: vec![0.0; self.nvars],
                objective: match p.objective {
                    Objective::Maximize => f64::INFINITY,
                    Objective::Minimize => f64::NEG_INFINITY,
                },
                farkas: None,
            });
        }
        let y = self.row_duals(&d, &c2);
        let flip = match p.objective {
            Objective::Minimize => 1.0,
            Objective::Maximize => -1.0,
        };
        let dual: Vec<f64> = y[..n_user].iter().map(|v| flip * v).collect();
        let mut bound_dual = vec![0.0; self.nvars];
        for (k, &j) in self.bounded.iter().enumerate() {
            bound_dual[j] = flip * y[n_user + k];
        }
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: p.objective_at(&x),
            x,
            dual,
            bound_dual,
            farkas: None,
        })
    }

    /// Pivots zero-level artificials out of the basis after phase one.
    /// Rows where that is impossible are linearly dependent and left inert.
    fn expel_artificials(&mut self) {
        let mut d = vec![0.0; self.cols];
        let mut z = 0.0;
        for r in 0..self.rows {
            if self.kind[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for c in 0..self.cols {
                if self.kind[c] == ColKind::Artificial {
                    continue;
                }
                let a = self.at(r, c).abs();
                if a > 1e-9 && best.map_or(true, |(_, b)| a > b) {
                    best = Some((c, a));
                }
            }
            if let Some((c, _)) = best {
                self.pivot(r, c, &mut d, &mut z);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(p: &mut LpProblem, rows: &[(&[f64], RowSense, f64)]) {
        for (a, s, b) in rows {
            p.add_row(a.to_vec(), *s, *b);
        }
    }

    #[test]
    fn box_maximum() {
        let mut p = LpProblem::new(Objective::Maximize, vec![1.0]);
        dense(&mut p, &[(&[1.0], RowSense::Le, 1.0)]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = LpProblem::new(Objective::Maximize, vec![1.0]);
        dense(
            &mut p,
            &[(&[1.0], RowSense::Ge, 2.0), (&[1.0], RowSense::Le, 1.0)],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        let y = s.farkas.unwrap();
        // y . A <= 0, y_ge >= 0, y_le <= 0, y . b > 0
        assert!(y[0] * 1.0 + y[1] * 1.0 <= 1e-12);
        assert!(y[0] >= 0.0 && y[1] <= 0.0);
        assert!(2.0 * y[0] + 1.0 * y[1] > 0.0);
    }

    #[test]
    fn split_allocation_example() {
        // vars: t1, t2, x11, x21
        let mut p = LpProblem::new(Objective::Maximize, vec![1.0, 1.0, 0.0, 0.0]);
        dense(
            &mut p,
            &[
                (&[1.0, 0.0, 0.0, 0.0], RowSense::Le, 1.0),
                (&[1.0, 0.0, -2.0, 0.0], RowSense::Le, 0.0),
                (&[0.0, 1.0, 0.0, 0.0], RowSense::Le, 1.0),
                (&[0.0, 1.0, 0.0, -0.5], RowSense::Le, 0.0),
                (&[0.0, 0.0, 1.0, 1.0], RowSense::Le, 1.0),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.25).abs() < 1e-12);
        assert!((s.x[2] - 0.5).abs() < 1e-12);
        assert!((s.x[3] - 0.5).abs() < 1e-12);
        let dual_obj: f64 = p.rows.iter().zip(&s.dual).map(|(r, y)| r.rhs * y).sum();
        assert!((dual_obj - s.objective).abs() < 1e-12);
    }

    #[test]
    fn simplex_edge_feasibility() {
        let mut p = LpProblem::feasibility(2);
        dense(&mut p, &[(&[1.0, 1.0], RowSense::Eq, 1.0)]);
        let s = solve_feasibility(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(p.feasibility_residual(&s.x) <= 1e-12);
    }

    #[test]
    fn conflicting_equalities_have_certificate() {
        let mut p = LpProblem::feasibility(1);
        dense(
            &mut p,
            &[(&[1.0], RowSense::Eq, 1.0), (&[1.0], RowSense::Eq, 2.0)],
        );
        let s = solve_feasibility(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        let y = s.farkas.unwrap();
        assert!(y[0] + y[1] <= 1e-12);
        assert!(y[0] * 1.0 + y[1] * 2.0 > 0.0);
    }

    #[test]
    fn unbounded_is_detected() {
        let mut p = LpProblem::new(Objective::Maximize, vec![1.0, 0.0]);
        dense(&mut p, &[(&[0.0, 1.0], RowSense::Le, 1.0)]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn bounds_and_equalities() {
        // min x + 2y s.t. x + y = 3, 1 <= x <= 2, y >= 0  ->  x = 2, y = 1
        let mut p = LpProblem::new(Objective::Minimize, vec![1.0, 2.0]);
        p.add_row(vec![1.0, 1.0], RowSense::Eq, 3.0);
        p.set_bounds(0, 1.0, Some(2.0));
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.objective - 4.0).abs() < 1e-12);
        // Equality dual is 2 (marginal cost of rhs via y); bound dual of x's upper is -1.
        assert!((s.dual[0] - 2.0).abs() < 1e-12);
        assert!((s.bound_dual[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut p = LpProblem::new(Objective::Maximize, vec![1.0, 1.0]);
        p.add_row(vec![1.0, 1.0], RowSense::Eq, 1.0);
        p.add_row(vec![2.0, 2.0], RowSense::Eq, 2.0);
        p.add_row(vec![1.0, 0.0], RowSense::Le, 0.25);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(p.feasibility_residual(&s.x) < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let mut p = LpProblem::new(Objective::Maximize, vec![1.0, 1.0]);
        p.add_row(vec![1.0], RowSense::Le, 1.0);
        assert!(matches!(solve_lp(&p), Err(Error::DimensionMismatch(_))));
    }
}
