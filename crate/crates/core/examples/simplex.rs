// The dense simplex on its own: an optimum with duals and an infeasible
// system with its certificate.

use egmarket::lp::{solve_lp, LpProblem, Objective, RowSense};

fn main() -> egmarket::Result<()> {
    // max t1 + t2 s.t. t1 <= 1, t1 <= 2 x1, t2 <= 1, t2 <= x2 / 2, x1 + x2 <= 1
    let mut lp = LpProblem::new(Objective::Maximize, vec![1.0, 1.0, 0.0, 0.0]);
    lp.add_row(vec![1.0, 0.0, 0.0, 0.0], RowSense::Le, 1.0);
    lp.add_row(vec![1.0, 0.0, -2.0, 0.0], RowSense::Le, 0.0);
    lp.add_row(vec![0.0, 1.0, 0.0, 0.0], RowSense::Le, 1.0);
    lp.add_row(vec![0.0, 1.0, 0.0, -0.5], RowSense::Le, 0.0);
    lp.add_row(vec![0.0, 0.0, 1.0, 1.0], RowSense::Le, 1.0);
    let sol = solve_lp(&lp)?;
    println!("{:?} objective={} x={:?}", sol.status, sol.objective, sol.x);
    println!("duals={:?}", sol.dual);

    let mut bad = LpProblem::new(Objective::Maximize, vec![1.0]);
    bad.add_row(vec![1.0], RowSense::Ge, 2.0);
    bad.add_row(vec![1.0], RowSense::Le, 1.0);
    let sol = solve_lp(&bad)?;
    println!("{:?} certificate={:?}", sol.status, sol.farkas);
    Ok(())
}
