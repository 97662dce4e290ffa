// Two budget-constrained buyers bid the same on one item. The seller splits
// it so both spend their budgets exactly.

use egmarket::equilibrium::{solve_equilibrium, tie_sets, DualSolverOptions};
use egmarket::market::MarketInstance;
use egmarket::tolerance::Tolerances;

fn main() -> egmarket::Result<()> {
    let inst = MarketInstance::new(vec![vec![4.0, 1.0], vec![4.0, 0.0]], vec![1.5, 1.0], vec![1.0, 1.0], 4.0)?;
    let sol = solve_equilibrium(&inst, &DualSolverOptions::default())?;
    let tol = Tolerances::default().tie(inst.v_bar());
    println!("w = {:?}", sol.w.as_slice());
    println!("p = {:?}", sol.p);
    println!("tied bidders per item: {:?}", tie_sets(&inst, sol.w.as_slice(), &sol.p, tol));
    for (i, row) in sol.x.x.iter().enumerate() {
        println!("buyer {i}: x = {row:?}, pays {:.6} of {}", sol.payments[i], inst.lambda()[i]);
    }
    Ok(())
}
