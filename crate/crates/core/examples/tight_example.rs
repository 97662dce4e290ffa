// The two-buyer market where the clearing mechanism earns about half the
// first-best revenue.

use egmarket::equilibrium::{kkt_verify, solve_equilibrium, DualSolverOptions};
use egmarket::first_best::revenue_ratio;
use egmarket::market::MarketInstance;

fn main() -> egmarket::Result<()> {
    let opts = DualSolverOptions::default();
    for eps in [0.1, 0.05, 0.01, 0.001] {
        let inst = MarketInstance::tight_example(eps)?;
        let sol = solve_equilibrium(&inst, &opts)?;
        let r = revenue_ratio(&inst, &opts)?;
        println!(
            "eps={eps:<6} w=({:.6}, {:.6}) p=({:.6}, {:.6}) revenue={:.6} first_best={:.6} ratio={:.6} kkt={:.1e}",
            sol.w.as_slice()[0],
            sol.w.as_slice()[1],
            sol.p[0],
            sol.p[1],
            r.rev_star,
            r.rev_fb,
            r.ratio,
            kkt_verify(&inst, &sol).max_residual
        );
    }
    Ok(())
}
