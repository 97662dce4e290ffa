// First-best revenue with its dual certificate, next to the clearing revenue.

use egmarket::equilibrium::DualSolverOptions;
use egmarket::first_best::{revenue_ratio, solve_first_best};
use egmarket::market::{sample_instance, SampleSpec};

fn main() -> egmarket::Result<()> {
    let spec = SampleSpec::uniform(0.0, 1.0).with_rho(0.02, 0.1).with_tau(1.0, 2.0);
    let inst = sample_instance(3, 12, &spec, 5)?;
    let fb = solve_first_best(&inst)?;
    println!("payments t  = {:?}", fb.t_fb);
    println!("alpha       = {:?}", fb.alpha);
    println!("beta        = {:?}", fb.beta);
    println!("zero beta   = {:?}", fb.zero_beta);
    println!("revenue={:.9} dual={:.9} gap={:.1e}", fb.revenue, fb.dual_objective, fb.duality_gap());

    let r = revenue_ratio(&inst, &DualSolverOptions::default())?;
    println!("clearing revenue={:.6} ratio={:.4} half_approx={}", r.rev_star, r.ratio, r.half_approx);
    Ok(())
}
