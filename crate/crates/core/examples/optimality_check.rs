// Solves a random market and audits the result: complementary slackness,
// each buyer's own demand problem, and the competitiveness proxy.

use egmarket::equilibrium::{kkt_verify, solve_equilibrium, verify_buyer_optimality, DualSolverOptions};
use egmarket::market::{check_competitive, sample_instance, SampleSpec};

fn main() -> egmarket::Result<()> {
    let spec = SampleSpec::uniform(0.0, 1.0).with_rho(0.05, 0.3).with_tau(1.0, 2.0);
    let inst = sample_instance(4, 30, &spec, 2024)?;
    let sol = solve_equilibrium(&inst, &DualSolverOptions::default())?;

    let kkt = kkt_verify(&inst, &sol);
    println!("{kkt:#?}");
    for i in 0..inst.n() {
        let b = verify_buyer_optimality(&inst, &sol, i)?;
        println!(
            "buyer {i}: w={:.6} {:?} value={:.6} best={:.6} optimal={}",
            sol.w.as_slice()[i],
            sol.binding[i],
            b.equilibrium_value,
            b.best_value,
            b.optimal
        );
    }
    let comp = check_competitive(&inst, &sol);
    println!("competitive proxy pass={} slack buyers={:?}", comp.pass, comp.slack_buyers);
    Ok(())
}
