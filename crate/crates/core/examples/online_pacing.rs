// Five bidders learn their pacing multipliers over a stream of first-price
// auctions, then get compared with the best fixed multipliers in hindsight.

use egmarket::market::SampleSpec;
use egmarket::online::{offline_w_star, regret_report, simulate_sampled};

fn main() -> egmarket::Result<()> {
    let spec = SampleSpec::uniform(0.0, 1.0).with_rho(0.05, 0.2);
    let (inst, trace) = simulate_sampled(5, 20_000, &spec, 1)?;
    let w_star = offline_w_star(&inst)?;
    let rep = regret_report(&trace, &w_star)?;
    for i in 0..inst.n() {
        println!(
            "bidder {i}: omega={:.5} w*={:.5} value={:.2} (fixed {:.2}) overshoot={:.3}",
            trace.final_omega()[i],
            w_star.as_slice()[i],
            rep.utility_online[i],
            rep.utility_star[i],
            rep.budget_overshoot[i]
        );
    }
    println!("R_obj={:.4} revenue={:.2} fixed-multiplier revenue={:.2}", rep.r_obj_final(), rep.revenue_online, rep.revenue_star);
    Ok(())
}
