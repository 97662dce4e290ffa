// Re-solves the market while one buyer misreports, and reports what the
// misreport would have earned against its true constraints.

use egmarket::equilibrium::DualSolverOptions;
use egmarket::market::{sample_instance, SampleSpec};
use egmarket::mechanism::{ic_probe, MisreportGrid};

fn main() -> egmarket::Result<()> {
    let spec = SampleSpec::uniform(0.0, 1.0).with_tau(1.0, 2.0);
    let inst = sample_instance(3, 10, &spec, 17)?;
    let opts = DualSolverOptions::default();
    for i in 0..inst.n() {
        let mut rep = ic_probe(&inst, i, &MisreportGrid::under_reports(5), &opts)?;
        rep.merge(ic_probe(&inst, i, &MisreportGrid::over_reports(), &opts)?);
        let infeasible = rep.rows.iter().filter(|r| !r.feasible).count();
        println!(
            "buyer {i}: truthful value {:.4}, {} misreports, {infeasible} infeasible, max gain {:.1e}",
            rep.truthful_utility[i],
            rep.rows.len(),
            rep.max_gain()
        );
    }
    Ok(())
}
