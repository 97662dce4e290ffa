// Plain projected subgradient descent on the dual, against the full solver.

use egmarket::equilibrium::{
    dual_objective, projected_subgradient, solve_dual_detailed, DualPoint, DualSolverOptions,
};
use egmarket::market::{sample_instance, SampleSpec};

fn main() -> egmarket::Result<()> {
    let inst = sample_instance(3, 40, &SampleSpec::uniform(0.0, 1.0), 9)?;
    let exact = solve_dual_detailed(&inst, &DualSolverOptions::default())?;
    println!("solver: w={:?} F={:.10} via {:?}", exact.w.as_slice(), exact.objective, exact.certificate);
    for epochs in [1, 5, 25] {
        let run = projected_subgradient(&inst, &DualPoint::upper_corner(&inst), 1e-12, epochs, 200);
        println!(
            "{:>4} epochs: F(avg)={:.10} F(best)={:.10} |avg - w*|={:.2e}",
            run.epochs,
            dual_objective(&inst, &run.average),
            run.best_objective,
            run.average.distance(&exact.w)
        );
    }
    Ok(())
}
