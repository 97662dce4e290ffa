// Regret statistics over growing stream lengths, with log-log slopes.

use egmarket::market::SampleSpec;
use egmarket::online::{run_sweep, SweepConfig};

fn main() -> egmarket::Result<()> {
    let cfg = SweepConfig {
        ms: vec![256, 1024, 4096],
        n: 5,
        seeds: 8,
        spec: SampleSpec::uniform(0.0, 1.0).with_rho(0.05, 0.2),
    };
    let res = run_sweep(&cfg)?;
    res.write_medians_csv(std::io::stdout())?;
    println!(
        "slopes: strategy_gap {:.3}, utility {:.3}, revenue {:.3}",
        res.slope_strategy_gap, res.slope_utility_regret, res.slope_revenue_gap
    );
    Ok(())
}
