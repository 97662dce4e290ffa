// Draws a market from a valuation family and writes it as JSON.

use egmarket::io::{read_instance, write_instance};
use egmarket::market::{sample_instance, SampleSpec, ValueFamily};

fn main() -> egmarket::Result<()> {
    let spec = SampleSpec {
        family: ValueFamily::TruncatedLogNormal { mu: 0.0, sigma: 0.5, v_bar: 5.0 },
        rho: (0.05, 0.2),
        tau: (1.0, 1.5),
    };
    let inst = sample_instance(3, 8, &spec, 3)?;
    let path = std::env::temp_dir().join("egmarket-example-instance.json");
    write_instance(&path, &inst)?;
    assert_eq!(read_instance(&path)?, inst);
    println!("wrote {}", path.display());
    println!("lambda = {:?}", inst.lambda());
    println!("tau    = {:?}", inst.tau());
    println!("box    = {:?} .. {:?}", inst.w_lower(), inst.w_upper());
    Ok(())
}
