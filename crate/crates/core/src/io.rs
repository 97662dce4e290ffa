//! File formats: instance and solution JSON, CSV provenance headers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{kkt_verify, Binding, EquilibriumSolution};
use crate::error::Result;
use crate::first_best::{FirstBestSolution, RevenueRatio};
use crate::market::{Allocation, MarketInstance};
use crate::tolerance::Tolerances;

pub fn read_instance(path: &Path) -> Result<MarketInstance> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_instance(path: &Path, inst: &MarketInstance) -> Result<()> {
    write_json(path, inst)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstBestSection {
    #[serde(flatten)]
    pub solution: FirstBestSolution,
    pub ratio: RevenueRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub x: Allocation,
    pub d: Vec<f64>,
    pub payments: Vec<f64>,
    pub binding: Vec<Binding>,
    pub dual_objective: f64,
    pub kkt_max_residual: f64,
    pub revenue: f64,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub first_best: Option<FirstBestSection>,
}

impl SolutionFile {
    pub fn new(inst: &MarketInstance, sol: &EquilibriumSolution, tolerances: Tolerances) -> Self {
        SolutionFile {
            w: sol.w.as_slice().to_vec(),
            p: sol.p.clone(),
            x: sol.x.clone(),
            d: sol.d.clone(),
            payments: sol.payments.clone(),
            binding: sol.binding.clone(),
            dual_objective: sol.dual_objective,
            kkt_max_residual: kkt_verify(inst, sol).max_residual,
            revenue: sol.revenue(),
            tolerances,
            first_best: None,
        }
    }
}

/// `# key = value` lines written ahead of CSV data.
pub fn csv_header(tolerances: &Tolerances, extra: &[(&str, String)]) -> Vec<String> {
    let mut lines = vec![
        format!("# tol_feas = {:e}", tolerances.feas),
        format!("# tol_lp = {:e}", tolerances.lp),
        format!("# tol_kkt = {:e}", tolerances.kkt),
        format!("# tol_tie_rel = {:e}", tolerances.tie_rel),
    ];
    lines.extend(extra.iter().map(|(k, v)| format!("# {k} = {v}")));
    lines
}

/// Writes the provenance header, then lets `body` append CSV rows.
pub fn write_csv_file<F>(path: &Path, header: &[String], body: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    for line in header {
        writeln!(buf, "{line}")?;
    }
    body(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_equilibrium, DualSolverOptions};

    #[test]
    fn instance_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let inst = MarketInstance::tight_example(0.01).unwrap();
        write_instance(&path, &inst).unwrap();
        assert_eq!(read_instance(&path).unwrap(), inst);
    }

    #[test]
    fn sampled_instance_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let spec = crate::market::SampleSpec::uniform(0.0, 1.0).with_tau(1.0, 2.0);
        for seed in 0..20 {
            let inst = crate::market::sample_instance(4, 50, &spec, seed).unwrap();
            write_instance(&path, &inst).unwrap();
            assert_eq!(read_instance(&path).unwrap(), inst);
        }
    }

    #[test]
    fn malformed_instance_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\"n\": 1, \"m\": 1, \"v\": [[-1.0]]").unwrap();
        assert!(read_instance(&path).is_err());
    }

    #[test]
    fn solution_file_has_expected_keys() {
        let inst = MarketInstance::tight_example(0.01).unwrap();
        let sol = solve_equilibrium(&inst, &DualSolverOptions::default()).unwrap();
        let file = SolutionFile::new(&inst, &sol, Tolerances::default());
        let v = serde_json::to_value(&file).unwrap();
        for key in ["w", "p", "x", "d", "payments", "binding", "dual_objective", "kkt_max_residual"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("first_best").is_none());
    }
}
