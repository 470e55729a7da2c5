//! Fold-by-fold evaluation of the pooled baseline on a simulated study.

use variant_forecast::cli::{crossval, ModelKind, RunConfig};
use variant_forecast::model::{CountPair, Hyperparams};
use variant_forecast::simulation::{sample_observed, SimConfig};

fn main() -> anyhow::Result<()> {
    let phi = Hyperparams::new(100.0, 0.4, 0.6, 0.5, 0.5, 1.0, 1.0)?;
    let data = sample_observed(&phi, &SimConfig::new(CountPair::new(100, 100), 2).with_subdivisions(4))?;
    let cfg = RunConfig::new(ModelKind::D3bp, 2);
    let report = crossval(&data, 5, &cfg)?;
    println!("sweep point, mean relative residual, std");
    for (i, s) in report.curve_summary.iter().step_by(20) {
        println!("{i:>4} {:+.3} {:.3}", s.mean, s.std);
    }
    let (k, s) = &report.kton_summary[0];
    println!("{k}-tons: {:+.3} {:.3}", s.mean, s.std);
    Ok(())
}
