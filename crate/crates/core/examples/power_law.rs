//! Power-law slope of the mean distinct-variant curve when population 1 is
//! sampled alone.

use variant_forecast::cli::{powerlaw, Scheme};
use variant_forecast::model::{CountPair, Hyperparams};
use variant_forecast::simulation::SimConfig;

fn main() -> anyhow::Result<()> {
    let phi = Hyperparams::new(10.0, 0.3, 0.6, 0.1, 0.1, 1.0, 1.0)?;
    let sim = SimConfig::new(CountPair::new(0, 0), 11).with_subdivisions(4);
    for scheme in [Scheme::Projection1, Scheme::Projection2] {
        let report = powerlaw(&phi, scheme, 2000, 100, &sim)?;
        println!("{scheme}: slope {:.3}", report.slope);
    }
    Ok(())
}
