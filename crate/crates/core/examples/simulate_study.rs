//! Draws a synthetic two-population study from the prior and writes it as TSV.

use variant_forecast::data::count_new_total;
use variant_forecast::model::{CountPair, Hyperparams};
use variant_forecast::simulation::{sample_observed, SimConfig};

fn main() -> anyhow::Result<()> {
    let phi = Hyperparams::new(100.0, 0.4, 0.6, 0.5, 0.5, 1.0, 1.0)?;
    let cfg = SimConfig::new(CountPair::new(200, 200), 7).with_subdivisions(4);
    let data = sample_observed(&phi, &cfg)?;
    println!("{} samples, {} distinct variants", data.sizes(), data.distinct_variants());

    let pilot = data.select([&(0..100).collect::<Vec<_>>(), &(0..100).collect::<Vec<_>>()])?;
    let rest = data.select([&(100..200).collect::<Vec<_>>(), &(100..200).collect::<Vec<_>>()])?;
    println!("new in the second half: {}", count_new_total(&pilot, &rest)?);

    let path = std::env::temp_dir().join("vf_simulated.tsv");
    data.write_tsv(&path, &["simulated".to_string()])?;
    println!("wrote {}", path.display());
    Ok(())
}
