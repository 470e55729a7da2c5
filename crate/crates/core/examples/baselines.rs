//! Single-population three-parameter beta process forecasts, applied to the
//! pooled study (d3bp) or to each population separately (i3bp).

use variant_forecast::baselines::{
    d3bp_kton_mean, d3bp_total_mean, d3bp_total_mean_with, i3bp_total_mean, Bp3Params, I3bpParams, RisingConvention,
};
use variant_forecast::model::CountPair;

fn main() -> anyhow::Result<()> {
    let p = Bp3Params::new(20.0, 1.0, 0.5)?;
    let (n, m) = (CountPair::new(50, 50), CountPair::new(100, 100));
    println!("d3bp total: {:.2}", d3bp_total_mean(n, m, &p)?);
    println!(
        "d3bp total, shifted rising factorial: {:.2}",
        d3bp_total_mean_with(n, m, &p, RisingConvention::Shifted)?
    );
    println!("d3bp (1, 1)-tons: {:.3}", d3bp_kton_mean(n, m, CountPair::new(1, 1), &p)?);

    let q = I3bpParams { pop1: p, pop2: p };
    println!("i3bp total: {:.2}", i3bp_total_mean(n, m, &q)?);
    Ok(())
}
