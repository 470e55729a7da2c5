//! Expected number of new variants seen `k1` times in population 1 and `k2`
//! times in population 2 during a follow-up, given a pilot of known size.

use variant_forecast::model::{CountPair, Hyperparams, Predictor};
use variant_forecast::numerics::QuadratureConfig;

fn main() -> anyhow::Result<()> {
    let phi = Hyperparams::new(100.0, 0.4, 0.6, 0.5, 0.5, 1.0, 1.0)?;
    let predictor = Predictor::new(&phi, &QuadratureConfig::default())?;

    let pilot = CountPair::new(50, 50);
    let follow = CountPair::new(100, 100);
    let v = 3;
    let grid = predictor.kton_grid(pilot, follow, v)?;

    println!("pilot {pilot}, follow-up {follow}");
    println!("k1 k2 mean");
    // Row-major by k1; the (0, 0) cell is zero.
    let cells = (0..=v).flat_map(|k1| (0..=v).map(move |k2| (k1, k2)));
    for ((k1, k2), mean) in cells.zip(&grid).skip(1) {
        println!("{k1:>2} {k2:>2} {:.4} (±{:.1e})", mean.lambda, mean.quad_error);
    }

    let total = predictor.total(pilot, follow)?;
    println!("all new variants: {:.2}", total.lambda);
    Ok(())
}
