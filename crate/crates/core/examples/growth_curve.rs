//! Predicted number of new variants along a follow-up that first grows
//! population 1 and then population 2.

use variant_forecast::model::{CountPair, Hyperparams, Predictor};
use variant_forecast::numerics::QuadratureConfig;

fn main() -> anyhow::Result<()> {
    let phi = Hyperparams::new(100.0, 0.4, 0.6, 0.5, 0.5, 1.0, 1.0)?;
    let predictor = Predictor::new(&phi, &QuadratureConfig::default())?;
    let pilot = CountPair::new(20, 20);
    let curve = predictor.total_curve(pilot, CountPair::new(200, 200))?;

    for (m, mean) in curve.points().into_iter().step_by(25) {
        println!("{m}\t{:.2}", mean.lambda);
    }
    Ok(())
}
