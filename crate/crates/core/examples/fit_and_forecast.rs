//! Fits the prior to a pilot study and forecasts new variants in a follow-up.

use variant_forecast::data::{count_new_total, make_folds};
use variant_forecast::fitting::{fit_proposed, FitConfig, FittedParams};
use variant_forecast::model::{CountPair, Hyperparams, Predictor};
use variant_forecast::numerics::QuadratureConfig;
use variant_forecast::simulation::{sample_observed, SimConfig};

fn main() -> anyhow::Result<()> {
    let truth = Hyperparams::new(100.0, 0.4, 0.6, 0.5, 0.5, 1.0, 1.0)?;
    let data = sample_observed(&truth, &SimConfig::new(CountPair::new(200, 200), 3).with_subdivisions(4))?;
    let plan = make_folds(&data, 4, 3)?;
    let (pilot, follow) = plan.split(&data, 0)?;

    let cfg = FitConfig { v: 4, ..FitConfig::default() };
    let fit = fit_proposed(&pilot, &cfg, &QuadratureConfig::default().with_rel_tol(1e-6))?;
    let FittedParams::Proposed(phi) = fit.params else { unreachable!() };
    println!("fitted {phi:?} in {} iterations", fit.iterations);

    let mean = Predictor::new(&phi, &QuadratureConfig::default())?.total(pilot.sizes(), follow.sizes())?;
    println!(
        "pilot {}, follow-up {}: predicted {:.1}, observed {}",
        pilot.sizes(),
        follow.sizes(),
        mean.lambda,
        count_new_total(&pilot, &follow)?
    );
    Ok(())
}
