//! The rate measure of the prior: finite first moments, unbounded total mass.

use variant_forecast::model::{rate_density, rate_measure_diagnostics, Hyperparams};
use variant_forecast::numerics::QuadratureConfig;

fn main() -> anyhow::Result<()> {
    let phi = Hyperparams::new(10.0, 0.3, 0.6, 0.5, 0.5, 1.0, 1.0)?;
    println!("density at (0.1, 0.2): {:.4}", rate_density([0.1, 0.2], &phi)?);

    let eps = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let diag = rate_measure_diagnostics(&phi, &QuadratureConfig::default().with_rel_tol(1e-8), &eps)?;
    for (p, m) in diag.first_moments.iter().enumerate() {
        println!("first moment, population {}: {:.6}", p + 1, m.value);
    }
    for ((e, m), r) in diag.truncated_masses.iter().zip(std::iter::once(f64::NAN).chain(diag.growth_ratios())) {
        println!("mass above {e:.0e}: {:>12.3}  ratio {r:.2}", m.value);
    }
    Ok(())
}
