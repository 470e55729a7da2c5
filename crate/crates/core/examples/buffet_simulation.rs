//! Indian-buffet draws against the closed-form single-population growth curve.

use variant_forecast::baselines::{single_population_curve, Bp3Params, RisingConvention};
use variant_forecast::data::{growth_curve, SampleRef};
use variant_forecast::simulation::sample_ibp_3bp;

fn main() -> anyhow::Result<()> {
    let p = Bp3Params::new(20.0, 1.0, 0.5)?;
    let n = 200u64;
    let runs = 200;
    let order: Vec<SampleRef> = (0..n as usize).map(|i| SampleRef::new(0, i)).collect();
    let mut mean = vec![0.0; n as usize];
    for seed in 0..runs {
        let curve = growth_curve(&sample_ibp_3bp(&p, n, seed)?, &order)?;
        mean.iter_mut().zip(&curve.counts).for_each(|(a, c)| *a += c / runs as f64);
    }
    let exact = single_population_curve(0, n, &p, RisingConvention::Pochhammer)?;
    for i in [0, 9, 49, 99, 199] {
        println!("{:>4} samples: simulated {:.2}, expected {:.2}", i + 1, mean[i], exact[i]);
    }
    Ok(())
}
