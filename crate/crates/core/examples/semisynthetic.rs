//! Samples a study from a table of per-variant population frequencies.

use variant_forecast::data::FrequencyTable;
use variant_forecast::model::CountPair;
use variant_forecast::simulation::sample_semisynthetic;

fn main() -> anyhow::Result<()> {
    let table = FrequencyTable::from_tsv_str("rs1\t1\t0.5\nrs1\t2\t0.1\nrs2\t1\t0.02\nrs3\t2\t0.3\nrs4\t1\t0.001\n")?;
    let data = sample_semisynthetic(&table, CountPair::new(100, 100), 5)?;
    print!("{}", data.to_tsv_string(&[]).lines().take(8).collect::<Vec<_>>().join("\n"));
    println!("\n...\n{} distinct variants carried", data.distinct_variants());
    Ok(())
}
