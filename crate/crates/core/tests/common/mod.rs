#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use variant_forecast::data::{Registry, SampleRef, VariantDataset};
use variant_forecast::model::CountPair;

/// Presence matrices `[pop][sample][variant]`.
pub type Presence = [Vec<Vec<bool>>; 2];

pub fn random_presence(rng: &mut ChaCha8Rng, variants: usize, max_samples: usize) -> Presence {
    let density: f64 = rng.random_range(0.02..0.6);
    let mut pops: Presence = Default::default();
    for pop in pops.iter_mut() {
        let n = rng.random_range(0..=max_samples);
        *pop = (0..n)
            .map(|_| (0..variants).map(|_| rng.random::<f64>() < density).collect())
            .collect();
    }
    pops
}

pub fn dataset(p: &Presence, variants: usize) -> VariantDataset {
    let mut data = VariantDataset::new(Arc::new(Registry::numbered(variants)));
    for (pop, samples) in p.iter().enumerate() {
        for (i, row) in samples.iter().enumerate() {
            let ids = row.iter().enumerate().filter(|(_, &x)| x).map(|(v, _)| v as u32).collect();
            data.push_sample(pop, format!("p{pop}s{i}"), ids).unwrap();
        }
    }
    data
}

/// Splits every population at `cut[pop]`: earlier samples are the pilot.
pub fn split(p: &Presence, cut: [usize; 2]) -> (Presence, Presence) {
    let mut a: Presence = Default::default();
    let mut b: Presence = Default::default();
    for pop in 0..2 {
        let c = cut[pop].min(p[pop].len());
        a[pop] = p[pop][..c].to_vec();
        b[pop] = p[pop][c..].to_vec();
    }
    (a, b)
}

/// Per-variant double loop over samples.
pub fn naive_ktons(pilot: &Presence, follow: &Presence, variants: usize) -> BTreeMap<CountPair, u64> {
    let mut out = BTreeMap::new();
    for v in 0..variants {
        if pilot.iter().flatten().any(|row| row[v]) {
            continue;
        }
        let k1 = follow[0].iter().filter(|row| row[v]).count() as u64;
        let k2 = follow[1].iter().filter(|row| row[v]).count() as u64;
        if k1 + k2 > 0 {
            *out.entry(CountPair::new(k1, k2)).or_insert(0) += 1;
        }
    }
    out
}

/// Set difference of follow-up variants and pilot variants.
pub fn naive_new_total(pilot: &Presence, follow: &Presence) -> u64 {
    let ids = |p: &Presence| -> HashSet<usize> {
        p.iter()
            .flatten()
            .flat_map(|row| row.iter().enumerate().filter(|(_, &x)| x).map(|(v, _)| v))
            .collect()
    };
    ids(follow).difference(&ids(pilot)).count() as u64
}

/// Distinct variants in every prefix of `order`, each recomputed from scratch.
pub fn naive_growth(p: &Presence, order: &[SampleRef]) -> Vec<f64> {
    (1..=order.len())
        .map(|len| {
            let mut seen = HashSet::new();
            for r in &order[..len] {
                for (v, &x) in p[r.pop][r.index].iter().enumerate() {
                    if x {
                        seen.insert(v);
                    }
                }
            }
            seen.len() as f64
        })
        .collect()
}

pub fn shuffled_order(rng: &mut ChaCha8Rng, p: &Presence) -> Vec<SampleRef> {
    use rand::seq::SliceRandom;
    let mut order: Vec<SampleRef> = (0..2)
        .flat_map(|pop| (0..p[pop].len()).map(move |i| SampleRef::new(pop, i)))
        .collect();
    order.shuffle(rng);
    order
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
