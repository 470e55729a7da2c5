//! Synthetic data from the two-population prior, the three-parameter beta
//! process, and per-variant frequency tables.

mod sampler;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::baselines::{Bp3Params, I3bpParams};
use crate::data::{FrequencyTable, Registry, VariantDataset};
use crate::error::{Error, Result};
use crate::model::{CountPair, Hyperparams};
use crate::numerics::ln_gamma;

use sampler::{bernoulli_positions, bernoulli_positions_nonempty, Intensity, MeshSampler};

/// Truncation and mesh for the point-process samplers, plus the seed and
/// sample sizes of the simulated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Atoms with both frequencies below this are dropped.
    pub truncation_floor: f64,
    /// Cell boundaries along each axis, from the floor up to 1.
    pub mesh: Vec<f64>,
    pub seed: u64,
    pub n_samples: CountPair,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::new(CountPair::new(500, 500), 0)
    }
}

/// Boundaries `floor·10^{i/per_decade}` capped at 1.
fn log_mesh(floor: f64, per_decade: u32) -> Vec<f64> {
    let decades = -floor.log10();
    let steps = (decades * per_decade as f64 - 1e-9).ceil().max(1.0) as u32;
    let mut mesh: Vec<f64> = (0..steps)
        .map(|i| floor * 10f64.powf(i as f64 / per_decade as f64))
        .collect();
    mesh.push(1.0);
    mesh
}

impl SimConfig {
    /// Floor `1e-10` with one cell per decade.
    pub fn new(n_samples: CountPair, seed: u64) -> Self {
        SimConfig {
            truncation_floor: 1e-10,
            mesh: log_mesh(1e-10, 1),
            seed,
            n_samples,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.truncation_floor = floor;
        self.mesh = log_mesh(floor, 1);
        self
    }

    /// Splits every decade of the mesh into `per_decade` log-equal cells.
    pub fn with_subdivisions(mut self, per_decade: u32) -> Self {
        self.mesh = log_mesh(self.truncation_floor, per_decade.max(1));
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_floor > 0.0 && self.truncation_floor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation floor must lie in (0, 1) (got {})",
                self.truncation_floor
            )));
        }
        if self.mesh.len() < 2 || self.mesh.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("mesh boundaries must be strictly increasing".into()));
        }
        if self.mesh[0] != self.truncation_floor || *self.mesh.last().unwrap() != 1.0 {
            return Err(Error::InvalidArgument("mesh must span [truncation floor, 1]".into()));
        }
        Ok(())
    }
}

/// One atom of a truncated realization of the frequency process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub id: u64,
    pub theta: [f64; 2],
}

/// The atoms of a truncated realization, ids `0, 1, ...`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrequencyAtoms {
    pub atoms: Vec<Atom>,
}

impl FrequencyAtoms {
    fn from_points(points: Vec<[f64; 2]>) -> Self {
        FrequencyAtoms {
            atoms: points
                .into_iter()
                .enumerate()
                .map(|(i, theta)| Atom { id: i as u64, theta })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Atoms of the two-population prior with at least one frequency above the
/// floor.
pub fn sample_proposed_atoms(phi: &Hyperparams, cfg: &SimConfig) -> Result<FrequencyAtoms> {
    cfg.validate()?;
    let s = MeshSampler::new(Intensity::proposed(phi)?, &cfg.mesh)?;
    Ok(FrequencyAtoms::from_points(s.sample(&mut ChaCha8Rng::seed_from_u64(cfg.seed))?))
}

/// Atoms of a process with intensity `mass · Beta(θ₁; a₁, b₁) · Beta(θ₂; a₂, b₂)`
/// outside `(0, floor)²`. Useful as a target with closed-form marginals.
pub fn sample_beta_product_atoms(mass: f64, a: [f64; 2], b: [f64; 2], cfg: &SimConfig) -> Result<FrequencyAtoms> {
    cfg.validate()?;
    let s = MeshSampler::new(Intensity::beta_product(mass, a, b)?, &cfg.mesh)?;
    Ok(FrequencyAtoms::from_points(s.sample(&mut ChaCha8Rng::seed_from_u64(cfg.seed))?))
}

fn sample_names(n: u64) -> impl Iterator<Item = String> {
    (0..n).map(|i| format!("s{i}"))
}

/// Builds a dataset from per-variant carrier lists. Variants with no
/// carriers are left out of the registry.
fn assemble(names: Vec<String>, carriers: Vec<[Vec<u32>; 2]>, n: CountPair) -> Result<VariantDataset> {
    let mut registry = Registry::default();
    let mut per_sample: [Vec<Vec<u32>>; 2] = [vec![Vec::new(); n.p1 as usize], vec![Vec::new(); n.p2 as usize]];
    for (name, c) in names.iter().zip(&carriers) {
        if c[0].is_empty() && c[1].is_empty() {
            continue;
        }
        let id = registry.intern(name);
        for p in 0..2 {
            for &s in &c[p] {
                per_sample[p][s as usize].push(id);
            }
        }
    }
    let mut data = VariantDataset::new(Arc::new(registry));
    for (p, samples) in per_sample.into_iter().enumerate() {
        for (name, vars) in sample_names(n.get(p)).zip(samples) {
            data.push_sample(p, name, vars)?;
        }
    }
    Ok(data)
}

/// Each of `n.p` samples of population `p` carries atom `ℓ` independently
/// with probability `θ_{p,ℓ}`. Variant `ℓ` is named `v{id}`.
pub fn sample_bernoulli_process(atoms: &FrequencyAtoms, n: CountPair, seed: u64) -> Result<VariantDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Vec::with_capacity(atoms.len());
    let mut carriers = Vec::with_capacity(atoms.len());
    for a in &atoms.atoms {
        let mut c: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
        for p in 0..2 {
            bernoulli_positions(&mut rng, 0, n.get(p) as usize, a.theta[p], &mut c[p]);
        }
        names.push(format!("v{}", a.id));
        carriers.push(c);
    }
    assemble(names, carriers, n)
}

/// Draws the variants seen at least once in `n` samples directly, without
/// materializing the unseen atoms.
///
/// The seen atoms form a Poisson process whose intensity is the prior rate
/// times `1 - (1-θ₁)^{n₁}(1-θ₂)^{n₂}`. Each one is then assigned carriers
/// conditionally on having at least one. The envelope is computed once, so
/// repeated draws are cheap.
#[derive(Debug, Clone)]
pub struct ObservedSampler {
    sampler: MeshSampler,
    n: CountPair,
}

impl ObservedSampler {
    /// Uses `cfg.n_samples` and `cfg.mesh`; the seed is passed per draw.
    pub fn new(phi: &Hyperparams, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_samples;
        if n.total() == 0 {
            return Err(Error::InvalidArgument("at least one sample is needed".into()));
        }
        Ok(ObservedSampler {
            sampler: MeshSampler::new(Intensity::proposed(phi)?.observed_in(n), &cfg.mesh)?,
            n,
        })
    }

    /// Frequencies of the seen atoms and, per population, the indices of the
    /// samples carrying each of them.
    pub fn sample_carriers(&self, seed: u64) -> Result<Vec<([f64; 2], [Vec<u32>; 2])>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = self.sampler.sample(&mut rng)?;
        let (n1, n2) = (self.n.p1 as usize, self.n.p2 as usize);
        Ok(points
            .into_iter()
            .map(|[x, y]| {
                let ln_miss1 = n1 as f64 * (-x).ln_1p();
                let ln_miss = ln_miss1 + n2 as f64 * (-y).ln_1p();
                let p_first = -ln_miss1.exp_m1() / -ln_miss.exp_m1();
                let mut c: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
                if n1 > 0 && rng.random::<f64>() < p_first {
                    bernoulli_positions_nonempty(&mut rng, n1, x, &mut c[0]);
                    bernoulli_positions(&mut rng, 0, n2, y, &mut c[1]);
                } else {
                    bernoulli_positions_nonempty(&mut rng, n2, y, &mut c[1]);
                }
                ([x, y], c)
            })
            .collect())
    }

    pub fn sample(&self, seed: u64) -> Result<VariantDataset> {
        let drawn = self.sample_carriers(seed)?;
        let names = (0..drawn.len()).map(|i| format!("v{i}")).collect();
        let carriers = drawn.into_iter().map(|(_, c)| c).collect();
        assemble(names, carriers, self.n)
    }

    /// Expected number of rejection-sampler proposals per draw.
    pub fn expected_proposals(&self) -> f64 {
        self.sampler.expected_proposals()
    }
}

/// One dataset of `cfg.n_samples` samples from the two-population prior,
/// truncated at `cfg.truncation_floor`.
pub fn sample_observed(phi: &Hyperparams, cfg: &SimConfig) -> Result<VariantDataset> {
    ObservedSampler::new(phi, cfg)?.sample(cfg.seed)
}

/// Sequential three-parameter Indian buffet. All `n_total` customers land in
/// population 1; dishes are named `v0, v1, ...` in order of first taste.
pub fn sample_ibp_3bp(p: &Bp3Params, n_total: u64, seed: u64) -> Result<VariantDataset> {
    p.validate()?;
    if n_total == 0 {
        return Err(Error::InvalidArgument("n_total must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<u64> = Vec::new();
    let mut plates: Vec<Vec<u32>> = Vec::with_capacity(n_total as usize);
    for n_prev in 0..n_total {
        let mut plate = Vec::new();
        let denom = n_prev as f64 + p.c;
        for (dish, m) in counts.iter_mut().enumerate() {
            if rng.random::<f64>() < (*m as f64 - p.sigma) / denom {
                *m += 1;
                plate.push(dish as u32);
            }
        }
        // Γ(1+c) Γ(n+c+σ) / (Γ(n+1+c) Γ(c+σ))
        let nf = n_prev as f64;
        let rate = p.alpha
            * (ln_gamma(1.0 + p.c) + ln_gamma(nf + p.c + p.sigma) - ln_gamma(nf + 1.0 + p.c) - ln_gamma(p.c + p.sigma)).exp();
        let fresh = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(&mut rng) as u64
        } else {
            0
        };
        for _ in 0..fresh {
            plate.push(counts.len() as u32);
            counts.push(1);
        }
        plates.push(plate);
    }
    let mut data = VariantDataset::new(Arc::new(Registry::numbered(counts.len())));
    for (name, plate) in sample_names(n_total).zip(plates) {
        data.push_sample(0, name, plate)?;
    }
    Ok(data)
}

/// Two unrelated three-parameter Indian buffets, one per population. No
/// variant is shared; population 2's dishes are numbered after population 1's.
pub fn sample_i3bp(p: &I3bpParams, n: CountPair, seed: u64) -> Result<VariantDataset> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: [u64; 2] = [rng.random(), rng.random()];
    let mut parts = Vec::with_capacity(2);
    for (pop, q) in [p.pop1, p.pop2].iter().enumerate() {
        let size = n.get(pop);
        parts.push(if size == 0 { None } else { Some(sample_ibp_3bp(q, size, seeds[pop])?) });
    }
    let width = |d: &Option<VariantDataset>| d.as_ref().map_or(0, |d| d.registry().len());
    let offset = width(&parts[0]) as u32;
    let mut data = VariantDataset::new(Arc::new(Registry::numbered(width(&parts[0]) + width(&parts[1]))));
    for (pop, part) in parts.iter().enumerate() {
        let shift = if pop == 0 { 0 } else { offset };
        for s in part.iter().flat_map(|d| d.samples(0)) {
            data.push_sample(pop, s.id.clone(), s.variants.iter().map(|v| v + shift).collect())?;
        }
    }
    Ok(data)
}

/// Randomly assigns the samples of a one-population dataset to two
/// populations of the given sizes, keeping variant ids.
pub fn split_pooled(data: &VariantDataset, sizes: CountPair, seed: u64) -> Result<VariantDataset> {
    if data.sizes().p2 != 0 {
        return Err(Error::InvalidArgument("pooled data must sit in population 1".into()));
    }
    if sizes.total() != data.sizes().p1 {
        return Err(Error::InvalidArgument(format!(
            "sizes {sizes} do not add up to {} samples",
            data.sizes().p1
        )));
    }
    let mut idx: Vec<usize> = (0..data.sizes().p1 as usize).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = idx.split_at(sizes.p1 as usize);
    let mut out = VariantDataset::new(Arc::clone(data.registry()));
    for (pop, part) in [(0, a), (1, b)] {
        for &i in part {
            let s = &data.samples(0)[i];
            out.push_sample(pop, s.id.clone(), s.variants.clone())?;
        }
    }
    Ok(out)
}

/// Independent presence draws at tabulated per-population frequencies.
pub fn sample_semisynthetic(table: &FrequencyTable, n: CountPair, seed: u64) -> Result<VariantDataset> {
    for (row, (name, f)) in table.rows.iter().enumerate() {
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Data {
                line: row + 1,
                message: format!("frequency of {name} outside [0, 1]: {f:?}"),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Vec::with_capacity(table.rows.len());
    let mut carriers = Vec::with_capacity(table.rows.len());
    for (name, f) in &table.rows {
        let mut c: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
        for p in 0..2 {
            bernoulli_positions(&mut rng, 0, n.get(p) as usize, f[p], &mut c[p]);
        }
        names.push(name.clone());
        carriers.push(c);
    }
    assemble(names, carriers, n)
}
