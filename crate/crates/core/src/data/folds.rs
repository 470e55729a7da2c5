use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::VariantDataset;

/// A partition of each population into `n_folds` blocks. Fold `f` uses
/// block `f` of each population as its pilot and every other sample as
/// follow-up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    /// `blocks[p][f]` lists the sample indices of population `p` in block `f`.
    pub blocks: [Vec<Vec<usize>>; 2],
}

impl FoldPlan {
    pub fn pilot(&self, fold: usize) -> [Vec<usize>; 2] {
        [self.blocks[0][fold].clone(), self.blocks[1][fold].clone()]
    }

    /// Samples outside block `fold`, in ascending index order.
    pub fn followup(&self, fold: usize) -> [Vec<usize>; 2] {
        let rest = |p: usize| {
            let mut v: Vec<usize> = self.blocks[p]
                .iter()
                .enumerate()
                .filter(|(f, _)| *f != fold)
                .flat_map(|(_, b)| b.iter().copied())
                .collect();
            v.sort_unstable();
            v
        };
        [rest(0), rest(1)]
    }

    /// `(pilot, follow-up)` datasets for one fold.
    pub fn split(&self, data: &VariantDataset, fold: usize) -> Result<(VariantDataset, VariantDataset)> {
        if fold >= self.n_folds {
            return Err(Error::InvalidArgument(format!("fold {fold} out of range 0..{}", self.n_folds)));
        }
        let [p1, p2] = self.pilot(fold);
        let [f1, f2] = self.followup(fold);
        Ok((data.select([&p1, &p2])?, data.select([&f1, &f2])?))
    }
}

/// Seeded partition of each population into `n_folds` blocks whose sizes
/// differ by at most one.
pub fn make_folds(data: &VariantDataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds == 0 {
        return Err(Error::InvalidArgument("n_folds must be at least 1".into()));
    }
    let sizes = data.sizes();
    for p in 0..2 {
        if (sizes.get(p) as usize) < n_folds {
            return Err(Error::InsufficientData(format!(
                "population {} has {} samples, fewer than {n_folds} folds",
                p + 1,
                sizes.get(p)
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = |n: usize| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (q, r) = (n / n_folds, n % n_folds);
        let mut out = Vec::with_capacity(n_folds);
        let mut start = 0;
        for f in 0..n_folds {
            let len = q + usize::from(f < r);
            let mut b = idx[start..start + len].to_vec();
            b.sort_unstable();
            out.push(b);
            start += len;
        }
        out
    };
    let b1 = block(sizes.p1 as usize);
    let b2 = block(sizes.p2 as usize);
    Ok(FoldPlan {
        n_folds,
        seed,
        blocks: [b1, b2],
    })
}
