use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CountPair, PredictiveMean};

use super::dataset::{SampleRef, VariantDataset};

/// Values indexed by `(k₁, k₂)` on `0..=v` squared. Cell `(0,0)` is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KtonTable {
    v: u64,
    cells: Vec<f64>,
}

impl KtonTable {
    pub fn zeros(v: u64) -> Self {
        let side = v as usize + 1;
        KtonTable {
            v,
            cells: vec![0.0; side * side],
        }
    }

    /// From row-major means such as [`crate::model::Predictor::kton_grid`].
    pub fn from_means(v: u64, means: &[PredictiveMean]) -> Result<Self> {
        let side = v as usize + 1;
        if means.len() != side * side {
            return Err(Error::InvalidArgument(format!(
                "expected {} cells for v = {v}, got {}",
                side * side,
                means.len()
            )));
        }
        let mut t = KtonTable {
            v,
            cells: means.iter().map(|m| m.lambda).collect(),
        };
        t.cells[0] = 0.0;
        Ok(t)
    }

    pub fn v(&self) -> u64 {
        self.v
    }

    fn pos(&self, k: CountPair) -> Option<usize> {
        (k.p1 <= self.v && k.p2 <= self.v).then(|| k.p1 as usize * (self.v as usize + 1) + k.p2 as usize)
    }

    pub fn get(&self, k: CountPair) -> f64 {
        self.pos(k).map_or(0.0, |i| self.cells[i])
    }

    pub fn set(&mut self, k: CountPair, value: f64) -> Result<()> {
        if k == CountPair::ZERO {
            return Err(Error::InvalidArgument("cell (0, 0) is fixed at 0".into()));
        }
        let i = self
            .pos(k)
            .ok_or_else(|| Error::InvalidArgument(format!("cell {k} outside the grid 0..={}", self.v)))?;
        self.cells[i] = value;
        Ok(())
    }

    /// Every cell except `(0,0)`, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (CountPair, f64)> + '_ {
        let side = self.v as usize + 1;
        self.cells
            .iter()
            .enumerate()
            .skip(1)
            .map(move |(i, &x)| (CountPair::new((i / side) as u64, (i % side) as u64), x))
    }

    pub fn sum(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn to_csv_string(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        out.push_str("k1,k2,value\n");
        let side = self.v as usize + 1;
        for (i, x) in self.cells.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i / side, i % side, x);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, header: &[String]) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string(header)).map_err(|e| Error::io(path, e))
    }
}

/// Distinct-variant counts along a sample order; entry `i` covers the first
/// `i + 1` samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GrowthCurve {
    pub counts: Vec<f64>,
}

impl GrowthCurve {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Pointwise mean of equally long curves.
    pub fn mean(curves: &[GrowthCurve]) -> Result<GrowthCurve> {
        let first = curves
            .first()
            .ok_or_else(|| Error::InvalidArgument("no curves to average".into()))?;
        if curves.iter().any(|c| c.len() != first.len()) {
            return Err(Error::InvalidArgument("curves differ in length".into()));
        }
        let n = curves.len() as f64;
        let counts = (0..first.len())
            .map(|i| curves.iter().map(|c| c.counts[i]).sum::<f64>() / n)
            .collect();
        Ok(GrowthCurve { counts })
    }

    pub fn to_csv_string(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        out.push_str("index,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, c);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, header: &[String]) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string(header)).map_err(|e| Error::io(path, e))
    }
}

fn check_registry(pilot: &VariantDataset, followup: &VariantDataset) -> Result<()> {
    if pilot.shares_registry(followup) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "pilot and follow-up must come from the same dataset".into(),
        ))
    }
}

/// Per-variant follow-up occurrence counts for variants absent from the
/// pilot; variants never seen anywhere are left at (0, 0).
fn new_variant_counts(pilot: &VariantDataset, followup: &VariantDataset) -> Vec<[u64; 2]> {
    let n = pilot.registry().len();
    let mut seen = vec![false; n];
    for p in 0..2 {
        for s in pilot.samples(p) {
            for &v in &s.variants {
                seen[v as usize] = true;
            }
        }
    }
    let mut counts = vec![[0u64; 2]; n];
    for p in 0..2 {
        for s in followup.samples(p) {
            for &v in &s.variants {
                if !seen[v as usize] {
                    counts[v as usize][p] += 1;
                }
            }
        }
    }
    counts
}

/// Numbers of new variants by follow-up occurrence counts, cells above `v`
/// dropped.
pub fn count_new_ktons(pilot: &VariantDataset, followup: &VariantDataset, v: u64) -> Result<KtonTable> {
    let mut t = KtonTable::zeros(v);
    for (k, n) in count_new_ktons_full(pilot, followup)? {
        if k.p1 <= v && k.p2 <= v {
            t.set(k, n as f64)?;
        }
    }
    Ok(t)
}

/// Untruncated version of [`count_new_ktons`], as a sparse map.
pub fn count_new_ktons_full(pilot: &VariantDataset, followup: &VariantDataset) -> Result<BTreeMap<CountPair, u64>> {
    check_registry(pilot, followup)?;
    let mut map = BTreeMap::new();
    for [a, b] in new_variant_counts(pilot, followup) {
        if a + b > 0 {
            *map.entry(CountPair::new(a, b)).or_insert(0) += 1;
        }
    }
    Ok(map)
}

/// Number of variants absent from the pilot and present in the follow-up.
pub fn count_new_total(pilot: &VariantDataset, followup: &VariantDataset) -> Result<u64> {
    check_registry(pilot, followup)?;
    Ok(new_variant_counts(pilot, followup)
        .iter()
        .filter(|c| c[0] + c[1] > 0)
        .count() as u64)
}

/// Cumulative distinct-variant counts along `order`.
pub fn growth_curve(data: &VariantDataset, order: &[SampleRef]) -> Result<GrowthCurve> {
    let mut seen = vec![false; data.registry().len()];
    let mut distinct = 0u64;
    let mut counts = Vec::with_capacity(order.len());
    for r in order {
        let s = data
            .sample(*r)
            .ok_or_else(|| Error::InvalidArgument(format!("no sample {} in population {}", r.index, r.pop + 1)))?;
        for &v in &s.variants {
            if !std::mem::replace(&mut seen[v as usize], true) {
                distinct += 1;
            }
        }
        counts.push(distinct as f64);
    }
    Ok(GrowthCurve { counts })
}

/// Growth of new variants along follow-up samples taken after the pilot:
/// entry `i` is the number of variants absent from `pilot` and present in
/// one of the first `i + 1` samples of `order`.
pub fn new_variant_curve(pilot: &VariantDataset, followup: &VariantDataset, order: &[SampleRef]) -> Result<GrowthCurve> {
    check_registry(pilot, followup)?;
    let mut seen = vec![false; pilot.registry().len()];
    for p in 0..2 {
        for s in pilot.samples(p) {
            for &v in &s.variants {
                seen[v as usize] = true;
            }
        }
    }
    let mut fresh = 0u64;
    let mut counts = Vec::with_capacity(order.len());
    for r in order {
        let s = followup
            .sample(*r)
            .ok_or_else(|| Error::InvalidArgument(format!("no sample {} in population {}", r.index, r.pop + 1)))?;
        for &v in &s.variants {
            if !std::mem::replace(&mut seen[v as usize], true) {
                fresh += 1;
            }
        }
        counts.push(fresh as f64);
    }
    Ok(GrowthCurve { counts })
}

/// Slope of the least-squares line through `(ln i, ln count_i)` over the
/// final third of the curve (1-based `i`).
pub fn fit_power_law_slope(curve: &GrowthCurve) -> Result<f64> {
    let len = curve.len();
    if len < 6 {
        return Err(Error::InvalidArgument(format!("curve needs at least 6 points (got {len})")));
    }
    let start = len - len / 3;
    let mut xs = Vec::with_capacity(len - start);
    let mut ys = Vec::with_capacity(len - start);
    for i in start..len {
        let c = curve.counts[i];
        if !(c > 0.0) {
            return Err(Error::Domain(format!("non-positive count {c} at index {}", i + 1)));
        }
        xs.push(((i + 1) as f64).ln());
        ys.push(c.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
