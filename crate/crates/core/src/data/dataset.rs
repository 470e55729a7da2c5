use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::CountPair;

/// Interned variant names shared by every dataset cut from the same source.
#[derive(Debug, Default, Clone)]
pub struct Registry {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Registry {
    /// Registry of `n` variants named `v0`, `v1`, ...
    pub fn numbered(n: usize) -> Self {
        let mut r = Registry::default();
        for i in 0..n {
            r.intern(&format!("v{i}"));
        }
        r
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One individual: its label and the sorted ids of the variants it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub variants: Vec<u32>,
}

/// A sample by population (0 or 1) and position within that population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleRef {
    pub pop: usize,
    pub index: usize,
}

impl SampleRef {
    pub fn new(pop: usize, index: usize) -> Self {
        SampleRef { pop, index }
    }
}

/// Presence/absence data for two populations over a shared variant registry.
#[derive(Debug, Clone)]
pub struct VariantDataset {
    registry: Arc<Registry>,
    pops: [Vec<Sample>; 2],
}

impl VariantDataset {
    pub fn new(registry: Arc<Registry>) -> Self {
        VariantDataset {
            registry,
            pops: [Vec::new(), Vec::new()],
        }
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn shares_registry(&self, other: &VariantDataset) -> bool {
        Arc::ptr_eq(&self.registry, &other.registry)
    }

    pub fn sizes(&self) -> CountPair {
        CountPair::new(self.pops[0].len() as u64, self.pops[1].len() as u64)
    }

    pub fn samples(&self, pop: usize) -> &[Sample] {
        &self.pops[pop]
    }

    pub fn sample(&self, r: SampleRef) -> Option<&Sample> {
        self.pops.get(r.pop)?.get(r.index)
    }

    /// Adds a sample. Variant ids are sorted and deduplicated.
    pub fn push_sample(&mut self, pop: usize, id: impl Into<String>, mut variants: Vec<u32>) -> Result<()> {
        let id = id.into();
        if pop > 1 {
            return Err(Error::InvalidArgument(format!("population index {pop} out of range")));
        }
        if self.pops[pop].iter().any(|s| s.id == id) {
            return Err(Error::InvalidArgument(format!("duplicate sample id {id} in population {}", pop + 1)));
        }
        variants.sort_unstable();
        variants.dedup();
        if let Some(&last) = variants.last() {
            if last as usize >= self.registry.len() {
                return Err(Error::InvalidArgument(format!("variant id {last} is not in the registry")));
            }
        }
        self.pops[pop].push(Sample { id, variants });
        Ok(())
    }

    /// The samples at `indices[p]` of each population, sharing this registry.
    pub fn select(&self, indices: [&[usize]; 2]) -> Result<VariantDataset> {
        let mut pops: [Vec<Sample>; 2] = [Vec::new(), Vec::new()];
        for p in 0..2 {
            for &i in indices[p] {
                let s = self.pops[p].get(i).ok_or_else(|| {
                    Error::InvalidArgument(format!("sample index {i} out of range in population {}", p + 1))
                })?;
                pops[p].push(s.clone());
            }
        }
        Ok(VariantDataset {
            registry: Arc::clone(&self.registry),
            pops,
        })
    }

    /// Number of distinct variants carried by at least one sample.
    pub fn distinct_variants(&self) -> usize {
        let mut seen = vec![false; self.registry.len()];
        let mut n = 0;
        for s in self.pops.iter().flatten() {
            for &v in &s.variants {
                if !std::mem::replace(&mut seen[v as usize], true) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Same samples carrying the same variant names, regardless of registry.
    pub fn same_content(&self, other: &VariantDataset) -> bool {
        fn names<'a>(d: &'a VariantDataset, s: &Sample) -> Vec<&'a str> {
            let mut v: Vec<&str> = s.variants.iter().map(|&i| d.registry.name(i)).collect();
            v.sort_unstable();
            v
        }
        (0..2).all(|p| {
            self.pops[p].len() == other.pops[p].len()
                && self.pops[p]
                    .iter()
                    .zip(&other.pops[p])
                    .all(|(a, b)| a.id == b.id && names(self, a) == names(other, b))
        })
    }

    /// Parses the TSV occurrence format.
    ///
    /// Each line is `pop<TAB>sample<TAB>variant` with `pop` 1 or 2. A line
    /// with only `pop<TAB>sample` declares a sample carrying no variants.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn from_tsv_str(text: &str) -> Result<VariantDataset> {
        let mut registry = Registry::default();
        let mut order: [Vec<(String, Vec<u32>)>; 2] = [Vec::new(), Vec::new()];
        let mut position: [HashMap<String, usize>; 2] = [HashMap::new(), HashMap::new()];
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let pop = match fields[0].trim() {
                "1" => 0,
                "2" => 1,
                other => {
                    return Err(Error::Data {
                        line: line_no,
                        message: format!("population must be 1 or 2 (got {other:?})"),
                    })
                }
            };
            let sample = fields[1].trim();
            if sample.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty sample id".into(),
                });
            }
            let slot = *position[pop].entry(sample.to_string()).or_insert_with(|| {
                order[pop].push((sample.to_string(), Vec::new()));
                order[pop].len() - 1
            });
            if let Some(variant) = fields.get(2).map(|v| v.trim()).filter(|v| !v.is_empty()) {
                let id = registry.intern(variant);
                order[pop][slot].1.push(id);
            }
        }
        let mut data = VariantDataset::new(Arc::new(registry));
        for (pop, samples) in order.into_iter().enumerate() {
            for (id, variants) in samples {
                data.push_sample(pop, id, variants)?;
            }
        }
        Ok(data)
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<VariantDataset> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv_str(&text)
    }

    /// Serializes to the TSV format, each line of `header` written as a
    /// `#` comment first.
    pub fn to_tsv_string(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        for (p, samples) in self.pops.iter().enumerate() {
            for s in samples {
                if s.variants.is_empty() {
                    let _ = writeln!(out, "{}\t{}", p + 1, s.id);
                }
                for &v in &s.variants {
                    let _ = writeln!(out, "{}\t{}\t{}", p + 1, s.id, self.registry.name(v));
                }
            }
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>, header: &[String]) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv_string(header)).map_err(|e| Error::io(path, e))
    }
}

/// Per-variant frequencies in each population, for semi-synthetic sampling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable {
    pub rows: Vec<(String, [f64; 2])>,
}

impl FrequencyTable {
    /// Parses lines `variant<TAB>pop<TAB>frequency`. A population missing
    /// for a variant has frequency 0.
    pub fn from_tsv_str(text: &str) -> Result<FrequencyTable> {
        let mut rows: Vec<(String, [f64; 2])> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let pop = match fields[1] {
                "1" => 0,
                "2" => 1,
                other => {
                    return Err(Error::Data {
                        line: line_no,
                        message: format!("population must be 1 or 2 (got {other:?})"),
                    })
                }
            };
            let f: f64 = fields[2].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid frequency {:?}", fields[2]),
            })?;
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Data {
                    line: line_no,
                    message: format!("frequency {f} outside [0, 1]"),
                });
            }
            let slot = *index.entry(fields[0].to_string()).or_insert_with(|| {
                rows.push((fields[0].to_string(), [0.0; 2]));
                rows.len() - 1
            });
            rows[slot].1[pop] = f;
        }
        Ok(FrequencyTable { rows })
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<FrequencyTable> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv_str(&text)
    }
}
