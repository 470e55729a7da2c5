//! Occurrence datasets, k-ton and growth-curve statistics, fold plans.

mod dataset;
mod folds;
mod stats;

pub use dataset::{FrequencyTable, Registry, Sample, SampleRef, VariantDataset};
pub use folds::{make_folds, FoldPlan};
pub use stats::{
    count_new_ktons, count_new_ktons_full, count_new_total, fit_power_law_slope, growth_curve, new_variant_curve,
    GrowthCurve, KtonTable,
};
