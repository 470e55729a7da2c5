//! Drivers behind the `vf` binary. Each returns plain data; the binary only
//! parses flags and writes files.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{d3bp_kton_mean, i3bp_kton_mean, single_population_curve, RisingConvention};
use crate::data::{
    count_new_ktons, fit_power_law_slope, growth_curve, make_folds, new_variant_curve, GrowthCurve, KtonTable,
    SampleRef, VariantDataset,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_d3bp, fit_i3bp, fit_proposed, FitConfig, FitResult, FittedParams};
use crate::model::{CountPair, Hyperparams, PredictiveMean, Predictor};
use crate::numerics::QuadratureConfig;
use crate::simulation::{sample_i3bp, sample_ibp_3bp, split_pooled, ObservedSampler, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Proposed,
    D3bp,
    I3bp,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Proposed => "proposed",
            ModelKind::D3bp => "d3bp",
            ModelKind::I3bp => "i3bp",
        }
    }

    pub fn of(params: &FittedParams) -> ModelKind {
        match params {
            FittedParams::Proposed(_) => ModelKind::Proposed,
            FittedParams::D3bp(_) => ModelKind::D3bp,
            FittedParams::I3bp(_) => ModelKind::I3bp,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(ModelKind::Proposed),
            "d3bp" => Ok(ModelKind::D3bp),
            "i3bp" => Ok(ModelKind::I3bp),
            _ => Err(Error::InvalidArgument(format!(
                "unknown model {s:?}; expected proposed, d3bp or i3bp"
            ))),
        }
    }
}

/// Settings shared by the subcommands. Serialized into every output header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub fit: FitConfig,
    pub quad: QuadratureConfig,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn new(model: ModelKind, seed: u64) -> Self {
        RunConfig {
            model,
            seed,
            fit: FitConfig {
                seed,
                ..FitConfig::default()
            },
            quad: QuadratureConfig::default(),
            sim: SimConfig::default().with_subdivisions(4).with_seed(seed),
        }
    }

    /// `#`-comment lines naming the command and the full configuration.
    pub fn header(&self, command: &str, extra: &[(&str, String)]) -> Vec<String> {
        let mut out = vec![
            format!("vf {command}"),
            format!("seed {}", self.seed),
            format!("config {}", serde_json::to_string(self).expect("config serializes")),
        ];
        out.extend(extra.iter().map(|(k, v)| format!("{k} {v}")));
        out
    }
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn header_lines(header: &[String]) -> String {
    header.iter().map(|h| format!("# {h}\n")).collect()
}

pub fn fit(data: &VariantDataset, cfg: &RunConfig) -> Result<FitResult> {
    match cfg.model {
        ModelKind::Proposed => fit_proposed(data, &cfg.fit, &cfg.quad),
        ModelKind::D3bp => fit_d3bp(data, &cfg.fit),
        ModelKind::I3bp => fit_i3bp(data, &cfg.fit),
    }
}

/// Reads parameters from a fit result or from a bare parameter object.
pub fn parse_params(text: &str) -> Result<FittedParams> {
    if let Ok(r) = FitResult::from_json(text) {
        return Ok(r.params);
    }
    let p: FittedParams = serde_json::from_str(text)?;
    match p {
        FittedParams::Proposed(h) => h.validate()?,
        FittedParams::D3bp(b) => b.validate()?,
        FittedParams::I3bp(i) => i.validate()?,
    }
    Ok(p)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<FittedParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_params(&text)
}

/// Parses a comma-separated list of follow-up sizes. `M1:M2` is one point;
/// `M1:M2:step` expands to the path `(step,0), (2·step,0), …, (M1,0),
/// (M1,step), …, (M1,M2)`, each leg ending exactly at its bound.
pub fn parse_sweep(spec: &str) -> Result<Vec<CountPair>> {
    let bad = |item: &str, why: &str| Error::InvalidArgument(format!("bad sweep item {item:?}: {why}"));
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<u64> = item
            .split(':')
            .map(|x| x.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(item, "expected nonnegative integers"))?;
        match parts[..] {
            [m1, m2] => out.push(CountPair::new(m1, m2)),
            [m1, m2, step] => {
                if step == 0 {
                    return Err(bad(item, "step must be positive"));
                }
                let leg = |end: u64| {
                    let mut v: Vec<u64> = (1..=end / step).map(|i| i * step).collect();
                    if end % step != 0 {
                        v.push(end);
                    }
                    v
                };
                out.extend(leg(m1).into_iter().map(|a| CountPair::new(a, 0)));
                out.extend(leg(m2).into_iter().map(|b| CountPair::new(m1, b)));
                if m1 == 0 && m2 == 0 {
                    out.push(CountPair::ZERO);
                }
            }
            _ => return Err(bad(item, "expected M1:M2 or M1:M2:step")),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty sweep".into()));
    }
    Ok(out)
}

/// Predicted totals at each follow-up size, and whether all quadratures
/// converged. Points on one sweep path share a single pass.
pub fn predict_totals(
    params: &FittedParams,
    n: CountPair,
    points: &[CountPair],
    quad: &QuadratureConfig,
) -> Result<(Vec<PredictiveMean>, bool)> {
    let exact = |lambda: f64| PredictiveMean { lambda, quad_error: 0.0 };
    match params {
        FittedParams::Proposed(phi) => {
            let pred = Predictor::new(phi, quad)?;
            let far = CountPair::new(
                points.iter().map(|m| m.p1).max().unwrap_or(0),
                points.iter().map(|m| m.p2).max().unwrap_or(0),
            );
            let (curve, ok) = pred.total_curve_best_effort(n, far)?;
            if points.iter().all(|m| curve.at(*m).is_some()) {
                return Ok((points.iter().map(|m| curve.at(*m).unwrap()).collect(), ok));
            }
            let mut all_ok = true;
            let mut out = Vec::with_capacity(points.len());
            for m in points {
                let (c, ok) = pred.total_curve_best_effort(n, *m)?;
                all_ok &= ok;
                out.push(c.at(*m).expect("endpoint lies on its own sweep"));
            }
            Ok((out, all_ok))
        }
        FittedParams::D3bp(p) => {
            let reach = points.iter().map(|m| m.total()).max().unwrap_or(0);
            let curve = single_population_curve(n.total(), reach, p, RisingConvention::Pochhammer)?;
            let at = |j: u64| if j == 0 { 0.0 } else { curve[j as usize - 1] };
            Ok((points.iter().map(|m| exact(at(m.total()))).collect(), true))
        }
        FittedParams::I3bp(p) => {
            let c1 = single_population_curve(n.p1, points.iter().map(|m| m.p1).max().unwrap_or(0), &p.pop1, RisingConvention::Pochhammer)?;
            let c2 = single_population_curve(n.p2, points.iter().map(|m| m.p2).max().unwrap_or(0), &p.pop2, RisingConvention::Pochhammer)?;
            let at = |c: &[f64], j: u64| if j == 0 { 0.0 } else { c[j as usize - 1] };
            Ok((points.iter().map(|m| exact(at(&c1, m.p1) + at(&c2, m.p2))).collect(), true))
        }
    }
}

/// Predicted k-ton means for `k` in `0..=v` squared, row-major like
/// [`Predictor::kton_grid`], with the convergence flag.
pub fn predict_ktons(
    params: &FittedParams,
    n: CountPair,
    m: CountPair,
    v: u64,
    quad: &QuadratureConfig,
) -> Result<(Vec<PredictiveMean>, bool)> {
    if let FittedParams::Proposed(phi) = params {
        let (means, _, ok) = Predictor::new(phi, quad)?.kton_grid_best_effort(n, m, v)?;
        return Ok((means, ok));
    }
    let side = v as usize + 1;
    let mut out = vec![PredictiveMean::default(); side * side];
    for k1 in 0..=v.min(m.p1) {
        for k2 in 0..=v.min(m.p2) {
            let k = CountPair::new(k1, k2);
            if k1 + k2 == 0 {
                continue;
            }
            let lambda = match params {
                FittedParams::D3bp(p) => d3bp_kton_mean(n, m, k, p)?,
                FittedParams::I3bp(p) => i3bp_kton_mean(n, m, k, p)?,
                FittedParams::Proposed(_) => unreachable!(),
            };
            out[k1 as usize * side + k2 as usize] = PredictiveMean { lambda, quad_error: 0.0 };
        }
    }
    Ok((out, true))
}

/// One output row of `predict`. `k` is `None` for the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub m: CountPair,
    pub k: Option<CountPair>,
    pub mean: PredictiveMean,
}

/// Totals and k-ton cells (components up to `v`) at every sweep point.
pub fn predict(
    params: &FittedParams,
    n: CountPair,
    sweep: &[CountPair],
    v: u64,
    quad: &QuadratureConfig,
) -> Result<(Vec<PredictionRow>, bool)> {
    let (totals, mut ok) = predict_totals(params, n, sweep, quad)?;
    let side = v as usize + 1;
    let mut rows = Vec::new();
    for (m, total) in sweep.iter().zip(totals) {
        rows.push(PredictionRow { m: *m, k: None, mean: total });
        if m.total() == 0 {
            continue;
        }
        let (grid, cells_ok) = predict_ktons(params, n, *m, v, quad)?;
        ok &= cells_ok;
        for k1 in 0..=v.min(m.p1) {
            for k2 in 0..=v.min(m.p2) {
                if k1 + k2 > 0 {
                    let k = CountPair::new(k1, k2);
                    rows.push(PredictionRow {
                        m: *m,
                        k: Some(k),
                        mean: grid[k1 as usize * side + k2 as usize],
                    });
                }
            }
        }
    }
    Ok((rows, ok))
}

pub fn predictions_csv(rows: &[PredictionRow], header: &[String]) -> String {
    let mut out = header_lines(header);
    out.push_str("m1,m2,k1,k2,lambda,quad_error\n");
    for r in rows {
        let (k1, k2) = r.k.map_or((String::new(), String::new()), |k| (k.p1.to_string(), k.p2.to_string()));
        let _ = writeln!(out, "{},{},{k1},{k2},{},{}", r.m.p1, r.m.p2, r.mean.lambda, r.mean.quad_error);
    }
    out
}

/// Observed new-variant k-ton tables of every fold.
pub fn observed_ktons(data: &VariantDataset, n_folds: usize, seed: u64, v: u64) -> Result<Vec<KtonTable>> {
    let plan = make_folds(data, n_folds, seed)?;
    (0..n_folds)
        .map(|f| {
            let (pilot, follow) = plan.split(data, f)?;
            count_new_ktons(&pilot, &follow, v)
        })
        .collect()
}

pub fn ktons_csv(tables: &[KtonTable], header: &[String]) -> String {
    let mut out = header_lines(header);
    out.push_str("fold,k1,k2,value\n");
    for (f, t) in tables.iter().enumerate() {
        for (k, value) in t.iter() {
            let _ = writeln!(out, "{f},{},{},{value}", k.p1, k.p2);
        }
    }
    out
}

/// A dataset from the selected model: the proposed prior through its
/// observed-variant sampler, the d3BP as one pooled buffet split at random,
/// the i3BP as two unrelated buffets.
pub fn simulate(params: &FittedParams, sim: &SimConfig) -> Result<VariantDataset> {
    let n = sim.n_samples;
    match params {
        FittedParams::Proposed(phi) => ObservedSampler::new(phi, sim)?.sample(sim.seed),
        FittedParams::D3bp(p) => {
            if n.total() == 0 {
                return Ok(VariantDataset::new(Default::default()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
            let pooled = sample_ibp_3bp(p, n.total(), rng.random())?;
            split_pooled(&pooled, n, rng.random())
        }
        FittedParams::I3bp(p) => sample_i3bp(p, n, sim.seed),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub model: ModelKind,
    pub params: FittedParams,
    pub seed: u64,
    pub n_samples: CountPair,
    pub truncation_floor: f64,
    pub mesh_cells_per_axis: usize,
}

impl Provenance {
    pub fn new(params: &FittedParams, sim: &SimConfig) -> Self {
        Provenance {
            model: ModelKind::of(params),
            params: *params,
            seed: sim.seed,
            n_samples: sim.n_samples,
            truncation_floor: sim.truncation_floor,
            mesh_cells_per_axis: sim.mesh.len() - 1,
        }
    }
}

/// `(pred - obs) / obs`; NaN when nothing was observed.
pub fn relative_residual(predicted: f64, observed: f64) -> f64 {
    if observed == 0.0 {
        f64::NAN
    } else {
        (predicted - observed) / observed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub fold: usize,
    /// 1-based position along the sweep.
    pub index: usize,
    pub m: CountPair,
    pub predicted: f64,
    pub observed: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KtonRow {
    pub fold: usize,
    pub k: CountPair,
    pub predicted: f64,
    pub observed: f64,
    pub residual: f64,
}

/// Across-fold mean and sample standard deviation of relative residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    /// Some fold observed fewer than 2.
    pub flagged: bool,
}

impl Summary {
    pub fn of(residuals: &[f64], observed: &[f64]) -> Summary {
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let std = if residuals.len() > 1 {
            (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary {
            mean,
            std,
            flagged: observed.iter().any(|o| *o < 2.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrossvalReport {
    pub fits: Vec<FitResult>,
    pub curves: Vec<CurveRow>,
    pub ktons: Vec<KtonRow>,
    /// Per sweep index shared by every fold.
    pub curve_summary: Vec<(usize, Summary)>,
    pub kton_summary: Vec<(CountPair, Summary)>,
    /// Every fit converged and every quadrature met its tolerance.
    pub converged: bool,
}

struct FoldOutcome {
    fit: FitResult,
    curves: Vec<CurveRow>,
    ktons: Vec<KtonRow>,
    ok: bool,
}

/// The follow-up sweep `(1,0), …, (F₁,0), (F₁,1), …, (F₁,F₂)`.
pub fn followup_sweep(f: CountPair) -> Vec<CountPair> {
    (1..=f.p1)
        .map(|a| CountPair::new(a, 0))
        .chain((1..=f.p2).map(|b| CountPair::new(f.p1, b)))
        .collect()
}

fn run_fold(data: &VariantDataset, plan: &crate::data::FoldPlan, fold: usize, cfg: &RunConfig) -> Result<FoldOutcome> {
    let (pilot, follow) = plan.split(data, fold)?;
    let fold_cfg = RunConfig {
        fit: FitConfig {
            seed: cfg.seed.wrapping_add(fold as u64),
            ..cfg.fit
        },
        ..cfg.clone()
    };
    let fit_result = fit(&pilot, &fold_cfg)?;
    let n = pilot.sizes();
    let f = follow.sizes();
    let sweep = followup_sweep(f);
    let (pred, mut ok) = predict_totals(&fit_result.params, n, &sweep, &cfg.quad)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut order = Vec::with_capacity(sweep.len());
    for pop in 0..2 {
        let mut idx: Vec<usize> = (0..f.get(pop) as usize).collect();
        idx.shuffle(&mut rng);
        order.extend(idx.into_iter().map(|i| SampleRef::new(pop, i)));
    }
    let observed = new_variant_curve(&pilot, &follow, &order)?;
    let curves = sweep
        .iter()
        .zip(&pred)
        .zip(&observed.counts)
        .enumerate()
        .map(|(i, ((m, p), o))| CurveRow {
            fold,
            index: i + 1,
            m: *m,
            predicted: p.lambda,
            observed: *o,
            residual: relative_residual(p.lambda, *o),
        })
        .collect();
    let v = cfg.fit.v;
    let (grid, cells_ok) = predict_ktons(&fit_result.params, n, f, v, &cfg.quad)?;
    ok &= cells_ok;
    let obs = count_new_ktons(&pilot, &follow, v)?;
    let side = v as usize + 1;
    let ktons = obs
        .iter()
        .map(|(k, o)| {
            let p = grid[k.p1 as usize * side + k.p2 as usize].lambda;
            KtonRow {
                fold,
                k,
                predicted: p,
                observed: o,
                residual: relative_residual(p, o),
            }
        })
        .collect();
    ok &= fit_result.converged;
    Ok(FoldOutcome {
        fit: fit_result,
        curves,
        ktons,
        ok,
    })
}

/// The fold protocol: per fold, fit on the pilot block, predict along the
/// follow-up sweep and at the full follow-up, and compare with what the
/// follow-up samples contain. Folds run in parallel.
pub fn crossval(data: &VariantDataset, n_folds: usize, cfg: &RunConfig) -> Result<CrossvalReport> {
    let plan = make_folds(data, n_folds, cfg.seed)?;
    let outcomes: Vec<FoldOutcome> = (0..n_folds)
        .into_par_iter()
        .map(|f| run_fold(data, &plan, f, cfg))
        .collect::<Result<_>>()?;
    let shared_len = outcomes.iter().map(|o| o.curves.len()).min().unwrap_or(0);
    let curve_summary = (0..shared_len)
        .map(|i| {
            let r: Vec<f64> = outcomes.iter().map(|o| o.curves[i].residual).collect();
            let ob: Vec<f64> = outcomes.iter().map(|o| o.curves[i].observed).collect();
            (i + 1, Summary::of(&r, &ob))
        })
        .collect();
    let cells = outcomes.first().map_or(0, |o| o.ktons.len());
    let kton_summary = (0..cells)
        .map(|c| {
            let r: Vec<f64> = outcomes.iter().map(|o| o.ktons[c].residual).collect();
            let ob: Vec<f64> = outcomes.iter().map(|o| o.ktons[c].observed).collect();
            (outcomes[0].ktons[c].k, Summary::of(&r, &ob))
        })
        .collect();
    let converged = outcomes.iter().all(|o| o.ok);
    let mut report = CrossvalReport {
        fits: Vec::with_capacity(n_folds),
        curves: Vec::new(),
        ktons: Vec::new(),
        curve_summary,
        kton_summary,
        converged,
    };
    for o in outcomes {
        report.fits.push(o.fit);
        report.curves.extend(o.curves);
        report.ktons.extend(o.ktons);
    }
    Ok(report)
}

impl CrossvalReport {
    pub fn curves_csv(&self, header: &[String]) -> String {
        let mut out = header_lines(header);
        out.push_str("fold,index,m1,m2,predicted,observed,rel_residual\n");
        for r in &self.curves {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.fold, r.index, r.m.p1, r.m.p2, r.predicted, r.observed, r.residual
            );
        }
        out
    }

    pub fn ktons_csv(&self, header: &[String]) -> String {
        let mut out = header_lines(header);
        out.push_str("fold,k1,k2,predicted,observed,rel_residual\n");
        for r in &self.ktons {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.fold, r.k.p1, r.k.p2, r.predicted, r.observed, r.residual
            );
        }
        out
    }

    /// Across-fold summaries. Sweep rows carry `index`; k-ton rows carry
    /// `k1,k2`. `flagged` marks rows where some fold observed fewer than 2.
    pub fn summary_csv(&self, header: &[String]) -> String {
        let mut out = header_lines(header);
        out.push_str("kind,index,k1,k2,mean_rel_residual,std_rel_residual,flagged\n");
        for (i, s) in &self.curve_summary {
            let _ = writeln!(out, "curve,{i},,,{},{},{}", s.mean, s.std, s.flagged);
        }
        for (k, s) in &self.kton_summary {
            let _ = writeln!(out, "kton,,{},{},{},{},{}", k.p1, k.p2, s.mean, s.std, s.flagged);
        }
        out
    }
}

/// How the study grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    /// Only population 1 is sampled.
    Projection1,
    /// Only population 2 is sampled.
    Projection2,
    /// Population 2 keeps `⌈ρ N₁⌉` samples while population 1 grows.
    Proportional(f64),
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidArgument(format!(
                "unknown scheme {s:?}; expected projection-1, projection-2 or proportional:RHO"
            ))
        };
        match s {
            "projection-1" => return Ok(Scheme::Projection1),
            "projection-2" => return Ok(Scheme::Projection2),
            _ => {}
        }
        let rho = s
            .strip_prefix("proportional:")
            .or_else(|| s.strip_prefix("proportional(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(bad)?;
        let rho: f64 = rho.parse().map_err(|_| bad())?;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("ratio must be positive (got {rho})")));
        }
        Ok(Scheme::Proportional(rho))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Projection1 => write!(f, "projection-1"),
            Scheme::Projection2 => write!(f, "projection-2"),
            Scheme::Proportional(rho) => write!(f, "proportional:{rho}"),
        }
    }
}

impl Scheme {
    /// Sample sizes when the curve has `steps` points.
    pub fn sizes(&self, steps: u64) -> CountPair {
        match self {
            Scheme::Projection1 => CountPair::new(steps, 0),
            Scheme::Projection2 => CountPair::new(0, steps),
            Scheme::Proportional(rho) => CountPair::new(steps, (rho * steps as f64).ceil() as u64),
        }
    }

    /// Sample order and the positions in it after which each curve point is
    /// read off.
    fn order(&self, steps: u64) -> (Vec<SampleRef>, Vec<usize>) {
        match self {
            Scheme::Projection1 | Scheme::Projection2 => {
                let pop = usize::from(*self == Scheme::Projection2);
                ((0..steps as usize).map(|i| SampleRef::new(pop, i)).collect(), (0..steps as usize).collect())
            }
            Scheme::Proportional(rho) => {
                let mut order = Vec::new();
                let mut marks = Vec::with_capacity(steps as usize);
                let mut taken2 = 0usize;
                for n1 in 1..=steps as usize {
                    order.push(SampleRef::new(0, n1 - 1));
                    let want = (rho * n1 as f64).ceil() as usize;
                    while taken2 < want {
                        order.push(SampleRef::new(1, taken2));
                        taken2 += 1;
                    }
                    marks.push(order.len() - 1);
                }
                (order, marks)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerLawReport {
    pub scheme: Scheme,
    pub replicates: usize,
    pub mean_curve: GrowthCurve,
    /// Least-squares log-log slope over the final third of the mean curve.
    pub slope: f64,
}

/// Averages the growth curves of `replicates` independent studies of
/// `steps` points under `scheme` and fits the power-law slope.
pub fn powerlaw(phi: &Hyperparams, scheme: Scheme, steps: u64, replicates: usize, sim: &SimConfig) -> Result<PowerLawReport> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be at least 1".into()));
    }
    let cfg = SimConfig {
        n_samples: scheme.sizes(steps),
        ..sim.clone()
    };
    let sampler = ObservedSampler::new(phi, &cfg)?;
    let (order, marks) = scheme.order(steps);
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let seeds: Vec<u64> = (0..replicates).map(|_| rng.random()).collect();
    let curves: Vec<GrowthCurve> = seeds
        .par_iter()
        .map(|s| {
            let full = growth_curve(&sampler.sample(*s)?, &order)?;
            Ok(GrowthCurve {
                counts: marks.iter().map(|&i| full.counts[i]).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let mean_curve = GrowthCurve::mean(&curves)?;
    let slope = fit_power_law_slope(&mean_curve)?;
    Ok(PowerLawReport {
        scheme,
        replicates,
        mean_curve,
        slope,
    })
}

/// Number of worker threads requested through `VF_THREADS`, if any.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("VF_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidArgument(format!("VF_THREADS must be a positive integer (got {v:?})"))),
        },
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{Bp3Params, I3bpParams};

    #[test]
    fn model_names_round_trip() {
        for m in [ModelKind::Proposed, ModelKind::D3bp, ModelKind::I3bp] {
            assert_eq!(m.as_str().parse::<ModelKind>().unwrap(), m);
        }
        assert!("ibp".parse::<ModelKind>().is_err());
    }

    #[test]
    fn sweeps() {
        assert_eq!(parse_sweep("0:0").unwrap(), vec![CountPair::ZERO]);
        assert_eq!(
            parse_sweep("3:2:1").unwrap(),
            vec![
                CountPair::new(1, 0),
                CountPair::new(2, 0),
                CountPair::new(3, 0),
                CountPair::new(3, 1),
                CountPair::new(3, 2)
            ]
        );
        assert_eq!(
            parse_sweep("5:0:2, 1:1").unwrap(),
            vec![CountPair::new(2, 0), CountPair::new(4, 0), CountPair::new(5, 0), CountPair::new(1, 1)]
        );
        for bad in ["", "1", "1:2:0", "a:b", "1:2:3:4", "-1:2"] {
            assert!(parse_sweep(bad).is_err(), "{bad}");
        }
        assert_eq!(followup_sweep(CountPair::new(2, 1)), parse_sweep("2:1:1").unwrap());
    }

    #[test]
    fn schemes() {
        assert_eq!("projection-1".parse::<Scheme>().unwrap(), Scheme::Projection1);
        assert_eq!("projection-2".parse::<Scheme>().unwrap(), Scheme::Projection2);
        assert_eq!("proportional:0.5".parse::<Scheme>().unwrap(), Scheme::Proportional(0.5));
        assert_eq!("proportional(2)".parse::<Scheme>().unwrap(), Scheme::Proportional(2.0));
        for bad in ["projection-3", "proportional:0", "proportional:x", "ratio"] {
            assert!(bad.parse::<Scheme>().is_err(), "{bad}");
        }
        let s = Scheme::Proportional(0.5);
        assert_eq!(s.sizes(5), CountPair::new(5, 3));
        let (order, marks) = s.order(3);
        // n₁ = 1: one sample each; n₁ = 2: no new pop-2 sample; n₁ = 3: one more.
        assert_eq!(order.len(), 5);
        assert_eq!(marks, vec![1, 2, 4]);
    }

    #[test]
    fn params_from_either_shape() {
        let bare = r#"{"alpha": 20.0, "c": 1.0, "sigma": 0.5}"#;
        assert!(matches!(parse_params(bare).unwrap(), FittedParams::D3bp(_)));
        let seven = serde_json::to_string(&Hyperparams::INIT).unwrap();
        assert!(matches!(parse_params(&seven).unwrap(), FittedParams::Proposed(_)));
        let bad = r#"{"alpha": -1.0, "c": 1.0, "sigma": 0.5}"#;
        assert!(parse_params(bad).is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[0.1, 0.3], &[5.0, 1.0]);
        assert!((s.mean - 0.2).abs() < 1e-15);
        assert!((s.std - 0.02f64.sqrt()).abs() < 1e-15);
        assert!(s.flagged);
        assert!(relative_residual(1.0, 0.0).is_nan());
        assert_eq!(relative_residual(3.0, 2.0), 0.5);
    }

    #[test]
    fn baseline_totals_on_a_sweep() {
        let p = Bp3Params::new(20.0, 1.0, 0.5).unwrap();
        let n = CountPair::new(3, 2);
        let pts = parse_sweep("4:3:1").unwrap();
        let (got, ok) = predict_totals(&FittedParams::D3bp(p), n, &pts, &QuadratureConfig::default()).unwrap();
        assert!(ok);
        for (m, g) in pts.iter().zip(got) {
            let direct = crate::baselines::d3bp_total_mean(n, *m, &p).unwrap();
            assert!((g.lambda - direct).abs() <= 1e-12 * direct);
        }
        let ip = I3bpParams {
            pop1: p,
            pop2: Bp3Params::new(5.0, 2.0, 0.3).unwrap(),
        };
        let (got, _) = predict_totals(&FittedParams::I3bp(ip), n, &pts, &QuadratureConfig::default()).unwrap();
        for (m, g) in pts.iter().zip(got) {
            let direct = crate::baselines::i3bp_total_mean(n, *m, &ip).unwrap();
            assert!((g.lambda - direct).abs() <= 1e-12 * direct);
        }
    }
}
