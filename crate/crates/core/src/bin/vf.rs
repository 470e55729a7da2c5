use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use variant_forecast::cli::{self, ModelKind, Provenance, RunConfig, Scheme};
use variant_forecast::data::VariantDataset;
use variant_forecast::fitting::FittedParams;
use variant_forecast::model::CountPair;

/// Predict new variants in a two-population follow-up study.
#[derive(Parser, Debug)]
#[command(name = "vf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// RNG seed; recorded in every output
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Largest per-population k-ton count used in fits and tables
    #[arg(long, default_value_t = 10)]
    v: u64,

    /// Relative tolerance of the quadratures
    #[arg(long, default_value_t = 1e-10)]
    rel_tol: f64,

    /// Output path (stdout when omitted, where that makes sense)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit hyperparameters on a pilot dataset and write them as JSON
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "proposed")]
        model: ModelKind,
        #[command(flatten)]
        common: Common,
    },
    /// Predicted totals and k-ton means along a follow-up sweep, as CSV
    Predict {
        /// Fit result or bare parameter JSON
        #[arg(long)]
        params: PathBuf,
        /// Pilot dataset; its sizes are the pilot sizes
        #[arg(long, conflicts_with = "samples")]
        input: Option<PathBuf>,
        /// Pilot sizes `N1:N2` instead of a dataset
        #[arg(long)]
        samples: Option<String>,
        /// Follow-up sizes: `M1:M2` points or `M1:M2:step` paths, comma separated
        #[arg(long)]
        sweep: String,
        #[arg(long)]
        model: Option<ModelKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Observed new-variant k-ton tables for every fold
    Ktons {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        folds: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a dataset; a provenance JSON is written next to the output
    Simulate {
        #[arg(long)]
        params: PathBuf,
        /// Sample sizes `N1:N2`
        #[arg(long, default_value = "500:500")]
        samples: String,
        #[arg(long)]
        model: Option<ModelKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Fold-by-fold evaluation: fit on each pilot block, compare with the rest
    Crossval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "proposed")]
        model: ModelKind,
        #[arg(long, default_value_t = 20)]
        folds: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Mean growth curve over replicate simulations and its power-law slope
    Powerlaw {
        #[arg(long)]
        params: PathBuf,
        /// projection-1, projection-2 or proportional:RHO
        #[arg(long, default_value = "projection-1")]
        scheme: Scheme,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// Number of curve points (population-1 sizes under the proportional scheme)
        #[arg(long, default_value_t = 2000)]
        samples: u64,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_pair(s: &str) -> Result<CountPair> {
    let (a, b) = s.split_once(':').context("expected N1:N2")?;
    Ok(CountPair::new(
        a.trim().parse().context("bad N1")?,
        b.trim().parse().context("bad N2")?,
    ))
}

fn config(model: ModelKind, c: &Common) -> RunConfig {
    let mut cfg = RunConfig::new(model, c.seed);
    cfg.fit.v = c.v;
    cfg.quad = cfg.quad.with_rel_tol(c.rel_tol);
    cfg
}

fn params_for(path: &Path, model: Option<ModelKind>) -> Result<FittedParams> {
    let params = cli::load_params(path)?;
    if let Some(m) = model {
        if m != ModelKind::of(&params) {
            bail!("--model {m} does not match the {} parameters in {}", ModelKind::of(&params), path.display());
        }
    }
    Ok(params)
}

/// Runs one command; `Ok(false)` means a best-effort numerical result.
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Fit { input, model, common } => {
            let cfg = config(model, &common);
            let data = VariantDataset::load_tsv(&input)?;
            let result = cli::fit(&data, &cfg)?;
            cli::emit(common.output.as_deref(), &(result.to_json()? + "\n"))?;
            Ok(result.converged)
        }
        Command::Predict {
            params,
            input,
            samples,
            sweep,
            model,
            common,
        } => {
            let params = params_for(&params, model)?;
            let cfg = config(ModelKind::of(&params), &common);
            let n = match (&input, &samples) {
                (Some(p), _) => VariantDataset::load_tsv(p)?.sizes(),
                (None, Some(s)) => parse_pair(s)?,
                (None, None) => bail!("give the pilot as --input or --samples"),
            };
            let sweep = cli::parse_sweep(&sweep)?;
            let (rows, ok) = cli::predict(&params, n, &sweep, common.v, &cfg.quad)?;
            let header = cfg.header(
                "predict",
                &[
                    ("params", serde_json::to_string(&params)?),
                    ("pilot", format!("{}:{}", n.p1, n.p2)),
                ],
            );
            cli::emit(common.output.as_deref(), &cli::predictions_csv(&rows, &header))?;
            Ok(ok)
        }
        Command::Ktons { input, folds, common } => {
            let cfg = config(ModelKind::Proposed, &common);
            let data = VariantDataset::load_tsv(&input)?;
            let tables = cli::observed_ktons(&data, folds, common.seed, common.v)?;
            let header = cfg.header("ktons", &[("folds", folds.to_string())]);
            cli::emit(common.output.as_deref(), &cli::ktons_csv(&tables, &header))?;
            Ok(true)
        }
        Command::Simulate {
            params,
            samples,
            model,
            common,
        } => {
            let params = params_for(&params, model)?;
            let mut cfg = config(ModelKind::of(&params), &common);
            cfg.sim.n_samples = parse_pair(&samples)?;
            let data = cli::simulate(&params, &cfg.sim)?;
            let provenance = serde_json::to_string_pretty(&Provenance::new(&params, &cfg.sim))?;
            let header = cfg.header("simulate", &[("params", serde_json::to_string(&params)?)]);
            cli::emit(common.output.as_deref(), &data.to_tsv_string(&header))?;
            if let Some(out) = &common.output {
                let mut side = out.clone().into_os_string();
                side.push(".json");
                cli::emit(Some(Path::new(&side)), &(provenance + "\n"))?;
            }
            Ok(true)
        }
        Command::Crossval {
            input,
            model,
            folds,
            common,
        } => {
            let cfg = config(model, &common);
            let data = VariantDataset::load_tsv(&input)?;
            let report = cli::crossval(&data, folds, &cfg)?;
            let header = cfg.header("crossval", &[("folds", folds.to_string())]);
            let prefix = common.output.clone().unwrap_or_else(|| PathBuf::from("crossval"));
            let with = |suffix: &str| {
                let mut p = prefix.clone().into_os_string();
                p.push(suffix);
                PathBuf::from(p)
            };
            cli::emit(Some(&with(".curves.csv")), &report.curves_csv(&header))?;
            cli::emit(Some(&with(".ktons.csv")), &report.ktons_csv(&header))?;
            cli::emit(Some(&with(".summary.csv")), &report.summary_csv(&header))?;
            cli::emit(Some(&with(".fits.json")), &(serde_json::to_string_pretty(&report.fits)? + "\n"))?;
            Ok(report.converged)
        }
        Command::Powerlaw {
            params,
            scheme,
            replicates,
            samples,
            common,
        } => {
            let FittedParams::Proposed(phi) = params_for(&params, Some(ModelKind::Proposed))? else {
                unreachable!()
            };
            let cfg = config(ModelKind::Proposed, &common);
            let report = cli::powerlaw(&phi, scheme, samples, replicates, &cfg.sim)?;
            let header = cfg.header(
                "powerlaw",
                &[
                    ("params", serde_json::to_string(&phi)?),
                    ("scheme", scheme.to_string()),
                    ("replicates", replicates.to_string()),
                    ("slope", report.slope.to_string()),
                ],
            );
            cli::emit(common.output.as_deref(), &report.mean_curve.to_csv_string(&header))?;
            eprintln!("slope {}", report.slope);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match cli::threads_from_env() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(args.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: result is best-effort (an optimizer or quadrature did not converge)");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
