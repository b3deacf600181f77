mod experiment;
mod export;
mod generate;
mod pipeline;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use log::debug;
use mlamc::montecarlo::{self, Dataset, DatasetError, DatasetView, McError};
use mlamc::rng;
use mlamc::surrogate::{self, grid_search_cv, ModelKind, SurrogateError, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::config::Entry;
use crate::error::CliError;
use crate::output::read_json;
use crate::Context;

pub use experiment::{experiment, Which};
pub use export::export_csv;
pub use generate::generate;
pub use pipeline::{mlamc, MlamcMeta, MlamcRow, REPORT_STEM};
pub use report::report;

pub const DATASET_DIR: &str = "datasets";
pub const TIMINGS_FILE: &str = "datasets/timings.json";

/// Wall times of one generated campaign, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignTiming {
    pub n_samples: usize,
    /// Covariance factorization and circle bank construction.
    pub t_prepare: f64,
    /// Field generation and stability evaluation of every sample.
    pub t_simulate: f64,
}

impl CampaignTiming {
    pub fn per_sample(&self) -> f64 {
        self.t_simulate / self.n_samples as f64
    }
}

pub type Timings = BTreeMap<String, CampaignTiming>;

pub(crate) fn dataset_rel(entry: &Entry) -> PathBuf {
    PathBuf::from(DATASET_DIR).join(entry.dataset_file())
}

pub(crate) fn mc_error(e: McError, seed: u64) -> CliError {
    let seed = match &e {
        McError::Solver { seed, .. } => *seed,
        _ => seed,
    };
    CliError::runtime(e, seed)
}

pub(crate) fn surrogate_error(e: SurrogateError, context: &str, seed: u64) -> CliError {
    CliError::runtime(format!("{context}: {e}"), seed)
}

/// Loads the dataset of `entry` and checks it was generated from the same
/// campaign settings.
pub(crate) fn load_entry_dataset(ctx: &Context, entry: &Entry) -> Result<Dataset, CliError> {
    let path = ctx.out.path(dataset_rel(entry));
    let ds = montecarlo::load_dataset(&path).map_err(|e| match e {
        DatasetError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            CliError::Missing { path: path.clone(), hint: "run `mlamc generate` first".into() }
        }
        other => CliError::Config(format!("{}: {other}", path.display())),
    })?;
    if ds.manifest.config != entry.mc {
        return Err(CliError::Config(format!(
            "{} was generated with different campaign settings; regenerate it with --overwrite",
            path.display()
        )));
    }
    Ok(ds)
}

pub(crate) fn load_timings(ctx: &Context) -> Result<Timings, CliError> {
    read_json(&ctx.out.path(TIMINGS_FILE), "run `mlamc generate` first")
}

/// Seed for the `tag`-th kind of derived work of campaign `entry`.
pub(crate) fn work_seed(entry_seed: u64, tag: u64, index: u64) -> u64 {
    rng::derive_seed(rng::derive_seed(rng::mix64(entry_seed), tag), index)
}

pub(crate) fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

pub(crate) struct Fit {
    pub model: TrainedModel,
    /// Training time including any grid search, seconds.
    pub t_train: f64,
}

/// Trains `kind` on `train`, grid-searching first when a tuning grid with more
/// than one point is configured. The fold count shrinks to the minority class
/// size; below two folds the fixed hyperparameters are used.
pub(crate) fn fit_model(ctx: &Context, kind: ModelKind, train: &DatasetView, seed: u64) -> Result<Fit, SurrogateError> {
    let base = ctx.cfg.surrogate.hyperparams;
    let t0 = Instant::now();
    let mut hp = base.get(kind);
    if let Some(t) = &ctx.cfg.surrogate.tuning {
        let grid = t.grid(kind, &base);
        let labels = train.labels();
        let n_failed = labels.iter().filter(|&&l| l == 1).count();
        let k = t.k.min(n_failed).min(labels.len() - n_failed);
        if grid.len() == 1 {
            hp = grid[0];
        } else if k >= 2 {
            if k < t.k {
                debug!("{kind}: {k}-fold search, minority class has {} samples", n_failed.min(labels.len() - n_failed));
            }
            hp = grid_search_cv(kind, &grid, k, train, rng::derive_seed(seed, 1))?.best_params();
        } else {
            debug!("{kind}: too few minority samples to tune, using fixed hyperparameters");
        }
    }
    let model = surrogate::train(train, &hp, seed)?;
    Ok(Fit { model, t_train: t0.elapsed().as_secs_f64() })
}
