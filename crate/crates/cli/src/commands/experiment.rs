use std::collections::HashSet;

use log::{info, warn};
use mlamc::montecarlo::{estimate_pf, random_positions, subsample, Dataset, DatasetView, McError};
use mlamc::rng;
use mlamc::surrogate::{mlamc_pf, pf_error, pf_from_probabilities, Metrics, ModelKind, TrainedModel};
use serde::{Deserialize, Serialize};

use super::{fit_model, load_entry_dataset, mc_error, surrogate_error, work_seed};
use crate::config::Entry;
use crate::error::CliError;
use crate::Context;

/// Validation studies run on generated datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Which {
    /// pf error and accuracy against training-set size, per configuration.
    TrainSize,
    /// Accuracy on a small test split against the whole remainder.
    TestSize,
    /// Per-configuration models against one model trained on all configurations.
    TrainSource,
    /// Accuracy and AUC across the (COV, ξ) grid, pooled over mean strength.
    Degradation,
}

impl Which {
    pub const ALL: [Which; 4] = [Which::TrainSize, Which::TestSize, Which::TrainSource, Which::Degradation];

    pub fn name(self) -> &'static str {
        match self {
            Which::TrainSize => "train_size",
            Which::TestSize => "test_size",
            Which::TrainSource => "train_source",
            Which::Degradation => "degradation",
        }
    }

    fn tag(self) -> u64 {
        10 + self as u64
    }

    pub fn stem(self) -> String {
        format!("experiments/{}", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSizeRow {
    pub config: String,
    pub cov: f64,
    pub xi: f64,
    pub mu_cu: f64,
    pub model: ModelKind,
    pub train_size: usize,
    pub repetition: usize,
    pub pf_full: f64,
    pub pf_data_only: f64,
    pub pf_surrogate: Option<f64>,
    pub pf_error_data_only: f64,
    pub pf_error_surrogate: Option<f64>,
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSizeRow {
    pub group: String,
    pub cov: f64,
    pub xi: f64,
    pub delta_v: f64,
    pub model: ModelKind,
    pub repetition: usize,
    pub n_train: usize,
    pub n_small: usize,
    pub n_rest: usize,
    pub acc_small: Option<f64>,
    pub acc_rest: Option<f64>,
    pub acc_diff: Option<f64>,
    pub auc_small: Option<f64>,
    pub auc_rest: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSourceRow {
    pub config: String,
    pub cov: f64,
    pub xi: f64,
    pub mu_cu: f64,
    pub model: ModelKind,
    pub repetition: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub pf_test: f64,
    pub pf_per_config: Option<f64>,
    pub pf_pooled: Option<f64>,
    pub pf_error_per_config: Option<f64>,
    pub pf_error_pooled: Option<f64>,
    pub acc_per_config: Option<f64>,
    pub acc_pooled: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub group: String,
    pub cov: f64,
    pub xi: f64,
    pub delta_v: f64,
    pub model: ModelKind,
    pub repetition: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Serialize)]
struct Meta {
    experiment: &'static str,
    repetitions: usize,
}

/// Campaigns sharing `(cov, delta_h, delta_v)`, in first-appearance order.
struct Group<'a> {
    key: (f64, f64, f64),
    members: Vec<(&'a Entry, &'a Dataset)>,
}

impl Group<'_> {
    fn label(&self) -> String {
        let (cov, dh, dv) = self.key;
        format!("cov{cov}_xi{}_dv{dv}", dh / dv)
    }
    fn view(&self) -> DatasetView<'_> {
        DatasetView::concat(&self.members.iter().map(|(_, d)| d.view()).collect::<Vec<_>>())
    }
}

fn groups<'a>(entries: &'a [Entry], data: &'a [Dataset]) -> Vec<Group<'a>> {
    let mut out: Vec<Group> = Vec::new();
    for (e, d) in entries.iter().zip(data) {
        match out.iter_mut().find(|g| g.key == e.group_key()) {
            Some(g) => g.members.push((e, d)),
            None => out.push(Group { key: e.group_key(), members: vec![(e, d)] }),
        }
    }
    out
}

pub fn experiment(ctx: &Context, which: Which) -> Result<(), CliError> {
    let mut targets = ctx.table_targets(&which.stem(), false);
    let resolved = format!("experiment-{}", which.name());
    targets.push(Context::resolved_name(&resolved));
    ctx.out.claim(&targets)?;
    if ctx.cfg.campaign.subset_only {
        return Err(CliError::Config("experiments need full campaigns; subset_only is set".into()));
    }
    check_sizes(ctx, which)?;
    let data = ctx.entries.iter().map(|e| load_entry_dataset(ctx, e)).collect::<Result<Vec<_>, _>>()?;
    ctx.write_resolved(&resolved)?;
    info!("experiment {} on {} campaigns", which.name(), data.len());
    let meta = Meta { experiment: which.name(), repetitions: ctx.cfg.experiment.repetitions };
    let stem = which.stem();
    match which {
        Which::TrainSize => ctx.write_table(&stem, meta, &train_size(ctx, &data)?, false),
        Which::TestSize => ctx.write_table(&stem, meta, &test_size(ctx, &data)?, false),
        Which::TrainSource => ctx.write_table(&stem, meta, &train_source(ctx, &data)?, false),
        Which::Degradation => ctx.write_table(&stem, meta, &degradation(ctx, &data)?, false),
    }
}

fn check_sizes(ctx: &Context, which: Which) -> Result<(), CliError> {
    let n = ctx.cfg.campaign.n_samples;
    let x = &ctx.cfg.experiment;
    let pooled = |e: &Entry| ctx.entries.iter().filter(|o| o.group_key() == e.group_key()).count() * n;
    let smallest_group = ctx.entries.iter().map(pooled).min().unwrap_or(0);
    let offending: Vec<String> = match which {
        Which::TrainSize => x.train_sizes.iter().filter(|&&s| s == 0 || s >= n).map(|s| s.to_string()).collect(),
        Which::TrainSource => {
            if x.train_count == 0 || x.train_count >= n { vec![format!("train_count {}", x.train_count)] } else { vec![] }
        }
        Which::TestSize => {
            if x.train_count == 0 || x.test_size == 0 || x.train_count + x.test_size > smallest_group {
                vec![format!("train_count {} + test_size {}", x.train_count, x.test_size)]
            } else {
                vec![]
            }
        }
        Which::Degradation => {
            if x.train_count == 0 || x.train_count >= smallest_group { vec![format!("train_count {}", x.train_count)] } else { vec![] }
        }
    };
    if offending.is_empty() {
        return Ok(());
    }
    let limit = if matches!(which, Which::TrainSize | Which::TrainSource) { n } else { smallest_group };
    Err(CliError::Config(format!(
        "{}: sizes exceed the available {limit} samples: {}",
        which.name(),
        offending.join(", ")
    )))
}

fn single_class(labels: &[u8]) -> Option<&'static str> {
    if labels.iter().all(|&l| l == 1) {
        Some("training subset holds only failed samples")
    } else if labels.iter().all(|&l| l == 0) {
        Some("training subset holds only stable samples")
    } else {
        None
    }
}

fn split<'a>(view: &DatasetView<'a>, n_train: usize, ctx: &Context, seed: u64) -> Result<Result<(DatasetView<'a>, DatasetView<'a>), String>, CliError> {
    match subsample(view, n_train, ctx.cfg.surrogate.strategy, seed) {
        Ok((train, rest)) => Ok(match single_class(&train.labels()) {
            Some(reason) => Err(reason.to_string()),
            None => Ok((train, rest)),
        }),
        Err(McError::MissingClass(c)) => {
            Ok(Err(format!("no {} samples available; stratified split impossible", if c == 1 { "failed" } else { "stable" })))
        }
        Err(e) => Err(mc_error(e, seed)),
    }
}

fn fit(ctx: &Context, kind: ModelKind, train: &DatasetView, seed: u64) -> Result<TrainedModel, String> {
    fit_model(ctx, kind, train, seed).map(|f| f.model).map_err(|e| {
        warn!("{kind}: {e} (model seed {seed})");
        format!("training failed: {e}")
    })
}

fn model_seed(split_seed: u64, kind: ModelKind) -> u64 {
    rng::derive_seed(split_seed, kind as u64 + 1)
}

fn train_size(ctx: &Context, data: &[Dataset]) -> Result<Vec<TrainSizeRow>, CliError> {
    let x = &ctx.cfg.experiment;
    let mut rows = Vec::new();
    for (entry, ds) in ctx.entries.iter().zip(data) {
        let view = ds.view();
        let pf_full = ds.pf().map_err(|e| mc_error(e, entry.mc.base_seed))?.pf;
        let st = entry.mc.stats;
        for (si, &size) in x.train_sizes.iter().enumerate() {
            info!("train_size {}: {size}", entry.label());
            for rep in 0..x.repetitions {
                let seed = work_seed(entry.mc.base_seed, Which::TrainSize.tag(), (si * x.repetitions + rep) as u64);
                let (train, rest) = match split(&view, size, ctx, seed)? {
                    Ok(s) => s,
                    Err(reason) => {
                        let train = view.select(&random_positions(view.len(), size, seed));
                        let pf_data_only = estimate_pf(&train.labels()).map_err(|e| mc_error(e, seed))?.pf;
                        for &kind in &ctx.cfg.surrogate.models {
                            rows.push(TrainSizeRow {
                                config: entry.label(),
                                cov: st.cov(),
                                xi: st.anisotropy(),
                                mu_cu: st.mu_cu(),
                                model: kind,
                                train_size: size,
                                repetition: rep,
                                pf_full,
                                pf_data_only,
                                pf_surrogate: None,
                                pf_error_data_only: pf_error(pf_data_only, pf_full),
                                pf_error_surrogate: None,
                                acc: None,
                                auc: None,
                                skipped: Some(reason.clone()),
                            });
                        }
                        continue;
                    }
                };
                let baseline = view.select(&random_positions(view.len(), size, seed)).labels();
                let pf_data_only = estimate_pf(&baseline).map_err(|e| mc_error(e, seed))?.pf;
                for &kind in &ctx.cfg.surrogate.models {
                    let mut row = TrainSizeRow {
                        config: entry.label(),
                        cov: st.cov(),
                        xi: st.anisotropy(),
                        mu_cu: st.mu_cu(),
                        model: kind,
                        train_size: size,
                        repetition: rep,
                        pf_full,
                        pf_data_only,
                        pf_surrogate: None,
                        pf_error_data_only: pf_error(pf_data_only, pf_full),
                        pf_error_surrogate: None,
                        acc: None,
                        auc: None,
                        skipped: None,
                    };
                    let ms = model_seed(seed, kind);
                    match fit(ctx, kind, &train, ms) {
                        Ok(model) => {
                            let probs = model.predict_proba(&rest).map_err(|e| surrogate_error(e, "prediction", ms))?;
                            let pf = mlamc_pf(&train.labels(), &probs).map_err(|e| surrogate_error(e, "prediction", ms))?;
                            let m = Metrics::compute(&probs, &rest.labels()).map_err(|e| surrogate_error(e, "metrics", ms))?;
                            row.pf_surrogate = Some(pf);
                            row.pf_error_surrogate = Some(pf_error(pf, pf_full));
                            row.acc = Some(m.acc);
                            row.auc = m.auc;
                        }
                        Err(reason) => row.skipped = Some(reason),
                    }
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

fn test_size(ctx: &Context, data: &[Dataset]) -> Result<Vec<TestSizeRow>, CliError> {
    let x = &ctx.cfg.experiment;
    let mut rows = Vec::new();
    for (gi, g) in groups(&ctx.entries, data).iter().enumerate() {
        info!("test_size {}", g.label());
        let view = g.view();
        let base = g.members[0].0.mc.base_seed;
        for rep in 0..x.repetitions {
            let seed = work_seed(base, Which::TestSize.tag(), (gi * x.repetitions + rep) as u64);
            let blank = |kind, skipped| TestSizeRow {
                group: g.label(),
                cov: g.key.0,
                xi: g.key.1 / g.key.2,
                delta_v: g.key.2,
                model: kind,
                repetition: rep,
                n_train: x.train_count,
                n_small: x.test_size,
                n_rest: view.len() - x.train_count,
                acc_small: None,
                acc_rest: None,
                acc_diff: None,
                auc_small: None,
                auc_rest: None,
                skipped,
            };
            let (train, rest) = match split(&view, x.train_count, ctx, seed)? {
                Ok(s) => s,
                Err(reason) => {
                    rows.extend(ctx.cfg.surrogate.models.iter().map(|&k| blank(k, Some(reason.clone()))));
                    continue;
                }
            };
            let small = rest.select(&random_positions(rest.len(), x.test_size, rng::derive_seed(seed, 0)));
            for &kind in &ctx.cfg.surrogate.models {
                let mut row = blank(kind, None);
                let ms = model_seed(seed, kind);
                match fit(ctx, kind, &train, ms) {
                    Ok(model) => {
                        let a = model.evaluate(&small).map_err(|e| surrogate_error(e, "metrics", ms))?;
                        let b = model.evaluate(&rest).map_err(|e| surrogate_error(e, "metrics", ms))?;
                        row.acc_small = Some(a.acc);
                        row.acc_rest = Some(b.acc);
                        row.acc_diff = Some((a.acc - b.acc).abs());
                        row.auc_small = a.auc;
                        row.auc_rest = b.auc;
                    }
                    Err(reason) => row.skipped = Some(reason),
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn train_source(ctx: &Context, data: &[Dataset]) -> Result<Vec<TrainSourceRow>, CliError> {
    let x = &ctx.cfg.experiment;
    let all = DatasetView::concat(&data.iter().map(Dataset::view).collect::<Vec<_>>());
    let base = ctx.cfg.campaign.base_seed;
    let mut rows = Vec::new();
    for rep in 0..x.repetitions {
        let pool_seed = work_seed(base, Which::TrainSource.tag(), rep as u64);
        info!("train_source repetition {rep}: pooled model on {} of {} samples", x.train_count, all.len());
        let pooled_split = split(&all, x.train_count, ctx, pool_seed)?;
        let mut pooled_models = Vec::new();
        let mut in_pool = HashSet::new();
        match &pooled_split {
            Ok((train, _)) => {
                in_pool.extend(train.iter().map(|s| (s.seed, s.id)));
                for &kind in &ctx.cfg.surrogate.models {
                    pooled_models.push(fit(ctx, kind, train, model_seed(pool_seed, kind)));
                }
            }
            Err(reason) => pooled_models.extend(ctx.cfg.surrogate.models.iter().map(|_| Err(reason.clone()))),
        }
        for (entry, ds) in ctx.entries.iter().zip(data) {
            let view = ds.view();
            let seed = work_seed(entry.mc.base_seed, Which::TrainSource.tag(), rep as u64);
            let own = split(&view, x.train_count, ctx, seed)?;
            let mut excluded = in_pool.clone();
            if let Ok((train, _)) = &own {
                excluded.extend(train.iter().map(|s| (s.seed, s.id)));
            }
            let test = DatasetView::new(view.iter().filter(|s| !excluded.contains(&(s.seed, s.id))).collect());
            let test_labels = test.labels();
            let pf_test = estimate_pf(&test_labels).map_err(|e| mc_error(e, seed))?.pf;
            let st = entry.mc.stats;
            for (mi, &kind) in ctx.cfg.surrogate.models.iter().enumerate() {
                let mut row = TrainSourceRow {
                    config: entry.label(),
                    cov: st.cov(),
                    xi: st.anisotropy(),
                    mu_cu: st.mu_cu(),
                    model: kind,
                    repetition: rep,
                    n_train: x.train_count,
                    n_test: test.len(),
                    pf_test,
                    pf_per_config: None,
                    pf_pooled: None,
                    pf_error_per_config: None,
                    pf_error_pooled: None,
                    acc_per_config: None,
                    acc_pooled: None,
                    skipped: None,
                };
                let mut reasons = Vec::new();
                let own_model = match &own {
                    Ok((train, _)) => fit(ctx, kind, train, model_seed(seed, kind)),
                    Err(r) => Err(r.clone()),
                };
                for (model, per_config) in [(own_model.as_ref(), true), (pooled_models[mi].as_ref(), false)] {
                    match model {
                        Ok(m) => {
                            let ms = if per_config { model_seed(seed, kind) } else { model_seed(pool_seed, kind) };
                            let probs = m.predict_proba(&test).map_err(|e| surrogate_error(e, "prediction", ms))?;
                            let pf = pf_from_probabilities(&probs).map_err(|e| surrogate_error(e, "prediction", ms))?;
                            let acc = Metrics::compute(&probs, &test_labels).map_err(|e| surrogate_error(e, "metrics", ms))?.acc;
                            if per_config {
                                (row.pf_per_config, row.pf_error_per_config, row.acc_per_config) = (Some(pf), Some(pf_error(pf, pf_test)), Some(acc));
                            } else {
                                (row.pf_pooled, row.pf_error_pooled, row.acc_pooled) = (Some(pf), Some(pf_error(pf, pf_test)), Some(acc));
                            }
                        }
                        Err(r) => reasons.push(format!("{}: {r}", if per_config { "per-config" } else { "pooled" })),
                    }
                }
                if !reasons.is_empty() {
                    row.skipped = Some(reasons.join("; "));
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn degradation(ctx: &Context, data: &[Dataset]) -> Result<Vec<DegradationRow>, CliError> {
    let x = &ctx.cfg.experiment;
    let mut rows = Vec::new();
    for (gi, g) in groups(&ctx.entries, data).iter().enumerate() {
        info!("degradation {}", g.label());
        let view = g.view();
        let base = g.members[0].0.mc.base_seed;
        for rep in 0..x.repetitions {
            let seed = work_seed(base, Which::Degradation.tag(), (gi * x.repetitions + rep) as u64);
            let split = split(&view, x.train_count, ctx, seed)?;
            for &kind in &ctx.cfg.surrogate.models {
                let mut row = DegradationRow {
                    group: g.label(),
                    cov: g.key.0,
                    xi: g.key.1 / g.key.2,
                    delta_v: g.key.2,
                    model: kind,
                    repetition: rep,
                    n_train: x.train_count,
                    n_test: view.len() - x.train_count,
                    acc: None,
                    auc: None,
                    skipped: None,
                };
                let ms = model_seed(seed, kind);
                match split.as_ref().map_err(Clone::clone).and_then(|(train, _)| fit(ctx, kind, train, ms)) {
                    Ok(model) => {
                        let rest = &split.as_ref().expect("split succeeded").1;
                        let m = model.evaluate(rest).map_err(|e| surrogate_error(e, "metrics", ms))?;
                        row.acc = Some(m.acc);
                        row.auc = m.auc;
                    }
                    Err(reason) => row.skipped = Some(reason),
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
