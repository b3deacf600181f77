use std::time::Instant;

use log::{info, warn};
use mlamc::montecarlo::{estimate_pf, random_positions, subsample, Campaign, DatasetView, McError, SplitStrategy};
use mlamc::rng;
use mlamc::surrogate::{mlamc_pf, pf_error, save_model, Metrics, ModelKind};
use serde::{Deserialize, Serialize};

use super::{fit_model, load_entry_dataset, load_timings, mc_error, work_seed, CampaignTiming};
use crate::config::Entry;
use crate::error::CliError;
use crate::Context;

pub const REPORT_STEM: &str = "mlamc/report";
pub(crate) const SPLIT_TAG: u64 = 1;

/// One (configuration, repetition, model) result. Times are wall-clock
/// seconds of this machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlamcRow {
    pub config: String,
    pub cov: f64,
    pub xi: f64,
    pub mu_cu: f64,
    pub delta_h: f64,
    pub delta_v: f64,
    pub repetition: usize,
    pub model: ModelKind,
    pub n_samples: usize,
    pub n_train: usize,
    pub split_seed: u64,
    pub model_seed: u64,
    /// JSON of the hyperparameters actually used.
    pub hyperparams: Option<String>,
    pub pf_full: Option<f64>,
    /// Failure fraction of a random subset of the training size; under the
    /// random strategy this is the training subset itself.
    pub pf_data_only: f64,
    /// Training labels plus predicted probabilities of the remaining samples.
    pub pf_surrogate: Option<f64>,
    pub pf_error_data_only: Option<f64>,
    pub pf_error_surrogate: Option<f64>,
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub skipped: Option<String>,
    pub t_sim_full: f64,
    pub t_sim_train: f64,
    pub t_train: Option<f64>,
    pub t_predict: Option<f64>,
    pub speedup: Option<f64>,
    /// `t_sim_full` extrapolated from the training subset's per-sample time.
    pub t_sim_full_projected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlamcMeta {
    pub n_train: usize,
    pub strategy: SplitStrategy,
    pub repetitions: usize,
    pub subset_only: bool,
}

struct Split<'a> {
    rep: usize,
    seed: u64,
    train: DatasetView<'a>,
    rest_ids: Vec<u64>,
    rest_labels: Option<Vec<u8>>,
    /// Labels of the data-only estimate: a random subset of the training size.
    baseline: Vec<u8>,
    t_sim_full: f64,
    t_sim_train: f64,
    projected: bool,
}

pub fn mlamc(ctx: &Context) -> Result<Vec<MlamcRow>, CliError> {
    let s = &ctx.cfg.surrogate;
    let mut targets = ctx.table_targets(REPORT_STEM, false);
    targets.push(Context::resolved_name("mlamc"));
    if s.save_models {
        for e in &ctx.entries {
            for rep in 0..s.repetitions {
                targets.extend(s.models.iter().map(|&k| model_rel(e, rep, k)));
            }
        }
    }
    ctx.out.claim(&targets)?;
    let timings = if ctx.cfg.campaign.subset_only { None } else { Some(load_timings(ctx)?) };
    ctx.write_resolved("mlamc")?;

    let n_train = ctx.cfg.train_count();
    let mut rows = Vec::new();
    for entry in &ctx.entries {
        info!("mlamc {}/{}: {}", entry.index + 1, ctx.entries.len(), entry.label());
        let seed = entry.mc.base_seed;
        let t0 = Instant::now();
        let campaign = Campaign::prepare(entry.mc).map_err(|e| mc_error(e, seed))?;
        let t_prepare = t0.elapsed().as_secs_f64();
        match &timings {
            Some(t) => {
                let timing = t.get(&entry.label()).ok_or_else(|| {
                    CliError::Config(format!("no generation timing recorded for {}; rerun generate", entry.label()))
                })?;
                let ds = load_entry_dataset(ctx, entry)?;
                let pf_full = ds.pf().map_err(|e| mc_error(e, seed))?.pf;
                let view = ds.view();
                for rep in 0..s.repetitions {
                    let split_seed = work_seed(seed, SPLIT_TAG, rep as u64);
                    match subsample(&view, n_train, s.strategy, split_seed) {
                        Ok((train, rest)) => {
                            let baseline = view.select(&random_positions(view.len(), n_train, split_seed)).labels();
                            let split = full_split(rep, split_seed, train, &rest, baseline, timing, n_train);
                            rows.extend(run_split(ctx, entry, &campaign, split, Some(pf_full))?);
                        }
                        Err(McError::MissingClass(c)) => {
                            let reason = format!("campaign has no {} samples; stratified split impossible", class_name(c));
                            warn!("{}: {reason}", entry.label());
                            let split = Split {
                                rep,
                                seed: split_seed,
                                train: DatasetView::default(),
                                rest_ids: Vec::new(),
                                rest_labels: None,
                                baseline: Vec::new(),
                                t_sim_full: timing.t_prepare + timing.t_simulate,
                                t_sim_train: timing.t_prepare + n_train as f64 * timing.per_sample(),
                                projected: false,
                            };
                            rows.extend(skipped_rows(ctx, entry, &split, pf_full, pf_full, &reason));
                        }
                        Err(e) => return Err(mc_error(e, split_seed)),
                    }
                }
            }
            None => {
                for rep in 0..s.repetitions {
                    let split_seed = work_seed(seed, SPLIT_TAG, rep as u64);
                    let n = entry.mc.n_samples;
                    let train_pos = random_positions(n, n_train, split_seed);
                    let ids: Vec<u64> = train_pos.iter().map(|&p| p as u64).collect();
                    let t1 = Instant::now();
                    let samples = campaign.simulate_ids(&ids).map_err(|e| mc_error(e, seed))?;
                    let t_sim = t1.elapsed().as_secs_f64();
                    let mut in_train = vec![false; n];
                    train_pos.iter().for_each(|&p| in_train[p] = true);
                    let split = Split {
                        rep,
                        seed: split_seed,
                        baseline: samples.iter().map(|s| s.label).collect(),
                        train: DatasetView::new(samples.iter().collect()),
                        rest_ids: (0..n as u64).filter(|&i| !in_train[i as usize]).collect(),
                        rest_labels: None,
                        t_sim_full: t_prepare + n as f64 * t_sim / n_train as f64,
                        t_sim_train: t_prepare + t_sim,
                        projected: true,
                    };
                    rows.extend(run_split(ctx, entry, &campaign, split, None)?);
                }
            }
        }
    }
    let meta = MlamcMeta {
        n_train,
        strategy: s.strategy,
        repetitions: s.repetitions,
        subset_only: ctx.cfg.campaign.subset_only,
    };
    ctx.write_table(REPORT_STEM, meta, &rows, false)?;
    Ok(rows)
}

fn class_name(c: u8) -> &'static str {
    if c == 1 { "failed" } else { "stable" }
}

fn model_rel(entry: &Entry, rep: usize, kind: ModelKind) -> String {
    format!("mlamc/models/{}_rep{rep}_{kind}.model", entry.label())
}

fn full_split<'a>(
    rep: usize,
    seed: u64,
    train: DatasetView<'a>,
    rest: &DatasetView<'a>,
    baseline: Vec<u8>,
    timing: &CampaignTiming,
    n_train: usize,
) -> Split<'a> {
    Split {
        rep,
        seed,
        train,
        rest_ids: rest.iter().map(|s| s.id).collect(),
        rest_labels: Some(rest.labels()),
        baseline,
        t_sim_full: timing.t_prepare + timing.t_simulate,
        t_sim_train: timing.t_prepare + n_train as f64 * timing.per_sample(),
        projected: false,
    }
}

fn base_row(entry: &Entry, split: &Split, kind: ModelKind, n_train: usize, pf_full: Option<f64>, pf_data_only: f64) -> MlamcRow {
    let st = &entry.mc.stats;
    MlamcRow {
        config: entry.label(),
        cov: st.cov(),
        xi: st.anisotropy(),
        mu_cu: st.mu_cu(),
        delta_h: st.delta_h(),
        delta_v: st.delta_v(),
        repetition: split.rep,
        model: kind,
        n_samples: entry.mc.n_samples,
        n_train,
        split_seed: split.seed,
        model_seed: rng::derive_seed(split.seed, kind as u64 + 1),
        hyperparams: None,
        pf_full,
        pf_data_only,
        pf_surrogate: None,
        pf_error_data_only: pf_full.map(|f| pf_error(pf_data_only, f)),
        pf_error_surrogate: None,
        acc: None,
        auc: None,
        skipped: None,
        t_sim_full: split.t_sim_full,
        t_sim_train: split.t_sim_train,
        t_train: None,
        t_predict: None,
        speedup: None,
        t_sim_full_projected: split.projected,
    }
}

fn skipped_rows(ctx: &Context, entry: &Entry, split: &Split, pf_full: f64, pf_data_only: f64, reason: &str) -> Vec<MlamcRow> {
    let n_train = ctx.cfg.train_count();
    ctx.cfg
        .surrogate
        .models
        .iter()
        .map(|&k| MlamcRow { skipped: Some(reason.to_string()), ..base_row(entry, split, k, n_train, Some(pf_full), pf_data_only) })
        .collect()
}

fn run_split(ctx: &Context, entry: &Entry, campaign: &Campaign, split: Split, pf_full: Option<f64>) -> Result<Vec<MlamcRow>, CliError> {
    let n_train = split.train.len();
    let labels = split.train.labels();
    let pf_data_only = estimate_pf(&split.baseline).map_err(|e| mc_error(e, split.seed))?.pf;
    let single = if labels.iter().all(|&l| l == 1) {
        Some(1)
    } else if labels.iter().all(|&l| l == 0) {
        Some(0)
    } else {
        None
    };
    let mut rows = Vec::new();
    if let Some(c) = single {
        let reason = format!("training subset holds only {} samples", class_name(c));
        warn!("{} rep {}: {reason}", entry.label(), split.rep);
        for &kind in &ctx.cfg.surrogate.models {
            rows.push(MlamcRow { skipped: Some(reason.clone()), ..base_row(entry, &split, kind, n_train, pf_full, pf_data_only) });
        }
        return Ok(rows);
    }

    let t0 = Instant::now();
    let fields = campaign.realize_ids(&split.rest_ids);
    let t_realize = t0.elapsed().as_secs_f64();
    let inputs: Vec<&[f64]> = fields.iter().map(|f| f.values.as_slice()).collect();

    for &kind in &ctx.cfg.surrogate.models {
        let mut row = base_row(entry, &split, kind, n_train, pf_full, pf_data_only);
        let fit = match fit_model(ctx, kind, &split.train, row.model_seed) {
            Ok(f) => f,
            Err(e) => {
                warn!("{} rep {} {kind}: {e} (model seed {})", entry.label(), split.rep, row.model_seed);
                row.skipped = Some(format!("training failed: {e}"));
                rows.push(row);
                continue;
            }
        };
        let t1 = Instant::now();
        let probs = fit.model.predict_proba_rows(&inputs).map_err(|e| CliError::runtime(e, row.model_seed))?;
        let pf_surrogate = mlamc_pf(&labels, &probs).map_err(|e| CliError::runtime(e, row.model_seed))?;
        let t_predict = t_realize + t1.elapsed().as_secs_f64();
        if let Some(rest_labels) = &split.rest_labels {
            let m = Metrics::compute(&probs, rest_labels).map_err(|e| CliError::runtime(e, row.model_seed))?;
            row.acc = Some(m.acc);
            row.auc = m.auc;
        }
        if ctx.cfg.surrogate.save_models {
            let path = ctx.out.path(model_rel(entry, split.rep, kind));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            save_model(&fit.model, &path).map_err(|e| CliError::Runtime { message: format!("{}: {e}", path.display()), seed: None })?;
        }
        row.hyperparams = Some(serde_json::to_string(fit.model.hyperparams()).expect("hyperparameters serialize"));
        row.pf_surrogate = Some(pf_surrogate);
        row.pf_error_surrogate = pf_full.map(|f| pf_error(pf_surrogate, f));
        row.t_train = Some(fit.t_train);
        row.t_predict = Some(t_predict);
        row.speedup = Some(split.t_sim_full / (split.t_sim_train + fit.t_train + t_predict));
        rows.push(row);
    }
    Ok(rows)
}
