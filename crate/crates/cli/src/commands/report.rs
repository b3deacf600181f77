use std::collections::BTreeMap;
use std::path::Path;

use log::info;
use mlamc::surrogate::ModelKind;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::experiment::{DegradationRow, TestSizeRow, TrainSizeRow, TrainSourceRow, Which};
use super::pipeline::{MlamcMeta, MlamcRow, REPORT_STEM};
use super::{load_entry_dataset, mc_error, mean};
use crate::error::CliError;
use crate::output::read_json;
use crate::Context;

/// Notes written into the timing table.
pub const TIMING_NOTES: [&str; 3] = [
    "All times are wall-clock seconds measured by this tool with its limit-equilibrium solver.",
    "For comparison, a finite-difference slope model takes about 43 s per sample, and about 220 s per sample on a fine mesh.",
    "speedup = t_sim_full / (t_sim_train + t_train + t_predict); t_predict includes generating the predicted fields.",
];

#[derive(Deserialize)]
struct Table<M, R> {
    #[serde(flatten)]
    #[allow(dead_code)]
    meta: M,
    rows: Vec<R>,
}

#[derive(Deserialize)]
struct AnyMeta {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: String,
    pub cov: f64,
    pub xi: f64,
    pub mu_cu: f64,
    pub model: ModelKind,
    pub repetitions: usize,
    pub skipped: usize,
    /// Recounted from the dataset file.
    pub pf_full: Option<f64>,
    pub pf_data_only: Option<f64>,
    pub pf_surrogate: Option<f64>,
    pub pf_error_data_only: Option<f64>,
    pub pf_error_surrogate: Option<f64>,
    /// Repetitions where the surrogate error is strictly below the data-only error.
    pub surrogate_wins: usize,
    pub acc: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub config: String,
    pub model: ModelKind,
    pub n_samples: usize,
    pub n_train: usize,
    pub t_sim_full: f64,
    pub t_sim_train: f64,
    pub t_train: f64,
    pub t_predict: f64,
    pub t_mlamc: f64,
    pub speedup: f64,
    pub t_sim_full_projected: bool,
}

#[derive(Serialize)]
struct TimingMeta {
    notes: [&'static str; 3],
}

#[derive(Serialize)]
struct NoMeta {}

#[derive(Serialize)]
struct PfPoint {
    cov: f64,
    mu_cu: f64,
    estimator: String,
    xi: f64,
    pf: f64,
}

#[derive(Serialize)]
struct TrainSizePoint {
    cov: f64,
    xi: f64,
    mu_cu: f64,
    model: ModelKind,
    train_size: usize,
    pf_error_surrogate: Option<f64>,
    pf_error_data_only: f64,
    acc: Option<f64>,
}

#[derive(Serialize)]
struct TestSizeSummary {
    group: String,
    model: ModelKind,
    acc_small: Option<f64>,
    acc_rest: Option<f64>,
    max_acc_diff: Option<f64>,
}

#[derive(Serialize)]
struct TrainSourceSummary {
    config: String,
    model: ModelKind,
    pf_error_per_config: Option<f64>,
    pf_error_pooled: Option<f64>,
}

#[derive(Serialize)]
struct DegradationPoint {
    cov: f64,
    xi: f64,
    delta_v: f64,
    model: ModelKind,
    acc: Option<f64>,
    auc: Option<f64>,
}

const STEMS: [&str; 6] = ["summary", "timing", "test_size", "train_source", "plot_pf_vs_xi", "plot_pf_error_vs_train_size"];

fn optional<R: DeserializeOwned>(path: &Path) -> Result<Option<Vec<R>>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(read_json::<Table<AnyMeta, R>>(path, "")?.rows))
}

/// Aggregates the mlamc report and any experiment tables into `report/`.
pub fn report(ctx: &Context) -> Result<(), CliError> {
    let mut targets: Vec<String> = STEMS.iter().flat_map(|s| ctx.table_targets(&format!("report/{s}"), true)).collect();
    targets.extend(ctx.table_targets("report/plot_degradation", true));
    targets.push(Context::resolved_name("report"));
    ctx.out.claim(&targets)?;

    let report_path = ctx.out.path(format!("{REPORT_STEM}.json"));
    let mlamc: Table<MlamcMeta, MlamcRow> = read_json(&report_path, "run `mlamc mlamc` first")?;
    let mut recount = BTreeMap::new();
    if !ctx.cfg.campaign.subset_only {
        for e in &ctx.entries {
            let ds = load_entry_dataset(ctx, e)?;
            recount.insert(e.label(), ds.pf().map_err(|err| mc_error(err, e.mc.base_seed))?.pf);
        }
    }
    for r in &mlamc.rows {
        let fresh = recount.get(&r.config).copied();
        if r.pf_full != fresh {
            return Err(CliError::Config(format!(
                "{} lists pf_full {:?} for {} but the dataset gives {:?}; rerun mlamc",
                report_path.display(),
                r.pf_full,
                r.config,
                fresh
            )));
        }
    }
    ctx.write_resolved("report")?;

    let mut groups: BTreeMap<(usize, ModelKind), Vec<&MlamcRow>> = BTreeMap::new();
    let order: Vec<String> = ctx.entries.iter().map(|e| e.label()).collect();
    for r in &mlamc.rows {
        let idx = order.iter().position(|l| *l == r.config).ok_or_else(|| {
            CliError::Config(format!("{} holds configuration {} which the run config does not define", report_path.display(), r.config))
        })?;
        groups.entry((idx, r.model)).or_default().push(r);
    }

    let mut summary = Vec::new();
    let mut timing = Vec::new();
    for ((idx, model), rows) in &groups {
        let first = rows[0];
        let done: Vec<&&MlamcRow> = rows.iter().filter(|r| r.skipped.is_none()).collect();
        summary.push(SummaryRow {
            config: first.config.clone(),
            cov: first.cov,
            xi: first.xi,
            mu_cu: first.mu_cu,
            model: *model,
            repetitions: rows.len(),
            skipped: rows.len() - done.len(),
            pf_full: recount.get(&order[*idx]).copied(),
            pf_data_only: mean(rows.iter().map(|r| r.pf_data_only)),
            pf_surrogate: mean(done.iter().filter_map(|r| r.pf_surrogate)),
            pf_error_data_only: mean(rows.iter().filter_map(|r| r.pf_error_data_only)),
            pf_error_surrogate: mean(done.iter().filter_map(|r| r.pf_error_surrogate)),
            surrogate_wins: done
                .iter()
                .filter(|r| matches!((r.pf_error_surrogate, r.pf_error_data_only), (Some(s), Some(d)) if s < d))
                .count(),
            acc: mean(done.iter().filter_map(|r| r.acc)),
            auc: mean(done.iter().filter_map(|r| r.auc)),
        });
        if !done.is_empty() {
            let m = |f: fn(&MlamcRow) -> Option<f64>| mean(done.iter().filter_map(|r| f(r))).expect("non-empty");
            let (t_sim_full, t_sim_train) = (m(|r| Some(r.t_sim_full)), m(|r| Some(r.t_sim_train)));
            let (t_train, t_predict) = (m(|r| r.t_train), m(|r| r.t_predict));
            let t_mlamc = t_sim_train + t_train + t_predict;
            timing.push(TimingRow {
                config: first.config.clone(),
                model: *model,
                n_samples: first.n_samples,
                n_train: first.n_train,
                t_sim_full,
                t_sim_train,
                t_train,
                t_predict,
                t_mlamc,
                speedup: t_sim_full / t_mlamc,
                t_sim_full_projected: first.t_sim_full_projected,
            });
        }
    }
    ctx.write_table("report/summary", NoMeta {}, &summary, true)?;
    ctx.write_table("report/timing", TimingMeta { notes: TIMING_NOTES }, &timing, true)?;

    let mut pf_points = Vec::new();
    for s in &summary {
        if s.model == summary.iter().find(|o| o.config == s.config).expect("self").model {
            if let Some(pf) = s.pf_full {
                pf_points.push(PfPoint { cov: s.cov, mu_cu: s.mu_cu, estimator: "full".into(), xi: s.xi, pf });
            }
            if let Some(pf) = s.pf_data_only {
                pf_points.push(PfPoint { cov: s.cov, mu_cu: s.mu_cu, estimator: "data_only".into(), xi: s.xi, pf });
            }
        }
        if let Some(pf) = s.pf_surrogate {
            pf_points.push(PfPoint { cov: s.cov, mu_cu: s.mu_cu, estimator: s.model.to_string(), xi: s.xi, pf });
        }
    }
    pf_points.sort_by(|a, b| {
        (a.cov, a.mu_cu).partial_cmp(&(b.cov, b.mu_cu)).expect("finite").then(a.estimator.cmp(&b.estimator)).then(a.xi.total_cmp(&b.xi))
    });
    ctx.write_table("report/plot_pf_vs_xi", NoMeta {}, &pf_points, true)?;

    let exp = |w: Which| ctx.out.path(format!("{}.json", w.stem()));
    if let Some(rows) = optional::<TrainSizeRow>(&exp(Which::TrainSize))? {
        let mut cells: BTreeMap<(String, ModelKind, usize), Vec<&TrainSizeRow>> = BTreeMap::new();
        rows.iter().for_each(|r| cells.entry((r.config.clone(), r.model, r.train_size)).or_default().push(r));
        let pts: Vec<TrainSizePoint> = cells
            .values()
            .map(|v| TrainSizePoint {
                cov: v[0].cov,
                xi: v[0].xi,
                mu_cu: v[0].mu_cu,
                model: v[0].model,
                train_size: v[0].train_size,
                pf_error_surrogate: mean(v.iter().filter_map(|r| r.pf_error_surrogate)),
                pf_error_data_only: mean(v.iter().map(|r| r.pf_error_data_only)).expect("non-empty"),
                acc: mean(v.iter().filter_map(|r| r.acc)),
            })
            .collect();
        ctx.write_table("report/plot_pf_error_vs_train_size", NoMeta {}, &pts, true)?;
    }
    if let Some(rows) = optional::<TestSizeRow>(&exp(Which::TestSize))? {
        let mut cells: BTreeMap<(String, ModelKind), Vec<&TestSizeRow>> = BTreeMap::new();
        rows.iter().for_each(|r| cells.entry((r.group.clone(), r.model)).or_default().push(r));
        let out: Vec<TestSizeSummary> = cells
            .into_iter()
            .map(|((group, model), v)| TestSizeSummary {
                group,
                model,
                acc_small: mean(v.iter().filter_map(|r| r.acc_small)),
                acc_rest: mean(v.iter().filter_map(|r| r.acc_rest)),
                max_acc_diff: v.iter().filter_map(|r| r.acc_diff).reduce(f64::max),
            })
            .collect();
        ctx.write_table("report/test_size", NoMeta {}, &out, true)?;
    }
    if let Some(rows) = optional::<TrainSourceRow>(&exp(Which::TrainSource))? {
        let mut cells: BTreeMap<(String, ModelKind), Vec<&TrainSourceRow>> = BTreeMap::new();
        rows.iter().for_each(|r| cells.entry((r.config.clone(), r.model)).or_default().push(r));
        let out: Vec<TrainSourceSummary> = cells
            .into_iter()
            .map(|((config, model), v)| TrainSourceSummary {
                config,
                model,
                pf_error_per_config: mean(v.iter().filter_map(|r| r.pf_error_per_config)),
                pf_error_pooled: mean(v.iter().filter_map(|r| r.pf_error_pooled)),
            })
            .collect();
        ctx.write_table("report/train_source", NoMeta {}, &out, true)?;
    }
    if let Some(rows) = optional::<DegradationRow>(&exp(Which::Degradation))? {
        let mut cells: BTreeMap<(String, ModelKind), Vec<&DegradationRow>> = BTreeMap::new();
        rows.iter().for_each(|r| cells.entry((r.group.clone(), r.model)).or_default().push(r));
        let out: Vec<DegradationPoint> = cells
            .values()
            .map(|v| DegradationPoint {
                cov: v[0].cov,
                xi: v[0].xi,
                delta_v: v[0].delta_v,
                model: v[0].model,
                acc: mean(v.iter().filter_map(|r| r.acc)),
                auc: mean(v.iter().filter_map(|r| r.auc)),
            })
            .collect();
        ctx.write_table("report/plot_degradation", NoMeta {}, &out, true)?;
    }
    info!("report written to {}", ctx.out.path("report").display());
    Ok(())
}
