use std::fs;
use std::path::{Path, PathBuf};

use mlamc::montecarlo::{McConfig, SplitStrategy};
use mlamc::surrogate::{
    Criterion, HyperParams, MaxFeatures, MlpParams, ModelKind, Optimizer, RfParams, SvcParams,
};
use mlamc::{rng, FieldStatistics, SearchSpec, SlopeGeometry};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub geometry: SlopeGeometry,
    #[serde(default)]
    pub search: Option<SearchSpec>,
    pub statistics: StatisticsBlock,
    pub campaign: CampaignBlock,
    #[serde(default)]
    pub surrogate: SurrogateBlock,
    #[serde(default)]
    pub report: ReportBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
}

/// Every combination of these lists is one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticsBlock {
    pub mu_cu: Vec<f64>,
    pub cov: Vec<f64>,
    pub delta_h: Vec<f64>,
    #[serde(default = "unit_delta_v")]
    pub delta_v: Vec<f64>,
}

fn unit_delta_v() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignBlock {
    pub n_samples: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub compute_fos: bool,
    /// Simulate only the training subsets; no full campaign exists.
    #[serde(default)]
    pub subset_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateBlock {
    pub models: Vec<ModelKind>,
    pub train_count: Option<usize>,
    pub train_fraction: Option<f64>,
    pub strategy: SplitStrategy,
    pub repetitions: usize,
    pub tuning: Option<TuningBlock>,
    pub hyperparams: ModelParams,
    /// Write every trained model under `mlamc/models/`.
    pub save_models: bool,
}

impl Default for SurrogateBlock {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            train_count: None,
            train_fraction: None,
            strategy: SplitStrategy::Stratified,
            repetitions: 10,
            tuning: None,
            hyperparams: ModelParams::default(),
            save_models: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub rf: RfParams,
    pub svc: SvcParams,
    pub mlp: MlpParams,
}

impl ModelParams {
    pub fn get(&self, kind: ModelKind) -> HyperParams {
        match kind {
            ModelKind::Rf => HyperParams::Rf(self.rf),
            ModelKind::Svc => HyperParams::Svc(self.svc),
            ModelKind::Mlp => HyperParams::Mlp(self.mlp),
        }
    }
}

/// Grid axes; an absent axis keeps the fixed hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningBlock {
    #[serde(default = "five")]
    pub k: usize,
    #[serde(default)]
    pub rf: RfGrid,
    #[serde(default)]
    pub svc: SvcGrid,
    #[serde(default)]
    pub mlp: MlpGrid,
}

fn five() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub criterion: Vec<Criterion>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvcGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpGrid {
    pub units: Vec<usize>,
    pub dropout_rate: Vec<f64>,
    pub l2: Vec<f64>,
    pub optimizer: Vec<Optimizer>,
}

fn axis<T: Copy>(values: &[T], fixed: T) -> Vec<T> {
    if values.is_empty() { vec![fixed] } else { values.to_vec() }
}

impl TuningBlock {
    pub fn grid(&self, kind: ModelKind, base: &ModelParams) -> Vec<HyperParams> {
        let mut out = Vec::new();
        match kind {
            ModelKind::Rf => {
                let b = base.rf;
                for n_estimators in axis(&self.rf.n_estimators, b.n_estimators) {
                    for max_depth in axis(&self.rf.max_depth, b.max_depth) {
                        for max_features in axis(&self.rf.max_features, b.max_features) {
                            for criterion in axis(&self.rf.criterion, b.criterion) {
                                out.push(HyperParams::Rf(RfParams { n_estimators, max_depth, max_features, criterion, ..b }));
                            }
                        }
                    }
                }
            }
            ModelKind::Svc => {
                let b = base.svc;
                for c in axis(&self.svc.c, b.c) {
                    for gamma in axis(&self.svc.gamma, b.gamma) {
                        out.push(HyperParams::Svc(SvcParams { c, gamma, ..b }));
                    }
                }
            }
            ModelKind::Mlp => {
                let b = base.mlp;
                for units in axis(&self.mlp.units, b.units) {
                    for dropout_rate in axis(&self.mlp.dropout_rate, b.dropout_rate) {
                        for l2 in axis(&self.mlp.l2, b.l2) {
                            for optimizer in axis(&self.mlp.optimizer, b.optimizer) {
                                out.push(HyperParams::Mlp(MlpParams { units, dropout_rate, l2, optimizer, ..b }));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportBlock {
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for ReportBlock {
    fn default() -> Self {
        Self { output_dir: PathBuf::from("mlamc-out"), formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentBlock {
    pub train_sizes: Vec<usize>,
    pub repetitions: usize,
    /// Training size of the test-size, train-source and degradation studies.
    pub train_count: usize,
    /// Size of the small test split in the test-size study.
    pub test_size: usize,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self { train_sizes: vec![10, 20, 40, 100, 400], repetitions: 10, train_count: 500, test_size: 500 }
    }
}

/// One campaign of the cross product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub index: usize,
    pub mc: McConfig,
}

impl Entry {
    pub fn label(&self) -> String {
        self.mc.stats.label()
    }
    pub fn dataset_file(&self) -> String {
        format!("{}.mlds", self.label())
    }
    /// `(cov, delta_h, delta_v)`: campaigns that differ only in `mu_cu`.
    pub fn group_key(&self) -> (f64, f64, f64) {
        (self.mc.stats.cov(), self.mc.stats.delta_h(), self.mc.stats.delta_v())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})", self.schema_version));
        }
        self.geometry.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(s) = &self.search {
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        let st = &self.statistics;
        for (name, list) in [("mu_cu", &st.mu_cu), ("cov", &st.cov), ("delta_h", &st.delta_h), ("delta_v", &st.delta_v)] {
            if list.is_empty() {
                return bad(format!("statistics.{name} is empty"));
            }
        }
        self.entries()?;
        if self.campaign.n_samples < 2 {
            return bad("campaign.n_samples must be at least 2".into());
        }
        let s = &self.surrogate;
        if s.models.is_empty() {
            return bad("surrogate.models is empty".into());
        }
        if s.repetitions == 0 || self.experiment.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if s.train_count.is_some() && s.train_fraction.is_some() {
            return bad("give surrogate.train_count or surrogate.train_fraction, not both".into());
        }
        if let Some(f) = s.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("surrogate.train_fraction must lie in (0, 1), got {f}"));
            }
        }
        let n_train = self.train_count();
        if n_train == 0 || n_train >= self.campaign.n_samples {
            return bad(format!("training size {n_train} must lie in [1, {})", self.campaign.n_samples));
        }
        if self.campaign.subset_only && s.strategy == SplitStrategy::Stratified {
            return bad("subset_only campaigns have no labels before simulation; use strategy \"random\"".into());
        }
        for kind in &s.models {
            s.hyperparams.get(*kind).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(t) = &s.tuning {
            if t.k < 2 {
                return bad("surrogate.tuning.k must be at least 2".into());
            }
            for kind in &s.models {
                for hp in t.grid(*kind, &s.hyperparams) {
                    hp.validate().map_err(|e| CliError::Config(format!("tuning grid: {e}")))?;
                }
            }
        }
        if self.report.formats.is_empty() {
            return bad("report.formats is empty".into());
        }
        Ok(())
    }

    /// Training size: `train_count`, else `round(train_fraction · n_samples)`,
    /// else 1% of the campaign; a fraction never yields fewer than one sample.
    pub fn train_count(&self) -> usize {
        let n = self.campaign.n_samples;
        self.surrogate
            .train_count
            .unwrap_or_else(|| ((self.surrogate.train_fraction.unwrap_or(0.01) * n as f64).round() as usize).max(1))
    }

    /// Cross product in `cov`, `delta_h`, `delta_v`, `mu_cu` order; campaign
    /// `i` uses base seed `derive_seed(campaign.base_seed, i)`.
    pub fn entries(&self) -> Result<Vec<Entry>, CliError> {
        let st = &self.statistics;
        let mut out = Vec::new();
        for &cov in &st.cov {
            for &dh in &st.delta_h {
                for &dv in &st.delta_v {
                    for &mu in &st.mu_cu {
                        let stats = FieldStatistics::new(mu, cov, dh, dv).map_err(|e| CliError::Config(e.to_string()))?;
                        let index = out.len();
                        let mc = McConfig {
                            stats,
                            geometry: self.geometry,
                            search: self.search,
                            n_samples: self.campaign.n_samples,
                            base_seed: rng::derive_seed(self.campaign.base_seed, index as u64),
                            compute_fos: self.campaign.compute_fos,
                        };
                        out.push(Entry { index, mc });
                    }
                }
            }
        }
        let mut labels: Vec<String> = out.iter().map(Entry::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("statistics lists contain duplicate configurations".into()));
        }
        Ok(out)
    }

    pub fn output_dir(&self) -> &Path {
        &self.report.output_dir
    }

    pub fn wants(&self, f: Format) -> bool {
        self.report.formats.contains(&f)
    }
}
