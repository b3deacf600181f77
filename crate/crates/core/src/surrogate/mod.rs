//! Surrogate classifiers that learn the failed/stable label from a strength
//! field: random forest, RBF support vector classifier and a one-hidden-layer
//! dropout network.
//!
//! Every learner takes a [`DatasetView`], its hyperparameters and a seed, and
//! first puts the training samples in canonical `(seed, id)` order, so the
//! fitted model does not depend on the order of the view. Forests consume raw
//! kPa features; the SVC and the network consume features standardized with
//! training-split statistics that are stored in the model.
//!
//! ```
//! use mlamc::montecarlo::{DatasetView, Sample};
//! use mlamc::surrogate::{train, HyperParams, RfParams};
//!
//! let samples: Vec<Sample> = (0..20)
//!     .map(|i| Sample {
//!         id: i,
//!         seed: i,
//!         features: vec![i as f64, 1.0],
//!         label: u8::from(i < 10),
//!         fos: None,
//!     })
//!     .collect();
//! let view = DatasetView::new(samples.iter().collect());
//! let model = train(&view, &HyperParams::Rf(RfParams::default()), 7).unwrap();
//! assert_eq!(model.predict(&view).unwrap(), view.labels());
//! ```

mod codec;
pub mod forest;
pub mod metrics;
pub mod mlp;
pub mod svc;
pub mod tuning;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::montecarlo::DatasetView;

pub use codec::{decode_model, encode_model, load_model, save_model, ModelFormatError};
pub use forest::{Criterion, Forest, MaxFeatures, RfParams, Tree};
pub use metrics::{accuracy, pf_error, roc_auc, Confusion, Metrics};
pub use mlp::{Activation, MlpParams, Network, Optimizer};
pub use svc::{SvcFit, SvcParams};
pub use tuning::{grid_search_cv, stratified_folds, svc_grid, CvResult, GridPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("training set needs both classes; no {} samples present", if *.0 == 1 { "failed" } else { "stable" })]
    SingleClass(u8),
    #[error("expected {expected} features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("SVC solver did not converge in {iterations} iterations (duality gap {gap:.3e}, tolerance {tol:.1e})")]
    SvcNotConverged { iterations: usize, gap: f64, tol: f64 },
    #[error("MLP training diverged at epoch {epoch}: loss {loss}")]
    MlpDiverged { epoch: usize, loss: f64 },
    #[error("AUC is undefined when only one class is present")]
    AucUndefined,
    #[error("cross-validation needs k >= 2 and at least k samples of each class; fold {fold} has no {} samples", if *.class == 1 { "failed" } else { "stable" })]
    FoldMissingClass { fold: usize, class: u8 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Svc,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Rf, ModelKind::Svc, ModelKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Svc => "svc",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn default_params(self) -> HyperParams {
        match self {
            ModelKind::Rf => HyperParams::Rf(RfParams::default()),
            ModelKind::Svc => HyperParams::Svc(SvcParams::default()),
            ModelKind::Mlp => HyperParams::Mlp(MlpParams::default()),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HyperParams {
    Rf(RfParams),
    Svc(SvcParams),
    Mlp(MlpParams),
}

impl HyperParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            HyperParams::Rf(_) => ModelKind::Rf,
            HyperParams::Svc(_) => ModelKind::Svc,
            HyperParams::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        match self {
            HyperParams::Rf(p) => p.validate(),
            HyperParams::Svc(p) => p.validate(),
            HyperParams::Mlp(p) => p.validate(),
        }
    }

    /// Ordering key for tie-breaking: smaller is simpler.
    pub fn complexity(&self) -> Vec<f64> {
        match self {
            HyperParams::Rf(p) => vec![p.n_estimators as f64, p.max_depth as f64],
            HyperParams::Svc(p) => vec![p.c, p.gamma],
            HyperParams::Mlp(p) => vec![p.units as f64, p.epochs as f64],
        }
    }
}

/// Per-feature z-score statistics of a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant features.
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn fit(x: &[f64], d: usize) -> Self {
        let n = (x.len() / d) as f64;
        let mut mean = vec![0.0; d];
        for row in x.chunks_exact(d) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.chunks_exact(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) { sd } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Training samples in canonical order, flattened row-major.
pub(crate) struct TrainingSet {
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub d: usize,
    pub hash: String,
}

impl TrainingSet {
    pub fn from_view(view: &DatasetView) -> Result<Self, SurrogateError> {
        let mut samples: Vec<_> = view.iter().collect();
        if samples.is_empty() {
            return Err(SurrogateError::EmptyInput);
        }
        samples.sort_by_key(|s| (s.seed, s.id));
        let d = samples[0].features.len();
        let mut x = Vec::with_capacity(samples.len() * d);
        let mut y = Vec::with_capacity(samples.len());
        let mut h = Sha256::new();
        for s in &samples {
            if s.features.len() != d {
                return Err(SurrogateError::FeatureMismatch { expected: d, got: s.features.len() });
            }
            x.extend_from_slice(&s.features);
            y.push(s.label);
            h.update(s.seed.to_le_bytes());
            h.update(s.id.to_le_bytes());
            h.update([s.label]);
        }
        for class in [1u8, 0] {
            if !y.contains(&class) {
                return Err(SurrogateError::SingleClass(class));
            }
        }
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { x, y, d, hash })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn standardized(&self) -> (Normalization, Vec<f64>) {
        let norm = Normalization::fit(&self.x, self.d);
        let z = self.x.chunks_exact(self.d).flat_map(|r| norm.apply(r)).collect();
        (norm, z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Fitted {
    Rf(Forest),
    Svc(SvcFit),
    Mlp(Network),
}

/// A fitted surrogate. Immutable; prediction is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub(crate) hyperparams: HyperParams,
    pub(crate) n_features: usize,
    pub(crate) normalization: Option<Normalization>,
    pub(crate) training_hash: String,
    pub(crate) fitted: Fitted,
}

pub fn train(view: &DatasetView, hp: &HyperParams, seed: u64) -> Result<TrainedModel, SurrogateError> {
    match hp {
        HyperParams::Rf(p) => train_random_forest(view, p, seed),
        HyperParams::Svc(p) => train_svc(view, p, seed),
        HyperParams::Mlp(p) => train_mlp(view, p, seed),
    }
}

pub fn train_random_forest(view: &DatasetView, hp: &RfParams, seed: u64) -> Result<TrainedModel, SurrogateError> {
    hp.validate()?;
    let set = TrainingSet::from_view(view)?;
    let forest = forest::fit(&set, hp, seed);
    Ok(TrainedModel {
        hyperparams: HyperParams::Rf(*hp),
        n_features: set.d,
        normalization: None,
        training_hash: set.hash,
        fitted: Fitted::Rf(forest),
    })
}

pub fn train_svc(view: &DatasetView, hp: &SvcParams, seed: u64) -> Result<TrainedModel, SurrogateError> {
    hp.validate()?;
    let set = TrainingSet::from_view(view)?;
    let (norm, z) = set.standardized();
    let fit = svc::fit(&z, &set.y, set.d, hp, seed)?;
    Ok(TrainedModel {
        hyperparams: HyperParams::Svc(*hp),
        n_features: set.d,
        normalization: Some(norm),
        training_hash: set.hash,
        fitted: Fitted::Svc(fit),
    })
}

pub fn train_mlp(view: &DatasetView, hp: &MlpParams, seed: u64) -> Result<TrainedModel, SurrogateError> {
    hp.validate()?;
    let set = TrainingSet::from_view(view)?;
    let (norm, z) = set.standardized();
    let net = mlp::fit(&z, &set.y, set.d, hp, seed)?;
    Ok(TrainedModel {
        hyperparams: HyperParams::Mlp(*hp),
        n_features: set.d,
        normalization: Some(norm),
        training_hash: set.hash,
        fitted: Fitted::Mlp(net),
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.hyperparams.kind()
    }
    pub fn hyperparams(&self) -> &HyperParams {
        &self.hyperparams
    }
    pub fn n_features(&self) -> usize {
        self.n_features
    }
    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }
    /// SHA-256 of the canonical `(seed, id, label)` sequence of the training split.
    pub fn training_hash(&self) -> &str {
        &self.training_hash
    }
    pub fn forest(&self) -> Option<&Forest> {
        match &self.fitted {
            Fitted::Rf(f) => Some(f),
            _ => None,
        }
    }
    pub fn svc(&self) -> Option<&SvcFit> {
        match &self.fitted {
            Fitted::Svc(s) => Some(s),
            _ => None,
        }
    }
    pub fn network(&self) -> Option<&Network> {
        match &self.fitted {
            Fitted::Mlp(n) => Some(n),
            _ => None,
        }
    }

    /// Failure probability of one feature vector.
    pub fn proba_row(&self, row: &[f64]) -> Result<f64, SurrogateError> {
        if row.len() != self.n_features {
            return Err(SurrogateError::FeatureMismatch { expected: self.n_features, got: row.len() });
        }
        let z;
        let input = match &self.normalization {
            Some(norm) => {
                z = norm.apply(row);
                &z
            }
            None => row,
        };
        Ok(match &self.fitted {
            Fitted::Rf(f) => f.proba(input),
            Fitted::Svc(s) => s.proba(input),
            Fitted::Mlp(n) => n.proba(input),
        })
    }

    pub fn predict_proba_rows(&self, rows: &[&[f64]]) -> Result<Vec<f64>, SurrogateError> {
        use rayon::prelude::*;
        rows.par_iter().map(|r| self.proba_row(r)).collect()
    }

    pub fn predict_proba(&self, samples: &DatasetView) -> Result<Vec<f64>, SurrogateError> {
        self.predict_proba_rows(&samples.features())
    }

    /// Labels at the 0.5 threshold.
    pub fn predict(&self, samples: &DatasetView) -> Result<Vec<u8>, SurrogateError> {
        Ok(self.predict_proba(samples)?.into_iter().map(|p| u8::from(p >= 0.5)).collect())
    }

    pub fn evaluate(&self, samples: &DatasetView) -> Result<Metrics, SurrogateError> {
        Metrics::compute(&self.predict_proba(samples)?, &samples.labels())
    }
}

/// `100 × mean failure probability`, in percent.
pub fn predicted_pf(model: &TrainedModel, samples: &DatasetView) -> Result<f64, SurrogateError> {
    pf_from_probabilities(&model.predict_proba(samples)?)
}

pub fn pf_from_probabilities(probabilities: &[f64]) -> Result<f64, SurrogateError> {
    if probabilities.is_empty() {
        return Err(SurrogateError::EmptyInput);
    }
    Ok(100.0 * probabilities.iter().sum::<f64>() / probabilities.len() as f64)
}

/// Campaign pf from simulated training labels and predicted probabilities of
/// the remaining samples: `100 · (N_f,train + Σ p) / (n_train + n_rest)`.
pub fn mlamc_pf(train_labels: &[u8], rest_probabilities: &[f64]) -> Result<f64, SurrogateError> {
    let n = train_labels.len() + rest_probabilities.len();
    if n == 0 {
        return Err(SurrogateError::EmptyInput);
    }
    let failed = train_labels.iter().filter(|&&l| l == 1).count() as f64;
    Ok(100.0 * (failed + rest_probabilities.iter().sum::<f64>()) / n as f64)
}
