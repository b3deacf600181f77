use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, HyperParams, ModelKind, SurrogateError};
use crate::montecarlo::DatasetView;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparams: HyperParams,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub points: Vec<GridPoint>,
    /// Index into `points` of the winner.
    pub best: usize,
}

impl CvResult {
    pub fn winner(&self) -> &GridPoint {
        &self.points[self.best]
    }
    pub fn best_params(&self) -> HyperParams {
        self.points[self.best].hyperparams
    }
    /// Largest minus smallest mean accuracy over the grid.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.mean), b.max(p.mean)));
        hi - lo
    }
}

/// Fold number per position. Each class is shuffled with the stream of `seed`
/// and dealt round-robin, so every fold holds both classes whenever each class
/// has at least `k` members.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>, SurrogateError> {
    if k < 2 {
        return Err(SurrogateError::InvalidGrid(format!("k must be at least 2, got {k}")));
    }
    let mut r = rng::stream(seed);
    let mut folds = vec![0; labels.len()];
    for class in [1u8, 0] {
        let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if pos.len() < k {
            return Err(SurrogateError::FoldMissingClass { fold: pos.len(), class });
        }
        pos.shuffle(&mut r);
        for (j, p) in pos.into_iter().enumerate() {
            folds[p] = j % k;
        }
    }
    Ok(folds)
}

fn canonical<'a>(view: &DatasetView<'a>) -> DatasetView<'a> {
    let mut s = view.samples().to_vec();
    s.sort_by_key(|x| (x.seed, x.id));
    DatasetView::new(s)
}

/// Held-out accuracy per fold of `hp`. Fold `f` trains with seed
/// `derive_seed(seed, f + 1)`.
pub fn cross_validate(hp: &HyperParams, folds: &[usize], k: usize, view: &DatasetView, seed: u64) -> Result<Vec<f64>, SurrogateError> {
    (0..k)
        .into_par_iter()
        .map(|f| {
            let train_pos: Vec<usize> = (0..view.len()).filter(|&i| folds[i] != f).collect();
            let test_pos: Vec<usize> = (0..view.len()).filter(|&i| folds[i] == f).collect();
            let model = train(&view.select(&train_pos), hp, rng::derive_seed(seed, f as u64 + 1))?;
            Ok(model.evaluate(&view.select(&test_pos))?.acc)
        })
        .collect()
}

/// k-fold grid search on identical stratified folds. The winner has the
/// highest mean accuracy; ties go to the smaller [`HyperParams::complexity`],
/// then to the earlier grid entry.
pub fn grid_search_cv(
    kind: ModelKind,
    grid: &[HyperParams],
    k: usize,
    train_view: &DatasetView,
    seed: u64,
) -> Result<CvResult, SurrogateError> {
    if grid.is_empty() {
        return Err(SurrogateError::InvalidGrid("grid is empty".into()));
    }
    if let Some(p) = grid.iter().find(|p| p.kind() != kind) {
        return Err(SurrogateError::InvalidGrid(format!("{} entry in a {kind} grid", p.kind())));
    }
    for p in grid {
        p.validate()?;
    }
    let view = canonical(train_view);
    let folds = stratified_folds(&view.labels(), k, rng::derive_seed(seed, 0))?;
    let points = grid
        .iter()
        .map(|hp| {
            let fold_scores = cross_validate(hp, &folds, k, &view, seed)?;
            let mean = fold_scores.iter().sum::<f64>() / k as f64;
            Ok(GridPoint { hyperparams: *hp, fold_scores, mean })
        })
        .collect::<Result<Vec<_>, SurrogateError>>()?;
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let b = &points[best];
        let simpler = p.hyperparams.complexity().partial_cmp(&b.hyperparams.complexity()) == Some(std::cmp::Ordering::Less);
        if p.mean > b.mean || (p.mean == b.mean && simpler) {
            best = i;
        }
    }
    Ok(CvResult { points, best })
}

/// Cross product of `c` and `gamma` values.
pub fn svc_grid(cs: &[f64], gammas: &[f64], base: super::SvcParams) -> Vec<HyperParams> {
    cs.iter().flat_map(|&c| gammas.iter().map(move |&gamma| HyperParams::Svc(super::SvcParams { c, gamma, ..base }))).collect()
}
