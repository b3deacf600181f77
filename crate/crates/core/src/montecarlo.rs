//! Monte Carlo campaigns over one statistical configuration, probability of
//! failure, train/test subsampling and the dataset file format.
//!
//! # Dataset file
//!
//! One line of JSON (the [`Manifest`]) terminated by `\n`, followed by a
//! binary payload of `n_samples` fixed-size records:
//!
//! | field     | encoding                                   |
//! |-----------|--------------------------------------------|
//! | id        | u64, little endian                         |
//! | seed      | u64, little endian                         |
//! | strengths | `cell_count` × f64, little endian, kPa     |
//! | label     | u8, 1 = failed, 0 = stable                 |
//! | fos       | f64, little endian, only if `compute_fos`  |

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, CholeskyFactor, FieldError, FieldRealization, FieldStatistics};
use crate::rng;
use crate::slope::{self, SearchSpec, SlopeError, SlopeGeometry, StabilityEvaluator};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Slope(#[from] SlopeError),
    #[error("stability evaluation failed for sample {id} (seed {seed}): {source}")]
    Solver { id: u64, seed: u64, source: SlopeError },
    #[error("invalid campaign configuration: {0}")]
    InvalidConfig(String),
    #[error("probability of failure needs at least one label")]
    EmptyLabels,
    #[error("coefficient of variation of pf is undefined at pf = {pf}%")]
    PfCovUndefined { pf: f64 },
    #[error("invalid subsample request: {0}")]
    Subsample(String),
    #[error("stratified split needs both classes; no {} samples present", if *.0 == 1 { "failed" } else { "stable" })]
    MissingClass(u8),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("dataset schema error: {0}")]
    Schema(String),
    #[error("dataset payload error: {0}")]
    Payload(String),
    #[error("grid ordering mismatch: manifest has {manifest_cells} cells / hash {manifest_hash}, geometry gives {grid_cells} / {grid_hash}")]
    HashMismatch { manifest_cells: usize, manifest_hash: String, grid_cells: usize, grid_hash: String },
    #[error(transparent)]
    Slope(#[from] SlopeError),
}

/// One statistical configuration and how many realizations to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub stats: FieldStatistics,
    pub geometry: SlopeGeometry,
    /// Circle search; the geometry's default search box when absent.
    #[serde(default)]
    pub search: Option<SearchSpec>,
    pub n_samples: usize,
    pub base_seed: u64,
    /// Also record the minimum factor of safety of every sample.
    #[serde(default)]
    pub compute_fos: bool,
}

impl McConfig {
    pub fn new(stats: FieldStatistics, geometry: SlopeGeometry, n_samples: usize, base_seed: u64) -> Self {
        Self { stats, geometry, search: None, n_samples, base_seed, compute_fos: false }
    }

    pub fn search_spec(&self) -> SearchSpec {
        self.search.unwrap_or_else(|| SearchSpec::default_for(&self.geometry))
    }

    /// `(COV, ξ, μ_Cu)`.
    pub fn label(&self) -> (f64, f64, f64) {
        (self.stats.cov(), self.stats.anisotropy(), self.stats.mu_cu())
    }

    /// Seed of sample `id`.
    pub fn sample_seed(&self, id: u64) -> u64 {
        rng::derive_seed(self.base_seed, id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub seed: u64,
    /// `C_u` per cell, kPa.
    pub features: Vec<f64>,
    /// 1 = failed, 0 = stable.
    pub label: u8,
    pub fos: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config: McConfig,
    pub cell_count: usize,
    pub grid_hash: String,
    pub compute_fos: bool,
    pub creation_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

/// Everything needed to simulate samples of one configuration: the
/// covariance factor and the precomputed stability evaluator.
pub struct Campaign {
    config: McConfig,
    factor: CholeskyFactor,
    evaluator: StabilityEvaluator,
}

impl Campaign {
    pub fn prepare(config: McConfig) -> Result<Self, McError> {
        if config.n_samples == 0 {
            return Err(McError::InvalidConfig("n_samples must be at least 1".into()));
        }
        let evaluator = StabilityEvaluator::new(config.geometry, config.search_spec())?;
        let cov = field::build_covariance(evaluator.grid(), &config.stats)?;
        let factor = field::cholesky_factor(&cov)?;
        Ok(Self { config, factor, evaluator })
    }

    pub fn config(&self) -> &McConfig {
        &self.config
    }
    pub fn evaluator(&self) -> &StabilityEvaluator {
        &self.evaluator
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            schema_version: SCHEMA_VERSION,
            config: self.config,
            cell_count: self.evaluator.grid().n_cells(),
            grid_hash: self.evaluator.grid().ordering_hash(),
            compute_fos: self.config.compute_fos,
            creation_seed: self.config.base_seed,
        }
    }

    pub fn realize(&self, id: u64) -> FieldRealization {
        field::realize_field(&self.factor, &self.config.stats, self.config.sample_seed(id))
    }

    /// Realizes and evaluates sample `id`.
    pub fn simulate(&self, id: u64) -> Result<Sample, McError> {
        let f = self.realize(id);
        let wrap = |source| McError::Solver { id, seed: f.seed, source };
        let (label, fos) = if self.config.compute_fos {
            let r = self.evaluator.min_fos(&f.values).map_err(wrap)?;
            (r.status.label(), r.fos_min)
        } else {
            (self.evaluator.classify(&f.values).map_err(wrap)?.status.label(), None)
        };
        Ok(Sample { id, seed: f.seed, features: f.values, label, fos })
    }

    /// Simulates the given ids in parallel on the current rayon pool. The
    /// result is in input order; the first failing id (in that order) is
    /// reported.
    pub fn simulate_ids(&self, ids: &[u64]) -> Result<Vec<Sample>, McError> {
        let results: Vec<_> = ids.par_iter().map(|&id| self.simulate(id)).collect();
        results.into_iter().collect()
    }

    /// Feature vectors only, without any stability evaluation.
    pub fn realize_ids(&self, ids: &[u64]) -> Vec<FieldRealization> {
        ids.par_iter().map(|&id| self.realize(id)).collect()
    }

    pub fn run(&self) -> Result<Dataset, McError> {
        let ids: Vec<u64> = (0..self.config.n_samples as u64).collect();
        Ok(Dataset { manifest: self.manifest(), samples: self.simulate_ids(&ids)? })
    }
}

/// Simulates every sample of `config`. Output does not depend on the number of
/// rayon workers.
pub fn run_monte_carlo(config: &McConfig) -> Result<Dataset, McError> {
    Campaign::prepare(*config)?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfEstimate {
    /// Percent.
    pub pf: f64,
    pub n: usize,
    pub n_failed: usize,
    /// Sampling coefficient of variation of the estimate; `None` when pf = 0.
    pub cov_pf: Option<f64>,
}

/// `pf = 100 · N_f / N`.
pub fn estimate_pf(labels: &[u8]) -> Result<PfEstimate, McError> {
    if labels.is_empty() {
        return Err(McError::EmptyLabels);
    }
    let n = labels.len();
    let n_failed = labels.iter().filter(|&&l| l == 1).count();
    let pf = 100.0 * n_failed as f64 / n as f64;
    Ok(PfEstimate { pf, n, n_failed, cov_pf: pf_cov(pf, n).ok() })
}

/// `sqrt((1 - p) / (p · n))` with `p = pf / 100`. Zero at pf = 100, undefined
/// at pf = 0.
pub fn pf_cov(pf: f64, n: usize) -> Result<f64, McError> {
    if !(pf > 0.0 && pf <= 100.0) || n == 0 {
        return Err(McError::PfCovUndefined { pf });
    }
    let p = pf / 100.0;
    Ok(((1.0 - p) / (p * n as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    Random,
    Stratified,
}

/// Borrowed, ordered selection of samples, possibly drawn from several
/// datasets.
#[derive(Debug, Clone, Default)]
pub struct DatasetView<'a> {
    samples: Vec<&'a Sample>,
}

impl<'a> DatasetView<'a> {
    pub fn new(samples: Vec<&'a Sample>) -> Self {
        Self { samples }
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn samples(&self) -> &[&'a Sample] {
        &self.samples
    }
    pub fn iter(&self) -> impl Iterator<Item = &'a Sample> + '_ {
        self.samples.iter().copied()
    }
    pub fn features(&self) -> Vec<&'a [f64]> {
        self.samples.iter().map(|s| s.features.as_slice()).collect()
    }
    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }
    /// Samples at the given positions, in that order.
    pub fn select(&self, positions: &[usize]) -> DatasetView<'a> {
        DatasetView { samples: positions.iter().map(|&p| self.samples[p]).collect() }
    }
    pub fn concat(views: &[DatasetView<'a>]) -> DatasetView<'a> {
        DatasetView { samples: views.iter().flat_map(|v| v.samples.iter().copied()).collect() }
    }
}

impl Dataset {
    pub fn view(&self) -> DatasetView<'_> {
        DatasetView { samples: self.samples.iter().collect() }
    }
    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }
    pub fn pf(&self) -> Result<PfEstimate, McError> {
        estimate_pf(&self.labels())
    }
}

/// Splits `view` into a training part of `n_train` samples and the rest.
///
/// Selection is by position: positions are shuffled with the ChaCha8 stream of
/// `seed` and the first `n_train` taken (per class for the stratified
/// strategy). Both parts keep the original relative order.
pub fn subsample<'a>(
    view: &DatasetView<'a>,
    n_train: usize,
    strategy: SplitStrategy,
    seed: u64,
) -> Result<(DatasetView<'a>, DatasetView<'a>), McError> {
    let n = view.len();
    if n_train == 0 || n_train >= n {
        return Err(McError::Subsample(format!("n_train must lie in [1, {}), got {n_train}", n)));
    }
    let mut chosen = match strategy {
        SplitStrategy::Random => random_positions(n, n_train, seed),
        SplitStrategy::Stratified => {
            let (mut failed, mut stable): (Vec<usize>, Vec<usize>) = (0..n).partition(|&p| view.samples[p].label == 1);
            if failed.is_empty() {
                return Err(McError::MissingClass(1));
            }
            if stable.is_empty() {
                return Err(McError::MissingClass(0));
            }
            let ideal = n_train as f64 * failed.len() as f64 / n as f64;
            let lo = 1.max(n_train.saturating_sub(stable.len()));
            let hi = failed.len().min(n_train - 1);
            if lo > hi {
                return Err(McError::Subsample(format!("cannot place both classes in {n_train} training samples")));
            }
            let k = (ideal.round() as usize).clamp(lo, hi);
            let mut rng = rng::stream(seed);
            failed.shuffle(&mut rng);
            stable.shuffle(&mut rng);
            failed.truncate(k);
            stable.truncate(n_train - k);
            failed.extend(stable);
            failed
        }
    };
    chosen.sort_unstable();
    let mut in_train = vec![false; n];
    chosen.iter().for_each(|&p| in_train[p] = true);
    let rest: Vec<usize> = (0..n).filter(|&p| !in_train[p]).collect();
    Ok((view.select(&chosen), view.select(&rest)))
}

/// `k` distinct positions out of `0..n`, ascending, drawn with the stream of
/// `seed`. This is the random split's training selection.
pub fn random_positions(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..n).collect();
    pos.shuffle(&mut rng::stream(seed));
    pos.truncate(k);
    pos.sort_unstable();
    pos
}

fn record_len(cell_count: usize, compute_fos: bool) -> usize {
    16 + 8 * cell_count + 1 + if compute_fos { 8 } else { 0 }
}

/// Serializes to the frozen dataset format.
pub fn encode_dataset(dataset: &Dataset) -> Vec<u8> {
    let m = &dataset.manifest;
    let mut out = serde_json::to_vec(m).expect("manifest serializes");
    out.push(b'\n');
    out.reserve(dataset.samples.len() * record_len(m.cell_count, m.compute_fos));
    for s in &dataset.samples {
        out.extend_from_slice(&s.id.to_le_bytes());
        out.extend_from_slice(&s.seed.to_le_bytes());
        for v in &s.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(s.label);
        if m.compute_fos {
            out.extend_from_slice(&s.fos.unwrap_or(f64::NAN).to_le_bytes());
        }
    }
    out
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    f.write_all(&encode_dataset(dataset))?;
    f.flush()?;
    Ok(())
}

/// Splits the manifest line from the payload and validates the manifest
/// against the grid its geometry produces.
pub fn decode_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8]), DatasetError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| DatasetError::Schema("missing manifest line".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| DatasetError::Schema(format!("unreadable manifest: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(DatasetError::Schema(format!(
            "schema version {} (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    if manifest.compute_fos != manifest.config.compute_fos {
        return Err(DatasetError::Schema("compute_fos disagrees with the embedded configuration".into()));
    }
    let grid = slope::build_grid(&manifest.config.geometry)?;
    let grid_hash = grid.ordering_hash();
    if grid.n_cells() != manifest.cell_count || grid_hash != manifest.grid_hash {
        return Err(DatasetError::HashMismatch {
            manifest_cells: manifest.cell_count,
            manifest_hash: manifest.grid_hash,
            grid_cells: grid.n_cells(),
            grid_hash,
        });
    }
    Ok((manifest, &bytes[nl + 1..]))
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, DatasetError> {
    let (manifest, payload) = decode_manifest(bytes)?;
    let n = manifest.config.n_samples;
    let rec = record_len(manifest.cell_count, manifest.compute_fos);
    if payload.len() != n * rec {
        return Err(DatasetError::Payload(format!(
            "expected {n} records of {rec} bytes ({} bytes), found {} bytes",
            n * rec,
            payload.len()
        )));
    }
    let u64_at = |b: &[u8], o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
    let f64_at = |b: &[u8], o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
    let mut samples = Vec::with_capacity(n);
    for (k, r) in payload.chunks_exact(rec).enumerate() {
        let id = u64_at(r, 0);
        let seed = u64_at(r, 8);
        if id != k as u64 || seed != manifest.config.sample_seed(id) {
            return Err(DatasetError::Payload(format!("record {k} has id {id} / seed {seed}")));
        }
        let features = (0..manifest.cell_count).map(|i| f64_at(r, 16 + 8 * i)).collect();
        let label = r[16 + 8 * manifest.cell_count];
        if label > 1 {
            return Err(DatasetError::Payload(format!("record {k} has label {label}")));
        }
        let fos = manifest.compute_fos.then(|| f64_at(r, 17 + 8 * manifest.cell_count));
        samples.push(Sample { id, seed, features, label, fos });
    }
    Ok(Dataset { manifest, samples })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    decode_dataset(&fs::read(path)?)
}

/// One row per sample: `id,seed,label[,fos],c0,c1,…`.
pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "seed".into(), "label".into()];
    if dataset.manifest.compute_fos {
        header.push("fos".into());
    }
    header.extend((0..dataset.manifest.cell_count).map(|i| format!("c{i}")));
    w.write_record(&header)?;
    for s in &dataset.samples {
        let mut row = vec![s.id.to_string(), s.seed.to_string(), s.label.to_string()];
        if dataset.manifest.compute_fos {
            row.push(s.fos.map_or_else(String::new, |f| f.to_string()));
        }
        row.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(cov: f64, n: usize) -> McConfig {
        McConfig::new(FieldStatistics::new(18.6, cov, 6.0, 1.0).unwrap(), SlopeGeometry::default(), n, 11)
    }

    fn toy_dataset(labels: &[u8]) -> Dataset {
        let config = small_config(0.3, labels.len());
        Dataset {
            manifest: Manifest {
                schema_version: SCHEMA_VERSION,
                config,
                cell_count: 1,
                grid_hash: String::new(),
                compute_fos: false,
                creation_seed: 11,
            },
            samples: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Sample { id: i as u64, seed: config.sample_seed(i as u64), features: vec![i as f64], label: l, fos: None })
                .collect(),
        }
    }

    #[test]
    fn pf_examples() {
        let mut labels = vec![0u8; 2000];
        labels[..137].iter_mut().for_each(|l| *l = 1);
        let e = estimate_pf(&labels).unwrap();
        assert!((e.pf - 6.85).abs() < 1e-12);
        assert_eq!(e.n_failed, 137);
        let e = estimate_pf(&[0; 500]).unwrap();
        assert_eq!(e.pf, 0.0);
        assert_eq!(e.cov_pf, None);
        assert!(matches!(estimate_pf(&[]), Err(McError::EmptyLabels)));
    }

    #[test]
    fn pf_cov_examples() {
        assert!((pf_cov(1.0, 10_000).unwrap() - 0.099498743710662).abs() < 1e-12);
        assert_eq!(pf_cov(100.0, 7).unwrap(), 0.0);
        assert!((pf_cov(50.0, 100).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(pf_cov(0.0, 100), Err(McError::PfCovUndefined { .. })));
    }

    #[test]
    fn random_split_is_a_partition() {
        let ds = toy_dataset(&(0..2000).map(|i| (i % 3 == 0) as u8).collect::<Vec<_>>());
        let (train, rest) = subsample(&ds.view(), 20, SplitStrategy::Random, 3).unwrap();
        assert_eq!((train.len(), rest.len()), (20, 1980));
        let mut ids: Vec<u64> = train.iter().chain(rest.iter()).map(|s| s.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..2000).collect::<Vec<_>>());
        let (again, _) = subsample(&ds.view(), 20, SplitStrategy::Random, 3).unwrap();
        assert_eq!(train.labels(), again.labels());
        assert_eq!(train.iter().map(|s| s.id).collect::<Vec<_>>(), again.iter().map(|s| s.id).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_split_keeps_ratio() {
        let labels: Vec<u8> = (0..1000).map(|i| (i % 10 == 0) as u8).collect();
        let ds = toy_dataset(&labels);
        let (train, _) = subsample(&ds.view(), 40, SplitStrategy::Stratified, 9).unwrap();
        assert_eq!(train.labels().iter().filter(|&&l| l == 1).count(), 4);
    }

    #[test]
    fn stratified_split_needs_both_classes() {
        let ds = toy_dataset(&[0; 50]);
        let err = subsample(&ds.view(), 10, SplitStrategy::Stratified, 1).unwrap_err();
        assert!(matches!(err, McError::MissingClass(1)));
        assert!(err.to_string().contains("failed"));
        assert!(subsample(&ds.view(), 50, SplitStrategy::Random, 1).is_err());
        assert!(subsample(&ds.view(), 0, SplitStrategy::Random, 1).is_err());
    }

    #[test]
    fn split_is_covariant_under_id_relabeling() {
        let ds = toy_dataset(&(0..300).map(|i| (i % 4 == 0) as u8).collect::<Vec<_>>());
        let mut relabeled = ds.clone();
        for s in &mut relabeled.samples {
            s.id = 1000 + (s.id * 7919) % 300;
        }
        let (a, _) = subsample(&ds.view(), 30, SplitStrategy::Stratified, 5).unwrap();
        let (b, _) = subsample(&relabeled.view(), 30, SplitStrategy::Stratified, 5).unwrap();
        let expect: Vec<u64> = a.iter().map(|s| 1000 + (s.id * 7919) % 300).collect();
        assert_eq!(b.iter().map(|s| s.id).collect::<Vec<_>>(), expect);
    }

    #[test]
    fn homogeneous_strong_slope_is_stable() {
        let config = McConfig::new(FieldStatistics::new(33.5, 0.0, 1.0, 1.0).unwrap(), SlopeGeometry::default(), 1, 0);
        let ds = run_monte_carlo(&config).unwrap();
        assert_eq!(ds.samples.len(), 1);
        assert_eq!(ds.samples[0].label, 0);
    }

    #[test]
    fn campaign_is_order_independent() {
        let config = small_config(0.3, 12);
        let campaign = Campaign::prepare(config).unwrap();
        let forward = campaign.simulate_ids(&(0..12).collect::<Vec<_>>()).unwrap();
        let backward = campaign.simulate_ids(&(0..12).rev().collect::<Vec<_>>()).unwrap();
        for s in &forward {
            assert_eq!(Some(s), backward.iter().find(|b| b.id == s.id));
        }
    }

    #[test]
    fn dataset_roundtrip_and_corruption() {
        let mut config = small_config(0.3, 6);
        config.compute_fos = true;
        let ds = run_monte_carlo(&config).unwrap();
        assert!(ds.samples.iter().all(|s| s.fos.is_some_and(|f| (f < 1.0) == (s.label == 1))));
        let bytes = encode_dataset(&ds);
        assert_eq!(decode_dataset(&bytes).unwrap(), ds);

        let truncated = &bytes[..bytes.len() - 5];
        assert!(matches!(decode_dataset(truncated), Err(DatasetError::Payload(_))));

        let text = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).to_string();
        let edited = text.replace(&format!("\"cell_count\":{}", ds.manifest.cell_count), "\"cell_count\":800");
        let mut bad = edited.into_bytes();
        bad.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap()..]);
        assert!(matches!(decode_dataset(&bad), Err(DatasetError::HashMismatch { .. })));

        let versioned = text.replace("\"schema_version\":1", "\"schema_version\":9");
        let mut bad = versioned.into_bytes();
        bad.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap()..]);
        assert!(matches!(decode_dataset(&bad), Err(DatasetError::Schema(_))));
    }

    #[test]
    fn csv_export_shape() {
        let ds = run_monte_carlo(&small_config(0.1, 3)).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].split(',').count(), 3 + ds.manifest.cell_count);
        assert!(lines[1].starts_with(&format!("0,{},", ds.samples[0].seed)));
    }
}
