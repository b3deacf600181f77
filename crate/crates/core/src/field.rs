//! Stationary anisotropic log-normal random fields of undrained shear
//! strength, realized by Cholesky decomposition of the cell covariance matrix.
//!
//! The log-strength `ln C_u` is Gaussian with mean `mu_ln` and standard
//! deviation `sigma_ln`, and the covariance between two cells separated by
//! `(l_x, l_y)` is
//!
//! ```text
//! A(l_x, l_y) = sigma_ln² · exp(-|l_x|/delta_h - |l_y|/delta_v)
//! ```
//!
//! A realization is `C_u = exp(L·eps + mu_ln)` where `A = L·Lᵀ` and `eps` is a
//! vector of independent standard normals.

use std::collections::HashMap;
use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid field statistics: {0}")]
    InvalidStatistics(String),
    #[error("covariance matrix is not positive definite at pivot {pivot} (after jitter {jitter:e})")]
    NotPositiveDefinite { pivot: usize, jitter: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} realizations, got {found}")]
    TooFewRealizations { needed: usize, found: usize },
    #[error("empty cell grid")]
    EmptyGrid,
}

/// Mean and standard deviation of `ln C_u` for a log-normal `C_u` with mean
/// `mu_cu` and coefficient of variation `cov`.
pub fn derive_lognormal(mu_cu: f64, cov: f64) -> Result<(f64, f64), FieldError> {
    if !(mu_cu > 0.0) || !mu_cu.is_finite() {
        return Err(FieldError::InvalidStatistics(format!("mu_cu must be positive, got {mu_cu}")));
    }
    if !(cov >= 0.0) || !cov.is_finite() {
        return Err(FieldError::InvalidStatistics(format!("cov must be non-negative, got {cov}")));
    }
    let sigma_ln = (cov * cov).ln_1p().sqrt();
    let mu_ln = mu_cu.ln() - 0.5 * sigma_ln * sigma_ln;
    Ok((mu_ln, sigma_ln))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RawStatistics {
    mu_cu: f64,
    cov: f64,
    delta_h: f64,
    delta_v: f64,
}

/// Point and spatial statistics of the strength field.
///
/// Only `(mu_cu, cov, delta_h, delta_v)` are stored in serialized form; the
/// log-space parameters are always re-derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStatistics", into = "RawStatistics")]
pub struct FieldStatistics {
    mu_cu: f64,
    cov: f64,
    delta_h: f64,
    delta_v: f64,
    mu_ln: f64,
    sigma_ln: f64,
}

impl FieldStatistics {
    pub fn new(mu_cu: f64, cov: f64, delta_h: f64, delta_v: f64) -> Result<Self, FieldError> {
        let (mu_ln, sigma_ln) = derive_lognormal(mu_cu, cov)?;
        for (name, d) in [("delta_h", delta_h), ("delta_v", delta_v)] {
            if !(d > 0.0) || !d.is_finite() {
                return Err(FieldError::InvalidStatistics(format!("{name} must be positive, got {d}")));
            }
        }
        Ok(Self { mu_cu, cov, delta_h, delta_v, mu_ln, sigma_ln })
    }

    pub fn mu_cu(&self) -> f64 {
        self.mu_cu
    }
    pub fn cov(&self) -> f64 {
        self.cov
    }
    pub fn delta_h(&self) -> f64 {
        self.delta_h
    }
    pub fn delta_v(&self) -> f64 {
        self.delta_v
    }
    pub fn mu_ln(&self) -> f64 {
        self.mu_ln
    }
    pub fn sigma_ln(&self) -> f64 {
        self.sigma_ln
    }
    /// Standard deviation of `C_u` itself.
    pub fn sigma_cu(&self) -> f64 {
        self.cov * self.mu_cu
    }
    /// Anisotropy ratio `delta_h / delta_v`.
    pub fn anisotropy(&self) -> f64 {
        self.delta_h / self.delta_v
    }

    /// Short identifier, e.g. `cov0.3_xi6_mu18.6_dv1`.
    pub fn label(&self) -> String {
        format!("cov{}_xi{}_mu{}_dv{}", self.cov, self.anisotropy(), self.mu_cu, self.delta_v)
    }
}

impl TryFrom<RawStatistics> for FieldStatistics {
    type Error = FieldError;
    fn try_from(r: RawStatistics) -> Result<Self, Self::Error> {
        Self::new(r.mu_cu, r.cov, r.delta_h, r.delta_v)
    }
}

impl From<FieldStatistics> for RawStatistics {
    fn from(s: FieldStatistics) -> Self {
        Self { mu_cu: s.mu_cu, cov: s.cov, delta_h: s.delta_h, delta_v: s.delta_v }
    }
}

impl fmt::Display for FieldStatistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mu_cu={} kPa, COV={}, delta_h={} m, delta_v={} m",
            self.mu_cu, self.cov, self.delta_h, self.delta_v
        )
    }
}

/// Square cells on a regular lattice, of which a subset is active (soil).
///
/// Active cells are numbered row-major: row 0 is the bottom row, columns run
/// left to right. This numbering is the feature ordering of every
/// [`FieldRealization`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    cell_size: f64,
    origin: [f64; 2],
    n_cols: usize,
    n_rows: usize,
    centers: Vec<[f64; 2]>,
    // (col, row) -> active index, dense over the lattice
    lookup: Vec<Option<u32>>,
}

impl CellGrid {
    /// Lattice of `n_cols × n_rows` cells with lower-left corner at `origin`;
    /// `active(col, row)` selects the cells that carry soil.
    pub fn from_lattice(
        cell_size: f64,
        origin: [f64; 2],
        n_cols: usize,
        n_rows: usize,
        mut active: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut centers = Vec::new();
        let mut lookup = vec![None; n_cols * n_rows];
        for row in 0..n_rows {
            for col in 0..n_cols {
                if active(col, row) {
                    lookup[row * n_cols + col] = Some(centers.len() as u32);
                    centers.push([
                        origin[0] + (col as f64 + 0.5) * cell_size,
                        origin[1] + (row as f64 + 0.5) * cell_size,
                    ]);
                }
            }
        }
        Self { cell_size, origin, n_cols, n_rows, centers, lookup }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }
    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    /// Active-cell index at lattice position `(col, row)`.
    pub fn cell_at(&self, col: usize, row: usize) -> Option<usize> {
        if col >= self.n_cols || row >= self.n_rows {
            return None;
        }
        self.lookup[row * self.n_cols + col].map(|i| i as usize)
    }

    /// Active-cell index containing the point `(x, y)`.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let cx = ((x - self.origin[0]) / self.cell_size).floor();
        let cy = ((y - self.origin[1]) / self.cell_size).floor();
        if cx < 0.0 || cy < 0.0 {
            return None;
        }
        self.cell_at(cx as usize, cy as usize)
    }

    /// Number of active cells in column `col`, counted up from the bottom row.
    /// Columns are contiguous from the base for slope grids.
    pub fn column_height(&self, col: usize) -> usize {
        (0..self.n_rows).take_while(|&row| self.cell_at(col, row).is_some()).count()
    }

    /// SHA-256 over the cell count and the ordered cell centers, hex encoded.
    /// Two grids with equal hashes produce interchangeable feature vectors.
    pub fn ordering_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.centers.len() as u64).to_le_bytes());
        h.update(self.cell_size.to_le_bytes());
        for c in &self.centers {
            h.update(c[0].to_le_bytes());
            h.update(c[1].to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Dense symmetric covariance of `ln C_u` between active cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n: usize,
    variance: f64,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    /// Wraps an arbitrary dense row-major matrix; used for testing the factorization.
    pub fn from_dense(n: usize, data: Vec<f64>) -> Result<Self, FieldError> {
        if data.len() != n * n {
            return Err(FieldError::DimensionMismatch { expected: n * n, found: data.len() });
        }
        let variance = (0..n).map(|i| data[i * n + i]).fold(0.0, f64::max);
        Ok(Self { n, variance, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    /// Largest diagonal entry; `sigma_ln²` for generated matrices.
    pub fn variance(&self) -> f64 {
        self.variance
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Exponential Markov covariance evaluated at a single lag.
pub fn markov_covariance(stats: &FieldStatistics, lag_x: f64, lag_y: f64) -> f64 {
    stats.sigma_ln * stats.sigma_ln * (-lag_x.abs() / stats.delta_h - lag_y.abs() / stats.delta_v).exp()
}

pub fn build_covariance(grid: &CellGrid, stats: &FieldStatistics) -> Result<CovarianceMatrix, FieldError> {
    let n = grid.n_cells();
    if n == 0 {
        return Err(FieldError::EmptyGrid);
    }
    let c = grid.centers();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let a = markov_covariance(stats, c[i][0] - c[j][0], c[i][1] - c[j][1]);
            data[i * n + j] = a;
            data[j * n + i] = a;
        }
    }
    Ok(CovarianceMatrix { n, variance: stats.sigma_ln * stats.sigma_ln, data })
}

/// Lower-triangular `L` with `L·Lᵀ = A`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    n: usize,
    jitter: f64,
    data: Vec<f64>,
}

/// Relative diagonal jitter tried after the first failed factorization.
const INITIAL_JITTER: f64 = 1e-10;
const JITTER_RETRIES: usize = 3;

pub fn cholesky_factor(a: &CovarianceMatrix) -> Result<CholeskyFactor, FieldError> {
    let n = a.n;
    for i in 0..n {
        for j in 0..i {
            if a.get(i, j) != a.get(j, i) {
                return Err(FieldError::InvalidStatistics(format!("covariance not symmetric at ({i}, {j})")));
            }
        }
    }
    let scale = a.variance;
    if scale == 0.0 && a.data.iter().all(|&v| v == 0.0) {
        // Zero-variance field: L = 0 reproduces A exactly.
        return Ok(CholeskyFactor { n, jitter: 0.0, data: vec![0.0; n * n] });
    }
    let mut jitter = 0.0;
    let mut last_pivot = 0;
    for attempt in 0..=JITTER_RETRIES {
        match try_cholesky(a, jitter) {
            Ok(data) => return Ok(CholeskyFactor { n, jitter, data }),
            Err(pivot) => last_pivot = pivot,
        }
        if attempt < JITTER_RETRIES {
            jitter = INITIAL_JITTER * scale * 10f64.powi(attempt as i32);
        }
    }
    Err(FieldError::NotPositiveDefinite { pivot: last_pivot, jitter })
}

fn try_cholesky(a: &CovarianceMatrix, jitter: f64) -> Result<Vec<f64>, usize> {
    let n = a.n;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
            if i == j {
                let d = a.get(i, i) + jitter - dot;
                if !(d > 0.0) {
                    return Err(i);
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a.get(i, j) - dot) / l[j * n + j];
            }
        }
    }
    Ok(l)
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }
    /// Diagonal jitter that was needed, in absolute units (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
    /// Row `i` restricted to its lower-triangular part.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..i * self.n + i + 1]
    }

    /// `L·eps`, exploiting the triangular structure.
    pub fn apply(&self, eps: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(eps).map(|(l, e)| l * e).sum()).collect()
    }

    /// Induced infinity norm `max_i Σ_j |(L·Lᵀ - A)_ij|`.
    pub fn reconstruction_error(&self, a: &CovarianceMatrix) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let k = i.min(j) + 1;
                        let llt: f64 = self.data[i * n..i * n + k].iter().zip(&self.data[j * n..j * n + k]).map(|(x, y)| x * y).sum();
                        (llt - a.get(i, j)).abs()
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// One sampled strength map: `C_u` per active cell in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub values: Vec<f64>,
    pub seed: u64,
    pub stats_ref: String,
}

/// Samples `C_u = mu_cu · exp(L·eps - sigma_ln²/2)`, which equals
/// `exp(L·eps + mu_ln)`. `eps` comes from the ChaCha8 stream of `seed`
/// through the Ziggurat standard normal sampler.
pub fn realize_field(factor: &CholeskyFactor, stats: &FieldStatistics, seed: u64) -> FieldRealization {
    let mut rng = rng::stream(seed);
    let eps: Vec<f64> = (0..factor.n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let half_var = 0.5 * stats.sigma_ln * stats.sigma_ln;
    let values = factor.apply(&eps).into_iter().map(|g| stats.mu_cu * (g - half_var).exp()).collect();
    FieldRealization { values, seed, stats_ref: stats.label() }
}

/// Ensemble moments used to check generated fields against their targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalStats {
    pub n_realizations: usize,
    pub cell_mean: Vec<f64>,
    pub cell_cov: Vec<f64>,
    /// Mean of all values.
    pub pooled_mean: f64,
    /// Root of the mean per-cell variance over the pooled mean.
    pub pooled_cov: f64,
    /// Sample skewness of all `ln C_u` values; `None` for a constant field.
    pub ln_skewness: Option<f64>,
    /// Correlation of `ln C_u` at lag `(delta_h, 0)`; `None` if no cell pair
    /// sits at that lag or the field has no variance.
    pub lag_correlation_h: Option<f64>,
    /// Correlation of `ln C_u` at lag `(0, delta_v)`.
    pub lag_correlation_v: Option<f64>,
    pub lag_h: f64,
    pub lag_v: f64,
}

pub fn empirical_stats(
    fields: &[FieldRealization],
    grid: &CellGrid,
    stats: &FieldStatistics,
) -> Result<EmpiricalStats, FieldError> {
    if fields.len() < 2 {
        return Err(FieldError::TooFewRealizations { needed: 2, found: fields.len() });
    }
    let n = grid.n_cells();
    if let Some(f) = fields.iter().find(|f| f.values.len() != n) {
        return Err(FieldError::DimensionMismatch { expected: n, found: f.values.len() });
    }
    let m = fields.len() as f64;
    let mut cell_mean = vec![0.0; n];
    let mut ln_mean = vec![0.0; n];
    for f in fields {
        for (i, &v) in f.values.iter().enumerate() {
            cell_mean[i] += v;
            ln_mean[i] += v.ln();
        }
    }
    cell_mean.iter_mut().for_each(|v| *v /= m);
    ln_mean.iter_mut().for_each(|v| *v /= m);

    let mut cell_var = vec![0.0; n];
    let mut ln_var = vec![0.0; n];
    for f in fields {
        for (i, &v) in f.values.iter().enumerate() {
            cell_var[i] += (v - cell_mean[i]).powi(2);
            ln_var[i] += (v.ln() - ln_mean[i]).powi(2);
        }
    }
    cell_var.iter_mut().for_each(|v| *v /= m - 1.0);
    ln_var.iter_mut().for_each(|v| *v /= m - 1.0);
    let cell_cov: Vec<f64> = cell_var.iter().zip(&cell_mean).map(|(v, mu)| v.sqrt() / mu).collect();
    let pooled_mean = cell_mean.iter().sum::<f64>() / n as f64;
    let pooled_cov = (cell_var.iter().sum::<f64>() / n as f64).sqrt() / pooled_mean;

    // Pooled skewness of ln C_u over every (realization, cell).
    let total = m * n as f64;
    let grand = ln_mean.iter().sum::<f64>() / n as f64;
    let (mut m2, mut m3) = (0.0, 0.0);
    for f in fields {
        for &v in &f.values {
            let d = v.ln() - grand;
            m2 += d * d;
            m3 += d * d * d;
        }
    }
    m2 /= total;
    m3 /= total;
    let ln_skewness = (m2 > 0.0 && m2 > 1e-24 * grand * grand).then(|| m3 / m2.powf(1.5));

    let lag_pairs = |dx: f64, dy: f64| -> Vec<(usize, usize)> {
        let h = grid.cell_size();
        let key = |c: &[f64; 2]| ((c[0] / h).round() as i64, (c[1] / h).round() as i64);
        let (kx, ky) = ((dx / h).round(), (dy / h).round());
        if ((kx * h - dx).abs() > 1e-9) || ((ky * h - dy).abs() > 1e-9) {
            return Vec::new();
        }
        let index: HashMap<(i64, i64), usize> = grid.centers().iter().enumerate().map(|(i, c)| (key(c), i)).collect();
        grid.centers()
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                let (x, y) = key(c);
                index.get(&(x + kx as i64, y + ky as i64)).map(|&j| (i, j))
            })
            .collect()
    };
    let lag_corr = |pairs: Vec<(usize, usize)>| -> Option<f64> {
        if pairs.is_empty() {
            return None;
        }
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for f in fields {
            for &(i, j) in &pairs {
                let a = f.values[i].ln() - ln_mean[i];
                let b = f.values[j].ln() - ln_mean[j];
                sab += a * b;
                saa += a * a;
                sbb += b * b;
            }
        }
        let denom = (saa * sbb).sqrt();
        (denom > 0.0).then(|| sab / denom)
    };
    let lag_correlation_h = lag_corr(lag_pairs(stats.delta_h, 0.0));
    let lag_correlation_v = lag_corr(lag_pairs(0.0, stats.delta_v));

    Ok(EmpiricalStats {
        n_realizations: fields.len(),
        cell_mean,
        cell_cov,
        pooled_mean,
        pooled_cov,
        ln_skewness,
        lag_correlation_h,
        lag_correlation_v,
        lag_h: stats.delta_h,
        lag_v: stats.delta_v,
    })
}

impl EmpiricalStats {
    /// Per-cell table: `cell,x,y,mean,cov`.
    pub fn write_cell_csv<W: std::io::Write>(&self, grid: &CellGrid, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell", "x", "y", "mean", "cov"])?;
        for (i, c) in grid.centers().iter().enumerate() {
            w.write_record(&[
                i.to_string(),
                c[0].to_string(),
                c[1].to_string(),
                self.cell_mean[i].to_string(),
                self.cell_cov[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect_grid(cols: usize, rows: usize, h: f64) -> CellGrid {
        CellGrid::from_lattice(h, [0.0, 0.0], cols, rows, |_, _| true)
    }

    #[test]
    fn lognormal_examples() {
        // 40-digit reference values
        let (mu, s) = derive_lognormal(18.6, 0.5).unwrap();
        assert!((s - 0.472380727077439).abs() < 1e-12);
        assert!((mu - 2.81158980506205).abs() < 1e-12);
        let (mu, s) = derive_lognormal(26.0, 0.0).unwrap();
        assert_eq!(s, 0.0);
        assert_eq!(mu, 26f64.ln());
        let (mu, s) = derive_lognormal(26.0, 0.3).unwrap();
        assert!((s - 0.293560379208524).abs() < 1e-12);
        assert!((mu - 3.21500768990096).abs() < 1e-12);
    }

    #[test]
    fn lognormal_rejects_bad_input() {
        assert!(derive_lognormal(0.0, 0.3).is_err());
        assert!(derive_lognormal(-1.0, 0.3).is_err());
        assert!(derive_lognormal(10.0, -0.1).is_err());
        assert!(derive_lognormal(f64::NAN, 0.1).is_err());
        assert!(FieldStatistics::new(10.0, 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn statistics_serde_rederives_log_parameters() {
        let s = FieldStatistics::new(18.6, 0.5, 25.0, 1.0).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert!(!json.contains("mu_ln"));
        let back: FieldStatistics = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        assert!(serde_json::from_str::<FieldStatistics>(r#"{"mu_cu":-1,"cov":0.1,"delta_h":1,"delta_v":1}"#).is_err());
    }

    #[test]
    fn covariance_at_reference_lags() {
        let stats = FieldStatistics::new(20.0, 0.3, 2.0, 0.5).unwrap();
        let v = stats.sigma_ln().powi(2);
        assert_eq!(markov_covariance(&stats, 0.0, 0.0), v);
        assert!((markov_covariance(&stats, 2.0, 0.0) / v - 0.367879441171).abs() < 1e-12);
        assert!((markov_covariance(&stats, -2.0, 0.5) / v - 0.135335283237).abs() < 1e-12);
    }

    #[test]
    fn covariance_is_separable() {
        let grid = rect_grid(3, 3, 0.5);
        let stats = FieldStatistics::new(20.0, 0.4, 1.5, 0.7).unwrap();
        let v = stats.sigma_ln().powi(2);
        let a = build_covariance(&grid, &stats).unwrap();
        let c = grid.centers();
        for i in 0..9 {
            for j in 0..9 {
                let h = v * (-(c[i][0] - c[j][0]).abs() / 1.5).exp();
                let vert = v * (-(c[i][1] - c[j][1]).abs() / 0.7).exp();
                assert!((a.get(i, j) - h * vert / v).abs() <= 1e-15 * v);
            }
        }
    }

    #[test]
    fn isotropic_covariance_is_symmetric_under_axis_swap() {
        let grid = rect_grid(4, 4, 0.5);
        let stats = FieldStatistics::new(20.0, 0.4, 1.3, 1.3).unwrap();
        let a = build_covariance(&grid, &stats).unwrap();
        // transposing the lattice maps cell (col,row) to (row,col)
        let swap = |i: usize| (i % 4) * 4 + i / 4;
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(a.get(i, j), a.get(swap(i), swap(j)));
            }
        }
    }

    #[test]
    fn cholesky_small_examples() {
        let id = CovarianceMatrix::from_dense(3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let l = cholesky_factor(&id).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let a = CovarianceMatrix::from_dense(2, vec![4., 2., 2., 3.]).unwrap();
        let l = cholesky_factor(&a).unwrap();
        assert_eq!(l.get(0, 0), 2.0);
        assert_eq!(l.get(0, 1), 0.0);
        assert_eq!(l.get(1, 0), 1.0);
        assert!((l.get(1, 1) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l.jitter(), 0.0);
    }

    #[test]
    fn cholesky_reports_pivot_of_indefinite_matrix() {
        let a = CovarianceMatrix::from_dense(3, vec![1., 0., 0., 0., 1., 2., 0., 2., 1.]).unwrap();
        match cholesky_factor(&a) {
            Err(FieldError::NotPositiveDefinite { pivot, jitter }) => {
                assert_eq!(pivot, 2);
                assert!(jitter > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cholesky_jitter_rescues_round_off_singularity() {
        // rank-one matrix: singular in exact arithmetic
        let a = CovarianceMatrix::from_dense(2, vec![1., 1., 1., 1.]).unwrap();
        let l = cholesky_factor(&a).unwrap();
        assert!(l.jitter() > 0.0 && l.jitter() <= 1e-8);
        assert!(l.reconstruction_error(&a) <= 1e-8);
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let a = CovarianceMatrix::from_dense(2, vec![4., 2., 1., 3.]).unwrap();
        assert!(cholesky_factor(&a).is_err());
    }

    #[test]
    fn zero_variance_field_is_constant() {
        let grid = rect_grid(5, 4, 0.5);
        let stats = FieldStatistics::new(26.0, 0.0, 3.0, 1.0).unwrap();
        let l = cholesky_factor(&build_covariance(&grid, &stats).unwrap()).unwrap();
        let f = realize_field(&l, &stats, 42);
        assert!(f.values.iter().all(|&v| v == 26.0));
    }

    #[test]
    fn realization_is_deterministic_and_positive() {
        let grid = rect_grid(8, 6, 0.5);
        let stats = FieldStatistics::new(18.6, 0.5, 6.0, 1.0).unwrap();
        let l = cholesky_factor(&build_covariance(&grid, &stats).unwrap()).unwrap();
        let a = realize_field(&l, &stats, 9);
        let b = realize_field(&l, &stats, 9);
        let c = realize_field(&l, &stats, 10);
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert!(a.values.iter().all(|&v| v > 0.0));
        assert_eq!(a.values.len(), grid.n_cells());
    }

    #[test]
    fn marginal_variance_preserved_on_rows() {
        let grid = rect_grid(10, 6, 0.5);
        let stats = FieldStatistics::new(18.6, 0.3, 6.0, 1.0).unwrap();
        let a = build_covariance(&grid, &stats).unwrap();
        let l = cholesky_factor(&a).unwrap();
        let v = stats.sigma_ln().powi(2);
        for i in 0..l.dim() {
            let r: f64 = l.row(i).iter().map(|x| x * x).sum();
            assert!((r - v).abs() <= 1e-8 * v);
        }
        assert!(l.reconstruction_error(&a) <= 1e-8 * v);
    }

    #[test]
    fn ensemble_moments_at_one_cell() {
        let grid = rect_grid(6, 4, 0.5);
        let stats = FieldStatistics::new(26.0, 0.3, 2.0, 1.0).unwrap();
        let l = cholesky_factor(&build_covariance(&grid, &stats).unwrap()).unwrap();
        let cell = 13;
        let xs: Vec<f64> = (0..10_000).map(|k| realize_field(&l, &stats, rng::derive_seed(5, k)).values[cell]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = 26.0 * 0.3 / n.sqrt();
        assert!((mean - 26.0).abs() <= 3.0 * se, "mean {mean}");
        assert!((sd / mean / 0.3 - 1.0).abs() <= 0.05, "cov {}", sd / mean);
    }

    #[test]
    fn empirical_stats_of_constant_field() {
        let grid = rect_grid(6, 4, 0.5);
        let stats = FieldStatistics::new(26.0, 0.0, 2.0, 1.0).unwrap();
        let l = cholesky_factor(&build_covariance(&grid, &stats).unwrap()).unwrap();
        let fields: Vec<_> = (0..5).map(|k| realize_field(&l, &stats, k)).collect();
        let e = empirical_stats(&fields, &grid, &stats).unwrap();
        assert_eq!(e.pooled_cov, 0.0);
        assert!(e.cell_cov.iter().all(|&c| c == 0.0));
        assert_eq!(e.lag_correlation_h, None);
        assert_eq!(e.ln_skewness, None);
    }

    #[test]
    fn empirical_stats_errors() {
        let grid = rect_grid(3, 3, 0.5);
        let other = rect_grid(2, 2, 0.5);
        let stats = FieldStatistics::new(20.0, 0.2, 1.0, 1.0).unwrap();
        let l = cholesky_factor(&build_covariance(&other, &stats).unwrap()).unwrap();
        let fields: Vec<_> = (0..3).map(|k| realize_field(&l, &stats, k)).collect();
        assert!(matches!(empirical_stats(&fields[..1], &grid, &stats), Err(FieldError::TooFewRealizations { .. })));
        assert!(matches!(empirical_stats(&fields, &grid, &stats), Err(FieldError::DimensionMismatch { .. })));
    }

    #[test]
    fn grid_lookup_and_hash() {
        let g = CellGrid::from_lattice(0.5, [1.0, 2.0], 3, 2, |c, r| !(c == 2 && r == 1));
        assert_eq!(g.n_cells(), 5);
        assert_eq!(g.cell_at(2, 1), None);
        assert_eq!(g.cell_at(1, 1), Some(4));
        assert_eq!(g.locate(1.6, 2.7), Some(4));
        assert_eq!(g.locate(0.9, 2.1), None);
        assert_eq!(g.column_height(2), 1);
        let shifted = CellGrid::from_lattice(0.5, [1.5, 2.0], 3, 2, |c, r| !(c == 2 && r == 1));
        assert_ne!(g.ordering_hash(), shifted.ordering_hash());
        assert_eq!(g.ordering_hash().len(), 64);
    }

    proptest! {
        #[test]
        fn lognormal_identities_are_exact(mu in 1.0f64..100.0, cov in 0.0f64..1.0) {
            let (mu_ln, s) = derive_lognormal(mu, cov).unwrap();
            // log-normal moments recovered from the log-space parameters
            prop_assert!(((mu_ln + 0.5 * s * s).exp() / mu - 1.0).abs() <= 1e-12);
            if cov > 0.0 {
                prop_assert!(((s * s).exp_m1().sqrt() / cov - 1.0).abs() <= 1e-12);
            }
        }
    }
}
