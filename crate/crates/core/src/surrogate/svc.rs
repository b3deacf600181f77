use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{tuning, SurrogateError};
use crate::rng;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvcParams {
    /// Penalty on slack.
    pub c: f64,
    /// RBF width on standardized features: `K(a, b) = exp(-gamma |a - b|²)`.
    pub gamma: f64,
    /// Stop when the maximal violating pair gap falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvcParams {
    fn default() -> Self {
        Self { c: 1.0, gamma: 0.001, tol: 1e-3, max_iter: 10_000_000 }
    }
}

impl SvcParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if !(self.c > 0.0 && self.c.is_finite() && self.gamma > 0.0 && self.gamma.is_finite() && self.tol > 0.0) {
            return Err(SurrogateError::InvalidHyperParams(format!("c = {}, gamma = {}, tol = {}", self.c, self.gamma, self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SurrogateError::InvalidHyperParams("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Support vectors in standardized coordinates, dual coefficients `alpha_i y_i`,
/// bias and the Platt pair mapping decision values to probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SvcFit {
    pub(crate) d: usize,
    pub(crate) gamma: f64,
    pub(crate) support: Vec<f64>,
    pub(crate) coef: Vec<f64>,
    pub(crate) bias: f64,
    pub(crate) platt: (f64, f64),
}

impl SvcFit {
    pub fn n_support(&self) -> usize {
        self.coef.len()
    }
    pub fn bias(&self) -> f64 {
        self.bias
    }
    /// `(A, B)` of `P(failed | f) = 1 / (1 + exp(A f + B))`.
    pub fn platt(&self) -> (f64, f64) {
        self.platt
    }

    /// `f(z) = sum_i coef_i K(sv_i, z) + b`; positive leans failed.
    pub fn decision(&self, z: &[f64]) -> f64 {
        self.support
            .chunks_exact(self.d)
            .zip(&self.coef)
            .map(|(sv, c)| c * rbf(sv, z, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn proba(&self, z: &[f64]) -> f64 {
        platt_proba(self.platt, self.decision(z))
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

fn platt_proba((a, b): (f64, f64), f: f64) -> f64 {
    let t = a * f + b;
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

fn kernel_matrix(z: &[f64], d: usize, gamma: f64) -> Vec<f64> {
    let n = z.len() / d;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { rbf(&z[i * d..(i + 1) * d], &z[j * d..(j + 1) * d], gamma) }).collect())
        .collect();
    rows.concat()
}

fn submatrix(k: &[f64], n: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| idx.iter().map(move |&j| k[i * n + j])).collect()
}

/// Dual coefficients and bias of the soft-margin problem, by SMO with
/// second-order working-set selection.
pub(crate) fn solve_dual(k: &[f64], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64), SurrogateError> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
    let mut iter = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * g[t] >= gmax {
                gmax = -y[t] * g[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i != usize::MAX {
            let ki = &k[i * n..(i + 1) * n];
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * g[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let a = ki[i] + k[t * n + t] - 2.0 * ki[t];
                    let obj = -b * b / if a > 0.0 { a } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
        }
        if j == usize::MAX || gmax - gmin < tol {
            break;
        }
        if iter == max_iter {
            return Err(SurrogateError::SvcNotConverged { iterations: iter, gap: gmax - gmin, tol });
        }
        iter += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let kij = k[i * n + j];
        let quad = (k[i * n + i] + k[j * n + j] - 2.0 * kij).max(TAU);
        if y[i] != y[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        let (ki, kj) = (&k[i * n..(i + 1) * n], &k[j * n..(j + 1) * n]);
        for t in 0..n {
            g[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * g[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if at_lower {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    Ok((alpha, -rho))
}

fn decisions(k: &[f64], n: usize, train: &[usize], alpha: &[f64], y: &[f64], bias: f64, test: &[usize]) -> Vec<f64> {
    test.iter()
        .map(|&t| train.iter().zip(alpha).filter(|(_, a)| **a > 0.0).map(|(&s, a)| a * y[s] * k[t * n + s]).sum::<f64>() + bias)
        .collect()
}

/// Platt's sigmoid by Newton's method with backtracking on smoothed targets.
pub(crate) fn fit_platt(f: &[f64], labels: &[u8]) -> (f64, f64) {
    let prior1 = labels.iter().filter(|&&l| l == 1).count() as f64;
    let prior0 = labels.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = labels.iter().map(|&l| if l == 1 { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        f.iter()
            .zip(&t)
            .map(|(fi, ti)| {
                let z = fi * a + b;
                if z >= 0.0 { ti * z + (-z).exp().ln_1p() } else { (ti - 1.0) * z + z.exp().ln_1p() }
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (fi, ti) in f.iter().zip(&t) {
            let p = platt_proba((a, b), *fi);
            let d2 = p * (1.0 - p);
            h11 += fi * fi * d2;
            h22 += d2;
            h21 += fi * d2;
            let d1 = ti - p;
            g1 += fi * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                (a, b, fval) = (na, nb, nf);
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

/// Fits on standardized rows `z` (n × d). Platt calibration uses out-of-fold
/// decision values from stratified folds, or in-sample values when the
/// minority class has a single member.
pub(crate) fn fit(z: &[f64], labels: &[u8], d: usize, hp: &SvcParams, seed: u64) -> Result<SvcFit, SurrogateError> {
    let n = labels.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let k = kernel_matrix(z, d, hp.gamma);
    let all: Vec<usize> = (0..n).collect();
    let (alpha, bias) = solve_dual(&k, &y, hp.c, hp.tol, hp.max_iter)?;

    let minority = labels.iter().filter(|&&l| l == 1).count().min(labels.iter().filter(|&&l| l == 0).count());
    let f = if minority >= 2 {
        let folds = tuning::stratified_folds(labels, minority.min(5), rng::derive_seed(seed, 0))?;
        let n_folds = folds.iter().max().unwrap() + 1;
        let mut f = vec![0.0; n];
        for fold in 0..n_folds {
            let train: Vec<usize> = all.iter().copied().filter(|&i| folds[i] != fold).collect();
            let test: Vec<usize> = all.iter().copied().filter(|&i| folds[i] == fold).collect();
            let ys: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let (a, b) = solve_dual(&submatrix(&k, n, &train), &ys, hp.c, hp.tol, hp.max_iter)?;
            for (&t, v) in test.iter().zip(decisions(&k, n, &train, &a, &y, b, &test)) {
                f[t] = v;
            }
        }
        f
    } else {
        decisions(&k, n, &all, &alpha, &y, bias, &all)
    };
    let platt = fit_platt(&f, labels);

    let sv: Vec<usize> = all.iter().copied().filter(|&i| alpha[i] > 0.0).collect();
    Ok(SvcFit {
        d,
        gamma: hp.gamma,
        support: sv.iter().flat_map(|&i| z[i * d..(i + 1) * d].iter().copied()).collect(),
        coef: sv.iter().map(|&i| alpha[i] * y[i]).collect(),
        bias,
        platt,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{accuracy, train_svc};
    use super::*;

    #[test]
    fn separated_blobs_are_classified_exactly() {
        let train = blobs(20, 2, 2.0, 1);
        let test = blobs(50, 2, 2.0, 2);
        let m = train_svc(&view(&train), &SvcParams { gamma: 0.5, ..SvcParams::default() }, 0).unwrap();
        assert_eq!(m.evaluate(&view(&test)).unwrap().acc, 1.0);
    }

    fn best_linear_rule(s: &[crate::montecarlo::Sample]) -> f64 {
        let labels: Vec<u8> = s.iter().map(|x| x.label).collect();
        let mut best: f64 = 0.0;
        for k in 0..360 {
            let th = (k as f64).to_radians();
            let (c, si) = (th.cos(), th.sin());
            let mut proj: Vec<f64> = s.iter().map(|x| c * x.features[0] + si * x.features[1]).collect();
            let scores = proj.clone();
            proj.sort_by(f64::total_cmp);
            for cut in proj.iter().chain([&f64::INFINITY]) {
                let pred: Vec<u8> = scores.iter().map(|&p| u8::from(p >= *cut)).collect();
                best = best.max(accuracy(&pred, &labels).unwrap());
            }
        }
        best
    }

    #[test]
    fn rbf_kernel_solves_xor() {
        let train = xor(25, 3);
        let test = xor(50, 4);
        assert!(best_linear_rule(&test) <= 0.75);
        let m = train_svc(&view(&train), &SvcParams { gamma: 0.5, c: 10.0, ..SvcParams::default() }, 0).unwrap();
        assert!(m.evaluate(&view(&test)).unwrap().acc >= 0.95);
    }

    #[test]
    fn kkt_conditions_hold_at_the_solution() {
        let s = blobs(30, 3, 0.4, 5);
        let z: Vec<f64> = s.iter().flat_map(|x| x.features.clone()).collect();
        let y: Vec<f64> = s.iter().map(|x| if x.label == 1 { 1.0 } else { -1.0 }).collect();
        let k = kernel_matrix(&z, 3, 0.7);
        let (c, tol) = (2.0, 1e-6);
        let (alpha, b) = solve_dual(&k, &y, c, tol, 1_000_000).unwrap();
        let n = y.len();
        assert!(alpha.iter().zip(&y).map(|(a, yi)| a * yi).sum::<f64>().abs() < 1e-9);
        for i in 0..n {
            let f: f64 = (0..n).map(|j| alpha[j] * y[j] * k[i * n + j]).sum::<f64>() + b;
            let margin = y[i] * f;
            if alpha[i] <= 0.0 {
                assert!(margin >= 1.0 - 1e-3);
            } else if alpha[i] >= c {
                assert!(margin <= 1.0 + 1e-3);
            } else {
                assert!((margin - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn iteration_budget_reports_gap() {
        let s = blobs(30, 3, 0.2, 5);
        let err = train_svc(&view(&s), &SvcParams { max_iter: 2, gamma: 0.5, ..SvcParams::default() }, 0).unwrap_err();
        match err {
            SurrogateError::SvcNotConverged { iterations, gap, tol } => {
                assert_eq!(iterations, 2);
                assert!(gap > tol);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn platt_is_monotone_in_decision_value() {
        let s = blobs(25, 2, 0.5, 9);
        let m = train_svc(&view(&s), &SvcParams { gamma: 0.5, ..SvcParams::default() }, 0).unwrap();
        let (a, _) = m.svc().unwrap().platt();
        assert!(a < 0.0);
        let fit = m.svc().unwrap();
        let norm = m.normalization().unwrap();
        let mut pairs: Vec<(f64, f64)> = (-20..=20)
            .map(|k| {
                let row = [k as f64 / 10.0, k as f64 / 10.0];
                (fit.decision(&norm.apply(&row)), m.proba_row(&row).unwrap())
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(pairs[0].1 < 0.5 && pairs[40].1 > 0.5);
    }

    #[test]
    fn invalid_params() {
        assert!(SvcParams { c: 0.0, ..SvcParams::default() }.validate().is_err());
        assert!(SvcParams { gamma: -1.0, ..SvcParams::default() }.validate().is_err());
    }
}
