use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SurrogateError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value `a` and input `z`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => f64::from(u8::from(z > 0.0)),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub units: usize,
    pub dropout_rate: f64,
    pub l2: f64,
    pub optimizer: Optimizer,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            units: 64,
            dropout_rate: 0.5,
            l2: 0.001,
            optimizer: Optimizer::Sgd,
            activation: Activation::Relu,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: &str| Err(SurrogateError::InvalidHyperParams(m.into()));
        if self.units == 0 || self.batch_size == 0 {
            return bad("units and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be finite and non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and positive");
        }
        Ok(())
    }
}

/// One hidden layer and a sigmoid output unit. Parameters flatten as
/// `[w1 (units × d, row-major), b1, w2, b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) d: usize,
    pub(crate) units: usize,
    pub(crate) activation: Activation,
    pub(crate) params: Vec<f64>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init(d: usize, units: usize, activation: Activation, seed: u64) -> Self {
        let mut r = rng::stream(seed);
        let mut params = vec![0.0; units * d + 2 * units + 1];
        let l1 = (6.0 / (d + units) as f64).sqrt();
        let l2 = (6.0 / (units + 1) as f64).sqrt();
        for w in &mut params[..units * d] {
            *w = r.random_range(-l1..l1);
        }
        for w in &mut params[units * d + units..units * d + 2 * units] {
            *w = r.random_range(-l2..l2);
        }
        Self { d, units, activation, params }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.params.copy_from_slice(p);
    }

    fn w1(&self) -> &[f64] {
        &self.params[..self.units * self.d]
    }
    fn b1(&self) -> &[f64] {
        &self.params[self.units * self.d..self.units * (self.d + 1)]
    }
    fn w2(&self) -> &[f64] {
        &self.params[self.units * (self.d + 1)..self.units * (self.d + 2)]
    }
    fn b2(&self) -> f64 {
        self.params[self.units * (self.d + 2)]
    }

    fn hidden(&self, z: &[f64], pre: &mut [f64], act: &mut [f64]) {
        for ((u, w), b) in self.w1().chunks_exact(self.d).enumerate().zip(self.b1()) {
            pre[u] = w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + b;
            act[u] = self.activation.apply(pre[u]);
        }
    }

    /// Failure probability of a standardized row; dropout is inactive.
    pub fn proba(&self, z: &[f64]) -> f64 {
        let (mut pre, mut act) = (vec![0.0; self.units], vec![0.0; self.units]);
        self.hidden(z, &mut pre, &mut act);
        sigmoid(act.iter().zip(self.w2()).map(|(a, w)| a * w).sum::<f64>() + self.b2())
    }

    /// Mean binary cross-entropy over the batch plus `l2 · (|w1|² + |w2|²)`,
    /// and its gradient in flattened parameter order.
    ///
    /// `masks` holds one multiplier per (sample, hidden unit): 0 for a dropped
    /// unit, `1 / (1 - rate)` for a kept one.
    pub fn loss_and_grad(&self, x: &[f64], y: &[u8], l2: f64, masks: Option<&[f64]>) -> (f64, Vec<f64>) {
        let (d, h) = (self.d, self.units);
        let n = y.len();
        let mut grad = vec![0.0; self.params.len()];
        let (mut pre, mut act) = (vec![0.0; h], vec![0.0; h]);
        let mut loss = 0.0;
        let w2 = self.w2().to_vec();
        for (i, (row, &yi)) in x.chunks_exact(d).zip(y).enumerate() {
            self.hidden(row, &mut pre, &mut act);
            let mask = masks.map(|m| &m[i * h..(i + 1) * h]);
            let dropped: Vec<f64> = match mask {
                Some(m) => act.iter().zip(m).map(|(a, k)| a * k).collect(),
                None => act.clone(),
            };
            let s = dropped.iter().zip(&w2).map(|(a, w)| a * w).sum::<f64>() + self.b2();
            let t = f64::from(yi);
            loss += s.max(0.0) - t * s + (-s.abs()).exp().ln_1p();
            let ds = (sigmoid(s) - t) / n as f64;
            let (gw1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(h);
            gb2[0] += ds;
            for u in 0..h {
                gw2[u] += ds * dropped[u];
                let keep = mask.map_or(1.0, |m| m[u]);
                let dz = ds * w2[u] * keep * self.activation.derivative(pre[u], act[u]);
                if dz != 0.0 {
                    gb1[u] += dz;
                    for (g, v) in gw1[u * d..(u + 1) * d].iter_mut().zip(row) {
                        *g += dz * v;
                    }
                }
            }
        }
        loss /= n as f64;
        if l2 > 0.0 {
            let weights = self.params[..h * d].iter().chain(&w2);
            loss += l2 * weights.map(|w| w * w).sum::<f64>();
            for (g, w) in grad[..h * d].iter_mut().zip(&self.params[..h * d]) {
                *g += 2.0 * l2 * w;
            }
            for (g, w) in grad[h * (d + 1)..h * (d + 2)].iter_mut().zip(&w2) {
                *g += 2.0 * l2 * w;
            }
        }
        (loss, grad)
    }
}

/// Trains on standardized rows. Initialization draws from `derive_seed(seed, 0)`,
/// shuffling and dropout masks from `derive_seed(seed, 1)`.
pub(crate) fn fit(z: &[f64], y: &[u8], d: usize, hp: &MlpParams, seed: u64) -> Result<Network, SurrogateError> {
    let mut net = Network::init(d, hp.units, hp.activation, rng::derive_seed(seed, 0));
    let mut r = rng::stream(rng::derive_seed(seed, 1));
    let n = y.len();
    let p = net.params.len();
    let (mut m, mut v) = (vec![0.0; p], vec![0.0; p]);
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let keep = 1.0 - hp.dropout_rate;
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = Vec::with_capacity(hp.batch_size * d);
    let mut yb = Vec::with_capacity(hp.batch_size);
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hp.batch_size) {
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(&z[i * d..(i + 1) * d]);
                yb.push(y[i]);
            }
            let masks: Option<Vec<f64>> = (hp.dropout_rate > 0.0).then(|| {
                (0..batch.len() * hp.units).map(|_| if r.random_bool(keep) { 1.0 / keep } else { 0.0 }).collect()
            });
            let (loss, grad) = net.loss_and_grad(&xb, &yb, hp.l2, masks.as_deref());
            epoch_loss += loss * batch.len() as f64;
            match hp.optimizer {
                Optimizer::Sgd => {
                    for (w, g) in net.params.iter_mut().zip(&grad) {
                        *w -= hp.learning_rate * g;
                    }
                }
                Optimizer::Adam => {
                    step += 1;
                    let (c1, c2) = (1.0 - beta1.powi(step), 1.0 - beta2.powi(step));
                    for k in 0..p {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                        net.params[k] -= hp.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                }
            }
        }
        let loss = epoch_loss / n as f64;
        if !loss.is_finite() || !net.params.iter().all(|w| w.is_finite()) {
            return Err(SurrogateError::MlpDiverged { epoch, loss });
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::train_mlp;
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn max_relative_gradient_error(activation: Activation, l2: f64, seed: u64) -> f64 {
        let (d, h, n) = (4, 6, 5);
        let mut r = rng::stream(seed);
        let net = Network::init(d, h, activation, seed);
        let mut net = Network { params: net.params.iter().map(|w| w + 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect(), ..net };
        let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let (_, grad) = net.loss_and_grad(&x, &y, l2, None);
        let base = net.params.clone();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + step;
            net.set_params(&p);
            let up = net.loss_and_grad(&x, &y, l2, None).0;
            p[k] = base[k] - step;
            net.set_params(&p);
            let down = net.loss_and_grad(&x, &y, l2, None).0;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max((numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6));
        }
        net.set_params(&base);
        worst
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (k, act) in [Activation::Sigmoid, Activation::Tanh, Activation::Relu].into_iter().enumerate() {
            for seed in 0..5 {
                let err = max_relative_gradient_error(act, 0.01 * k as f64, seed);
                assert!(err <= 1e-4, "{act:?} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initial_network() {
        let s = blobs(10, 3, 1.0, 2);
        let hp = MlpParams { epochs: 0, units: 5, ..MlpParams::default() };
        let m = train_mlp(&view(&s), &hp, 17).unwrap();
        let init = Network::init(3, 5, hp.activation, rng::derive_seed(17, 0));
        let norm = m.normalization().unwrap();
        for row in view(&s).features() {
            assert_eq!(m.proba_row(row).unwrap(), init.proba(&norm.apply(row)));
        }
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let s = samples((0..20).map(|i| (vec![i as f64, 3.0 - (i % 3) as f64], u8::from(i >= 10))).collect());
        let m = train_mlp(&view(&s), &MlpParams { units: 16, batch_size: 4, learning_rate: 0.05, ..MlpParams::default() }, 5).unwrap();
        assert_eq!(m.evaluate(&view(&s)).unwrap().acc, 1.0);
    }

    #[test]
    fn adam_trains_too() {
        let s = blobs(20, 3, 1.0, 4);
        let hp = MlpParams { optimizer: Optimizer::Adam, units: 8, epochs: 50, activation: Activation::Tanh, ..MlpParams::default() };
        assert_eq!(train_mlp(&view(&s), &hp, 1).unwrap().evaluate(&view(&s)).unwrap().acc, 1.0);
    }

    #[test]
    fn training_is_reproducible() {
        let s = blobs(12, 3, 0.5, 3);
        let hp = MlpParams { units: 6, epochs: 20, ..MlpParams::default() };
        assert_eq!(train_mlp(&view(&s), &hp, 9).unwrap(), train_mlp(&view(&s), &hp, 9).unwrap());
    }

    #[test]
    fn divergence_names_the_epoch() {
        let s = blobs(12, 3, 0.5, 3);
        let hp = MlpParams { learning_rate: 1e200, dropout_rate: 0.0, ..MlpParams::default() };
        match train_mlp(&view(&s), &hp, 0).unwrap_err() {
            SurrogateError::MlpDiverged { epoch, .. } => assert!(epoch >= 1 && epoch <= hp.epochs),
            e => panic!("unexpected {e:?}"),
        }
    }
}
