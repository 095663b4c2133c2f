//! Classical baseline: a dense ReLU network with a sigmoid or linear head,
//! trained by backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{self, Loss, Task, TrainConfig, Trainable, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Sigmoid,
    Linear,
}

/// Weights are stored row-major: `weights[l]` is `dims[l+1] × dims[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub head: Head,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    pub fn zeros(dims: Vec<usize>, head: Head) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) || *dims.last().unwrap() != 1 {
            return Err(Error::InvalidArgument(format!(
                "layer dims {dims:?} must have ≥ 2 positive entries ending in 1"
            )));
        }
        let weights = dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(Self {
            dims,
            weights,
            biases,
            head,
        })
    }

    /// He-style uniform weights (±√(6/fan_in)) and biases uniform in
    /// ±1/√fan_in.
    pub fn he_uniform(dims: Vec<usize>, head: Head, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(dims, head)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..m.weights.len() {
            let fan_in = m.dims[l] as f64;
            let wb = (6.0 / fan_in).sqrt();
            let bb = 1.0 / fan_in.sqrt();
            for w in &mut m.weights[l] {
                *w = rng.random_range(-wb..=wb);
            }
            for b in &mut m.biases[l] {
                *b = rng.random_range(-bb..=bb);
            }
        }
        Ok(m)
    }

    pub fn n_inputs(&self) -> usize {
        self.dims[0]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Returns the pre-activations and activations of every layer; the last
    /// activation holds the network output.
    fn forward_trace(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                actual: x.len(),
            });
        }
        let n_layers = self.weights.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut act = Vec::with_capacity(n_layers + 1);
        act.push(x.to_vec());
        for l in 0..n_layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let input = &act[l];
            let z: Vec<f64> = (0..n_out)
                .map(|i| {
                    let row = &self.weights[l][i * n_in..(i + 1) * n_in];
                    row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + self.biases[l][i]
                })
                .collect();
            let a = if l + 1 == n_layers {
                match self.head {
                    Head::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
                    Head::Linear => z.clone(),
                }
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            pre.push(z);
            act.push(a);
        }
        Ok((pre, act))
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let (_, act) = self.forward_trace(x)?;
        Ok(act.last().unwrap()[0])
    }

    /// Exact gradient of the mean loss over `batch`, flattened in
    /// [`Trainable::parameters`] order.
    pub fn backprop_grad(
        &self,
        data: &TrainingSet,
        batch: &[usize],
        loss: Loss,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n_layers = self.weights.len();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut total = 0.0;
        for &s in batch {
            let (x, y) = data.sample(s);
            let (pre, act) = self.forward_trace(x)?;
            let out = act[n_layers][0];
            total += loss.value(out, y);
            let dout = loss.derivative(out, y);
            let z_out = pre[n_layers - 1][0];
            let mut delta = vec![match self.head {
                Head::Linear => dout,
                Head::Sigmoid => {
                    let p = sigmoid(z_out);
                    dout * p * (1.0 - p)
                }
            }];
            for l in (0..n_layers).rev() {
                let n_in = self.dims[l];
                let input = &act[l];
                for (i, d) in delta.iter().enumerate() {
                    gb[l][i] += d;
                    for (g, v) in gw[l][i * n_in..(i + 1) * n_in].iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
                if l > 0 {
                    let mut next = vec![0.0; n_in];
                    for (i, d) in delta.iter().enumerate() {
                        for (j, w) in self.weights[l][i * n_in..(i + 1) * n_in].iter().enumerate() {
                            next[j] += w * d;
                        }
                    }
                    for (j, v) in next.iter_mut().enumerate() {
                        if pre[l - 1][j] <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    delta = next;
                }
            }
        }
        let n = batch.len() as f64;
        let mut flat = Vec::with_capacity(self.n_params());
        for (w, b) in gw.iter().zip(&gb) {
            flat.extend(w.iter().map(|g| g / n));
            flat.extend(b.iter().map(|g| g / n));
        }
        Ok((total / n, flat))
    }
}

impl Trainable for MlpModel {
    fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            p.extend_from_slice(w);
            p.extend_from_slice(b);
        }
        p
    }

    fn set_parameters(&mut self, params: &[f64]) {
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&params[at..at + nw]);
            at += nw;
            b.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
    }

    fn predict(&self, input: &[f64]) -> Result<f64> {
        self.forward(input)
    }

    fn loss_and_grad(
        &self,
        data: &TrainingSet,
        batch: &[usize],
        loss: Loss,
    ) -> Result<(f64, Vec<f64>)> {
        self.backprop_grad(data, batch, loss)
    }
}

/// Hidden width of the classification network.
pub const CLASSIFIER_HIDDEN: usize = 8;
/// Hidden widths of the regression network.
pub const REGRESSOR_HIDDEN: [usize; 2] = [32, 32];

/// Classification: `[n, 8, 1]` with a sigmoid head. Regression:
/// `[n, 32, 32, 1]` with a linear head.
pub fn build_default_cdnn(n_features: usize, task: Task, seed: u64) -> Result<MlpModel> {
    if n_features == 0 {
        return Err(Error::InvalidArgument(
            "CDNN needs at least one feature".into(),
        ));
    }
    match task {
        Task::Classification => {
            MlpModel::he_uniform(vec![n_features, CLASSIFIER_HIDDEN, 1], Head::Sigmoid, seed)
        }
        Task::Regression => MlpModel::he_uniform(
            vec![n_features, REGRESSOR_HIDDEN[0], REGRESSOR_HIDDEN[1], 1],
            Head::Linear,
            seed,
        ),
    }
}

pub fn train_cdnn(
    model: MlpModel,
    data: &TrainingSet,
    cfg: &TrainConfig,
    loss: Loss,
) -> Result<(MlpModel, Vec<f64>)> {
    train::train(model, data, cfg, loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_with_sigmoid_head_is_half() {
        let m = MlpModel::zeros(vec![3, 4, 1], Head::Sigmoid).unwrap();
        assert_eq!(m.forward(&[1.0, -5.0, 2.0]).unwrap(), 0.5);
    }

    #[test]
    fn one_one_one_relu_is_max() {
        let mut m = MlpModel::zeros(vec![1, 1, 1], Head::Linear).unwrap();
        m.weights = vec![vec![1.0], vec![1.0]];
        for x in [-2.0, -0.1, 0.0, 0.7, 3.0] {
            assert_eq!(m.forward(&[x]).unwrap(), f64::max(x, 0.0));
        }
    }

    #[test]
    fn dims_checked() {
        assert!(MlpModel::zeros(vec![3], Head::Linear).is_err());
        assert!(MlpModel::zeros(vec![3, 2], Head::Linear).is_err());
        let m = MlpModel::zeros(vec![2, 1], Head::Linear).unwrap();
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn default_topologies() {
        let c = build_default_cdnn(8, Task::Classification, 0).unwrap();
        assert_eq!(c.n_params(), 81);
        assert_eq!(c.dims, vec![8, 8, 1]);
        let c16 = build_default_cdnn(16, Task::Classification, 0).unwrap();
        assert_eq!(c16.dims, vec![16, 8, 1]);
        let r = build_default_cdnn(1, Task::Regression, 0).unwrap();
        assert_eq!(r.dims, vec![1, 32, 32, 1]);
        assert_eq!(r.head, Head::Linear);
        assert_eq!(
            build_default_cdnn(8, Task::Classification, 3).unwrap(),
            build_default_cdnn(8, Task::Classification, 3).unwrap()
        );
    }

    #[test]
    fn gradient_zero_at_minimum() {
        // f(x) = w·x fitted to y = 2x: minimum at w = 2.
        let mut m = MlpModel::zeros(vec![1, 1], Head::Linear).unwrap();
        m.weights = vec![vec![2.0]];
        let data = TrainingSet::new(vec![vec![1.0], vec![-0.5]], vec![2.0, -1.0]).unwrap();
        let (_, g) = m.backprop_grad(&data, &[0, 1], Loss::Mse).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let m = build_default_cdnn(3, Task::Classification, 11).unwrap();
        let data = TrainingSet::new(
            vec![vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let (_, g1) = m.backprop_grad(&data, &[0, 1], Loss::Bce).unwrap();
        let (_, g2) = m.backprop_grad(&data, &[0, 1, 0, 1], Loss::Bce).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn parameter_round_trip() {
        let mut m = build_default_cdnn(4, Task::Regression, 2).unwrap();
        let p: Vec<f64> = (0..m.n_params()).map(|i| i as f64).collect();
        m.set_parameters(&p);
        assert_eq!(m.parameters(), p);
    }
}
