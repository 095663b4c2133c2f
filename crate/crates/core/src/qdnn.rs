//! Quantum deep neural network: angle-embedded inputs, stacked trainable
//! rotation blocks with a CNOT ring, and an expectation-value readout.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{
    parameter_shift_jacobian, run_circuit, AngleSource, CircuitSpec, Gate, Observable, Pauli,
};
use crate::train::{self, Loss, Task, TrainConfig, Trainable, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Readout {
    /// ⟨Z⟩ of one qubit.
    SingleZ(usize),
    /// Mean ⟨Z⟩ over the register.
    MeanZ,
}

/// `output = scale · readout + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub scale: f64,
    pub offset: f64,
    pub trainable: bool,
}

impl OutputMap {
    pub const IDENTITY: OutputMap = OutputMap {
        scale: 1.0,
        offset: 0.0,
        trainable: false,
    };

    /// (1 − ⟨Z⟩)/2, which lands in [0, 1].
    pub const PROBABILITY: OutputMap = OutputMap {
        scale: -0.5,
        offset: 0.5,
        trainable: false,
    };

    pub fn apply(&self, raw: f64) -> f64 {
        self.scale * raw + self.offset
    }
}

/// Per-feature min–max map onto [0, π].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRescale {
    pub min: Vec<f64>,
    pub span: Vec<f64>,
}

impl AngleRescale {
    pub fn fit(inputs: &[Vec<f64>]) -> Result<Self> {
        let dim = inputs
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("cannot fit rescale on no data".into()))?;
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in inputs {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let span = min
            .iter()
            .zip(&max)
            .map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
            .collect();
        Ok(Self { min, span })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.span))
            .map(|(v, (lo, s))| PI * (v - lo) / s)
            .collect()
    }
}

/// Qubits used for the angle embedding; further features share them.
pub const EMBED_QUBITS: usize = 8;
pub const MAX_FEATURES: usize = 4 * EMBED_QUBITS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdnnModel {
    pub circuit: CircuitSpec,
    pub params: Vec<f64>,
    pub readout: Readout,
    pub output_map: OutputMap,
    #[serde(default)]
    pub rescale: Option<AngleRescale>,
}

impl QdnnModel {
    /// The default architecture: RX(x_i) on qubit i, then `n_layers` blocks of
    /// RY(θ)·RZ(θ) on every qubit followed by a CNOT ring q_i → q_{i+1 mod n}.
    /// Beyond `EMBED_QUBITS` features, feature j lands on qubit j mod
    /// `EMBED_QUBITS`, alternating RZ and RX on successive passes.
    ///
    /// Classification reads qubit 0 through (1 − ⟨Z⟩)/2. Regression reads the
    /// mean ⟨Z⟩ through a trainable affine map starting at the identity.
    /// Angles start uniform in [−π/10, π/10].
    pub fn build(n_features: usize, n_layers: usize, task: Task, seed: u64) -> Result<Self> {
        if n_features == 0 || n_features > MAX_FEATURES {
            return Err(Error::InvalidArgument(format!(
                "QDNN needs 1..={MAX_FEATURES} features, got {n_features}"
            )));
        }
        let n = n_features.min(EMBED_QUBITS);
        let mut layers = vec![(0..n_features)
            .map(|j| {
                let (q, pass) = (j % n, j / n);
                if pass % 2 == 0 {
                    Gate::rx(q, AngleSource::Feature(j))
                } else {
                    Gate::rz(q, AngleSource::Feature(j))
                }
            })
            .collect()];
        let mut k = 0;
        for _ in 0..n_layers {
            let mut layer = Vec::with_capacity(3 * n);
            for q in 0..n {
                layer.push(Gate::ry(q, AngleSource::Param(k)));
                layer.push(Gate::rz(q, AngleSource::Param(k + 1)));
                k += 2;
            }
            if n > 1 {
                for q in 0..n {
                    layer.push(Gate::cnot(q, (q + 1) % n));
                }
            }
            layers.push(layer);
        }
        let (readout, output_map, observables) = match task {
            Task::Classification => (
                Readout::SingleZ(0),
                OutputMap::PROBABILITY,
                vec![Observable {
                    qubit: 0,
                    axis: Pauli::Z,
                }],
            ),
            Task::Regression => (
                Readout::MeanZ,
                OutputMap {
                    trainable: true,
                    ..OutputMap::IDENTITY
                },
                (0..n)
                    .map(|qubit| Observable {
                        qubit,
                        axis: Pauli::Z,
                    })
                    .collect(),
            ),
        };
        let circuit = CircuitSpec::new(n, layers, observables)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..circuit.n_params())
            .map(|_| rng.random_range(-PI / 10.0..=PI / 10.0))
            .collect();
        Ok(Self {
            circuit,
            params,
            readout,
            output_map,
            rescale: None,
        })
    }

    /// Switches on min–max rescaling of inputs to [0, π], fitted on `inputs`.
    pub fn with_rescale(mut self, inputs: &[Vec<f64>]) -> Result<Self> {
        self.rescale = Some(AngleRescale::fit(inputs)?);
        Ok(self)
    }

    pub fn n_features(&self) -> usize {
        self.circuit.n_features()
    }

    fn angles(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: features.len(),
            });
        }
        Ok(match &self.rescale {
            Some(r) => r.apply(features),
            None => features.to_vec(),
        })
    }

    fn reduce(&self, values: &[f64]) -> f64 {
        match self.readout {
            Readout::SingleZ(_) => values[0],
            Readout::MeanZ => values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    /// The readout before the output map; always within [−1, 1].
    pub fn raw_readout(&self, features: &[f64]) -> Result<f64> {
        let x = self.angles(features)?;
        let (_, values) = run_circuit(&self.circuit, &self.params, &x)?;
        Ok(self.reduce(&values))
    }

    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        Ok(self.output_map.apply(self.raw_readout(features)?))
    }

    /// Output and its gradient with respect to [`Trainable::parameters`].
    fn forward_with_grad(&self, features: &[f64]) -> Result<(f64, Vec<f64>)> {
        let x = self.angles(features)?;
        let jac = parameter_shift_jacobian(&self.circuit, &self.params, &x)?;
        let raw = self.reduce(&jac.values);
        let n_obs = jac.jacobian.len() as f64;
        let mut grad: Vec<f64> = match self.readout {
            Readout::SingleZ(_) => jac.jacobian[0].clone(),
            Readout::MeanZ => (0..self.params.len())
                .map(|k| jac.jacobian.iter().map(|row| row[k]).sum::<f64>() / n_obs)
                .collect(),
        };
        for g in &mut grad {
            *g *= self.output_map.scale;
        }
        if self.output_map.trainable {
            grad.push(raw);
            grad.push(1.0);
        }
        Ok((self.output_map.apply(raw), grad))
    }
}

impl Trainable for QdnnModel {
    fn parameters(&self) -> Vec<f64> {
        let mut p = self.params.clone();
        if self.output_map.trainable {
            p.push(self.output_map.scale);
            p.push(self.output_map.offset);
        }
        p
    }

    fn set_parameters(&mut self, params: &[f64]) {
        let n = self.params.len();
        self.params.copy_from_slice(&params[..n]);
        if self.output_map.trainable {
            self.output_map.scale = params[n];
            self.output_map.offset = params[n + 1];
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
        let mut total = 0.0;
        let mut grad = vec![0.0; self.parameters().len()];
        for &i in batch {
            let (x, y) = data.sample(i);
            let (out, g) = self.forward_with_grad(x)?;
            total += loss.value(out, y);
            let d = loss.derivative(out, y);
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += d * gi;
            }
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }
}

/// Trains with parameter-shift gradients for exactly `cfg.epochs` passes.
pub fn train_qdnn(
    model: QdnnModel,
    data: &TrainingSet,
    cfg: &TrainConfig,
    loss: Loss,
) -> Result<(QdnnModel, Vec<f64>)> {
    train::train(model, data, cfg, loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count() {
        let m = QdnnModel::build(8, 2, Task::Classification, 1).unwrap();
        assert_eq!(m.circuit.n_params(), 32);
        assert_eq!(m.parameters().len(), 32);
        let r = QdnnModel::build(8, 2, Task::Regression, 1).unwrap();
        assert_eq!(r.parameters().len(), 34);
    }

    #[test]
    fn feature_range_checked() {
        assert!(QdnnModel::build(0, 1, Task::Regression, 0).is_err());
        assert!(QdnnModel::build(MAX_FEATURES + 1, 1, Task::Regression, 0).is_err());
        let m = QdnnModel::build(3, 1, Task::Regression, 0).unwrap();
        assert!(matches!(
            m.forward(&[0.1, 0.2]),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn wide_inputs_fold_onto_the_embedding_qubits() {
        let m = QdnnModel::build(16, 1, Task::Classification, 2).unwrap();
        assert_eq!(m.circuit.n_qubits(), EMBED_QUBITS);
        assert_eq!(m.n_features(), 16);
        // Zero layers: ⟨Z_0⟩ = cos x_0 whatever the RZ on the second pass.
        let z = QdnnModel::build(16, 0, Task::Regression, 2).unwrap();
        let mut x = vec![0.0; 16];
        x[0] = 0.7;
        x[8] = 1.9;
        let mean = (0.7f64.cos() + 7.0) / 8.0;
        assert!((z.forward(&x).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn zero_layers_single_feature_is_cos() {
        let m = QdnnModel::build(1, 0, Task::Regression, 4).unwrap();
        for x in [-1.3, 0.0, 0.4, 2.2] {
            assert!((m.forward(&[x]).unwrap() - f64::cos(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_init_is_reproducible_and_small() {
        let a = QdnnModel::build(8, 2, Task::Classification, 17).unwrap();
        let b = QdnnModel::build(8, 2, Task::Classification, 17).unwrap();
        let c = QdnnModel::build(8, 2, Task::Classification, 18).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
        assert!(a.params.iter().all(|p| p.abs() <= PI / 10.0));
    }

    #[test]
    fn zero_layer_identity_map_reads_one_at_origin() {
        let mut m = QdnnModel::build(4, 0, Task::Classification, 0).unwrap();
        m.output_map = OutputMap::IDENTITY;
        assert_eq!(m.forward(&[0.0; 4]).unwrap(), 1.0);
    }

    #[test]
    fn mean_z_of_product_state() {
        let m = QdnnModel::build(3, 0, Task::Regression, 0).unwrap();
        let x = [0.2, 1.5, -0.7];
        let expected = x.iter().map(|v: &f64| v.cos()).sum::<f64>() / 3.0;
        assert!((m.raw_readout(&x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn classification_output_is_probability() {
        let m = QdnnModel::build(5, 2, Task::Classification, 3).unwrap();
        for i in 0..20 {
            let x: Vec<f64> = (0..5)
                .map(|j| ((i * 7 + j * 3) as f64).sin() * 4.0)
                .collect();
            let p = m.forward(&x).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let m = QdnnModel::build(3, 2, Task::Regression, 5).unwrap();
        let data = TrainingSet::new(
            vec![vec![0.3, -0.2, 1.0], vec![1.2, 0.5, -0.4]],
            vec![0.4, -0.1],
        )
        .unwrap();
        let (_, g) = m.loss_and_grad(&data, &[0, 1], Loss::Mse).unwrap();
        let p0 = m.parameters();
        let h = 1e-6;
        for k in 0..p0.len() {
            let mut plus = m.clone();
            let mut minus = m.clone();
            let mut p = p0.clone();
            p[k] += h;
            plus.set_parameters(&p);
            p[k] -= 2.0 * h;
            minus.set_parameters(&p);
            let lp = plus.loss_and_grad(&data, &[0, 1], Loss::Mse).unwrap().0;
            let lm = minus.loss_and_grad(&data, &[0, 1], Loss::Mse).unwrap().0;
            assert!(((lp - lm) / (2.0 * h) - g[k]).abs() < 1e-6, "param {k}");
        }
    }

    #[test]
    fn rescale_maps_into_zero_pi() {
        let inputs = vec![vec![-2.0, 5.0], vec![4.0, 5.0], vec![1.0, 5.0]];
        let r = AngleRescale::fit(&inputs).unwrap();
        assert_eq!(r.apply(&[-2.0, 5.0]), vec![0.0, 0.0]);
        assert!((r.apply(&[4.0, 5.0])[0] - PI).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trips() {
        let m = QdnnModel::build(2, 1, Task::Regression, 8).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: QdnnModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
