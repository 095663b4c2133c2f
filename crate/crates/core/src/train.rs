//! Training loop shared by the classical and quantum model families.
//!
//! Both families expose their trainable state as one flat parameter vector and
//! a batch loss/gradient, so benchmark runs can hand them the same
//! [`TrainConfig`] and optimizer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Mse,
    Bce,
}

const BCE_CLAMP: f64 = 1e-12;

impl Loss {
    pub fn value(self, prediction: f64, target: f64) -> f64 {
        match self {
            Loss::Mse => (prediction - target).powi(2),
            Loss::Bce => {
                let p = prediction.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
            }
        }
    }

    /// d(loss)/d(prediction).
    pub fn derivative(self, prediction: f64, target: f64) -> f64 {
        match self {
            Loss::Mse => 2.0 * (prediction - target),
            Loss::Bce => {
                let p = prediction.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                (p - target) / (p * (1.0 - p))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.05,
            optimizer: Optimizer::default(),
            batch_size: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Inputs and real-valued targets handed to a trainer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: targets.len(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn sample(&self, i: usize) -> (&[f64], f64) {
        (&self.inputs[i], self.targets[i])
    }
}

/// A model with a flat trainable parameter vector.
pub trait Trainable {
    fn parameters(&self) -> Vec<f64>;
    fn set_parameters(&mut self, params: &[f64]);
    fn predict(&self, input: &[f64]) -> Result<f64>;
    /// Mean loss over `batch` and its gradient with respect to
    /// [`Trainable::parameters`].
    fn loss_and_grad(
        &self,
        data: &TrainingSet,
        batch: &[usize],
        loss: Loss,
    ) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone)]
struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Stateful trainer that can be advanced a few epochs at a time, so callers
/// can evaluate the model at epoch checkpoints without restarting training.
#[derive(Debug, Clone)]
pub struct Trainer<M> {
    model: M,
    cfg: TrainConfig,
    loss: Loss,
    state: OptimizerState,
    rng: ChaCha8Rng,
    epoch: usize,
    history: Vec<f64>,
}

impl<M: Trainable> Trainer<M> {
    pub fn new(model: M, cfg: TrainConfig, loss: Loss) -> Result<Self> {
        cfg.validate()?;
        let n = model.parameters().len();
        Ok(Self {
            model,
            cfg,
            loss,
            state: OptimizerState {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e),
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn into_parts(self) -> (M, Vec<f64>) {
        (self.model, self.history)
    }

    /// Runs `epochs` full passes over `data`, recording the mean training
    /// loss of each pass.
    pub fn run_epochs(&mut self, data: &TrainingSet, epochs: usize) -> Result<()> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let n = data.len();
        let batch = if self.cfg.batch_size == 0 {
            n
        } else {
            self.cfg.batch_size.min(n)
        };
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..epochs {
            if batch < n {
                order.shuffle(&mut self.rng);
            }
            let mut total = 0.0;
            for chunk in order.chunks(batch) {
                let (loss, grad) = self.model.loss_and_grad(data, chunk, self.loss)?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(self.non_finite());
                }
                total += loss * chunk.len() as f64;
                self.step(&grad);
            }
            self.epoch += 1;
            let mean = total / n as f64;
            if !mean.is_finite() {
                return Err(self.non_finite());
            }
            self.history.push(mean);
        }
        Ok(())
    }

    fn non_finite(&self) -> Error {
        let norm = self
            .model
            .parameters()
            .iter()
            .map(|p| p * p)
            .sum::<f64>()
            .sqrt();
        Error::NonFiniteLoss {
            epoch: self.epoch,
            param_norm: norm,
        }
    }

    fn step(&mut self, grad: &[f64]) {
        let mut params = self.model.parameters();
        let lr = self.cfg.learning_rate;
        match self.cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let st = &mut self.state;
                st.t += 1;
                let bc1 = 1.0 - beta1.powi(st.t);
                let bc2 = 1.0 - beta2.powi(st.t);
                for i in 0..params.len() {
                    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * grad[i];
                    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = st.m[i] / bc1;
                    let v_hat = st.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        self.model.set_parameters(&params);
    }
}

/// Trains for `cfg.epochs` passes and returns the model with its loss history.
pub fn train<M: Trainable>(
    model: M,
    data: &TrainingSet,
    cfg: &TrainConfig,
    loss: Loss,
) -> Result<(M, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut trainer = Trainer::new(model, *cfg, loss)?;
    trainer.run_epochs(data, cfg.epochs)?;
    Ok(trainer.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = w·x, one parameter.
    #[derive(Debug, Clone)]
    struct Line(f64);

    impl Trainable for Line {
        fn parameters(&self) -> Vec<f64> {
            vec![self.0]
        }
        fn set_parameters(&mut self, p: &[f64]) {
            self.0 = p[0];
        }
        fn predict(&self, x: &[f64]) -> Result<f64> {
            Ok(self.0 * x[0])
        }
        fn loss_and_grad(&self, d: &TrainingSet, b: &[usize], l: Loss) -> Result<(f64, Vec<f64>)> {
            let mut loss = 0.0;
            let mut g = 0.0;
            for &i in b {
                let (x, y) = d.sample(i);
                let p = self.0 * x[0];
                loss += l.value(p, y);
                g += l.derivative(p, y) * x[0];
            }
            let n = b.len() as f64;
            Ok((loss / n, vec![g / n]))
        }
    }

    fn line_data() -> TrainingSet {
        TrainingSet::new(vec![vec![1.0], vec![2.0], vec![-1.0]], vec![3.0, 6.0, -3.0]).unwrap()
    }

    #[test]
    fn zero_epochs_leave_model_alone() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (m, h) = train(Line(0.5), &line_data(), &cfg, Loss::Mse).unwrap();
        assert_eq!(m.0, 0.5);
        assert!(h.is_empty());
    }

    #[test]
    fn sgd_and_adam_converge() {
        for optimizer in [Optimizer::Sgd, Optimizer::default()] {
            let cfg = TrainConfig {
                epochs: 400,
                learning_rate: 0.05,
                optimizer,
                ..Default::default()
            };
            let (m, h) = train(Line(0.0), &line_data(), &cfg, Loss::Mse).unwrap();
            assert!((m.0 - 3.0).abs() < 1e-3, "{optimizer:?}: {}", m.0);
            assert_eq!(h.len(), 400);
        }
    }

    #[test]
    fn minibatches_are_seeded() {
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 1,
            seed: 9,
            ..Default::default()
        };
        let a = train(Line(0.0), &line_data(), &cfg, Loss::Mse).unwrap().1;
        let b = train(Line(0.0), &line_data(), &cfg, Loss::Mse).unwrap().1;
        assert_eq!(a, b);
    }

    #[test]
    fn checkpointed_training_matches_single_run() {
        let cfg = TrainConfig {
            epochs: 30,
            ..Default::default()
        };
        let (whole, _) = train(Line(0.1), &line_data(), &cfg, Loss::Mse).unwrap();
        let mut t = Trainer::new(Line(0.1), cfg, Loss::Mse).unwrap();
        t.run_epochs(&line_data(), 10).unwrap();
        t.run_epochs(&line_data(), 20).unwrap();
        assert_eq!(t.model().0, whole.0);
        assert_eq!(t.epoch(), 30);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            epochs: 2000,
            learning_rate: 10.0,
            optimizer: Optimizer::Sgd,
            ..Default::default()
        };
        let err = train(Line(0.0), &line_data(), &cfg, Loss::Mse).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }));
    }

    #[test]
    fn invalid_config_and_data() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(train(Line(0.0), &line_data(), &cfg, Loss::Mse).is_err());
        let empty = TrainingSet::default();
        assert!(train(Line(0.0), &empty, &TrainConfig::default(), Loss::Mse).is_err());
    }

    #[test]
    fn bce_derivative_matches_difference() {
        for (p, y) in [(0.3, 1.0), (0.8, 0.0), (0.5, 1.0)] {
            let h = 1e-7;
            let fd = (Loss::Bce.value(p + h, y) - Loss::Bce.value(p - h, y)) / (2.0 * h);
            assert!((fd - Loss::Bce.derivative(p, y)).abs() < 1e-5);
        }
    }
}
