use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::{self, NetworkState};
use super::spec::NetworkSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Supplied by the caller rather than configuration files.
    #[serde(skip)]
    pub seed: u64,
    /// L2 penalty applied to weights (not biases).
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.01, momentum: 0.9, epochs: 50, batch_size: 16, seed: 0, weight_decay: 1e-4 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: NetworkState,
    /// Mean training loss of each epoch, measured during the epoch.
    pub loss_history: Vec<f64>,
}

/// Mean loss gradient over `batch`, accumulated in batch order.
pub fn batch_gradient(
    spec: &NetworkSpec,
    state: &NetworkState,
    samples: &[(&Array2<f64>, usize)],
    batch: &[usize],
) -> Result<(NetworkState, f64)> {
    let mut sum = state.zeros_like();
    let mut loss = 0.0;
    for &i in batch {
        let (x, y) = samples[i];
        let cache = network::forward(spec, state, x)?;
        loss += network::loss(&cache, y);
        sum.add_scaled(&network::backward(spec, state, &cache, y)?, 1.0);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut mean = sum.zeros_like();
    mean.add_scaled(&sum, scale);
    Ok((mean, loss))
}

/// Mini-batch SGD with momentum on the mean softmax cross-entropy.
///
/// Parameters are initialized from `config.seed` and the sample order is
/// reshuffled every epoch from the same seeded stream, so the result is a pure
/// function of `(spec, samples, config)`.
pub fn train(spec: &NetworkSpec, samples: &[(&Array2<f64>, usize)], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    let expect = (spec.input_channels(), spec.input_length());
    for (i, (x, y)) in samples.iter().enumerate() {
        if x.dim() != expect {
            return Err(Error::shape(format!("sample {i} has shape {:?}, network expects {expect:?}", x.dim())));
        }
        if *y >= spec.classes() {
            return Err(Error::invalid(format!("sample {i} label {y} out of range for {} classes", spec.classes())));
        }
    }

    let mut state = NetworkState::init(spec, config.seed);
    let mut velocity = state.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f5a_3b1e_5000);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (grad, loss) = batch_gradient(spec, &state, samples, batch)?;
            epoch_loss += loss;
            for ((params, g), vel) in state.layers.iter_mut().zip(&grad.layers).zip(velocity.layers.iter_mut()) {
                let tensors = params.tensors_mut().into_iter().zip(g.tensors()).zip(vel.tensors_mut());
                for (k, ((p, g), v)) in tensors.enumerate() {
                    // tensor 0 is the weight tensor, 1 the bias
                    let decay = if k == 0 { config.weight_decay } else { 0.0 };
                    for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *v = config.momentum * *v - config.learning_rate * (g + decay * *p);
                        *p += *v;
                    }
                }
            }
        }
        let mean = epoch_loss / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NotConverged("CNN training (loss diverged)"));
        }
        history.push(mean);
    }
    Ok(TrainOutcome { state, loss_history: history })
}
