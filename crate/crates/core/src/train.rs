//! Mini-batch training of the frame scorer and the power-pooling exponents
//! under clip-level cross-entropy. The reference path is sequential and
//! bit-for-bit deterministic for a fixed seed.

use crate::mat::Mat;
use crate::pooling::{
    pool_backward, pool_forward, power_data_gradient, power_regularizer_gradient, ClipProbs,
    FrameProbs, PoolError, PoolingKind, PowerParams, PROB_EPS,
};
use crate::scorer::{
    init_weights, score_frames, scorer_backward, ScorerConfig, ScorerError, ScorerGradients,
    ScorerWeights,
};
use crate::synth::{draw_time_shift, shift_features, Bag};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub const MOMENTUM: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    BadConfig(&'static str),
    #[error("clip {clip_id}: {what}")]
    InconsistentBag { clip_id: usize, what: &'static str },
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} \
         (scorer weight norm {scorer_norm:.6e}, raw power norm {power_norm:.6e})"
    )]
    NanLoss {
        epoch: usize,
        batch: usize,
        scorer_norm: f64,
        power_norm: f64,
    },
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub power_learning_rate: f64,
    pub lambda: f64,
    pub pooling: PoolingKind,
    pub augment: bool,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Plain defaults: the power learning rate follows the model learning
    /// rate and the regularizer weight is 1e-4.
    pub fn new(pooling: PoolingKind) -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            learning_rate: 0.5,
            power_learning_rate: 0.5,
            lambda: 1e-4,
            pooling,
            augment: false,
            hidden_dim: 32,
            seed: 0,
        }
    }

    /// The recorded benchmark protocol for pooling comparisons on the
    /// synthetic dataset. The exponents move on a slower schedule than the
    /// scorer and under a stronger regularizer: pilot runs showed that at
    /// this scale the 1e-4 regularizer is too weak to keep the per-class
    /// exponents from wandering once the clip task saturates.
    pub fn benchmark(pooling: PoolingKind, seed: u64) -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            learning_rate: 0.5,
            power_learning_rate: 0.05,
            lambda: 1e-2,
            pooling,
            augment: false,
            hidden_dim: 32,
            seed,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig("learning rate must be positive"));
        }
        if !(self.power_learning_rate > 0.0) {
            return Err(TrainError::BadConfig("power learning rate must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(TrainError::BadConfig("lambda must be non-negative"));
        }
        if self.hidden_dim == 0 {
            return Err(TrainError::BadConfig("hidden width must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub weights: ScorerWeights,
    pub power: PowerParams,
    pub epochs_run: usize,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
    /// Effective exponents per class, one snapshot per epoch.
    pub exponent_history: Vec<Vec<f64>>,
}

/// Binary cross-entropy of one clip prediction, averaged over classes.
pub fn clip_bce(clip_probs: &ClipProbs, weak_labels: &[bool]) -> f64 {
    assert_eq!(clip_probs.len(), weak_labels.len(), "one probability per class");
    let mut total = 0.0;
    for (p, &label) in clip_probs.values().iter().zip(weak_labels) {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        total -= if label { p.ln() } else { (1.0 - p).ln() };
    }
    total / weak_labels.len() as f64
}

/// Per-clip training objective: class-averaged cross-entropy plus the power
/// regularizer when power parameters are in play.
pub fn clip_loss(
    clip_probs: &ClipProbs,
    weak_labels: &[bool],
    params: Option<&PowerParams>,
) -> f64 {
    clip_bce(clip_probs, weak_labels) + params.map_or(0.0, |p| p.regularizer())
}

/// Scores one clip and pools it; the common forward path of training,
/// evaluation and reporting.
pub fn forward_clip(
    weights: &ScorerWeights,
    pooling: PoolingKind,
    params: Option<&PowerParams>,
    features: &Mat,
) -> Result<(FrameProbs, ClipProbs), TrainError> {
    let probs = score_frames(weights, features)?;
    let clip = pool_forward(pooling, params, &probs)?;
    Ok((probs, clip))
}

fn check_dataset(dataset: &[Bag]) -> Result<(usize, usize), TrainError> {
    let first = dataset.first().ok_or(TrainError::EmptyDataset)?;
    let input_dim = first.features.cols();
    let num_classes = first.weak_labels.len();
    for bag in dataset {
        if bag.features.rows() == 0 {
            return Err(TrainError::InconsistentBag {
                clip_id: bag.clip_id,
                what: "clip has no frames",
            });
        }
        if bag.features.cols() != input_dim {
            return Err(TrainError::InconsistentBag {
                clip_id: bag.clip_id,
                what: "feature width differs from the rest of the dataset",
            });
        }
        if bag.weak_labels.len() != num_classes {
            return Err(TrainError::InconsistentBag {
                clip_id: bag.clip_id,
                what: "label count differs from the rest of the dataset",
            });
        }
    }
    Ok((input_dim, num_classes))
}

/// Seeded shuffled mini-batch gradient descent with momentum over weak labels
/// only. Power exponents are trained alongside the scorer whenever the
/// pooling kind is `Power`; the regularizer enters once per batch.
pub fn train(dataset: &[Bag], config: &TrainConfig) -> Result<TrainState, TrainError> {
    train_with_observer(dataset, config, &mut |_, _, _| {})
}

/// [`train`] with a per-epoch hook, e.g. for checkpoint emission. The hook
/// sees the epoch index and the parameters as they stand after that epoch.
pub fn train_with_observer(
    dataset: &[Bag],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &ScorerWeights, &PowerParams),
) -> Result<TrainState, TrainError> {
    config.validate()?;
    let (input_dim, num_classes) = check_dataset(dataset)?;
    let mut weights = init_weights(&ScorerConfig {
        input_dim,
        hidden_dim: config.hidden_dim,
        num_classes,
        seed: config.seed,
    });
    let mut power = PowerParams::new(num_classes, config.lambda);
    let use_power = config.pooling == PoolingKind::Power;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut velocity = ScorerGradients::zeros_like(&weights);
    let mut power_velocity = vec![0.0; num_classes];
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut exponent_history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let batch_len = batch.len() as f64;
            let mut grads = ScorerGradients::zeros_like(&weights);
            let mut power_grad = vec![0.0; num_classes];
            let mut bce_sum = 0.0;
            for &clip_idx in batch {
                let bag = &dataset[clip_idx];
                let shifted;
                let features = if config.augment {
                    shifted = shift_features(&bag.features, draw_time_shift(&mut rng));
                    &shifted
                } else {
                    &bag.features
                };
                let params = use_power.then_some(&power);
                let probs = match score_frames(&weights, features) {
                    Ok(p) => p,
                    Err(ScorerError::NonFiniteOutput { .. }) => {
                        return Err(nan_abort(epoch, batch_index, &weights, &power));
                    }
                    Err(e) => return Err(e.into()),
                };
                let clip = pool_forward(config.pooling, params, &probs)?;
                bce_sum += clip_bce(&clip, &bag.weak_labels);
                let upstream: Vec<f64> = clip
                    .values()
                    .iter()
                    .zip(&bag.weak_labels)
                    .map(|(&y, &label)| {
                        let target = if label { 1.0 } else { 0.0 };
                        (y - target) / (y * (1.0 - y)) / (num_classes as f64 * batch_len)
                    })
                    .collect();
                let pool_grad = pool_backward(config.pooling, params, &probs, &upstream)?;
                let mut frame_upstream = pool_grad.into_matrix();
                // frames pinned at the probability clamp receive no gradient
                for t in 0..probs.frames() {
                    for c in 0..num_classes {
                        let p = probs.get(t, c);
                        if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
                            frame_upstream.set(t, c, 0.0);
                        }
                    }
                }
                let clip_grads = scorer_backward(&weights, features, &frame_upstream)?;
                grads.scaled_add(1.0, &clip_grads);
                if use_power {
                    let data = power_data_gradient(&power, &probs, &upstream)?;
                    for (acc, g) in power_grad.iter_mut().zip(data) {
                        *acc += g;
                    }
                }
            }
            let batch_loss =
                bce_sum / batch_len + if use_power { power.regularizer() } else { 0.0 };
            if !batch_loss.is_finite() {
                return Err(nan_abort(epoch, batch_index, &weights, &power));
            }
            velocity.scale(MOMENTUM);
            velocity.scaled_add(1.0, &grads);
            weights.step(config.learning_rate, &velocity);
            if use_power {
                let reg = power_regularizer_gradient(&power);
                for c in 0..num_classes {
                    power_velocity[c] = MOMENTUM * power_velocity[c] + power_grad[c] + reg[c];
                }
                for (raw, v) in power.raw_mut().iter_mut().zip(&power_velocity) {
                    *raw -= config.power_learning_rate * v;
                }
            }
            epoch_loss += batch_loss;
            batches += 1;
        }
        loss_history.push(epoch_loss / batches as f64);
        exponent_history.push(power.exponents());
        on_epoch(epoch, &weights, &power);
    }

    Ok(TrainState {
        weights,
        power,
        epochs_run: config.epochs,
        loss_history,
        exponent_history,
    })
}

fn nan_abort(
    epoch: usize,
    batch: usize,
    weights: &ScorerWeights,
    power: &PowerParams,
) -> TrainError {
    TrainError::NanLoss {
        epoch,
        batch,
        scorer_norm: weights.sq_norm().sqrt(),
        power_norm: power.raw().iter().map(|r| r * r).sum::<f64>().sqrt(),
    }
}
