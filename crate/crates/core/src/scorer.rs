//! Per-frame probability scorer: one hidden tanh layer, logistic outputs,
//! hand-derived backpropagation. Frames are scored independently so the
//! pooling behaviour under study is not confounded by temporal context.

use crate::mat::Mat;
use crate::math::logistic;
use crate::pooling::{FrameProbs, PoolError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScorerError {
    #[error("feature width {got} does not match scorer input dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("features must contain at least one frame")]
    EmptyInput,
    #[error("upstream gradient is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    UpstreamShape {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("scorer produced a non-finite probability at frame {frame}, class {class}")]
    NonFiniteOutput { frame: usize, class: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScorerConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
}

/// Weights of the two-layer scorer. `w1` is hidden x input, `w2` is
/// classes x hidden; biases match the output side of each layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerWeights {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl ScorerWeights {
    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn param_count(&self) -> usize {
        self.w1.data().len() + self.b1.len() + self.w2.data().len() + self.b2.len()
    }

    /// Flat view over (w1, b1, w2, b2) in that order, for finite-difference
    /// probes and optimizer bookkeeping.
    pub fn flat_get(&self, index: usize) -> f64 {
        let (n1, n2, n3) = (self.w1.data().len(), self.b1.len(), self.w2.data().len());
        if index < n1 {
            self.w1.data()[index]
        } else if index < n1 + n2 {
            self.b1[index - n1]
        } else if index < n1 + n2 + n3 {
            self.w2.data()[index - n1 - n2]
        } else {
            self.b2[index - n1 - n2 - n3]
        }
    }

    pub fn flat_add(&mut self, index: usize, delta: f64) {
        let (n1, n2, n3) = (self.w1.data().len(), self.b1.len(), self.w2.data().len());
        if index < n1 {
            self.w1.data_mut()[index] += delta;
        } else if index < n1 + n2 {
            self.b1[index - n1] += delta;
        } else if index < n1 + n2 + n3 {
            self.w2.data_mut()[index - n1 - n2] += delta;
        } else {
            self.b2[index - n1 - n2 - n3] += delta;
        }
    }

    /// `self -= scale * direction`.
    pub fn step(&mut self, scale: f64, direction: &ScorerGradients) {
        self.w1.scaled_add(-scale, &direction.w1);
        for (b, g) in self.b1.iter_mut().zip(&direction.b1) {
            *b -= scale * g;
        }
        self.w2.scaled_add(-scale, &direction.w2);
        for (b, g) in self.b2.iter_mut().zip(&direction.b2) {
            *b -= scale * g;
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.w1.sq_norm()
            + self.b1.iter().map(|v| v * v).sum::<f64>()
            + self.w2.sq_norm()
            + self.b2.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Same shape as [`ScorerWeights`]; accumulates loss gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerGradients {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl ScorerGradients {
    pub fn zeros_like(weights: &ScorerWeights) -> Self {
        ScorerGradients {
            w1: Mat::zeros(weights.hidden_dim(), weights.input_dim()),
            b1: vec![0.0; weights.hidden_dim()],
            w2: Mat::zeros(weights.num_classes(), weights.hidden_dim()),
            b2: vec![0.0; weights.num_classes()],
        }
    }

    pub fn scaled_add(&mut self, scale: f64, other: &ScorerGradients) {
        self.w1.scaled_add(scale, &other.w1);
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += scale * b;
        }
        self.w2.scaled_add(scale, &other.w2);
        for (a, b) in self.b2.iter_mut().zip(&other.b2) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, scale: f64) {
        self.w1.scale(scale);
        for v in &mut self.b1 {
            *v *= scale;
        }
        self.w2.scale(scale);
        for v in &mut self.b2 {
            *v *= scale;
        }
    }

    pub fn flat_get(&self, index: usize) -> f64 {
        let (n1, n2, n3) = (self.w1.data().len(), self.b1.len(), self.w2.data().len());
        if index < n1 {
            self.w1.data()[index]
        } else if index < n1 + n2 {
            self.b1[index - n1]
        } else if index < n1 + n2 + n3 {
            self.w2.data()[index - n1 - n2]
        } else {
            self.b2[index - n1 - n2 - n3]
        }
    }
}

/// Uniform weights scaled by 1/sqrt(fan-in), zero biases, reproducible from
/// the config seed.
pub fn init_weights(config: &ScorerConfig) -> ScorerWeights {
    assert!(
        config.input_dim >= 1 && config.hidden_dim >= 1 && config.num_classes >= 1,
        "scorer dimensions must all be at least 1"
    );
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut uniform_layer = |rows: usize, cols: usize| {
        let scale = 1.0 / (cols as f64).sqrt();
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, scale * (2.0 * rng.gen::<f64>() - 1.0));
            }
        }
        m
    };
    let w1 = uniform_layer(config.hidden_dim, config.input_dim);
    let w2 = uniform_layer(config.num_classes, config.hidden_dim);
    ScorerWeights {
        w1,
        b1: vec![0.0; config.hidden_dim],
        w2,
        b2: vec![0.0; config.num_classes],
    }
}

fn hidden_activations(weights: &ScorerWeights, frame: &[f64]) -> Vec<f64> {
    let hidden = weights.hidden_dim();
    let mut h = Vec::with_capacity(hidden);
    for j in 0..hidden {
        let row = weights.w1.row(j);
        let mut z = weights.b1[j];
        for (w, x) in row.iter().zip(frame) {
            z += w * x;
        }
        h.push(z.tanh());
    }
    h
}

fn output_probs(weights: &ScorerWeights, hidden: &[f64]) -> Vec<f64> {
    let classes = weights.num_classes();
    let mut out = Vec::with_capacity(classes);
    for c in 0..classes {
        let row = weights.w2.row(c);
        let mut z = weights.b2[c];
        for (w, h) in row.iter().zip(hidden) {
            z += w * h;
        }
        out.push(logistic(z));
    }
    out
}

/// Frame-by-frame forward pass; deterministic for fixed weights.
pub fn score_frames(weights: &ScorerWeights, features: &Mat) -> Result<FrameProbs, ScorerError> {
    if features.rows() == 0 {
        return Err(ScorerError::EmptyInput);
    }
    if features.cols() != weights.input_dim() {
        return Err(ScorerError::DimensionMismatch {
            expected: weights.input_dim(),
            got: features.cols(),
        });
    }
    let mut probs = Mat::zeros(features.rows(), weights.num_classes());
    for t in 0..features.rows() {
        let h = hidden_activations(weights, features.row(t));
        let out = output_probs(weights, &h);
        probs.row_mut(t).copy_from_slice(&out);
    }
    FrameProbs::new(probs).map_err(|e| match e {
        PoolError::NonFinite { row, col } => ScorerError::NonFiniteOutput {
            frame: row,
            class: col,
        },
        _ => ScorerError::EmptyInput,
    })
}

/// Backpropagates `upstream = dL/d(frame probability)` to all weights.
pub fn scorer_backward(
    weights: &ScorerWeights,
    features: &Mat,
    upstream: &Mat,
) -> Result<ScorerGradients, ScorerError> {
    if features.rows() == 0 {
        return Err(ScorerError::EmptyInput);
    }
    if features.cols() != weights.input_dim() {
        return Err(ScorerError::DimensionMismatch {
            expected: weights.input_dim(),
            got: features.cols(),
        });
    }
    if upstream.rows() != features.rows() || upstream.cols() != weights.num_classes() {
        return Err(ScorerError::UpstreamShape {
            rows: features.rows(),
            cols: weights.num_classes(),
            got_rows: upstream.rows(),
            got_cols: upstream.cols(),
        });
    }
    let hidden = weights.hidden_dim();
    let classes = weights.num_classes();
    let mut grads = ScorerGradients::zeros_like(weights);
    let mut delta_out = vec![0.0; classes];
    let mut delta_hidden = vec![0.0; hidden];
    for t in 0..features.rows() {
        let frame = features.row(t);
        let h = hidden_activations(weights, frame);
        let out = output_probs(weights, &h);
        for c in 0..classes {
            delta_out[c] = upstream.get(t, c) * out[c] * (1.0 - out[c]);
            grads.b2[c] += delta_out[c];
            let row = grads.w2.row_mut(c);
            for (g, hv) in row.iter_mut().zip(&h) {
                *g += delta_out[c] * hv;
            }
        }
        for j in 0..hidden {
            let mut back = 0.0;
            for c in 0..classes {
                back += weights.w2.get(c, j) * delta_out[c];
            }
            delta_hidden[j] = back * (1.0 - h[j] * h[j]);
            grads.b1[j] += delta_hidden[j];
            let row = grads.w1.row_mut(j);
            for (g, x) in row.iter_mut().zip(frame) {
                *g += delta_hidden[j] * x;
            }
        }
    }
    Ok(grads)
}
