//! Pooling functions for multiple instance learning.
//!
//! A pooling function maps per-frame probabilities to one clip-level
//! probability per class as a weighted average, and routes the clip-level
//! gradient back to the frames. All forward and backward passes here are
//! closed-form; power pooling additionally carries one trainable exponent
//! per class.

use crate::mat::Mat;
use crate::math::{logistic, logit, softplus, softplus_inv};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Frame probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before
/// pooling. The power-pooling backward pass contains a `y^(n-1)` factor that
/// diverges at 0 for exponents below 1; the clamp keeps every gradient finite.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum PoolError {
    #[error("frame probabilities must contain at least one frame and one class")]
    EmptyBag,
    #[error("frame probability at ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("power pooling requires exponent parameters")]
    MissingPowerParams,
    #[error("{kind} pooling does not take exponent parameters")]
    UnexpectedPowerParams { kind: PoolingKind },
    #[error("exponent parameters cover {params} classes but probabilities have {classes}")]
    ClassCountMismatch { params: usize, classes: usize },
    #[error("upstream gradient has {got} entries, expected {expected}")]
    UpstreamLength { expected: usize, got: usize },
    #[error("class index {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("gradient-sign threshold is only defined for linear and power pooling, not {kind}")]
    ThresholdUnsupported { kind: PoolingKind },
    #[error("clip probability {0} is outside [0, 1]")]
    ClipProbOutOfRange(f64),
    #[error("step count must be positive")]
    ZeroSteps,
    #[error("step size must be positive, got {0}")]
    BadStepSize(f64),
}

/// The pooling family compared throughout the toolkit. `Power` is the only
/// variant with trainable state (see [`PowerParams`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolingKind {
    Max,
    Average,
    ExponentialSoftmax,
    LinearSoftmax,
    Power,
}

impl PoolingKind {
    pub const ALL: [PoolingKind; 5] = [
        PoolingKind::Max,
        PoolingKind::Average,
        PoolingKind::ExponentialSoftmax,
        PoolingKind::LinearSoftmax,
        PoolingKind::Power,
    ];
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PoolingKind::Max => "max",
            PoolingKind::Average => "average",
            PoolingKind::ExponentialSoftmax => "exponential",
            PoolingKind::LinearSoftmax => "linear",
            PoolingKind::Power => "power",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown pooling kind `{0}`, expected one of max, average, exponential, linear, power")]
pub struct ParsePoolingError(String);

impl FromStr for PoolingKind {
    type Err = ParsePoolingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(PoolingKind::Max),
            "average" | "mean" => Ok(PoolingKind::Average),
            "exponential" | "exponential_softmax" | "exp" => Ok(PoolingKind::ExponentialSoftmax),
            "linear" | "linear_softmax" => Ok(PoolingKind::LinearSoftmax),
            "power" => Ok(PoolingKind::Power),
            other => Err(ParsePoolingError(other.to_string())),
        }
    }
}

/// Trainable state for power pooling: one raw parameter per class plus the
/// weight of the `lambda * sum(n_c^2)` regularizer.
///
/// The effective exponent is `n_c = softplus(raw_c)`, which keeps `n_c >= 0`
/// without any projection step. New parameters start at `n_c = 1`, where
/// power pooling coincides with linear softmax pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerParams {
    raw: Vec<f64>,
    lambda: f64,
}

impl PowerParams {
    pub fn new(num_classes: usize, lambda: f64) -> Self {
        assert!(lambda >= 0.0, "regularizer weight must be non-negative");
        PowerParams {
            raw: vec![softplus_inv(1.0); num_classes],
            lambda,
        }
    }

    /// Builds parameters whose effective exponents equal `exponents`.
    pub fn with_exponents(exponents: &[f64], lambda: f64) -> Self {
        assert!(lambda >= 0.0, "regularizer weight must be non-negative");
        PowerParams {
            raw: exponents.iter().map(|&n| softplus_inv(n)).collect(),
            lambda,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.raw.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn from_raw(raw: Vec<f64>, lambda: f64) -> Self {
        assert!(lambda >= 0.0, "regularizer weight must be non-negative");
        PowerParams { raw, lambda }
    }

    /// Effective exponent `n_c` for one class.
    pub fn exponent(&self, class: usize) -> f64 {
        softplus(self.raw[class])
    }

    pub fn exponents(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| softplus(r)).collect()
    }

    /// `theta_c = n_c / (n_c + 1)`, the gradient-sign threshold ratio.
    pub fn theta(&self, class: usize) -> f64 {
        let n = self.exponent(class);
        n / (n + 1.0)
    }

    /// `d n_c / d raw_c` of the softplus map.
    pub fn exponent_slope(&self, class: usize) -> f64 {
        logistic(self.raw[class])
    }

    /// `lambda * sum_c n_c^2`.
    pub fn regularizer(&self) -> f64 {
        self.lambda * self.raw.iter().map(|&r| softplus(r).powi(2)).sum::<f64>()
    }
}

/// Per-frame, per-class probabilities in `[PROB_EPS, 1 - PROB_EPS]`.
/// Construction clamps and rejects empty or non-finite input.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameProbs(Mat);

impl FrameProbs {
    pub fn new(values: Mat) -> Result<Self, PoolError> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(PoolError::EmptyBag);
        }
        let mut values = values;
        for row in 0..values.rows() {
            for col in 0..values.cols() {
                let v = values.get(row, col);
                if !v.is_finite() {
                    return Err(PoolError::NonFinite { row, col });
                }
                values.set(row, col, v.clamp(PROB_EPS, 1.0 - PROB_EPS));
            }
        }
        Ok(FrameProbs(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PoolError> {
        FrameProbs::new(Mat::from_rows(rows))
    }

    /// Single-class bag from a slice of frame probabilities.
    pub fn single_class(frames: &[f64]) -> Result<Self, PoolError> {
        let rows: Vec<Vec<f64>> = frames.iter().map(|&p| vec![p]).collect();
        FrameProbs::from_rows(&rows)
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn classes(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn get(&self, frame: usize, class: usize) -> f64 {
        self.0.get(frame, class)
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    /// One class's frame values as a column vector.
    pub fn class_column(&self, class: usize) -> Vec<f64> {
        (0..self.frames()).map(|t| self.get(t, class)).collect()
    }
}

/// One clip-level probability per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipProbs(Vec<f64>);

impl ClipProbs {
    pub fn new(values: Vec<f64>) -> Self {
        ClipProbs(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `d y_clip / d y_frame` per frame and class, already multiplied by the
/// upstream clip gradient when produced by [`pool_backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct PoolGradient(Mat);

impl PoolGradient {
    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn get(&self, frame: usize, class: usize) -> f64 {
        self.0.get(frame, class)
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }
}

fn check_params(
    kind: PoolingKind,
    params: Option<&PowerParams>,
    classes: usize,
) -> Result<(), PoolError> {
    match (kind, params) {
        (PoolingKind::Power, None) => Err(PoolError::MissingPowerParams),
        (PoolingKind::Power, Some(p)) if p.num_classes() != classes => {
            Err(PoolError::ClassCountMismatch {
                params: p.num_classes(),
                classes,
            })
        }
        (PoolingKind::Power, Some(_)) => Ok(()),
        (_, Some(_)) => Err(PoolError::UnexpectedPowerParams { kind }),
        (_, None) => Ok(()),
    }
}

fn first_argmax(column: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in column.iter().enumerate().skip(1) {
        if v > column[best] {
            best = i;
        }
    }
    best
}

/// The per-frame weights `w_i` of the weighted average, one column per class.
///
/// Power weights are evaluated as `(y_i / y_max)^n` so the denominator never
/// underflows at large exponents; the pooled value is unchanged because the
/// weighted average is scale-invariant in the weights.
pub fn pool_weights(
    kind: PoolingKind,
    params: Option<&PowerParams>,
    probs: &FrameProbs,
) -> Result<Mat, PoolError> {
    check_params(kind, params, probs.classes())?;
    let frames = probs.frames();
    let classes = probs.classes();
    let mut weights = Mat::zeros(frames, classes);
    for c in 0..classes {
        match kind {
            PoolingKind::Max => {
                let column = probs.class_column(c);
                weights.set(first_argmax(&column), c, 1.0);
            }
            PoolingKind::Average => {
                for t in 0..frames {
                    weights.set(t, c, 1.0);
                }
            }
            PoolingKind::ExponentialSoftmax => {
                for t in 0..frames {
                    weights.set(t, c, probs.get(t, c).exp());
                }
            }
            PoolingKind::LinearSoftmax => {
                for t in 0..frames {
                    weights.set(t, c, probs.get(t, c));
                }
            }
            PoolingKind::Power => {
                let n = params.unwrap().exponent(c);
                let column = probs.class_column(c);
                let max = column[first_argmax(&column)];
                for t in 0..frames {
                    weights.set(t, c, (probs.get(t, c) / max).powf(n));
                }
            }
        }
    }
    Ok(weights)
}

/// Clip-level probability per class: `y^c = sum_i y_i w_i / sum_i w_i`.
pub fn pool_forward(
    kind: PoolingKind,
    params: Option<&PowerParams>,
    probs: &FrameProbs,
) -> Result<ClipProbs, PoolError> {
    let weights = pool_weights(kind, params, probs)?;
    let mut clip = Vec::with_capacity(probs.classes());
    for c in 0..probs.classes() {
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..probs.frames() {
            let w = weights.get(t, c);
            num += probs.get(t, c) * w;
            den += w;
        }
        clip.push(num / den);
    }
    Ok(ClipProbs(clip))
}

/// Backward pass: `upstream_c * d y^c / d y_i^f` for every frame and class.
///
/// Max pooling routes the whole upstream gradient to the first maximal frame
/// (ties broken by lowest index).
pub fn pool_backward(
    kind: PoolingKind,
    params: Option<&PowerParams>,
    probs: &FrameProbs,
    upstream: &[f64],
) -> Result<PoolGradient, PoolError> {
    check_params(kind, params, probs.classes())?;
    if upstream.len() != probs.classes() {
        return Err(PoolError::UpstreamLength {
            expected: probs.classes(),
            got: upstream.len(),
        });
    }
    let frames = probs.frames();
    let classes = probs.classes();
    let clip = pool_forward(kind, params, probs)?;
    let mut grad = Mat::zeros(frames, classes);
    for c in 0..classes {
        let up = upstream[c];
        let yc = clip.get(c);
        match kind {
            PoolingKind::Max => {
                let column = probs.class_column(c);
                grad.set(first_argmax(&column), c, up);
            }
            PoolingKind::Average => {
                let g = up / frames as f64;
                for t in 0..frames {
                    grad.set(t, c, g);
                }
            }
            PoolingKind::ExponentialSoftmax => {
                let den: f64 = (0..frames).map(|t| probs.get(t, c).exp()).sum();
                for t in 0..frames {
                    let y = probs.get(t, c);
                    grad.set(t, c, up * y.exp() * (1.0 + y - yc) / den);
                }
            }
            PoolingKind::LinearSoftmax => {
                let den: f64 = (0..frames).map(|t| probs.get(t, c)).sum();
                for t in 0..frames {
                    let y = probs.get(t, c);
                    grad.set(t, c, up * (2.0 * y - yc) / den);
                }
            }
            PoolingKind::Power => {
                let n = params.unwrap().exponent(c);
                let column = probs.class_column(c);
                let max = column[first_argmax(&column)];
                let scaled: Vec<f64> = column.iter().map(|&y| (y / max).powf(n)).collect();
                let den: f64 = scaled.iter().sum();
                for t in 0..frames {
                    let y = column[t];
                    grad.set(t, c, up * scaled[t] * ((n + 1.0) - n * yc / y) / den);
                }
            }
        }
    }
    Ok(PoolGradient(grad))
}

/// `d y^c / d n_c` per class for power pooling.
pub fn power_clip_sensitivity(
    params: &PowerParams,
    probs: &FrameProbs,
) -> Result<Vec<f64>, PoolError> {
    check_params(PoolingKind::Power, Some(params), probs.classes())?;
    let clip = pool_forward(PoolingKind::Power, Some(params), probs)?;
    let mut out = Vec::with_capacity(probs.classes());
    for c in 0..probs.classes() {
        let n = params.exponent(c);
        let column = probs.class_column(c);
        let max = column[first_argmax(&column)];
        let yc = clip.get(c);
        let mut num = 0.0;
        let mut den = 0.0;
        for &y in &column {
            let w = (y / max).powf(n);
            num += w * y.ln() * (y - yc);
            den += w;
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Loss gradient with respect to the raw power parameters from the pooled
/// clips alone, without the regularizer term.
pub fn power_data_gradient(
    params: &PowerParams,
    probs: &FrameProbs,
    upstream: &[f64],
) -> Result<Vec<f64>, PoolError> {
    if upstream.len() != probs.classes() {
        return Err(PoolError::UpstreamLength {
            expected: probs.classes(),
            got: upstream.len(),
        });
    }
    let sensitivity = power_clip_sensitivity(params, probs)?;
    Ok(sensitivity
        .iter()
        .enumerate()
        .map(|(c, s)| upstream[c] * s * params.exponent_slope(c))
        .collect())
}

/// `d (lambda * sum_c n_c^2) / d raw_c` per class.
pub fn power_regularizer_gradient(params: &PowerParams) -> Vec<f64> {
    (0..params.num_classes())
        .map(|c| 2.0 * params.lambda() * params.exponent(c) * params.exponent_slope(c))
        .collect()
}

/// Full loss gradient with respect to the raw power parameters: chain rule
/// through `n_c = softplus(raw_c)` plus the regularizer contribution.
pub fn power_param_gradient(
    params: &PowerParams,
    probs: &FrameProbs,
    upstream: &[f64],
) -> Result<Vec<f64>, PoolError> {
    let mut grad = power_data_gradient(params, probs, upstream)?;
    for (g, r) in grad.iter_mut().zip(power_regularizer_gradient(params)) {
        *g += r;
    }
    Ok(grad)
}

/// The frame probability `d` above which the pooling gradient is positive:
/// `d = theta * y^c` with `theta = 1/2` for linear softmax and
/// `theta = n/(n+1)` for power pooling. Other kinds have no sign threshold.
pub fn sign_threshold(
    kind: PoolingKind,
    params: Option<&PowerParams>,
    class: usize,
    clip_prob: f64,
) -> Result<f64, PoolError> {
    if !(0.0..=1.0).contains(&clip_prob) {
        return Err(PoolError::ClipProbOutOfRange(clip_prob));
    }
    match kind {
        PoolingKind::LinearSoftmax => {
            if params.is_some() {
                return Err(PoolError::UnexpectedPowerParams { kind });
            }
            Ok(0.5 * clip_prob)
        }
        PoolingKind::Power => {
            let params = params.ok_or(PoolError::MissingPowerParams)?;
            if class >= params.num_classes() {
                return Err(PoolError::ClassOutOfRange {
                    class,
                    classes: params.num_classes(),
                });
            }
            Ok(params.theta(class) * clip_prob)
        }
        other => Err(PoolError::ThresholdUnsupported { kind: other }),
    }
}

/// Gradient-descent trajectory of a bag whose frame probabilities are free
/// parameters behind a logit map, trained against a clip-level cross-entropy
/// with the given bag label. Returns `steps + 1` states including the input.
pub fn simulate_bag_dynamics(
    kind: PoolingKind,
    params: Option<&PowerParams>,
    initial: &FrameProbs,
    positive: bool,
    steps: usize,
    step_size: f64,
) -> Result<Vec<FrameProbs>, PoolError> {
    check_params(kind, params, initial.classes())?;
    if steps == 0 {
        return Err(PoolError::ZeroSteps);
    }
    if !(step_size > 0.0) {
        return Err(PoolError::BadStepSize(step_size));
    }
    let frames = initial.frames();
    let classes = initial.classes();
    let label = if positive { 1.0 } else { 0.0 };
    let mut logits = Mat::zeros(frames, classes);
    for t in 0..frames {
        for c in 0..classes {
            logits.set(t, c, logit(initial.get(t, c)));
        }
    }
    let mut trajectory = Vec::with_capacity(steps + 1);
    trajectory.push(initial.clone());
    let mut current = initial.clone();
    for _ in 0..steps {
        let clip = pool_forward(kind, params, &current)?;
        let upstream: Vec<f64> = clip
            .values()
            .iter()
            .map(|&yc| (yc - label) / (yc * (1.0 - yc)))
            .collect();
        let grad = pool_backward(kind, params, &current, &upstream)?;
        let mut next = Mat::zeros(frames, classes);
        for t in 0..frames {
            for c in 0..classes {
                let p = current.get(t, c);
                let g = grad.get(t, c) * p * (1.0 - p);
                let z = logits.get(t, c) - step_size * g;
                logits.set(t, c, z);
                next.set(t, c, logistic(z));
            }
        }
        current = FrameProbs::new(next)?;
        trajectory.push(current.clone());
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(frames: &[f64]) -> FrameProbs {
        FrameProbs::single_class(frames).unwrap()
    }

    /// Direct transcription of the power-pooling quotient, kept independent of
    /// the rescaled implementation path.
    fn power_forward_direct(frames: &[f64], n: f64) -> f64 {
        let num: f64 = frames.iter().map(|&y| y * y.powf(n)).sum();
        let den: f64 = frames.iter().map(|&y| y.powf(n)).sum();
        num / den
    }

    #[test]
    fn linear_softmax_forward_matches_hand_value() {
        let clip = pool_forward(PoolingKind::LinearSoftmax, None, &bag(&[0.2, 0.8])).unwrap();
        assert!((clip.get(0) - 0.68).abs() < 1e-12);
    }

    #[test]
    fn power_zero_exponent_is_arithmetic_mean() {
        let params = PowerParams::with_exponents(&[0.0], 0.0);
        let frames = [0.13, 0.5, 0.92, 0.4];
        let clip = pool_forward(PoolingKind::Power, Some(&params), &bag(&frames)).unwrap();
        let mean = frames.iter().sum::<f64>() / frames.len() as f64;
        assert!((clip.get(0) - mean).abs() < 1e-12);
    }

    #[test]
    fn power_unit_exponent_matches_linear_softmax() {
        let params = PowerParams::with_exponents(&[1.0], 0.0);
        let clip = pool_forward(PoolingKind::Power, Some(&params), &bag(&[0.2, 0.8])).unwrap();
        assert!((clip.get(0) - 0.68).abs() < 1e-12);
    }

    #[test]
    fn single_frame_passes_through_for_every_kind() {
        for kind in PoolingKind::ALL {
            let params = (kind == PoolingKind::Power)
                .then(|| PowerParams::with_exponents(&[2.3], 0.0));
            let clip = pool_forward(kind, params.as_ref(), &bag(&[0.37])).unwrap();
            assert!(
                (clip.get(0) - 0.37).abs() < 1e-12,
                "{kind}: {}",
                clip.get(0)
            );
        }
    }

    #[test]
    fn empty_bag_is_rejected() {
        assert_eq!(FrameProbs::new(Mat::zeros(0, 1)), Err(PoolError::EmptyBag));
        assert_eq!(FrameProbs::new(Mat::zeros(3, 0)), Err(PoolError::EmptyBag));
    }

    #[test]
    fn params_must_match_kind() {
        let probs = bag(&[0.2, 0.8]);
        assert_eq!(
            pool_forward(PoolingKind::Power, None, &probs),
            Err(PoolError::MissingPowerParams)
        );
        let params = PowerParams::new(1, 0.0);
        assert!(matches!(
            pool_forward(PoolingKind::Average, Some(&params), &probs),
            Err(PoolError::UnexpectedPowerParams { .. })
        ));
        let wide = PowerParams::new(3, 0.0);
        assert!(matches!(
            pool_forward(PoolingKind::Power, Some(&wide), &probs),
            Err(PoolError::ClassCountMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_probability_is_rejected() {
        let m = Mat::from_rows(&[vec![0.1], vec![f64::NAN]]);
        assert_eq!(
            FrameProbs::new(m),
            Err(PoolError::NonFinite { row: 1, col: 0 })
        );
    }

    #[test]
    fn linear_softmax_backward_matches_hand_values() {
        let grad = pool_backward(PoolingKind::LinearSoftmax, None, &bag(&[0.2, 0.8]), &[1.0])
            .unwrap();
        assert!((grad.get(0, 0) + 0.28).abs() < 1e-12);
        assert!((grad.get(1, 0) - 0.92).abs() < 1e-12);
    }

    #[test]
    fn single_frame_backward_is_identity() {
        for kind in [
            PoolingKind::Average,
            PoolingKind::ExponentialSoftmax,
            PoolingKind::LinearSoftmax,
        ] {
            let grad = pool_backward(kind, None, &bag(&[0.42]), &[1.0]).unwrap();
            assert!((grad.get(0, 0) - 1.0).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn power_unit_exponent_gradient_matches_linear_softmax() {
        let frames = [0.11, 0.57, 0.83, 0.29, 0.64];
        let params = PowerParams::with_exponents(&[1.0], 0.0);
        let a = pool_backward(PoolingKind::Power, Some(&params), &bag(&frames), &[0.7]).unwrap();
        let b = pool_backward(PoolingKind::LinearSoftmax, None, &bag(&frames), &[0.7]).unwrap();
        for t in 0..frames.len() {
            assert!((a.get(t, 0) - b.get(t, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_frames_have_zero_exponent_sensitivity() {
        let params = PowerParams::with_exponents(&[1.0], 1e-4);
        let probs = bag(&[0.4, 0.4, 0.4]);
        let sens = power_clip_sensitivity(&params, &probs).unwrap();
        assert!(sens[0].abs() < 1e-15, "sensitivity {}", sens[0]);
        let grad = power_param_gradient(&params, &probs, &[1.0]).unwrap();
        let expected = 2.0 * 1e-4 * 1.0 * params.exponent_slope(0);
        assert!((grad[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn exponent_sensitivity_matches_finite_difference_of_direct_formula() {
        let frames = [0.2, 0.8];
        let n = 1.0;
        let params = PowerParams::with_exponents(&[n], 0.0);
        let analytic = power_clip_sensitivity(&params, &bag(&frames)).unwrap()[0];
        let h = 1e-5;
        let fd =
            (power_forward_direct(&frames, n + h) - power_forward_direct(&frames, n - h)) / (2.0 * h);
        let rel = (analytic - fd).abs() / fd.abs().max(1e-8);
        assert!(rel < 1e-5, "analytic {analytic} vs fd {fd}");
    }

    #[test]
    fn param_gradient_matches_finite_difference_through_raw_map() {
        // central differences of pool_forward + regularizer w.r.t. the raw
        // parameter, probing one class of a two-class bag
        let probs = FrameProbs::from_rows(&[
            vec![0.15, 0.6],
            vec![0.72, 0.33],
            vec![0.48, 0.9],
        ])
        .unwrap();
        let lambda = 1e-3;
        let params = PowerParams::with_exponents(&[0.7, 2.1], lambda);
        let upstream = [1.3, -0.4];
        let analytic = power_param_gradient(&params, &probs, &upstream).unwrap();
        let h = 1e-6;
        for c in 0..2 {
            let loss = |raw: &[f64]| {
                let p = PowerParams::from_raw(raw.to_vec(), lambda);
                let clip = pool_forward(PoolingKind::Power, Some(&p), &probs).unwrap();
                upstream
                    .iter()
                    .enumerate()
                    .map(|(k, u)| u * clip.get(k))
                    .sum::<f64>()
                    + p.regularizer()
            };
            let mut plus = params.raw().to_vec();
            plus[c] += h;
            let mut minus = params.raw().to_vec();
            minus[c] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (analytic[c] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-5, "class {c}: analytic {} vs fd {fd}", analytic[c]);
        }
    }

    #[test]
    fn sign_threshold_matches_hand_computed_ratios() {
        let d = sign_threshold(PoolingKind::LinearSoftmax, None, 0, 0.68).unwrap();
        assert!((d - 0.34).abs() < 1e-12);

        let params = PowerParams::with_exponents(&[0.337], 0.0);
        let d = sign_threshold(PoolingKind::Power, Some(&params), 0, 0.5).unwrap();
        assert!((d - 0.337 / 1.337 * 0.5).abs() < 1e-9);
        assert!((d - 0.12603).abs() < 5e-6);

        let zero = PowerParams::with_exponents(&[0.0], 0.0);
        let d = sign_threshold(PoolingKind::Power, Some(&zero), 0, 0.9).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn sign_threshold_rejects_other_kinds_and_bad_inputs() {
        for kind in [
            PoolingKind::Max,
            PoolingKind::Average,
            PoolingKind::ExponentialSoftmax,
        ] {
            assert!(matches!(
                sign_threshold(kind, None, 0, 0.5),
                Err(PoolError::ThresholdUnsupported { .. })
            ));
        }
        assert!(matches!(
            sign_threshold(PoolingKind::LinearSoftmax, None, 0, 1.2),
            Err(PoolError::ClipProbOutOfRange(_))
        ));
    }

    #[test]
    fn positive_bag_dynamics_split_frames_at_the_threshold() {
        let initial = bag(&[0.9, 0.1]);
        let traj = simulate_bag_dynamics(PoolingKind::LinearSoftmax, None, &initial, true, 5000, 0.5)
            .unwrap();
        let last = traj.last().unwrap();
        assert!(last.get(0, 0) > 0.99, "high frame ended at {}", last.get(0, 0));
        assert!(last.get(1, 0) < 0.01, "low frame ended at {}", last.get(1, 0));
    }

    #[test]
    fn negative_bag_dynamics_drive_all_frames_down() {
        let params = PowerParams::with_exponents(&[0.337], 0.0);
        for (kind, p) in [
            (PoolingKind::LinearSoftmax, None),
            (PoolingKind::Power, Some(&params)),
        ] {
            let traj =
                simulate_bag_dynamics(kind, p, &bag(&[0.9, 0.1]), false, 10_000, 0.5).unwrap();
            let last = traj.last().unwrap();
            assert!(last.get(0, 0) < 0.01, "{kind}: {}", last.get(0, 0));
            assert!(last.get(1, 0) < 0.01, "{kind}: {}", last.get(1, 0));
        }
    }

    #[test]
    fn single_frame_positive_bag_converges_to_one() {
        let traj =
            simulate_bag_dynamics(PoolingKind::LinearSoftmax, None, &bag(&[0.5]), true, 5000, 0.5)
                .unwrap();
        assert!(traj.last().unwrap().get(0, 0) > 0.99);
    }

    #[test]
    fn dynamics_rejects_degenerate_configs() {
        let b = bag(&[0.5]);
        assert_eq!(
            simulate_bag_dynamics(PoolingKind::LinearSoftmax, None, &b, true, 0, 0.5),
            Err(PoolError::ZeroSteps)
        );
        assert_eq!(
            simulate_bag_dynamics(PoolingKind::LinearSoftmax, None, &b, true, 10, 0.0),
            Err(PoolError::BadStepSize(0.0))
        );
    }

    #[test]
    fn forward_stays_within_frame_range_at_extreme_exponents() {
        let frames = [0.9, 0.65, 1e-7, 0.3];
        let params = PowerParams::with_exponents(&[64.0], 0.0);
        let clip = pool_forward(PoolingKind::Power, Some(&params), &bag(&frames)).unwrap();
        assert!((clip.get(0) - 0.9).abs() < 1e-3);
        assert!(clip.get(0) <= 0.9 && clip.get(0) >= 1e-7);
    }

    #[test]
    fn exponent_map_is_non_negative_over_a_raw_grid() {
        for i in -200..=200 {
            let raw = i as f64 * 0.5;
            let params = PowerParams::from_raw(vec![raw], 0.0);
            let n = params.exponent(0);
            assert!(n >= 0.0, "raw {raw} -> exponent {n}");
            let theta = params.theta(0);
            assert!((0.0..1.0).contains(&theta), "raw {raw} -> theta {theta}");
        }
    }

    #[test]
    fn large_exponent_approaches_max_when_separated() {
        let frames = [0.75, 0.55, 0.1, 0.4];
        let params = PowerParams::with_exponents(&[64.0], 0.0);
        let clip = pool_forward(PoolingKind::Power, Some(&params), &bag(&frames)).unwrap();
        let max = pool_forward(PoolingKind::Max, None, &bag(&frames)).unwrap();
        assert!((clip.get(0) - max.get(0)).abs() < 1e-3);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn frames_strategy() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.01f64..0.99, 2..24)
        }

        fn exponent_strategy() -> impl Strategy<Value = f64> {
            0.0f64..6.0
        }

        proptest! {
            #[test]
            fn pooled_value_is_convex_for_every_kind(
                frames in frames_strategy(),
                n in exponent_strategy(),
            ) {
                let probs = FrameProbs::single_class(&frames).unwrap();
                let lo = frames.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = frames.iter().cloned().fold(0.0, f64::max);
                for kind in PoolingKind::ALL {
                    let params = (kind == PoolingKind::Power)
                        .then(|| PowerParams::with_exponents(&[n], 0.0));
                    let clip = pool_forward(kind, params.as_ref(), &probs).unwrap();
                    prop_assert!(
                        clip.get(0) >= lo - 1e-12 && clip.get(0) <= hi + 1e-12,
                        "{kind}: {} outside [{lo}, {hi}]",
                        clip.get(0)
                    );
                }
            }

            #[test]
            fn linear_and_power_always_push_some_frame_up(
                frames in frames_strategy(),
                n in exponent_strategy(),
            ) {
                let probs = FrameProbs::single_class(&frames).unwrap();
                let params = PowerParams::with_exponents(&[n], 0.0);
                for (kind, p) in [
                    (PoolingKind::LinearSoftmax, None),
                    (PoolingKind::Power, Some(&params)),
                ] {
                    let grad = pool_backward(kind, p, &probs, &[1.0]).unwrap();
                    let has_positive = (0..frames.len()).any(|t| grad.get(t, 0) > 0.0);
                    prop_assert!(has_positive, "{kind}: no positive gradient entry");
                }
            }

            #[test]
            fn weights_are_non_decreasing_in_frame_probability(
                mut frames in frames_strategy(),
                n in exponent_strategy(),
            ) {
                frames.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let probs = FrameProbs::single_class(&frames).unwrap();
                for kind in PoolingKind::ALL {
                    let params = (kind == PoolingKind::Power)
                        .then(|| PowerParams::with_exponents(&[n], 0.0));
                    let weights = pool_weights(kind, params.as_ref(), &probs).unwrap();
                    for t in 1..frames.len() {
                        prop_assert!(
                            weights.get(t, 0) >= weights.get(t - 1, 0) - 1e-12,
                            "{kind}: weight dropped from {} to {}",
                            weights.get(t - 1, 0),
                            weights.get(t, 0)
                        );
                    }
                }
            }
        }
    }
}
