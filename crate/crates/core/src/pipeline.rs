//! Model evaluation over a dataset: score, median-filter, decode, and report
//! metrics at the clip, segment and event levels.

use crate::eval::{
    class_window_sizes, clip_counts, decode_events, event_counts, level_metrics_from_counts,
    mean_event_durations, median_filter, segment_counts, Counts, EvalConfig, EvalError,
    MetricsReport,
};
use crate::pooling::{ClipProbs, PoolingKind, PowerParams};
use crate::scorer::ScorerWeights;
use crate::synth::Bag;
use crate::train::{forward_clip, TrainError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Forward(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug)]
pub struct ModelEvaluation {
    pub report: MetricsReport,
    /// Pooled clip probabilities per clip, in dataset order.
    pub clip_probs: Vec<ClipProbs>,
    /// Median-filter window per class, derived from the reference durations.
    pub window_sizes: Vec<usize>,
}

/// Evaluates a trained scorer on a dataset. Median-filter windows are
/// proportional to the per-class mean reference event duration; decoding
/// thresholds at the configured binarization point.
pub fn evaluate_model(
    weights: &ScorerWeights,
    pooling: PoolingKind,
    params: Option<&PowerParams>,
    bags: &[Bag],
    hop_s: f64,
    config: &EvalConfig,
) -> Result<ModelEvaluation, PipelineError> {
    config.validate()?;
    let num_classes = bags.first().map_or(0, |b| b.weak_labels.len());
    let all_events: Vec<_> = bags
        .iter()
        .flat_map(|b| b.reference_events.iter().copied())
        .collect();
    let durations = mean_event_durations(&all_events, num_classes, hop_s);
    let window_sizes = class_window_sizes(&durations, hop_s, config.median_beta);

    let mut event_totals = vec![Counts::default(); num_classes];
    let mut segment_totals = vec![Counts::default(); num_classes];
    let mut clip_probs = Vec::with_capacity(bags.len());
    let mut weak_labels = Vec::with_capacity(bags.len());
    for bag in bags {
        let (probs, clip) = forward_clip(weights, pooling, params, &bag.features)?;
        let filtered = median_filter(&probs, &window_sizes)?;
        let hypothesis = decode_events(&filtered, config, hop_s);
        let clip_len_s = bag.features.rows() as f64 * hop_s;
        let ev = event_counts(&bag.reference_events, &hypothesis, num_classes, config)?;
        let seg = segment_counts(
            &bag.reference_events,
            &hypothesis,
            clip_len_s,
            num_classes,
            config,
        );
        for c in 0..num_classes {
            event_totals[c].add(&ev[c]);
            segment_totals[c].add(&seg[c]);
        }
        clip_probs.push(clip);
        weak_labels.push(bag.weak_labels.clone());
    }
    let report = MetricsReport {
        clip: level_metrics_from_counts(&clip_counts(&weak_labels, &clip_probs, config)),
        segment: level_metrics_from_counts(&segment_totals),
        event: level_metrics_from_counts(&event_totals),
    };
    Ok(ModelEvaluation {
        report,
        clip_probs,
        window_sizes,
    })
}
