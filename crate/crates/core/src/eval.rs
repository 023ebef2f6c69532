//! Clip-, segment- and event-level precision/recall/F1 with macro averaging,
//! plus median-filter post-processing and probability-to-event decoding.
//!
//! Event matching follows the usual detection convention: greedy one-to-one
//! matching in onset order, a fixed collar on onsets, and an offset collar of
//! `max(fixed collar, fraction of the reference duration)`.

use crate::pooling::{ClipProbs, FrameProbs};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("median filter window for class {class} must be odd and >= 1, got {window}")]
    EvenWindow { class: usize, window: usize },
    #[error("got {got} median windows for {expected} classes")]
    WindowCount { expected: usize, got: usize },
    #[error("event of class {class} has onset {onset} s at or after offset {offset} s")]
    InvalidEvent {
        class: usize,
        onset: f64,
        offset: f64,
    },
    #[error("reference events of class {class} overlap near {onset} s")]
    OverlappingReference { class: usize, onset: f64 },
    #[error("invalid evaluation config: {0}")]
    BadConfig(&'static str),
}

/// One annotated or decoded event occurrence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub class_id: usize,
    pub onset_s: f64,
    pub offset_s: f64,
}

impl Event {
    pub fn new(class_id: usize, onset_s: f64, offset_s: f64) -> Self {
        Event {
            class_id,
            onset_s,
            offset_s,
        }
    }

    pub fn duration(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub onset_collar_s: f64,
    pub offset_collar_s: f64,
    pub offset_pct: f64,
    pub segment_len_s: f64,
    pub binarize_threshold: f64,
    pub median_beta: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            onset_collar_s: 0.2,
            offset_collar_s: 0.2,
            offset_pct: 0.2,
            segment_len_s: 1.0,
            binarize_threshold: 0.5,
            median_beta: 1.0 / 3.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.onset_collar_s > 0.0) || !(self.offset_collar_s > 0.0) {
            return Err(EvalError::BadConfig("collars must be positive"));
        }
        if !(self.offset_pct > 0.0 && self.offset_pct < 1.0) {
            return Err(EvalError::BadConfig("offset_pct must be in (0, 1)"));
        }
        if !(self.segment_len_s > 0.0) {
            return Err(EvalError::BadConfig("segment length must be positive"));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(EvalError::BadConfig("binarize threshold must be in (0, 1)"));
        }
        if !(self.median_beta >= 0.0) {
            return Err(EvalError::BadConfig("median beta must be non-negative"));
        }
        Ok(())
    }
}

/// Intermediate counts for one class; summable across clips.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl Counts {
    pub fn add(&mut self, other: &Counts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
    }

    /// Precision/recall/F1 with the 0/0 -> 0 convention. A class with no
    /// reference support is flagged so macro averages can be read honestly.
    pub fn scores(&self) -> Prf {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.true_pos, self.true_pos + self.false_pos);
        let recall = ratio(self.true_pos, self.true_pos + self.false_neg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            zero_support: self.true_pos + self.false_neg == 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub zero_support: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub counts: Counts,
    pub scores: Prf,
}

/// Per-class metrics plus their unweighted macro average at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMetrics {
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Prf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub clip: LevelMetrics,
    pub segment: LevelMetrics,
    pub event: LevelMetrics,
}

pub fn level_metrics_from_counts(counts: &[Counts]) -> LevelMetrics {
    let per_class: Vec<ClassMetrics> = counts
        .iter()
        .enumerate()
        .map(|(class_id, c)| ClassMetrics {
            class_id,
            counts: *c,
            scores: c.scores(),
        })
        .collect();
    let n = per_class.len().max(1) as f64;
    let macro_avg = Prf {
        precision: per_class.iter().map(|c| c.scores.precision).sum::<f64>() / n,
        recall: per_class.iter().map(|c| c.scores.recall).sum::<f64>() / n,
        f1: per_class.iter().map(|c| c.scores.f1).sum::<f64>() / n,
        zero_support: per_class.iter().all(|c| c.scores.zero_support),
    };
    LevelMetrics {
        per_class,
        macro_avg,
    }
}

/// Per-class sliding median with edge replication. One window per class,
/// each odd and at least 1.
pub fn median_filter(probs: &FrameProbs, class_windows: &[usize]) -> Result<FrameProbs, EvalError> {
    if class_windows.len() != probs.classes() {
        return Err(EvalError::WindowCount {
            expected: probs.classes(),
            got: class_windows.len(),
        });
    }
    for (class, &w) in class_windows.iter().enumerate() {
        if w == 0 || w % 2 == 0 {
            return Err(EvalError::EvenWindow { class, window: w });
        }
    }
    let frames = probs.frames();
    let mut out = crate::mat::Mat::zeros(frames, probs.classes());
    let mut window_buf = Vec::new();
    for (c, &w) in class_windows.iter().enumerate() {
        let half = (w / 2) as isize;
        for t in 0..frames {
            window_buf.clear();
            for k in -half..=half {
                let idx = (t as isize + k).clamp(0, frames as isize - 1) as usize;
                window_buf.push(probs.get(idx, c));
            }
            window_buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.set(t, c, window_buf[window_buf.len() / 2]);
        }
    }
    Ok(FrameProbs::new(out).expect("filtered values remain valid probabilities"))
}

/// Thresholds frame probabilities and merges consecutive positive frames
/// into events: onset = first positive frame x hop, offset = (last + 1) x hop.
pub fn decode_events(probs: &FrameProbs, config: &EvalConfig, hop_s: f64) -> Vec<Event> {
    let mut events = Vec::new();
    for c in 0..probs.classes() {
        let mut run_start: Option<usize> = None;
        for t in 0..probs.frames() {
            let active = probs.get(t, c) > config.binarize_threshold;
            match (active, run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(start)) => {
                    events.push(Event::new(c, start as f64 * hop_s, t as f64 * hop_s));
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(start) = run_start {
            events.push(Event::new(
                c,
                start as f64 * hop_s,
                probs.frames() as f64 * hop_s,
            ));
        }
    }
    events
}

fn sorted_class_events(events: &[Event], class: usize) -> Result<Vec<Event>, EvalError> {
    let mut out: Vec<Event> = events.iter().filter(|e| e.class_id == class).copied().collect();
    for e in &out {
        if !(e.onset_s < e.offset_s) {
            return Err(EvalError::InvalidEvent {
                class,
                onset: e.onset_s,
                offset: e.offset_s,
            });
        }
    }
    out.sort_by(|a, b| a.onset_s.partial_cmp(&b.onset_s).unwrap());
    Ok(out)
}

fn event_match(reference: &Event, hypothesis: &Event, config: &EvalConfig) -> bool {
    let onset_ok = (hypothesis.onset_s - reference.onset_s).abs() <= config.onset_collar_s;
    let offset_tolerance = config
        .offset_collar_s
        .max(config.offset_pct * reference.duration());
    let offset_ok = (hypothesis.offset_s - reference.offset_s).abs() <= offset_tolerance;
    onset_ok && offset_ok
}

/// Greedy one-to-one event matching per class, in onset order. Returns the
/// matched (reference index, hypothesis index) pairs over the full lists.
pub fn match_events(
    reference: &[Event],
    hypothesis: &[Event],
    num_classes: usize,
    config: &EvalConfig,
) -> Result<Vec<(usize, usize)>, EvalError> {
    let mut pairs = Vec::new();
    for class in 0..num_classes {
        let refs: Vec<usize> = {
            let mut idx: Vec<usize> = (0..reference.len())
                .filter(|&i| reference[i].class_id == class)
                .collect();
            idx.sort_by(|&a, &b| reference[a].onset_s.partial_cmp(&reference[b].onset_s).unwrap());
            idx
        };
        // same-class reference events must not overlap
        let sorted = sorted_class_events(reference, class)?;
        for pair in sorted.windows(2) {
            if pair[1].onset_s < pair[0].offset_s {
                return Err(EvalError::OverlappingReference {
                    class,
                    onset: pair[1].onset_s,
                });
            }
        }
        let mut hyps: Vec<usize> = (0..hypothesis.len())
            .filter(|&i| hypothesis[i].class_id == class)
            .collect();
        hyps.sort_by(|&a, &b| hypothesis[a].onset_s.partial_cmp(&hypothesis[b].onset_s).unwrap());
        for h in hypothesis {
            if h.class_id == class && !(h.onset_s < h.offset_s) {
                return Err(EvalError::InvalidEvent {
                    class,
                    onset: h.onset_s,
                    offset: h.offset_s,
                });
            }
        }
        let mut taken = vec![false; hyps.len()];
        for &r in &refs {
            for (k, &h) in hyps.iter().enumerate() {
                if !taken[k] && event_match(&reference[r], &hypothesis[h], config) {
                    taken[k] = true;
                    pairs.push((r, h));
                    break;
                }
            }
        }
    }
    Ok(pairs)
}

/// Per-class TP/FP/FN from greedy event matching over one clip.
pub fn event_counts(
    reference: &[Event],
    hypothesis: &[Event],
    num_classes: usize,
    config: &EvalConfig,
) -> Result<Vec<Counts>, EvalError> {
    let pairs = match_events(reference, hypothesis, num_classes, config)?;
    let mut counts = vec![Counts::default(); num_classes];
    for &(r, _) in &pairs {
        counts[reference[r].class_id].true_pos += 1;
    }
    for class in 0..num_classes {
        let refs = reference.iter().filter(|e| e.class_id == class).count();
        let hyps = hypothesis.iter().filter(|e| e.class_id == class).count();
        counts[class].false_neg = refs - counts[class].true_pos;
        counts[class].false_pos = hyps - counts[class].true_pos;
    }
    Ok(counts)
}

/// Event-level metrics for one clip.
pub fn event_f1(
    reference: &[Event],
    hypothesis: &[Event],
    num_classes: usize,
    config: &EvalConfig,
) -> Result<LevelMetrics, EvalError> {
    Ok(level_metrics_from_counts(&event_counts(
        reference,
        hypothesis,
        num_classes,
        config,
    )?))
}

/// Per-class TP/FP/FN over fixed-length segments. A (segment, class) pair is
/// active when any event of that class overlaps the segment.
pub fn segment_counts(
    reference: &[Event],
    hypothesis: &[Event],
    clip_len_s: f64,
    num_classes: usize,
    config: &EvalConfig,
) -> Vec<Counts> {
    let num_segments = (clip_len_s / config.segment_len_s).ceil() as usize;
    let mut counts = vec![Counts::default(); num_classes];
    for seg in 0..num_segments {
        let start = seg as f64 * config.segment_len_s;
        let end = start + config.segment_len_s;
        let active = |events: &[Event], class: usize| {
            events
                .iter()
                .any(|e| e.class_id == class && e.onset_s < end && e.offset_s > start)
        };
        for class in 0..num_classes {
            match (active(reference, class), active(hypothesis, class)) {
                (true, true) => counts[class].true_pos += 1,
                (true, false) => counts[class].false_neg += 1,
                (false, true) => counts[class].false_pos += 1,
                (false, false) => {}
            }
        }
    }
    counts
}

pub fn segment_f1(
    reference: &[Event],
    hypothesis: &[Event],
    clip_len_s: f64,
    num_classes: usize,
    config: &EvalConfig,
) -> LevelMetrics {
    level_metrics_from_counts(&segment_counts(
        reference,
        hypothesis,
        clip_len_s,
        num_classes,
        config,
    ))
}

/// Per-class TP/FP/FN from binarized clip probabilities over a corpus.
pub fn clip_counts(
    weak_labels: &[Vec<bool>],
    clip_probs: &[ClipProbs],
    config: &EvalConfig,
) -> Vec<Counts> {
    assert_eq!(weak_labels.len(), clip_probs.len(), "one label row per clip");
    let num_classes = weak_labels.first().map_or(0, |l| l.len());
    let mut counts = vec![Counts::default(); num_classes];
    for (labels, probs) in weak_labels.iter().zip(clip_probs) {
        for class in 0..num_classes {
            let predicted = probs.get(class) > config.binarize_threshold;
            match (labels[class], predicted) {
                (true, true) => counts[class].true_pos += 1,
                (true, false) => counts[class].false_neg += 1,
                (false, true) => counts[class].false_pos += 1,
                (false, false) => {}
            }
        }
    }
    counts
}

pub fn clip_f1(
    weak_labels: &[Vec<bool>],
    clip_probs: &[ClipProbs],
    config: &EvalConfig,
) -> LevelMetrics {
    level_metrics_from_counts(&clip_counts(weak_labels, clip_probs, config))
}

/// Median-filter windows proportional to per-class mean event durations:
/// the nearest odd integer to `beta * duration / hop`, at least 1.
pub fn class_window_sizes(
    class_mean_durations_s: &[f64],
    hop_s: f64,
    median_beta: f64,
) -> Vec<usize> {
    class_mean_durations_s
        .iter()
        .map(|&d| {
            let target = median_beta * d / hop_s;
            let k = ((target - 1.0) / 2.0).round() as i64;
            (2 * k + 1).max(1) as usize
        })
        .collect()
}

/// Per-class mean reference event duration; classes with no events fall back
/// to `fallback_s`.
pub fn mean_event_durations(events: &[Event], num_classes: usize, fallback_s: f64) -> Vec<f64> {
    let mut sums = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for e in events {
        sums[e.class_id] += e.duration();
        counts[e.class_id] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { fallback_s } else { s / c as f64 })
        .collect()
}
