//! Multiple-instance pooling toolkit for weakly labelled temporal event
//! detection: closed-form pooling operators with trainable power exponents,
//! a small frame scorer with hand-derived backpropagation, a synthetic
//! weakly labelled benchmark generator, a deterministic trainer, and a
//! three-level F1 evaluation suite.

// indexed loops follow the per-frame/per-class formulas they implement, and
// negated comparisons in validations reject NaN as well as out-of-range
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod mat;
pub mod math;
pub mod pipeline;
pub mod pooling;
pub mod scorer;
pub mod stats;
pub mod synth;
pub mod train;

pub use eval::{EvalConfig, Event, EvalError, LevelMetrics, MetricsReport};
pub use mat::Mat;
pub use pooling::{
    ClipProbs, FrameProbs, PoolError, PoolGradient, PoolingKind, PowerParams, PROB_EPS,
};
pub use scorer::{ScorerConfig, ScorerError, ScorerWeights};
pub use synth::{Bag, BenchmarkSpec, EventClassSpec, SynthConfig, SynthError};
pub use train::{TrainConfig, TrainError, TrainState};
