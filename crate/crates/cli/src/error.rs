use milpool::eval::EvalError;
use milpool::pipeline::PipelineError;
use milpool::pooling::ParsePoolingError;
use milpool::synth::SynthError;
use milpool::train::TrainError;
use std::path::PathBuf;
use thiserror::Error;

/// Exit codes: 0 success, 2 usage/config errors, 3 numerical aborts.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {what}")]
    Parse {
        path: PathBuf,
        line: usize,
        what: String,
    },
    #[error("training aborted: {0}")]
    NumericalAbort(TrainError),
    #[error(transparent)]
    Train(TrainError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pooling(#[from] ParsePoolingError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NumericalAbort(_) => 3,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<TrainError> for CliError {
    fn from(err: TrainError) -> Self {
        match err {
            TrainError::NanLoss { .. } => CliError::NumericalAbort(err),
            other => CliError::Train(other),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(err: PipelineError) -> Self {
        match err {
            PipelineError::Forward(e) => e.into(),
            PipelineError::Eval(e) => e.into(),
        }
    }
}
