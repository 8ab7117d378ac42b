//! Mapping library errors onto process exit codes.

use std::fmt;

use prosody_mi::baseline::BaselineError;
use prosody_mi::corpus::CorpusError;
use prosody_mi::density::DensityError;
use prosody_mi::dsp::DspError;
use prosody_mi::infometrics::InfoError;
use prosody_mi::pipeline::PipelineError;
use prosody_mi::predictor::PredictorError;
use prosody_mi::synth::SynthError;

use crate::config::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    /// Invalid configuration or command line.
    Config = 2,
    /// Missing, malformed or inconsistent input data.
    Data = 3,
    /// Numerical failure during estimation or training.
    Numeric = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Self::new(ExitKind::Data, anyhow::anyhow!("{message}"))
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        Self {
            kind: self.kind,
            error: self.error.context(what.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(ExitKind::Config, e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(ExitKind::Data, e)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::new(ExitKind::Data, e)
    }
}

impl From<DspError> for Failure {
    fn from(e: DspError) -> Self {
        let kind = match e {
            DspError::Parameter(_) => ExitKind::Config,
            DspError::DegenerateColumn(_) => ExitKind::Numeric,
            _ => ExitKind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<DensityError> for Failure {
    fn from(e: DensityError) -> Self {
        let kind = match e {
            DensityError::Io { .. } | DensityError::Format { .. } => ExitKind::Data,
            _ => ExitKind::Numeric,
        };
        Failure::new(kind, e)
    }
}

impl From<PredictorError> for Failure {
    fn from(e: PredictorError) -> Self {
        let kind = match e {
            PredictorError::Io { .. } | PredictorError::Format { .. } | PredictorError::Support { .. } => {
                ExitKind::Data
            }
            _ => ExitKind::Numeric,
        };
        Failure::new(kind, e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Density(d) => Failure::from(d).context("density stage"),
            PipelineError::Predictor(p) => Failure::from(p).context("predictor stage"),
        }
    }
}

impl From<InfoError> for Failure {
    fn from(e: InfoError) -> Self {
        let kind = match e {
            InfoError::Degenerate(_) => ExitKind::Numeric,
            _ => ExitKind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<BaselineError> for Failure {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Density(d) => d.into(),
            BaselineError::Predictor(p) => p.into(),
            BaselineError::Io(io) => io.into(),
            other => Failure::new(ExitKind::Numeric, other),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Corpus(c) => c.into(),
            SynthError::Dsp(d) => d.into(),
            other => Failure::new(ExitKind::Data, other),
        }
    }
}
