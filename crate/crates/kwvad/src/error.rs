use std::fmt;
use std::path::PathBuf;

use kwvad_core::classifier::ClassifierError;
use kwvad_core::dataset::DatasetError;
use kwvad_core::induction::InductionError;
use kwvad_core::metrics::MetricsError;

use crate::describer::DescribeError;
use crate::formats::FormatError;
use crate::manifest::ManifestError;

/// Pipeline step an error surfaced from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Describe,
    Induce,
    Encode,
    Train,
    Infer,
    Eval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Describe => "describe",
            Stage::Induce => "induce",
            Stage::Encode => "encode",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Eval => "eval",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Describe(#[from] DescribeError),
    #[error(transparent)]
    Induction(#[from] InductionError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DATA: i32 = 2;
    pub const PROVIDER: i32 = 3;
    pub const DEGENERATE: i32 = 4;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The error with any stage wrapper removed.
    pub fn inner(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.inner(),
            e => e,
        }
    }

    /// Variant name of the underlying error, e.g. `ZeroDifferenceVector`,
    /// for logs and scripts that should not parse messages.
    pub fn kind(&self) -> String {
        fn variant(debug: String) -> String {
            let end = debug.find([' ', '(', '{']).unwrap_or(debug.len());
            debug[..end].to_string()
        }
        match self.inner() {
            Error::Config(_) => "ConfigError".into(),
            Error::Manifest(e) => variant(format!("{e:?}")),
            Error::Dataset(e) => variant(format!("{e:?}")),
            Error::Describe(e) => variant(format!("{:?}", e.root())),
            Error::Induction(e) => variant(format!("{e:?}")),
            Error::Classifier(e) => variant(format!("{e:?}")),
            Error::Metrics(e) => variant(format!("{e:?}")),
            Error::Format(FormatError::Missing { .. }) => "MissingFile".into(),
            Error::Format(_) => "FormatError".into(),
            Error::Io { .. } => "IoError".into(),
            Error::Data(_) => "DataError".into(),
            Error::Stage { .. } => unreachable!("inner() strips stages"),
        }
    }

    /// 1 config, 2 data, 3 provider, 4 degenerate math.
    pub fn exit_code(&self) -> i32 {
        use exit::*;
        match self.inner() {
            Error::Config(_) => CONFIG,
            Error::Induction(InductionError::InvalidConfig(_)) => CONFIG,
            Error::Classifier(ClassifierError::InvalidConfig(_)) => CONFIG,
            Error::Dataset(DatasetError::InvalidRatio(_) | DatasetError::ZeroSampleCount) => CONFIG,
            Error::Induction(InductionError::ZeroDifferenceVector) => DEGENERATE,
            Error::Classifier(ClassifierError::DegenerateLabels) => DEGENERATE,
            Error::Metrics(MetricsError::SingleClassError { .. }) => DEGENERATE,
            Error::Describe(e) => match e.root() {
                DescribeError::ProviderUnreachable { .. }
                | DescribeError::ProviderRejected { .. }
                | DescribeError::EmptyResponse(_) => PROVIDER,
                _ => DATA,
            },
            _ => DATA,
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.into().in_stage(stage))
    }
}
