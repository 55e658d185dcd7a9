use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] flownn_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing input {}", .0.display())]
    Missing(PathBuf),
    #[error("{}:{line}: {detail}", path.display())]
    Parse { path: PathBuf, line: u64, detail: String },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Usage(String),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: String, source: Box<Error> },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Self::Missing(path)
        } else {
            Self::Io { path, source }
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Self::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for bad input or configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(flownn_core::Error::Config(_) | flownn_core::Error::Validation(_) | flownn_core::Error::Shape { .. }) => 2,
            Self::Missing(_) | Self::Parse { .. } | Self::Json { .. } | Self::Usage(_) => 2,
            Self::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
