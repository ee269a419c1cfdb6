use std::path::PathBuf;

/// Everything the IO layer and CLI can fail with. Each variant maps onto one
/// process exit code via [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: file not found", path.display())]
    MissingFile { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: expected header `cycle,capacity_ah`, found `{found}`", path.display())]
    Header { path: PathBuf, line: u64, found: String },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{}:{line}: cycle {cycle} is not greater than previous cycle {previous}", path.display())]
    NonMonotone { path: PathBuf, line: u64, previous: u32, cycle: u32 },
    #[error("{}:{line}: capacity {value} must be positive", path.display())]
    NonPositive { path: PathBuf, line: u64, value: f64 },
    #[error("{}: no battery files found", dir.display())]
    NoBatteryFiles { dir: PathBuf },
    #[error("{}: invalid checkpoint: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
    #[error(transparent)]
    Core(#[from] capforge_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 0 success, 1 self-check failure, 2 input or data error, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SelfCheck(_) => 1,
            Error::Core(capforge_core::Error::Diverged { .. }) => 3,
            Error::Core(capforge_core::Error::NonFinite(m)) if m.contains("epoch") => 3,
            _ => 2,
        }
    }
}
