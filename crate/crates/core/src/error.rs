use thiserror::Error;

/// Section of a binary file that failed to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Magic,
    Version,
    Header,
    Metadata,
    Labels,
    Payload,
}

impl std::fmt::Display for Section {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Section::Magic => "magic",
            Section::Version => "version",
            Section::Header => "header",
            Section::Metadata => "metadata",
            Section::Labels => "labels",
            Section::Payload => "payload",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("run diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("degenerate ray: both points coincide")]
    DegenerateRay,

    #[error("non-finite loss at {context}")]
    NonFiniteLoss { context: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("zero spectral norm in module {0}")]
    ZeroSpectralNorm(String),

    #[error("module {0} has no feasible criticality cell")]
    Infeasible(String),

    #[error("bad magic in {section}: expected {expected:?}")]
    BadMagic { section: Section, expected: &'static str },

    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("file truncated in {0} section")]
    Truncated(Section),

    #[error("malformed {section} section: {detail}")]
    Malformed { section: Section, detail: String },

    #[error("config hash mismatch: checkpoint {found}, config {expected}")]
    ConfigHashMismatch { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
