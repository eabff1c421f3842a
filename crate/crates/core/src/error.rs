use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("allocation error: {0}")]
    Allocation(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Format(_) | Error::Config(_) | Error::Io(_) => 2,
            Error::Trial { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
