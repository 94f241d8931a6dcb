use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Core(#[from] isofisher::Error),

    #[error("every sweep cell diverged")]
    AllDiverged,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// 2 config error, 3 numerical failure, 4 divergence-only sweep, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(isofisher::Error::Bracket { .. }) => 3,
            CliError::Core(
                isofisher::Error::InvalidArgument(_)
                | isofisher::Error::InvalidMeasure(_)
                | isofisher::Error::Dimension(_)
                | isofisher::Error::Guard(_)
                | isofisher::Error::Json(_)
                | isofisher::Error::Idx { .. },
            ) => 2,
            CliError::AllDiverged => 4,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
