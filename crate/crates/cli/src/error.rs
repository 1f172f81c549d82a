use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Core(#[from] fmmnn::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 config, 3 divergence, 4 search budget exhausted, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config { .. } => 2,
            Self::Core(fmmnn::Error::Divergence { .. }) => 3,
            Self::Core(fmmnn::Error::SearchExhausted { .. }) => 4,
            Self::Core(
                fmmnn::Error::Parse(_) | fmmnn::Error::Lookup(_) | fmmnn::Error::Argument(_),
            ) => 2,
            _ => 1,
        }
    }
}
