use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("{stage}: {source}")]
    Module {
        stage: &'static str,
        #[source]
        source: jumplab::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub trait Context<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for jumplab::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Module { stage, source })
    }
}
