use crate::cme::CmeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] burstvar_core::Error),
    #[error(transparent)]
    Cme(#[from] CmeError),
    #[error("{0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the config or environment, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 2,
            CliError::Model(burstvar_core::Error::InvalidParam { .. }) => 2,
            CliError::Cme(CmeError::Model(burstvar_core::Error::InvalidParam { .. })) => 2,
            CliError::Model(_) | CliError::Cme(_) | CliError::Numerical(_) => 3,
        }
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
