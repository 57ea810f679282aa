use ops_core::baselines::BaselineError;
use ops_core::env::EnvError;
use ops_core::field::FieldError;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation budget exceeded: {0}")]
    Budget(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Budget(_) => EXIT_BUDGET,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{context}: {err}"))
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(_) | EnvError::Noise(_) => CliError::Config(e.to_string()),
            EnvError::Field(FieldError::InvalidConfig(_) | FieldError::WindowTooSmall { .. }) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        EnvError::from(e).into()
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Budget { .. } => CliError::Budget(e.to_string()),
            BaselineError::TooManyStages(_) | BaselineError::Window(_) | BaselineError::Spgd(_) => {
                CliError::Config(e.to_string())
            }
            BaselineError::Field(f) => f.into(),
            BaselineError::Env(env) => env.into(),
        }
    }
}
