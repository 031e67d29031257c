//! Error surface for the pipeline driver. Usage problems (bad flags, bad
//! configuration values, missing required settings) print guidance and exit
//! with status 2; pipeline failures are attributed to the module they came
//! from, printed as `error[module]: message`, and exit with status 1.

use std::fmt;
use std::path::Path;

use impute_core::dataset::DatasetError;
use impute_core::deepnet::DeepnetError;
use impute_core::evaluate::EvaluateError;
use impute_core::firefly::FireflyError;
use impute_core::imputer::ImputerError;
use impute_core::modelstore::ModelStoreError;
use impute_core::rbm::RbmError;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exits 2 with usage guidance.
    Usage(String),
    /// A failure in one of the pipeline modules; exits 1.
    Module { module: &'static str, message: String },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn new(module: &'static str, message: impl Into<String>) -> Self {
        CliError::Module { module, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::new("cli", format!("{}: {err}", path.display()))
    }

    pub fn bad_file(path: &Path, reason: impl fmt::Display) -> Self {
        CliError::new("cli", format!("{}: {reason}", path.display()))
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Module { .. } => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(message) => {
                write!(f, "{message}\n\nRun `impute --help` for usage.")
            }
            CliError::Module { module, message } => write!(f, "error[{module}]: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! from_module_error {
    ($type:ty, $module:literal) => {
        impl From<$type> for CliError {
            fn from(e: $type) -> Self {
                CliError::new($module, e.to_string())
            }
        }
    };
}

from_module_error!(DatasetError, "dataset");
from_module_error!(RbmError, "rbm");
from_module_error!(DeepnetError, "deepnet");
from_module_error!(FireflyError, "firefly");
from_module_error!(ImputerError, "imputer");
from_module_error!(EvaluateError, "evaluate");
from_module_error!(ModelStoreError, "modelstore");
