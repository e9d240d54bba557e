use std::fmt;

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations. Exit code 2.
    Usage(String),
    /// Bad data, I/O or a failed run. Exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        })*
    };
}

runtime_from!(
    std::io::Error,
    finagent_core::agent::AgentError,
    finagent_core::charting::ChartError,
    finagent_core::data::DataError,
    finagent_core::data::EnvError,
    finagent_core::llm::LlmError,
    finagent_core::memory::MemoryError,
    finagent_core::metrics::MetricsError,
    finagent_core::strategies::StrategyError,
);

pub fn io_err(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
