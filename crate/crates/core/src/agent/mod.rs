//! The daily agent loop: market intelligence, memory retrieval, low- and
//! high-level reflection, tool signals and the final decision, gated by the
//! M/L/H/T toggles.

mod episode;
mod script;
mod step;
mod trace;

pub use episode::{
    dataset_hash, referenced_keys, run_episode, warmup, EpisodeOutcome, RunContext, RunManifest,
    TradeRow, WarmupOutcome, CALLS_LOG, CONFIG_SNAPSHOT, MANIFEST_FILE, METRICS_FILE, TRADES_LOG,
};
pub use script::{
    canned_backend, decision_response, CANNED_HLR, CANNED_LATEST_MI, CANNED_LLR, CANNED_PAST_MI,
    MARKER_DECISION, MARKER_HIGH_LEVEL_REFLECTION, MARKER_LATEST_MARKET_INTELLIGENCE,
    MARKER_LOW_LEVEL_REFLECTION, MARKER_PAST_MARKET_INTELLIGENCE,
};
pub use step::{
    check_action, describe_movement, format_guidance, format_news, run_step, DayContext,
    HistoryEntry, StepFailure, StepOutput,
};
pub use trace::{
    CallTrace, Decision, ExecutionTrace, HlrOutput, LlrOutput, MemoryWrite, StepTrace, ToolOutputs,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::charting::{ChartError, ChartFormat, ChartSpec};
use crate::data::{DataError, EnvConfig, EnvError};
use crate::llm::LlmError;
use crate::memory::MemoryError;
use crate::metrics::MetricsError;
use crate::prompt::{
    PromptError, HIGH_LEVEL_REFLECTION_SECTIONS, LOW_LEVEL_REFLECTION_SECTIONS,
    MARKET_INTELLIGENCE_SECTIONS, TOOL_SECTIONS,
};
use crate::strategies::{Params, StrategyError, StrategyKind};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("{date}: {step}: {source}")]
    Step {
        date: chrono::NaiveDate,
        step: String,
        source: Box<AgentError>,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("resume: {0}")]
    Resume(String),
}

impl AgentError {
    pub(crate) fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        AgentError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Which modules take part in a run. Written as a subset of `MLHT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Toggles {
    pub market_intelligence: bool,
    pub low_level_reflection: bool,
    pub high_level_reflection: bool,
    pub tools: bool,
}

impl Toggles {
    pub const ALL: Toggles = Toggles {
        market_intelligence: true,
        low_level_reflection: true,
        high_level_reflection: true,
        tools: true,
    };
    pub const NONE: Toggles = Toggles {
        market_intelligence: false,
        low_level_reflection: false,
        high_level_reflection: false,
        tools: false,
    };

    /// Template section classes removed by the switched-off modules.
    pub fn disabled_sections(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.market_intelligence {
            out.extend_from_slice(MARKET_INTELLIGENCE_SECTIONS);
        }
        if !self.low_level_reflection {
            out.extend_from_slice(LOW_LEVEL_REFLECTION_SECTIONS);
        }
        if !self.high_level_reflection {
            out.extend_from_slice(HIGH_LEVEL_REFLECTION_SECTIONS);
        }
        if !self.tools {
            out.extend_from_slice(TOOL_SECTIONS);
        }
        out
    }

    pub fn only_tools(&self) -> bool {
        *self
            == Toggles {
                tools: true,
                ..Toggles::NONE
            }
    }
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles::ALL
    }
}

impl fmt::Display for Toggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        for (on, c) in [
            (self.market_intelligence, 'M'),
            (self.low_level_reflection, 'L'),
            (self.high_level_reflection, 'H'),
            (self.tools, 'T'),
        ] {
            if on {
                s.push(c);
            }
        }
        if s.is_empty() {
            s.push('-');
        }
        f.write_str(&s)
    }
}

impl FromStr for Toggles {
    type Err = String;

    /// Letters from `MLHT` in any order and case; `-` means none.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut t = Toggles::NONE;
        if s == "-" {
            return Ok(t);
        }
        if s.is_empty() {
            return Err("empty toggle set (use `-` for none)".into());
        }
        for c in s.chars() {
            let slot = match c.to_ascii_uppercase() {
                'M' => &mut t.market_intelligence,
                'L' => &mut t.low_level_reflection,
                'H' => &mut t.high_level_reflection,
                'T' => &mut t.tools,
                other => {
                    return Err(format!(
                        "unknown toggle `{other}` in `{s}` (expected letters of MLHT)"
                    ))
                }
            };
            if *slot {
                return Err(format!("toggle `{c}` repeated in `{s}`"));
            }
            *slot = true;
        }
        Ok(t)
    }
}

impl TryFrom<String> for Toggles {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Toggles> for String {
    fn from(t: Toggles) -> String {
        t.to_string()
    }
}

/// Horizon lengths in trading days, used for both past and next windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizons {
    pub short: usize,
    pub medium: usize,
    pub long: usize,
}

impl Default for Horizons {
    fn default() -> Self {
        Self {
            short: 3,
            medium: 7,
            long: 14,
        }
    }
}

impl Horizons {
    pub fn named(&self) -> [(&'static str, usize); 3] {
        [
            ("short", self.short),
            ("medium", self.medium),
            ("long", self.long),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub toggles: Toggles,
    pub horizons: Horizons,
    pub look_back_days: usize,
    /// Results per retrieval query.
    pub top_k: usize,
    /// Replaces the shipped trader preference text.
    pub trader_preference: Option<String>,
    /// Days between a day and its lagged reflection with realized next windows.
    pub reflection_lag: usize,
    pub lagged_reflection: bool,
    pub max_attempts: usize,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Recorded for reference; no operation discounts rewards.
    pub gamma: f64,
    pub env: EnvConfig,
    pub chart: ChartSpec,
    pub chart_format: ChartFormat,
    /// Strategy parameters by strategy id; missing entries use defaults.
    pub strategy_params: BTreeMap<String, Params>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let horizons = Horizons::default();
        Self {
            toggles: Toggles::ALL,
            horizons,
            look_back_days: 7,
            top_k: 3,
            trader_preference: None,
            reflection_lag: horizons.long,
            lagged_reflection: false,
            max_attempts: 3,
            model: crate::llm::DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_tokens: crate::llm::DEFAULT_MAX_TOKENS,
            gamma: 0.99,
            env: EnvConfig::default(),
            chart: ChartSpec::default(),
            chart_format: ChartFormat::Png,
            strategy_params: BTreeMap::new(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let h = self.horizons;
        if !(0 < h.short && h.short < h.medium && h.medium < h.long) {
            return Err(AgentError::Config(format!(
                "horizons must satisfy 0 < short < medium < long, got {}/{}/{}",
                h.short, h.medium, h.long
            )));
        }
        if self.look_back_days == 0 {
            return Err(AgentError::Config(
                "look_back_days must be at least 1".into(),
            ));
        }
        if self.top_k == 0 {
            return Err(AgentError::Config("top_k must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(AgentError::Config("max_attempts must be at least 1".into()));
        }
        if self.lagged_reflection && self.reflection_lag < h.long {
            return Err(AgentError::Config(format!(
                "reflection_lag {} is shorter than the long horizon {}; next windows would reach past today",
                self.reflection_lag, h.long
            )));
        }
        self.env.validate()?;
        self.chart.validate()?;
        for id in self.strategy_params.keys() {
            id.parse::<StrategyKind>()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, AgentError> {
        toml::from_str(text).map_err(|e| AgentError::Config(e.to_string()))
    }
}
