//! Per-day trace records written to `trace/DATE.record`.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::Toggles;
use crate::data::Action;
use crate::llm::{Provenance, Usage};
use crate::memory::Namespace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub analysis: String,
    pub action: Action,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlrOutput {
    pub short_term_reasoning: String,
    pub medium_term_reasoning: String,
    pub long_term_reasoning: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HlrOutput {
    pub reasoning: String,
    pub improvement: String,
    pub summary: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolOutputs {
    pub strategy1: String,
    pub strategy2: String,
    pub strategy4: String,
    pub guidance: String,
}

/// One LLM exchange. `step` is the workflow label, e.g. `05_low_level_reflection`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTrace {
    pub step: String,
    pub template: String,
    /// Section classes left in the rendered prompt.
    pub sections: Vec<String>,
    pub request_keys: Vec<String>,
    pub responses: Vec<String>,
    /// Backend provenance per attempt. Kept out of the trace file so that
    /// recorded and replayed runs serialize identically.
    #[serde(skip)]
    pub provenance: Vec<Provenance>,
    #[serde(skip)]
    pub usage: Vec<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MemoryWrite {
    pub namespace: Namespace,
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub price: f64,
    pub fee_paid: f64,
    pub cash: f64,
    pub position: f64,
    pub value: f64,
}

/// Everything the agent produced on one day. Module outputs are `None`
/// exactly when their toggle is off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub date: NaiveDate,
    pub toggles: Toggles,
    /// Workflow steps in execution order, including non-LLM steps.
    pub steps: Vec<String>,
    pub kline_chart: Option<String>,
    pub trading_chart: Option<String>,
    pub tools: Option<ToolOutputs>,
    pub latest_market_intelligence_summary: Option<String>,
    pub latest_market_intelligence_queries: Option<BTreeMap<String, String>>,
    pub past_market_intelligence_summary: Option<String>,
    pub low_level_reflection: Option<LlrOutput>,
    pub lagged_low_level_reflection: Option<(NaiveDate, LlrOutput)>,
    pub high_level_reflection: Option<HlrOutput>,
    pub retrieved: BTreeMap<String, Vec<String>>,
    pub memory_writes: Vec<MemoryWrite>,
    pub calls: Vec<CallTrace>,
    pub decision: Option<Decision>,
    pub valid_actions: String,
    pub executed_action: Option<Action>,
    pub coerced: bool,
    pub execution: Option<ExecutionTrace>,
}

impl StepTrace {
    pub fn new(date: NaiveDate, toggles: Toggles) -> Self {
        Self {
            date,
            toggles,
            steps: Vec::new(),
            kline_chart: None,
            trading_chart: None,
            tools: None,
            latest_market_intelligence_summary: None,
            latest_market_intelligence_queries: None,
            past_market_intelligence_summary: None,
            low_level_reflection: None,
            lagged_low_level_reflection: None,
            high_level_reflection: None,
            retrieved: BTreeMap::new(),
            memory_writes: Vec::new(),
            calls: Vec::new(),
            decision: None,
            valid_actions: String::new(),
            executed_action: None,
            coerced: false,
            execution: None,
        }
    }

    /// Workflow labels of the LLM calls, in order.
    pub fn call_order(&self) -> Vec<&str> {
        self.calls.iter().map(|c| c.step.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }
}
