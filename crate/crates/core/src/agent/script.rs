//! Canned scripted responses for offline runs of the full workflow.

use crate::data::Action;
use crate::llm::{ScriptRule, ScriptedBackend};

/// Substrings that identify each template's request text.
pub const MARKER_DECISION: &str = "<string name=\"action\">";
pub const MARKER_HIGH_LEVEL_REFLECTION: &str = "<string name=\"improvement\">";
pub const MARKER_LOW_LEVEL_REFLECTION: &str = "<string name=\"short_term_reasoning\">";
pub const MARKER_PAST_MARKET_INTELLIGENCE: &str =
    "Past market intelligence and prices are as follows";
pub const MARKER_LATEST_MARKET_INTELLIGENCE: &str = "<string name=\"short_term_query\">";

pub const CANNED_LATEST_MI: &str = "<output>\n<string name=\"analysis\">The news flow is mixed with a slight positive tilt.</string>\n<string name=\"summary\">Mildly positive news flow around demand and margins.</string>\n<map name=\"query\">\n<string name=\"short_term_query\">near-term demand news</string>\n<string name=\"medium_term_query\">quarterly margin outlook</string>\n<string name=\"long_term_query\">long-run competitive position</string>\n</map>\n</output>";

pub const CANNED_PAST_MI: &str = "<output>\n<string name=\"analysis\">Earlier intelligence was broadly neutral.</string>\n<string name=\"summary\">Past intelligence was neutral overall.</string>\n</output>";

pub const CANNED_LLR: &str = "<output>\n<map name=\"reasoning\">\n<string name=\"short_term_reasoning\">Short-term moves track the latest headlines.</string>\n<string name=\"medium_term_reasoning\">Medium-term trend follows earnings revisions.</string>\n<string name=\"long_term_reasoning\">Long-term drift reflects sector momentum.</string>\n</map>\n<string name=\"query\">price reaction to headlines and earnings revisions</string>\n</output>";

pub const CANNED_HLR: &str = "<output>\n<string name=\"reasoning\">Recent decisions matched the price direction.</string>\n<string name=\"improvement\">Act sooner when signals agree.</string>\n<string name=\"summary\">Follow agreeing signals promptly.</string>\n<string name=\"query\">timing of entries when signals agree</string>\n</output>";

pub fn decision_response(action: Action) -> String {
    format!(
        "<output>\n<string name=\"analysis\">Signals were weighed together.</string>\n<string name=\"action\">{action}</string>\n<string name=\"reasoning\">Scripted decision {action}.</string>\n</output>"
    )
}

/// Answers every template with a fixed valid response. Decisions follow
/// `actions` in order, then HOLD forever.
pub fn canned_backend(actions: &[Action]) -> ScriptedBackend {
    let mut decisions: Vec<String> = actions.iter().map(|a| decision_response(*a)).collect();
    decisions.push(decision_response(Action::Hold));
    let rule = |marker: &str, responses: Vec<String>| ScriptRule {
        contains: vec![marker.to_string()],
        responses,
        repeat_last: true,
    };
    ScriptedBackend::from_rules(
        vec![
            rule(MARKER_DECISION, decisions),
            rule(MARKER_HIGH_LEVEL_REFLECTION, vec![CANNED_HLR.into()]),
            rule(MARKER_LOW_LEVEL_REFLECTION, vec![CANNED_LLR.into()]),
            rule(MARKER_PAST_MARKET_INTELLIGENCE, vec![CANNED_PAST_MI.into()]),
            rule(
                MARKER_LATEST_MARKET_INTELLIGENCE,
                vec![CANNED_LATEST_MI.into()],
            ),
        ],
        Vec::new(),
    )
}
