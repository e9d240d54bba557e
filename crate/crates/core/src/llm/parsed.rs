//! Completion with structured-output parsing and corrective re-asks.

use super::{Backend, ChatRequest, ChatResponse, LlmError, Provenance, Usage};
use crate::prompt::{
    parse_output_xml, Message, OutputError, OutputSchema, ParsedOutput, Part, Role,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCompletion {
    pub parsed: ParsedOutput,
    /// Raw response text of every attempt, the accepted one last.
    pub attempts: Vec<String>,
    pub request_keys: Vec<String>,
    pub responses: Vec<ChatResponse>,
}

/// The user turn appended after an unparsable response.
pub fn correction_message(error: &OutputError, schema: &OutputSchema) -> Message {
    Message::text(
        Role::User,
        format!(
            "Your previous reply could not be used ({error}). Reply again with exactly one XML object \
             wrapped in <output></output>, containing the fields: {schema}. Do not add any other text."
        ),
    )
}

/// Calls `backend` until a response parses against `schema` and passes
/// `check`, at most `max_attempts` times. Each retry carries the failed reply
/// and a correction note.
pub fn complete_parsed(
    backend: &dyn Backend,
    request: &ChatRequest,
    schema: &OutputSchema,
    max_attempts: usize,
    check: impl Fn(&ParsedOutput) -> Result<(), OutputError>,
) -> Result<ParsedCompletion, LlmError> {
    if max_attempts == 0 {
        return Err(LlmError::Config("max_attempts must be at least 1".into()));
    }
    let mut req = request.clone();
    let mut attempts = Vec::new();
    let mut request_keys = Vec::new();
    let mut responses = Vec::new();
    let mut last_error = OutputError::NoOutputElement;
    for _ in 0..max_attempts {
        request_keys.push(req.request_key()?);
        let resp = match backend.complete(&req) {
            Ok(r) => r,
            Err(LlmError::EmptyResponse) => ChatResponse {
                text: String::new(),
                usage: Usage::default(),
                provenance: Provenance::Remote,
            },
            Err(e) => return Err(e),
        };
        attempts.push(resp.text.clone());
        let outcome = if resp.text.trim().is_empty() {
            Err(OutputError::NoOutputElement)
        } else {
            parse_output_xml(&resp.text, schema).and_then(|p| check(&p).map(|_| p))
        };
        match outcome {
            Ok(parsed) => {
                responses.push(resp);
                return Ok(ParsedCompletion {
                    parsed,
                    attempts,
                    request_keys,
                    responses,
                });
            }
            Err(e) => {
                if !resp.text.trim().is_empty() {
                    req.messages.push(Message {
                        role: Role::Assistant.as_str().to_string(),
                        parts: vec![Part::Text {
                            text: resp.text.clone(),
                        }],
                    });
                }
                req.messages.push(correction_message(&e, schema));
                responses.push(resp);
                last_error = e;
            }
        }
    }
    Err(LlmError::ParseFailedAfterRetries {
        attempts,
        last_error,
    })
}

#[cfg(test)]
mod tests {
    use super::super::ScriptedBackend;
    use super::*;

    fn schema() -> OutputSchema {
        OutputSchema::from_field_specs(&["action"]).unwrap()
    }

    fn req() -> ChatRequest {
        ChatRequest::new(vec![Message::text(Role::User, "decide")])
    }

    const VALID: &str = "<output><string name=\"action\">BUY</string></output>";

    #[test]
    fn first_valid_response_takes_one_attempt() {
        let b = ScriptedBackend::from_queue([VALID]);
        let out = complete_parsed(&b, &req(), &schema(), 3, |_| Ok(())).unwrap();
        assert_eq!(out.attempts.len(), 1);
        assert_eq!(out.parsed.get("action"), "BUY");
    }

    #[test]
    fn malformed_then_valid_recovers_on_retry() {
        let b = ScriptedBackend::from_queue(["I think BUY.", VALID]);
        let out = complete_parsed(&b, &req(), &schema(), 2, |_| Ok(())).unwrap();
        assert_eq!(
            out.attempts,
            vec!["I think BUY.".to_string(), VALID.to_string()]
        );
        assert_ne!(out.request_keys[0], out.request_keys[1]);
    }

    #[test]
    fn exhausted_attempts_carry_all_raw_text() {
        let b = ScriptedBackend::from_queue(["nope", "<output></output>"]);
        match complete_parsed(&b, &req(), &schema(), 2, |_| Ok(())) {
            Err(LlmError::ParseFailedAfterRetries { attempts, .. }) => {
                assert_eq!(attempts.len(), 2)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn check_failures_trigger_retry() {
        let b = ScriptedBackend::from_queue([
            "<output><string name=\"action\">MAYBE</string></output>",
            VALID,
        ]);
        let out = complete_parsed(&b, &req(), &schema(), 2, |p| {
            if p.get("action") == "BUY" {
                Ok(())
            } else {
                Err(OutputError::InvalidValue {
                    field: "action".into(),
                    value: p.get("action").into(),
                    reason: "unknown action".into(),
                })
            }
        })
        .unwrap();
        assert_eq!(out.attempts.len(), 2);
    }
}
