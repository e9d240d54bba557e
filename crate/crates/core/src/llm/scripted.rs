//! Offline backend answering from scripted response queues.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{Backend, ChatRequest, ChatResponse, LlmError, Provenance, Usage};

/// Responses served to requests whose text contains every `contains` pattern.
/// With `repeat_last`, the final response keeps being served once the queue
/// is down to one.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ScriptRule {
    pub contains: Vec<String>,
    pub responses: Vec<String>,
    #[serde(default)]
    pub repeat_last: bool,
}

#[derive(Debug, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    rules: Vec<ScriptRule>,
    #[serde(default)]
    fallback: Vec<String>,
}

#[derive(Debug)]
struct Queue {
    contains: Vec<String>,
    responses: VecDeque<String>,
    repeat_last: bool,
}

impl Queue {
    fn pop(&mut self) -> Option<String> {
        if self.repeat_last && self.responses.len() == 1 {
            return self.responses.front().cloned();
        }
        self.responses.pop_front()
    }
}

/// Rules are tried in order and the first match with a response left
/// answers. Unmatched requests draw from the FIFO fallback queue.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Mutex<Vec<Queue>>,
    fallback: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_queue<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        let b = Self::new();
        for r in responses {
            b.push_fallback(r);
        }
        b
    }

    pub fn from_rules(rules: Vec<ScriptRule>, fallback: Vec<String>) -> Self {
        let b = Self::from_queue(fallback);
        for r in rules {
            b.add_rule(r);
        }
        b
    }

    /// Reads a TOML script with `[[rules]]` tables and an optional `fallback` list.
    pub fn from_toml_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let file: ScriptFile = toml::from_str(&text)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::from_rules(file.rules, file.fallback))
    }

    pub fn push_fallback(&self, response: impl Into<String>) {
        self.fallback
            .lock()
            .expect("poisoned")
            .push_back(response.into());
    }

    pub fn add_rule(&self, rule: ScriptRule) {
        self.rules.lock().expect("poisoned").push(Queue {
            contains: rule.contains,
            responses: rule.responses.into(),
            repeat_last: rule.repeat_last,
        });
    }

    /// Serves `response` forever to requests containing `pattern`.
    pub fn always(&self, pattern: &str, response: impl Into<String>) {
        self.add_rule(ScriptRule {
            contains: vec![pattern.to_string()],
            responses: vec![response.into()],
            repeat_last: true,
        });
    }

    /// Queues `responses` for requests containing `pattern`.
    pub fn on(&self, pattern: &str, responses: impl IntoIterator<Item = impl Into<String>>) {
        self.add_rule(ScriptRule {
            contains: vec![pattern.to_string()],
            responses: responses.into_iter().map(Into::into).collect(),
            repeat_last: false,
        });
    }

    pub fn remaining(&self) -> usize {
        let rules: usize = self
            .rules
            .lock()
            .expect("poisoned")
            .iter()
            .map(|q| q.responses.len())
            .sum();
        rules + self.fallback.lock().expect("poisoned").len()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let text = request.text();
        let hit = {
            let mut rules = self.rules.lock().expect("poisoned");
            rules
                .iter_mut()
                .filter(|q| {
                    !q.responses.is_empty() && q.contains.iter().all(|p| text.contains(p.as_str()))
                })
                .find_map(Queue::pop)
        };
        let reply = match hit {
            Some(r) => r,
            None => self
                .fallback
                .lock()
                .expect("poisoned")
                .pop_front()
                .ok_or(LlmError::QueueExhausted)?,
        };
        Ok(ChatResponse {
            usage: Usage {
                prompt_tokens: text.split_whitespace().count() as u64,
                completion_tokens: reply.split_whitespace().count() as u64,
            },
            text: reply,
            provenance: Provenance::Scripted,
        })
    }
}
