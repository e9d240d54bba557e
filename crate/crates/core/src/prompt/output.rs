//! Expected response schema and a tolerant parser for the `<output>` XML
//! objects models are asked to return.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::parse::decode_entities as decode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemaField {
    String(String),
    Map { name: String, children: Vec<String> },
}

impl SchemaField {
    pub fn name(&self) -> &str {
        match self {
            SchemaField::String(n) => n,
            SchemaField::Map { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutputSchema {
    pub fields: Vec<SchemaField>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl OutputSchema {
    /// Parses field specs: `name` for a string, `name{a,b,c}` for a map of strings.
    pub fn from_field_specs<S: AsRef<str>>(specs: &[S]) -> Result<Self, String> {
        let mut fields = Vec::new();
        for spec in specs {
            let spec = spec.as_ref().trim();
            let field = match spec.split_once('{') {
                Some((name, rest)) => {
                    let inner = rest
                        .strip_suffix('}')
                        .ok_or_else(|| format!("`{spec}`: missing closing brace"))?;
                    let children: Vec<String> =
                        inner.split(',').map(|c| c.trim().to_string()).collect();
                    if !valid_name(name.trim()) || children.iter().any(|c| !valid_name(c)) {
                        return Err(format!("`{spec}`: invalid field name"));
                    }
                    SchemaField::Map {
                        name: name.trim().to_string(),
                        children,
                    }
                }
                None if valid_name(spec) => SchemaField::String(spec.to_string()),
                None => return Err(format!("`{spec}`: invalid field name")),
            };
            fields.push(field);
        }
        if fields.is_empty() {
            return Err("schema has no fields".into());
        }
        Ok(Self { fields })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputValue {
    String(String),
    Map(BTreeMap<String, String>),
}

/// Schema fields extracted from a response. Extra fields are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParsedOutput {
    pub values: BTreeMap<String, OutputValue>,
}

impl ParsedOutput {
    pub fn str(&self, name: &str) -> Option<&str> {
        match self.values.get(name)? {
            OutputValue::String(s) => Some(s),
            OutputValue::Map(_) => None,
        }
    }

    pub fn map_str(&self, map: &str, key: &str) -> Option<&str> {
        match self.values.get(map)? {
            OutputValue::Map(m) => m.get(key).map(String::as_str),
            OutputValue::String(_) => None,
        }
    }

    /// Field lookup that panics on absence; only valid after schema validation.
    pub fn get(&self, name: &str) -> &str {
        self.str(name)
            .unwrap_or_else(|| panic!("validated output lacks `{name}`"))
    }

    pub fn get_in(&self, map: &str, key: &str) -> &str {
        self.map_str(map, key)
            .unwrap_or_else(|| panic!("validated output lacks `{map}.{key}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OutputError {
    #[error("response contains no <output> element")]
    NoOutputElement,
    #[error("response is missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` has invalid value `{value}`: {reason}")]
    InvalidValue {
        field: String,
        value: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Item {
    Str { name: String, value: String },
    Map { name: String, items: Vec<Item> },
}

fn find_ci(hay: &str, needle: &str, from: usize) -> Option<usize> {
    let h = hay.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (from..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// Finds `<tag` followed by whitespace or `>` at or after `from`.
fn find_open(hay: &str, tag: &str, from: usize) -> Option<usize> {
    let pat = format!("<{tag}");
    let mut at = from;
    while let Some(i) = find_ci(hay, &pat, at) {
        match hay[i + pat.len()..].chars().next() {
            Some(c) if c == '>' || c.is_whitespace() => return Some(i),
            _ => at = i + 1,
        }
    }
    None
}

fn name_attr(tag_body: &str) -> Option<String> {
    let i = find_ci(tag_body, "name", 0)?;
    let rest = tag_body[i + 4..]
        .trim_start()
        .strip_prefix('=')?
        .trim_start();
    let value = match rest.chars().next()? {
        q @ ('"' | '\'') => &rest[1..1 + rest[1..].find(q)?],
        _ => {
            &rest[..rest
                .find(|c: char| c.is_whitespace() || c == '>' || c == '/')
                .unwrap_or(rest.len())]
        }
    };
    Some(value.trim().to_string())
}

fn clean_value(raw: &str) -> String {
    let mut v = raw.trim();
    if let Some(inner) = v
        .strip_prefix("<![CDATA[")
        .and_then(|s| s.strip_suffix("]]>"))
    {
        v = inner;
    }
    decode(v).trim().to_string()
}

/// Parses `<string>` and `<map>` items from `s[pos..]` until `</map>` (when
/// `in_map`) or the end. Returns the items and the position after the stop.
fn parse_items(s: &str, mut pos: usize, in_map: bool) -> (Vec<Item>, usize) {
    let mut items = Vec::new();
    loop {
        let next_str = find_open(s, "string", pos);
        let next_map = find_open(s, "map", pos);
        let close = if in_map {
            find_ci(s, "</map", pos)
        } else {
            None
        };
        let candidates = [next_str, next_map, close];
        let Some(first) = candidates.iter().flatten().min().copied() else {
            return (items, s.len());
        };
        if Some(first) == close {
            let end = s[first..]
                .find('>')
                .map(|e| first + e + 1)
                .unwrap_or(s.len());
            return (items, end);
        }
        let Some(gt) = s[first..].find('>').map(|e| first + e) else {
            return (items, s.len());
        };
        let tag_body = &s[first..gt];
        let name = name_attr(tag_body).unwrap_or_default();
        let self_closing = tag_body.ends_with('/');
        if Some(first) == next_str {
            if self_closing {
                items.push(Item::Str {
                    name,
                    value: String::new(),
                });
                pos = gt + 1;
                continue;
            }
            let content_start = gt + 1;
            let end = find_ci(s, "</string", content_start);
            // An unterminated string runs until the next element.
            let stop = end.unwrap_or_else(|| {
                [
                    find_open(s, "string", content_start),
                    find_open(s, "map", content_start),
                    find_ci(s, "</map", content_start),
                ]
                .into_iter()
                .flatten()
                .min()
                .unwrap_or(s.len())
            });
            items.push(Item::Str {
                name,
                value: clean_value(&s[content_start..stop]),
            });
            pos = match end {
                Some(e) => s[e..].find('>').map(|g| e + g + 1).unwrap_or(s.len()),
                None => stop,
            };
        } else {
            let (children, after) = if self_closing {
                (Vec::new(), gt + 1)
            } else {
                parse_items(s, gt + 1, true)
            };
            items.push(Item::Map {
                name,
                items: children,
            });
            pos = after;
        }
    }
}

fn find_str<'a>(items: &'a [Item], name: &str, deep: bool) -> Option<&'a str> {
    for it in items {
        if let Item::Str { name: n, value } = it {
            if n == name {
                return Some(value);
            }
        }
    }
    if deep {
        for it in items {
            if let Item::Map { items, .. } = it {
                if let Some(v) = find_str(items, name, true) {
                    return Some(v);
                }
            }
        }
    }
    None
}

fn validate(items: &[Item], schema: &OutputSchema) -> Result<ParsedOutput, OutputError> {
    let mut values = BTreeMap::new();
    for field in &schema.fields {
        match field {
            SchemaField::String(name) => {
                let v = find_str(items, name, true)
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| OutputError::MissingField(name.clone()))?;
                values.insert(name.clone(), OutputValue::String(v.to_string()));
            }
            SchemaField::Map { name, children } => {
                let scope = items
                    .iter()
                    .find_map(|it| match it {
                        Item::Map { name: n, items } if n == name => Some(items.as_slice()),
                        _ => None,
                    })
                    .unwrap_or(items);
                let mut map = BTreeMap::new();
                for child in children {
                    let v = find_str(scope, child, true)
                        .or_else(|| find_str(items, child, true))
                        .filter(|v| !v.is_empty())
                        .ok_or_else(|| OutputError::MissingField(format!("{name}.{child}")))?;
                    map.insert(child.clone(), v.to_string());
                }
                values.insert(name.clone(), OutputValue::Map(map));
            }
        }
    }
    Ok(ParsedOutput { values })
}

fn output_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut at = 0;
    while let Some(i) = find_open(text, "output", at) {
        let Some(gt) = text[i..].find('>').map(|g| i + g + 1) else {
            break;
        };
        let end = find_ci(text, "</output", gt).unwrap_or(text.len());
        blocks.push(&text[gt..end]);
        at = gt;
    }
    blocks
}

/// Extracts the fields of `schema` from the `<output>` element in `text`.
/// Surrounding prose, code fences and entity-escaped markup are tolerated;
/// when several `<output>` elements are present the last valid one wins.
pub fn parse_output_xml(text: &str, schema: &OutputSchema) -> Result<ParsedOutput, OutputError> {
    let mut blocks: Vec<String> = output_blocks(text)
        .into_iter()
        .map(str::to_string)
        .collect();
    if blocks.is_empty() && text.contains("&lt;") {
        let decoded = decode(text);
        blocks = output_blocks(&decoded)
            .into_iter()
            .map(str::to_string)
            .collect();
    }
    let mut last_err = OutputError::NoOutputElement;
    for block in blocks.iter().rev() {
        let (items, _) = parse_items(block, 0, false);
        match validate(&items, schema) {
            Ok(p) => return Ok(p),
            Err(e) => {
                if last_err == OutputError::NoOutputElement {
                    last_err = e;
                }
            }
        }
    }
    Err(last_err)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders `parsed` back to the XML layout, in schema order.
pub fn render_output(parsed: &ParsedOutput, schema: &OutputSchema) -> String {
    let mut out = String::from("<output>\n");
    for field in &schema.fields {
        match (field, parsed.values.get(field.name())) {
            (SchemaField::String(n), Some(OutputValue::String(v))) => {
                out.push_str(&format!("  <string name=\"{n}\">{}</string>\n", escape(v)));
            }
            (SchemaField::Map { name, children }, Some(OutputValue::Map(m))) => {
                out.push_str(&format!("  <map name=\"{name}\">\n"));
                for c in children {
                    if let Some(v) = m.get(c) {
                        out.push_str(&format!(
                            "    <string name=\"{c}\">{}</string>\n",
                            escape(v)
                        ));
                    }
                }
                out.push_str("  </map>\n");
            }
            _ => {}
        }
    }
    out.push_str("</output>\n");
    out
}

impl fmt::Display for OutputSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self
            .fields
            .iter()
            .map(|fl| match fl {
                SchemaField::String(n) => n.clone(),
                SchemaField::Map { name, children } => format!("{name}{{{}}}", children.join(",")),
            })
            .collect();
        f.write_str(&names.join(", "))
    }
}
