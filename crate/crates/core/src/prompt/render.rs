//! Section gating, placeholder substitution and conversion to chat messages.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::parse::{contains_message, message_role, Element, Node, Role, Tag, TemplateDoc};
use super::PromptError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamValue {
    Text(String),
    Image(PathBuf),
}

impl From<String> for ParamValue {
    fn from(s: String) -> Self {
        ParamValue::Text(s)
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Text(s.to_string())
    }
}

impl From<PathBuf> for ParamValue {
    fn from(p: PathBuf) -> Self {
        ParamValue::Image(p)
    }
}

pub type PromptParams = BTreeMap<String, ParamValue>;

/// Removes every `div` carrying one of `classes`, with its content.
pub fn drop_sections(doc: &TemplateDoc, classes: &[&str]) -> TemplateDoc {
    fn walk(nodes: &[Node], classes: &[&str]) -> Vec<Node> {
        nodes
            .iter()
            .filter_map(|n| match n {
                Node::Element(e) if e.tag == Tag::Div && classes.iter().any(|c| e.has_class(c)) => {
                    None
                }
                Node::Element(e) => Some(Node::Element(Element {
                    tag: e.tag,
                    attrs: e.attrs.clone(),
                    children: walk(&e.children, classes),
                })),
                other => Some(other.clone()),
            })
            .collect()
    }
    TemplateDoc {
        name: doc.name.clone(),
        title: doc.title.clone(),
        nodes: walk(&doc.nodes, classes),
    }
}

/// Replaces every placeholder and image slot. All missing keys are reported
/// together. Substituted text is never re-scanned for placeholders.
pub fn substitute(doc: &TemplateDoc, params: &PromptParams) -> Result<TemplateDoc, PromptError> {
    fn walk(nodes: &[Node], params: &PromptParams, missing: &mut BTreeSet<String>) -> Vec<Node> {
        nodes
            .iter()
            .map(|n| match n {
                Node::Placeholder(k) => match params.get(k) {
                    Some(ParamValue::Text(t)) => Node::Value(t.clone()),
                    Some(ParamValue::Image(p)) => Node::Value(p.display().to_string()),
                    None => {
                        missing.insert(k.clone());
                        n.clone()
                    }
                },
                Node::ImageSlot(k) => match params.get(k) {
                    Some(ParamValue::Image(p)) => Node::Image(p.clone()),
                    Some(ParamValue::Text(t)) => Node::Image(PathBuf::from(t)),
                    None => {
                        missing.insert(k.clone());
                        n.clone()
                    }
                },
                Node::Element(e) => Node::Element(Element {
                    tag: e.tag,
                    attrs: e.attrs.clone(),
                    children: walk(&e.children, params, missing),
                }),
                other => other.clone(),
            })
            .collect()
    }
    let mut missing = BTreeSet::new();
    let nodes = walk(&doc.nodes, params, &mut missing);
    if !missing.is_empty() {
        return Err(PromptError::MissingKeys(missing.into_iter().collect()));
    }
    Ok(TemplateDoc {
        name: doc.name.clone(),
        title: doc.title.clone(),
        nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Part {
    Text { text: String },
    Image { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self {
            role: role.as_str().to_string(),
            parts: vec![Part::Text { text: text.into() }],
        }
    }

    /// Concatenated text parts.
    pub fn plain_text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text { text } => Some(text.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Builds message text: template whitespace collapses, `<br>` is a newline,
/// block elements are separated by a blank line, and substituted values are
/// copied verbatim.
struct TextBuilder {
    out: String,
    pending_space: bool,
}

impl TextBuilder {
    fn new() -> Self {
        Self {
            out: String::new(),
            pending_space: false,
        }
    }

    fn at_line_start(&self) -> bool {
        self.out.is_empty() || self.out.ends_with('\n')
    }

    fn flush_space(&mut self) {
        if self.pending_space && !self.at_line_start() {
            self.out.push(' ');
        }
        self.pending_space = false;
    }

    fn template_text(&mut self, s: &str) {
        for c in s.chars() {
            if c.is_whitespace() {
                self.pending_space = true;
            } else {
                self.flush_space();
                self.out.push(c);
            }
        }
    }

    fn value(&mut self, s: &str) {
        if s.is_empty() {
            return;
        }
        self.flush_space();
        self.out.push_str(s);
    }

    fn newline(&mut self) {
        let trimmed = self.out.trim_end_matches([' ', '\t']).len();
        self.out.truncate(trimmed);
        self.out.push('\n');
        self.pending_space = false;
    }

    fn paragraph(&mut self) {
        self.pending_space = false;
        if self.out.trim().is_empty() {
            return;
        }
        let trimmed = self.out.trim_end_matches([' ', '\t']).len();
        self.out.truncate(trimmed);
        while !self.out.ends_with("\n\n") {
            self.out.push('\n');
        }
    }

    fn take(&mut self) -> String {
        let text = std::mem::take(&mut self.out);
        self.pending_space = false;
        let mut cleaned = String::with_capacity(text.len());
        let mut newlines = 0;
        for c in text.trim().chars() {
            if c == '\n' {
                newlines += 1;
                if newlines > 2 {
                    continue;
                }
            } else {
                newlines = 0;
            }
            cleaned.push(c);
        }
        cleaned
    }
}

fn emit(nodes: &[Node], tb: &mut TextBuilder, parts: &mut Vec<Part>) -> Result<(), PromptError> {
    for n in nodes {
        match n {
            Node::Text(t) => tb.template_text(t),
            Node::Value(v) => tb.value(v),
            Node::Image(p) => {
                if !p.is_file() {
                    return Err(PromptError::ImageMissing(p.clone()));
                }
                let text = tb.take();
                if !text.is_empty() {
                    parts.push(Part::Text { text });
                }
                parts.push(Part::Image { path: p.clone() });
            }
            Node::Placeholder(k) | Node::ImageSlot(k) => {
                return Err(PromptError::MissingKeys(vec![k.clone()]))
            }
            Node::Element(e) => match e.tag {
                Tag::Br => tb.newline(),
                Tag::Iframe => {
                    return Err(PromptError::UnresolvedIframe(
                        e.attr("name").unwrap_or_default().to_string(),
                    ))
                }
                Tag::Div | Tag::P => {
                    tb.paragraph();
                    emit(&e.children, tb, parts)?;
                    tb.paragraph();
                }
                _ => emit(&e.children, tb, parts)?,
            },
        }
    }
    Ok(())
}

fn has_content(nodes: &[Node]) -> bool {
    nodes.iter().any(|n| match n {
        Node::Text(t) => !t.trim().is_empty(),
        Node::Element(e) => e.tag == Tag::Iframe || has_content(&e.children),
        Node::Value(v) => !v.trim().is_empty(),
        _ => true,
    })
}

/// One message per role block, in document order.
pub fn to_messages(doc: &TemplateDoc) -> Result<Vec<Message>, PromptError> {
    fn walk(nodes: &[Node], out: &mut Vec<Message>) -> Result<(), PromptError> {
        for n in nodes {
            match n {
                Node::Element(e) if message_role(e).is_some() => {
                    let role = message_role(e).flatten().ok_or_else(|| {
                        PromptError::Structure("message block without a valid role".into())
                    })?;
                    let mut tb = TextBuilder::new();
                    let mut parts = Vec::new();
                    emit(&e.children, &mut tb, &mut parts)?;
                    let text = tb.take();
                    if !text.is_empty() {
                        parts.push(Part::Text { text });
                    }
                    out.push(Message {
                        role: role.as_str().to_string(),
                        parts,
                    });
                }
                Node::Element(e) if contains_message(&e.children) => walk(&e.children, out)?,
                other => {
                    if has_content(std::slice::from_ref(other)) {
                        return Err(PromptError::Structure(
                            "content outside of any message block".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(&doc.nodes, &mut out)?;
    if out.is_empty() {
        return Err(PromptError::Structure(format!(
            "template `{}` has no message blocks",
            doc.name
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_template;
    use super::*;

    fn params(pairs: &[(&str, &str)]) -> PromptParams {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), ParamValue::from(*v)))
            .collect()
    }

    #[test]
    fn substitution_reports_every_missing_key() {
        let doc = parse_template(
            "t",
            "<div class=\"message\" role=\"user\"><p>$$a$$ $$b$$ $$c$$</p></div>",
        )
        .unwrap();
        match substitute(&doc, &params(&[("b", "x")])) {
            Err(PromptError::MissingKeys(k)) => assert_eq!(k, vec!["a", "c"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn values_are_verbatim_and_never_rescanned() {
        let doc = parse_template(
            "t",
            "<div class=\"message\" role=\"user\">\n  <p class=\"placeholder\">Items:\n    <br>$$items$$\n    <br><br>End.</p></div>",
        )
        .unwrap();
        let doc = substitute(&doc, &params(&[("items", "  - one\n  - $$two$$")])).unwrap();
        let msgs = to_messages(&doc).unwrap();
        assert_eq!(msgs[0].plain_text(), "Items:\n  - one\n  - $$two$$\n\nEnd.");
    }

    #[test]
    fn images_split_text_and_must_exist() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("k.png");
        std::fs::write(&img, b"png").unwrap();
        let doc = parse_template(
            "t",
            "<div class=\"message\" role=\"user\"><p>before</p><img src=\"$$k$$\"><p>after</p></div>",
        )
        .unwrap();
        let mut p = PromptParams::new();
        p.insert("k".into(), ParamValue::Image(img.clone()));
        let msgs = to_messages(&substitute(&doc, &p).unwrap()).unwrap();
        assert_eq!(
            msgs[0].parts,
            vec![
                Part::Text {
                    text: "before".into()
                },
                Part::Image { path: img },
                Part::Text {
                    text: "after".into()
                }
            ]
        );
        p.insert(
            "k".into(),
            ParamValue::Image(dir.path().join("missing.png")),
        );
        assert!(matches!(
            to_messages(&substitute(&doc, &p).unwrap()),
            Err(PromptError::ImageMissing(_))
        ));
    }

    #[test]
    fn gating_drops_sections() {
        let doc = parse_template(
            "t",
            "<div class=\"message\" role=\"user\"><div class=\"guidance\"><p>G</p></div><div class=\"market_intelligence\"><p>M $$x$$</p></div></div>",
        )
        .unwrap();
        let gated = drop_sections(&doc, &["market_intelligence"]);
        assert!(gated.placeholders().is_empty());
        let msgs = to_messages(&substitute(&gated, &PromptParams::new()).unwrap()).unwrap();
        assert_eq!(msgs[0].plain_text(), "G");
    }

    #[test]
    fn text_outside_messages_is_rejected() {
        let doc = parse_template(
            "t",
            "<p>stray</p><div class=\"message\" role=\"user\">x</div>",
        )
        .unwrap();
        assert!(matches!(to_messages(&doc), Err(PromptError::Structure(_))));
    }
}
