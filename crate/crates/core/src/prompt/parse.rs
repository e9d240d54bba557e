//! Tolerant parser for the HTML-like template format.
//!
//! Only the structural tags below are interpreted. Anything else that looks
//! like a tag (for example the `<output>` / `<string>` examples embedded in
//! output-format sections) is kept as literal text.

use std::fmt;
use std::path::PathBuf;

use super::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Html,
    Head,
    Meta,
    Title,
    Body,
    Div,
    P,
    Br,
    Iframe,
    Img,
}

impl Tag {
    fn from_name(name: &str) -> Option<Tag> {
        Some(match name.to_ascii_lowercase().as_str() {
            "html" => Tag::Html,
            "head" => Tag::Head,
            "meta" => Tag::Meta,
            "title" => Tag::Title,
            "body" => Tag::Body,
            "div" => Tag::Div,
            "p" => Tag::P,
            "br" => Tag::Br,
            "iframe" => Tag::Iframe,
            "img" => Tag::Img,
            _ => return None,
        })
    }

    fn is_void(self) -> bool {
        matches!(self, Tag::Meta | Tag::Br | Tag::Img)
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::Html => "html",
            Tag::Head => "head",
            Tag::Meta => "meta",
            Tag::Title => "title",
            Tag::Body => "body",
            Tag::Div => "div",
            Tag::P => "p",
            Tag::Br => "br",
            Tag::Iframe => "iframe",
            Tag::Img => "img",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub tag: Tag,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.attr("class")
            .is_some_and(|c| c.split_whitespace().any(|x| x == class))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Element(Element),
    /// Text from the template itself; whitespace is collapsed when rendered.
    Text(String),
    Placeholder(String),
    /// `<img src="$$key$$">` awaiting an image path.
    ImageSlot(String),
    /// Substituted parameter text, rendered verbatim.
    Value(String),
    Image(PathBuf),
}

fn is_key_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Returns the key if `s` is exactly `$$key$$`.
pub fn placeholder_key(s: &str) -> Option<&str> {
    let inner = s.trim().strip_prefix("$$")?.strip_suffix("$$")?;
    (!inner.is_empty() && inner.chars().all(is_key_char)).then_some(inner)
}

pub(crate) fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let end = rest[..rest.len().min(12)].find(';');
        let decoded = end.and_then(|e| {
            let name = &rest[1..e];
            let ch = match name {
                "lt" => Some('<'),
                "gt" => Some('>'),
                "amp" => Some('&'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some(' '),
                _ if name.starts_with("#x") || name.starts_with("#X") => {
                    u32::from_str_radix(&name[2..], 16)
                        .ok()
                        .and_then(char::from_u32)
                }
                _ if name.starts_with('#') => name[1..].parse().ok().and_then(char::from_u32),
                _ => None,
            };
            ch.map(|c| (c, e + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

struct Parser<'a> {
    src: &'a str,
    name: &'a str,
    i: usize,
    line: usize,
    col: usize,
}

struct Open {
    el: Element,
    at: Pos,
}

impl<'a> Parser<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn err(&self, at: Pos, message: impl Into<String>) -> PromptError {
        PromptError::Parse {
            template: self.name.to_string(),
            line: at.line,
            col: at.col,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.i..]
    }

    fn advance(&mut self, n: usize) {
        for c in self.src[self.i..self.i + n].chars() {
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        self.i += n;
    }

    /// If a structural tag starts here, returns (closing, tag, name length).
    fn structural_tag(&self) -> Option<(bool, Tag, usize)> {
        let r = self.rest();
        let (closing, body) = match r.strip_prefix("</") {
            Some(b) => (true, b),
            None => (false, r.strip_prefix('<')?),
        };
        let name_len = body
            .find(|c: char| !c.is_ascii_alphanumeric())
            .unwrap_or(body.len());
        let tag = Tag::from_name(&body[..name_len])?;
        let next = body[name_len..].chars().next();
        match next {
            Some(c) if c.is_whitespace() || c == '>' || c == '/' => {}
            None => {}
            _ => return None,
        }
        Some((closing, tag, name_len + if closing { 2 } else { 1 }))
    }

    fn parse_attrs(
        &mut self,
        tag_start: Pos,
        tag: Tag,
    ) -> Result<(Vec<(String, String)>, bool), PromptError> {
        let mut attrs = Vec::new();
        loop {
            let r = self.rest();
            let skip = r.len() - r.trim_start().len();
            self.advance(skip);
            let r = self.rest();
            if r.is_empty() {
                return Err(self.err(tag_start, format!("unclosed <{}> tag", tag.name())));
            }
            if r.starts_with("/>") {
                self.advance(2);
                return Ok((attrs, true));
            }
            if r.starts_with('>') {
                self.advance(1);
                return Ok((attrs, false));
            }
            if r.starts_with('<') {
                return Err(self.err(tag_start, format!("unclosed <{}> tag", tag.name())));
            }
            let name_len = r
                .find(|c: char| c.is_whitespace() || c == '=' || c == '>' || c == '/')
                .unwrap_or(r.len());
            if name_len == 0 {
                self.advance(1);
                continue;
            }
            let name = r[..name_len].to_ascii_lowercase();
            self.advance(name_len);
            let r = self.rest();
            let ws = r.len() - r.trim_start().len();
            if r.trim_start().starts_with('=') {
                self.advance(ws + 1);
                let r = self.rest();
                let ws = r.len() - r.trim_start().len();
                self.advance(ws);
                let r = self.rest();
                let value = if let Some(q) = r.chars().next().filter(|c| *c == '"' || *c == '\'') {
                    let at = self.pos();
                    let end = r[1..]
                        .find(q)
                        .ok_or_else(|| self.err(at, "unterminated attribute value"))?;
                    let v = r[1..1 + end].to_string();
                    self.advance(end + 2);
                    v
                } else {
                    let end = r
                        .find(|c: char| c.is_whitespace() || c == '>')
                        .unwrap_or(r.len());
                    let v = r[..end].to_string();
                    self.advance(end);
                    v
                };
                attrs.push((name, decode_entities(&value)));
            } else {
                attrs.push((name, String::new()));
            }
        }
    }

    fn push_text(&self, text: &str, at: Pos, out: &mut Vec<Node>) -> Result<(), PromptError> {
        let text = decode_entities(text);
        let mut rest = text.as_str();
        while let Some(i) = rest.find("$$") {
            let after = &rest[i + 2..];
            let key_len = after.find(|c: char| !is_key_char(c)).unwrap_or(after.len());
            if key_len == 0 || !after[key_len..].starts_with("$$") {
                let consumed = text.len() - rest.len() + i;
                let err_pos = advance_pos(at, &text[..consumed]);
                return Err(self.err(err_pos, "malformed placeholder"));
            }
            if i > 0 {
                out.push(Node::Text(rest[..i].to_string()));
            }
            out.push(Node::Placeholder(after[..key_len].to_string()));
            rest = &after[key_len + 2..];
        }
        if !rest.is_empty() {
            out.push(Node::Text(rest.to_string()));
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Vec<Node>, PromptError> {
        let mut stack: Vec<Open> = Vec::new();
        let mut root: Vec<Node> = Vec::new();
        let mut text_start = self.i;
        let mut text_pos = self.pos();

        macro_rules! children {
            () => {
                match stack.last_mut() {
                    Some(o) => &mut o.el.children,
                    None => &mut root,
                }
            };
        }

        while self.i < self.src.len() {
            let r = self.rest();
            let markup =
                r.starts_with("<!--") || r.starts_with("<!") || self.structural_tag().is_some();
            if !markup {
                let step = r.chars().next().map(char::len_utf8).unwrap_or(1);
                self.advance(step);
                continue;
            }
            if text_start < self.i {
                let text = &self.src[text_start..self.i];
                self.push_text(text, text_pos, children!())?;
            }
            let at = self.pos();
            if r.starts_with("<!--") {
                let end = r
                    .find("-->")
                    .ok_or_else(|| self.err(at, "unterminated comment"))?;
                self.advance(end + 3);
            } else if r.starts_with("<!") {
                let end = r
                    .find('>')
                    .ok_or_else(|| self.err(at, "unterminated declaration"))?;
                self.advance(end + 1);
            } else {
                let (closing, tag, len) = self.structural_tag().expect("checked above");
                self.advance(len);
                if closing {
                    let r = self.rest();
                    let ws = r.len() - r.trim_start().len();
                    if !r.trim_start().starts_with('>') {
                        return Err(self.err(at, format!("unclosed </{}> tag", tag.name())));
                    }
                    self.advance(ws + 1);
                    match stack.pop() {
                        Some(open) if open.el.tag == tag => {
                            let node = Node::Element(open.el);
                            children!().push(node);
                        }
                        Some(open) => {
                            return Err(self.err(
                                at,
                                format!(
                                    "</{}> does not match <{}> opened at {}",
                                    tag.name(),
                                    open.el.tag.name(),
                                    open.at
                                ),
                            ))
                        }
                        None => {
                            return Err(
                                self.err(at, format!("</{}> without an opening tag", tag.name()))
                            )
                        }
                    }
                } else {
                    let (attrs, self_closing) = self.parse_attrs(at, tag)?;
                    let el = Element {
                        tag,
                        attrs,
                        children: Vec::new(),
                    };
                    if tag == Tag::Img {
                        let src = el.attr("src").unwrap_or("");
                        let node = match placeholder_key(src) {
                            Some(k) => Node::ImageSlot(k.to_string()),
                            None if src.contains("$$") => {
                                return Err(self.err(at, "malformed placeholder in img src"))
                            }
                            None => Node::Image(PathBuf::from(src)),
                        };
                        children!().push(node);
                    } else if tag.is_void() || self_closing {
                        children!().push(Node::Element(el));
                    } else {
                        stack.push(Open { el, at });
                    }
                }
            }
            text_start = self.i;
            text_pos = self.pos();
        }
        if text_start < self.i {
            let text = &self.src[text_start..self.i];
            self.push_text(text, text_pos, children!())?;
        }
        if let Some(open) = stack.pop() {
            return Err(self.err(open.at, format!("<{}> is never closed", open.el.tag.name())));
        }
        Ok(root)
    }
}

fn advance_pos(mut at: Pos, text: &str) -> Pos {
    for c in text.chars() {
        if c == '\n' {
            at.line += 1;
            at.col = 1;
        } else {
            at.col += 1;
        }
    }
    at
}

/// A parsed template or iframe: the document body with head and title removed.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateDoc {
    pub name: String,
    pub title: Option<String>,
    pub nodes: Vec<Node>,
}

fn collect_text(nodes: &[Node]) -> String {
    nodes
        .iter()
        .map(|n| match n {
            Node::Text(t) => t.clone(),
            Node::Element(e) => collect_text(&e.children),
            _ => String::new(),
        })
        .collect()
}

fn find_title(nodes: &[Node]) -> Option<String> {
    nodes.iter().find_map(|n| match n {
        Node::Element(e) if e.tag == Tag::Title => {
            Some(collect_text(&e.children).trim().to_string())
        }
        Node::Element(e) => find_title(&e.children),
        _ => None,
    })
}

fn body_nodes(nodes: Vec<Node>) -> Vec<Node> {
    let mut out = Vec::new();
    for n in nodes {
        match n {
            Node::Element(e) if e.tag == Tag::Html || e.tag == Tag::Body => {
                out.extend(body_nodes(e.children))
            }
            Node::Element(e) if matches!(e.tag, Tag::Head | Tag::Title | Tag::Meta) => {}
            other => out.push(other),
        }
    }
    out
}

pub fn parse_template(name: &str, src: &str) -> Result<TemplateDoc, PromptError> {
    let nodes = Parser {
        src,
        name,
        i: 0,
        line: 1,
        col: 1,
    }
    .parse()?;
    Ok(TemplateDoc {
        name: name.to_string(),
        title: find_title(&nodes),
        nodes: body_nodes(nodes),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s.to_ascii_lowercase().as_str() {
            "system" => Some(Role::System),
            "user" => Some(Role::User),
            "assistant" => Some(Role::Assistant),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// Flat view of one role block.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Text(String),
    Placeholder(String),
    Iframe(String),
    ImageSlot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Role of the nearest enclosing `div.message`; `None` outside any.
    pub role: Option<Role>,
    pub segments: Vec<Segment>,
}

pub(crate) fn message_role(e: &Element) -> Option<Option<Role>> {
    (e.tag == Tag::Div && e.has_class("message")).then(|| e.attr("role").and_then(Role::parse))
}

impl TemplateDoc {
    pub fn blocks(&self) -> Vec<Block> {
        fn flatten(nodes: &[Node], out: &mut Vec<Segment>) {
            for n in nodes {
                match n {
                    Node::Text(t) if !t.trim().is_empty() => out.push(Segment::Text(t.clone())),
                    Node::Value(t) => out.push(Segment::Text(t.clone())),
                    Node::Placeholder(k) => out.push(Segment::Placeholder(k.clone())),
                    Node::ImageSlot(k) => out.push(Segment::ImageSlot(k.clone())),
                    Node::Element(e) if e.tag == Tag::Iframe => out.push(Segment::Iframe(
                        e.attr("name").unwrap_or_default().to_string(),
                    )),
                    Node::Element(e) => flatten(&e.children, out),
                    _ => {}
                }
            }
        }
        fn walk(nodes: &[Node], blocks: &mut Vec<Block>) {
            for n in nodes {
                match n {
                    Node::Element(e) if message_role(e).is_some() => {
                        let mut segments = Vec::new();
                        flatten(&e.children, &mut segments);
                        blocks.push(Block {
                            role: message_role(e).flatten(),
                            segments,
                        });
                    }
                    Node::Element(e) if e.tag != Tag::Iframe && contains_message(&e.children) => {
                        walk(&e.children, blocks)
                    }
                    other => {
                        let mut segments = Vec::new();
                        flatten(std::slice::from_ref(other), &mut segments);
                        if !segments.is_empty() {
                            blocks.push(Block {
                                role: None,
                                segments,
                            });
                        }
                    }
                }
            }
        }
        let mut blocks = Vec::new();
        walk(&self.nodes, &mut blocks);
        blocks
    }

    /// Every placeholder key, including image slots, in document order.
    pub fn placeholders(&self) -> Vec<String> {
        fn walk(nodes: &[Node], out: &mut Vec<String>) {
            for n in nodes {
                match n {
                    Node::Placeholder(k) | Node::ImageSlot(k) => out.push(k.clone()),
                    Node::Element(e) => walk(&e.children, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.nodes, &mut out);
        out
    }

    /// Classes of every `div` in the document.
    pub fn section_classes(&self) -> Vec<String> {
        fn walk(nodes: &[Node], out: &mut Vec<String>) {
            for n in nodes {
                if let Node::Element(e) = n {
                    if e.tag == Tag::Div {
                        if let Some(c) = e.attr("class") {
                            out.extend(c.split_whitespace().map(str::to_string));
                        }
                    }
                    walk(&e.children, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.nodes, &mut out);
        out
    }
}

pub(crate) fn contains_message(nodes: &[Node]) -> bool {
    nodes.iter().any(|n| match n {
        Node::Element(e) => message_role(e).is_some() || contains_message(&e.children),
        _ => false,
    })
}
