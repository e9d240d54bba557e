//! Prompt templates: parsing, iframe resolution, section gating, placeholder
//! substitution, conversion to chat messages, and response parsing.

mod library;
mod output;
mod parse;
mod render;

pub use library::TemplateLibrary;
pub use output::{
    parse_output_xml, render_output, OutputError, OutputSchema, OutputValue, ParsedOutput,
    SchemaField,
};
pub use parse::{
    parse_template, placeholder_key, Block, Element, Node, Pos, Role, Segment, Tag, TemplateDoc,
};
pub use render::{drop_sections, substitute, to_messages, Message, ParamValue, Part, PromptParams};

use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("{template}:{line}:{col}: {message}")]
    Parse {
        template: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("iframe `{name}` referenced by `{referenced_by}` does not exist")]
    MissingIframe { name: String, referenced_by: String },
    #[error("iframe cycle: {0}")]
    IframeCycle(String),
    #[error("iframe `{0}` was not resolved")]
    UnresolvedIframe(String),
    #[error("missing template parameters: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("image file {0} does not exist")]
    ImageMissing(PathBuf),
    #[error("template structure: {0}")]
    Structure(String),
    #[error("template manifest: {0}")]
    Manifest(String),
    #[error("{0}")]
    Io(String),
}

/// Section classes removed when a module is switched off.
pub const MARKET_INTELLIGENCE_SECTIONS: &[&str] =
    &["market_intelligence", "market_intelligence_effects"];
pub const LOW_LEVEL_REFLECTION_SECTIONS: &[&str] =
    &["low_level_reflection", "low_level_reflection_effects"];
pub const HIGH_LEVEL_REFLECTION_SECTIONS: &[&str] =
    &["high_level_reflection", "high_level_reflection_effects"];
pub const TOOL_SECTIONS: &[&str] = &["guidance", "strategy"];

/// A template rendered into messages, with the schema its response must follow.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub template: String,
    pub messages: Vec<Message>,
    pub schema: OutputSchema,
}

impl RenderedPrompt {
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(Message::plain_text)
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Loads `template`, resolves iframes, drops `disabled` section classes and
/// substitutes `params`.
pub fn render(
    library: &TemplateLibrary,
    template: &str,
    disabled: &[&str],
    params: &PromptParams,
) -> Result<RenderedPrompt, PromptError> {
    let doc = library.template(template)?;
    let doc = library.resolve_iframes(&doc)?;
    let doc = drop_sections(&doc, disabled);
    let doc = substitute(&doc, params)?;
    Ok(RenderedPrompt {
        template: template.to_string(),
        messages: to_messages(&doc)?,
        schema: library.schema(template)?.clone(),
    })
}
