//! Shipped templates, iframes and output schemas, with optional on-disk overrides.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::output::OutputSchema;
use super::parse::{parse_template, Element, Node, Tag, TemplateDoc};
use super::PromptError;

macro_rules! resources {
    ($dir:literal: $($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../resources/", $dir, "/", $name, ".html")))),*]
    };
}

const TEMPLATES: &[(&str, &str)] = resources!("templates":
    "latest_market_intelligence",
    "past_market_intelligence",
    "low_level_reflection",
    "low_level_reflection_with_next",
    "high_level_reflection",
    "decision",
    "strategy_router",
);

const IFRAMES: &[(&str, &str)] = resources!("iframes":
    "system_content_trading",
    "market_intelligence_task_description_trading",
    "market_intelligence_effects_trading",
    "market_intelligence_latest_summary_prompt_trading",
    "market_intelligence_latest_summary_output_format_trading",
    "market_intelligence_past_summary_prompt_trading",
    "market_intelligence_past_summary_output_format_trading",
    "low_level_reflection_task_description_trading",
    "low_level_reflection_kline_chart_trading",
    "low_level_reflection_price_change_description_trading",
    "low_level_reflection_price_change_description_with_next_trading",
    "low_level_reflection_effects_trading",
    "low_level_reflection_prompt_trading",
    "low_level_reflection_prompt_with_next_trading",
    "low_level_reflection_output_format_trading",
    "high_level_reflection_task_description_trading",
    "high_level_reflection_trading_chart_trading",
    "high_level_reflection_effects_trading",
    "high_level_reflection_prompt_trading",
    "high_level_reflection_output_format_trading",
    "decision_task_description_trading",
    "decision_trader_preference_trading",
    "decision_guidance_trading",
    "decision_strategy_trading",
    "decision_state_description_trading",
    "decision_prompt_trading",
    "decision_output_format_trading",
);

const MANIFEST: &str = include_str!("../../resources/manifest.toml");
const TRADER_PREFERENCE: &str = include_str!("../../resources/trader_preference.txt");

#[derive(Debug, Deserialize)]
struct Manifest {
    #[serde(default)]
    templates: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    fields: Vec<String>,
}

fn parse_manifest(text: &str, origin: &str) -> Result<BTreeMap<String, OutputSchema>, PromptError> {
    let m: Manifest =
        toml::from_str(text).map_err(|e| PromptError::Manifest(format!("{origin}: {e}")))?;
    m.templates
        .into_iter()
        .map(|(name, entry)| {
            let schema = OutputSchema::from_field_specs(&entry.fields)
                .map_err(|e| PromptError::Manifest(format!("{origin}: {name}: {e}")))?;
            Ok((name, schema))
        })
        .collect()
}

/// Template sources by name. Override directories may replace any template,
/// iframe or schema by name.
#[derive(Debug, Clone)]
pub struct TemplateLibrary {
    templates: BTreeMap<String, String>,
    iframes: BTreeMap<String, String>,
    schemas: BTreeMap<String, OutputSchema>,
    trader_preference: String,
}

fn read_dir_html(dir: &Path) -> Result<Vec<(String, String)>, PromptError> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let entries =
        std::fs::read_dir(dir).map_err(|e| PromptError::Io(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.extension().is_some_and(|x| x == "html") {
            let name = p
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let text = std::fs::read_to_string(&p)
                .map_err(|e| PromptError::Io(format!("{}: {e}", p.display())))?;
            out.push((name, text));
        }
    }
    Ok(out)
}

impl TemplateLibrary {
    pub fn builtin() -> Self {
        Self {
            templates: TEMPLATES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            iframes: IFRAMES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            schemas: parse_manifest(MANIFEST, "builtin manifest")
                .expect("builtin manifest is valid"),
            trader_preference: TRADER_PREFERENCE.trim().to_string(),
        }
    }

    /// Layers `dir/templates/*.html`, `dir/iframes/*.html`, `dir/manifest.toml`
    /// and `dir/trader_preference.txt` over the current library.
    pub fn with_overrides(mut self, dir: &Path) -> Result<Self, PromptError> {
        if !dir.is_dir() {
            return Err(PromptError::Io(format!(
                "{}: not a directory",
                dir.display()
            )));
        }
        self.templates
            .extend(read_dir_html(&dir.join("templates"))?);
        self.iframes.extend(read_dir_html(&dir.join("iframes"))?);
        let manifest = dir.join("manifest.toml");
        if manifest.exists() {
            let text = std::fs::read_to_string(&manifest)
                .map_err(|e| PromptError::Io(format!("{}: {e}", manifest.display())))?;
            self.schemas
                .extend(parse_manifest(&text, &manifest.display().to_string())?);
        }
        let pref = dir.join("trader_preference.txt");
        if pref.exists() {
            self.trader_preference = std::fs::read_to_string(&pref)
                .map_err(|e| PromptError::Io(format!("{}: {e}", pref.display())))?
                .trim()
                .to_string();
        }
        Ok(self)
    }

    pub fn template_names(&self) -> Vec<&str> {
        self.templates.keys().map(String::as_str).collect()
    }

    pub fn iframe_names(&self) -> Vec<&str> {
        self.iframes.keys().map(String::as_str).collect()
    }

    pub fn template_source(&self, name: &str) -> Option<&str> {
        self.templates.get(name).map(String::as_str)
    }

    pub fn set_iframe(&mut self, name: &str, source: &str) {
        self.iframes.insert(name.to_string(), source.to_string());
    }

    pub fn set_template(&mut self, name: &str, source: &str) {
        self.templates.insert(name.to_string(), source.to_string());
    }

    pub fn trader_preference(&self) -> &str {
        &self.trader_preference
    }

    pub fn template(&self, name: &str) -> Result<TemplateDoc, PromptError> {
        let src = self
            .templates
            .get(name)
            .ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))?;
        parse_template(name, src)
    }

    pub fn schema(&self, name: &str) -> Result<&OutputSchema, PromptError> {
        self.schemas
            .get(name)
            .ok_or_else(|| PromptError::Manifest(format!("no output schema for template `{name}`")))
    }

    /// Replaces every `<iframe name=...>` with the named iframe's content,
    /// recursively.
    pub fn resolve_iframes(&self, doc: &TemplateDoc) -> Result<TemplateDoc, PromptError> {
        let mut chain = vec![doc.name.clone()];
        Ok(TemplateDoc {
            name: doc.name.clone(),
            title: doc.title.clone(),
            nodes: self.resolve_nodes(&doc.nodes, &mut chain)?,
        })
    }

    fn resolve_nodes(
        &self,
        nodes: &[Node],
        chain: &mut Vec<String>,
    ) -> Result<Vec<Node>, PromptError> {
        let mut out = Vec::with_capacity(nodes.len());
        for n in nodes {
            match n {
                Node::Element(e) if e.tag == Tag::Iframe => {
                    let name = e.attr("name").unwrap_or_default().to_string();
                    if chain.contains(&name) {
                        chain.push(name);
                        return Err(PromptError::IframeCycle(chain.join(" -> ")));
                    }
                    let src =
                        self.iframes
                            .get(&name)
                            .ok_or_else(|| PromptError::MissingIframe {
                                name: name.clone(),
                                referenced_by: chain.last().cloned().unwrap_or_default(),
                            })?;
                    let inner = parse_template(&name, src)?;
                    chain.push(name);
                    out.extend(self.resolve_nodes(&inner.nodes, chain)?);
                    chain.pop();
                }
                Node::Element(e) => out.push(Node::Element(Element {
                    tag: e.tag,
                    attrs: e.attrs.clone(),
                    children: self.resolve_nodes(&e.children, chain)?,
                })),
                other => out.push(other.clone()),
            }
        }
        Ok(out)
    }
}
