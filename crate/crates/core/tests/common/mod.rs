#![allow(dead_code)]

use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use finagent_core::data::{AssetMeta, Bar, Dataset, DateRange, GuidanceItem, NewsItem, Sentiment};
use finagent_core::memory::{HashEmbedder, Memory, MemoryStore, DEFAULT_DIM};

pub fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Weekdays starting at `start`.
pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut day = start;
    while out.len() < n {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day += Duration::days(1);
    }
    out
}

pub fn bars_from_closes(start: NaiveDate, closes: &[f64]) -> Vec<Bar> {
    trading_days(start, closes.len())
        .into_iter()
        .zip(closes)
        .enumerate()
        .map(|(i, (date, &c))| {
            let open = if i == 0 { c } else { closes[i - 1] };
            Bar {
                date,
                open,
                high: open.max(c) * 1.01,
                low: open.min(c) * 0.99,
                close: c,
                adj_close: c,
                volume: 1_000_000.0 + 1000.0 * i as f64,
            }
        })
        .collect()
}

pub fn asset() -> AssetMeta {
    AssetMeta {
        symbol: "SYN".into(),
        name: "Synthetic Devices Inc.".into(),
        asset_type: "company".into(),
        exchange: "NASDAQ".into(),
        sector: "Technology".into(),
        industry: "Semiconductors".into(),
        description: "A synthetic chip maker used for offline tests.".into(),
    }
}

/// `n` trading days from 2023-01-02 with a gentle oscillating uptrend, one
/// news item per day and guidance every fifth day.
pub fn dataset(n: usize) -> Dataset {
    let closes: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64;
            100.0 + 0.3 * x + 4.0 * (x / 3.0).sin()
        })
        .collect();
    let bars = bars_from_closes(d("2023-01-02"), &closes);
    let news = bars
        .iter()
        .enumerate()
        .map(|(i, b)| NewsItem {
            id: format!("n{i:03}"),
            date: b.date,
            headline: format!("Synthetic Devices update number {i}"),
            content: format!(
                "Day {i}: orders {} expectations.",
                if i % 2 == 0 { "beat" } else { "miss" }
            ),
            source: Some("wire".into()),
        })
        .collect();
    let guidance = bars
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 5 == 0)
        .map(|(i, b)| GuidanceItem {
            id: format!("g{i:03}"),
            date: b.date,
            headline: format!("Analyst note {i}"),
            content: "Maintain rating.".into(),
            sentiment: Some(Sentiment::Neutral),
        })
        .collect();
    Dataset::new(asset(), bars, news, guidance)
}

/// The half-open range covering bars `from..to` of `ds`.
pub fn range(ds: &Dataset, from: usize, to: usize) -> DateRange {
    let end = if to < ds.bars.len() {
        ds.bars[to].date
    } else {
        ds.bars.last().unwrap().date + Duration::days(1)
    };
    DateRange::new(ds.bars[from].date, end).unwrap()
}

pub fn memory() -> Memory {
    Memory::new(
        MemoryStore::new(DEFAULT_DIM),
        Arc::new(HashEmbedder::default()),
    )
    .unwrap()
}

pub fn memory_at(dir: &std::path::Path) -> Memory {
    Memory::new(
        MemoryStore::open(dir, DEFAULT_DIM).unwrap(),
        Arc::new(HashEmbedder::default()),
    )
    .unwrap()
}

/// An accelerating decline for 40 bars, then a steady rise for 40. The
/// acceleration keeps the MACD line strictly under its signal line until the
/// regime turns.
pub fn two_regime_closes() -> Vec<f64> {
    let bottom = 120.0 - 0.01 * 39.0 * 39.0;
    (0..80)
        .map(|i| {
            let x = i as f64;
            if i < 40 {
                120.0 - 0.01 * x * x
            } else {
                bottom + 0.8 * (x - 39.0)
            }
        })
        .collect()
}

/// A value for every placeholder of `template`: text slots get
/// `<<key>>`, image slots get `image`.
pub fn full_params(
    lib: &finagent_core::prompt::TemplateLibrary,
    template: &str,
    image: &std::path::Path,
) -> (finagent_core::prompt::PromptParams, usize) {
    use finagent_core::prompt::{Node, ParamValue};
    fn walk(nodes: &[Node], images: &mut Vec<String>) {
        for n in nodes {
            match n {
                Node::ImageSlot(k) => images.push(k.clone()),
                Node::Element(e) => walk(&e.children, images),
                _ => {}
            }
        }
    }
    let doc = lib
        .resolve_iframes(&lib.template(template).unwrap())
        .unwrap();
    let mut images = Vec::new();
    walk(&doc.nodes, &mut images);
    let params = doc
        .placeholders()
        .into_iter()
        .map(|k| {
            let v = if images.contains(&k) {
                ParamValue::Image(image.to_path_buf())
            } else {
                ParamValue::Text(format!("<<{k}>>"))
            };
            (k, v)
        })
        .collect();
    (params, images.len())
}

/// A schema-conforming parse where every leaf reads `value of <path>`.
pub fn sample_output(
    schema: &finagent_core::prompt::OutputSchema,
) -> finagent_core::prompt::ParsedOutput {
    use finagent_core::prompt::{OutputValue, ParsedOutput, SchemaField};
    let values = schema
        .fields
        .iter()
        .map(|f| match f {
            SchemaField::String(n) if n == "action" => {
                (n.clone(), OutputValue::String("BUY".into()))
            }
            SchemaField::String(n) => (n.clone(), OutputValue::String(format!("value of {n}"))),
            SchemaField::Map { name, children } => (
                name.clone(),
                OutputValue::Map(
                    children
                        .iter()
                        .map(|c| (c.clone(), format!("value of {name}.{c}")))
                        .collect(),
                ),
            ),
        })
        .collect();
    ParsedOutput { values }
}

/// Twenty ways a model might wrap a valid `<output>` block.
pub fn adversarial_wrappings(xml: &str) -> Vec<String> {
    let spaced = xml.replace("><", ">\n   \n\t<");
    let escaped = xml.replace('<', "&lt;").replace('>', "&gt;");
    let draft = "<output><string name=\"analysis\">draft</string>";
    vec![
        xml.to_string(),
        format!("Here is my analysis of the situation.\n\n{xml}"),
        format!("{xml}\n\nLet me know if you need anything else."),
        format!("Sure! Based on the data:\n{xml}\nThat concludes it."),
        format!("```xml\n{xml}\n```"),
        format!("```\n{xml}\n```"),
        spaced.clone(),
        format!("\n\n\n{spaced}\n\n\n"),
        xml.replace('\n', "\r\n"),
        format!("**Answer:**\n\n> {}", xml.replace('\n', " ")),
        escaped,
        format!("{draft}\nActually, here is the final version:\n{xml}"),
        format!("Note that the price < 100 and volume > 1M.\n{xml}"),
        format!("<response>\n{xml}\n</response>"),
        format!("\u{feff}{xml}"),
        format!("Résumé · 市场分析 ✓\n{xml}"),
        xml.replace(
            "<output>",
            "<output>\n<string name=\"extra_field\">ignored</string>",
        ),
        format!("1. Gather data\n2. Decide\n\n```xml\n{spaced}\n```\n"),
        xml.replace("<output>", "<OUTPUT>")
            .replace("</output>", "</OUTPUT>"),
        format!("{}{xml}", "thinking... ".repeat(200)),
    ]
}

fn blank(mut p: finagent_core::prompt::ParsedOutput) -> finagent_core::prompt::ParsedOutput {
    use finagent_core::prompt::OutputValue;
    for v in p.values.values_mut() {
        match v {
            OutputValue::String(s) => s.clear(),
            OutputValue::Map(m) => m.values_mut().for_each(String::clear),
        }
    }
    p
}

/// Ten responses that must be rejected against `schema`.
pub fn malformed_responses(schema: &finagent_core::prompt::OutputSchema) -> Vec<String> {
    use finagent_core::prompt::render_output;
    let good = render_output(&sample_output(schema), schema);
    let inner_open = good.find("<string").unwrap();
    let leaf_name = inner_open + "<string name=\"".len();
    let leaf_len = good[leaf_name..].find('"').unwrap();
    vec![
        String::new(),
        "I think you should buy.".into(),
        "{\"analysis\": \"json instead\", \"action\": \"BUY\"}".into(),
        format!(
            "{}renamed{}",
            &good[..leaf_name],
            &good[leaf_name + leaf_len..]
        ),
        good[..good.len() / 2].to_string(),
        good.replace("<output>", "<result>")
            .replace("</output>", "</result>"),
        "<output></output>".into(),
        format!("<output>{}</output>", &good[inner_open..inner_open + 10]),
        render_output(&blank(sample_output(schema)), schema),
        "```xml\n<!-- no fields -->\n```".into(),
    ]
}
