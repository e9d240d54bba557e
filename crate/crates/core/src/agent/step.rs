//! One trading day of the agent workflow.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;

use super::trace::{
    CallTrace, Decision, HlrOutput, LlrOutput, MemoryWrite, StepTrace, ToolOutputs,
};
use super::{AgentConfig, AgentError};
use crate::charting::{render_kline, render_trading, ChartSpec, TradingPoint};
use crate::data::{valid_actions, Action, Bar, Dataset, EnvState, GuidanceItem, NewsItem};
use crate::llm::{complete_parsed, Backend, ChatRequest};
use crate::memory::{DiversifiedQuery, Memory, Namespace, RetrievalType, Retrieved};
use crate::prompt::{
    drop_sections, substitute, to_messages, OutputError, ParamValue, ParsedOutput, PromptParams,
    TemplateLibrary, MARKET_INTELLIGENCE_SECTIONS,
};
use crate::strategies::{Strategy, StrategyKind, TradeContext};

pub(crate) const STEP_KLINE: &str = "kline_chart";
pub(crate) const STEP_TOOLS: &str = "tools";
pub(crate) const STEP_LATEST_MI: &str = "01_latest_market_intelligence";
pub(crate) const STEP_RETRIEVE_MI: &str = "02_retrieve_past_market_intelligence";
pub(crate) const STEP_ADD_MI: &str = "03_add_market_intelligence";
pub(crate) const STEP_PAST_MI: &str = "04_past_market_intelligence";
pub(crate) const STEP_LLR: &str = "05_low_level_reflection";
pub(crate) const STEP_RETRIEVE_LLR: &str = "06_retrieve_past_low_level_reflection";
pub(crate) const STEP_ADD_LLR: &str = "07_add_low_level_reflection";
pub(crate) const STEP_LAGGED_LLR: &str = "07_lagged_low_level_reflection";
pub(crate) const STEP_TRADING: &str = "trading_chart";
pub(crate) const STEP_HLR: &str = "08_high_level_reflection";
pub(crate) const STEP_RETRIEVE_HLR: &str = "09_retrieve_past_high_level_reflection";
pub(crate) const STEP_ADD_HLR: &str = "10_add_high_level_reflection";
pub(crate) const STEP_DECISION: &str = "11_decision";

/// A completed day of the current episode, as seen by later days.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub date: NaiveDate,
    pub adj_close: f64,
    /// Portfolio value right after that day's trade.
    pub value: f64,
    pub requested: Action,
    pub executed: Action,
    pub reasoning: String,
}

/// Inputs for one day. `index` points into `dataset.bars`; nothing after it
/// is read except by the lagged reflection, which never looks past `index`.
pub struct DayContext<'a> {
    pub dataset: &'a Dataset,
    pub index: usize,
    pub state: EnvState,
    pub initial_value: f64,
    pub history: &'a [HistoryEntry],
    pub charts_dir: &'a Path,
    /// Prefix for chart file names and memory ids, e.g. `warmup-`.
    pub id_prefix: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub decision: Decision,
    pub trace: StepTrace,
}

/// A step error together with everything traced before it.
#[derive(Debug)]
pub struct StepFailure {
    pub error: AgentError,
    pub trace: Box<StepTrace>,
}

fn money(x: f64) -> String {
    format!("{x:.2}")
}

/// Price change between two bars, e.g. `an increase of 3.21% (from 100.00 on
/// 2023-01-02 to 103.21 on 2023-01-05)`.
pub fn describe_movement(bars: &[Bar], from: usize, to: usize) -> String {
    if from >= to {
        return "no change, as no earlier trading day is available".to_string();
    }
    let (a, b) = (&bars[from], &bars[to]);
    let pct = (b.adj_close / a.adj_close - 1.0) * 100.0;
    let head = if pct.abs() < 0.005 {
        "no change of 0.00%".to_string()
    } else if pct > 0.0 {
        format!("an increase of {pct:.2}%")
    } else {
        format!("a decrease of {:.2}%", -pct)
    };
    format!(
        "{head} (from {} on {} to {} on {})",
        money(a.adj_close),
        a.date,
        money(b.adj_close),
        b.date
    )
}

pub fn format_news(symbol: &str, items: &[&NewsItem]) -> String {
    if items.is_empty() {
        return format!("No market intelligence about {symbol} was published today.");
    }
    items
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut s = format!("{}. [{}] {}", i + 1, n.date, n.headline.trim());
            if !n.content.trim().is_empty() {
                s.push_str(&format!("\n   {}", n.content.trim()));
            }
            if let Some(src) = n.source.as_deref().filter(|s| !s.is_empty()) {
                s.push_str(&format!(" (source: {src})"));
            }
            s
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_guidance(items: &[&GuidanceItem]) -> String {
    if items.is_empty() {
        return "No professional investment guidance is available today.".to_string();
    }
    items
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut s = format!("{}. [{}] {}", i + 1, g.date, g.headline.trim());
            if !g.content.trim().is_empty() {
                s.push_str(&format!("\n   {}", g.content.trim()));
            }
            if let Some(sent) = g.sentiment {
                s.push_str(&format!("\n   Sentiment: {}", sent.label()));
            }
            s
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_hits(hits: &[Retrieved], empty: &str) -> String {
    if hits.is_empty() {
        return empty.to_string();
    }
    hits.iter()
        .enumerate()
        .map(|(i, h)| format!("{}. [{}] {}", i + 1, h.record.date, h.record.summary.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_grouped(groups: &BTreeMap<RetrievalType, Vec<Retrieved>>) -> String {
    if groups.values().all(Vec::is_empty) {
        return "No past market intelligence is available.".to_string();
    }
    groups
        .iter()
        .map(|(t, hits)| format!("{t}:\n{}", format_hits(hits, "(none)")))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_llr(o: &LlrOutput) -> String {
    format!(
        "Short-Term: {}\nMedium-Term: {}\nLong-Term: {}",
        o.short_term_reasoning.trim(),
        o.medium_term_reasoning.trim(),
        o.long_term_reasoning.trim()
    )
}

fn format_hlr(o: &HlrOutput) -> String {
    format!(
        "Reasoning: {}\nImprovement: {}\nSummary: {}",
        o.reasoning.trim(),
        o.improvement.trim(),
        o.summary.trim()
    )
}

fn format_previous(history: &[HistoryEntry], n: usize) -> String {
    let start = history.len().saturating_sub(n);
    let recent = &history[start..];
    if recent.is_empty() {
        return "No trading decisions have been made yet.".to_string();
    }
    recent
        .iter()
        .map(|h| {
            let exec = if h.executed == h.requested {
                String::new()
            } else {
                format!(" (executed as {})", h.executed)
            };
            format!(
                "{}: {}{exec}. Reasoning: {}",
                h.date,
                h.requested,
                h.reasoning.trim()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Rejects decision outputs whose action is not BUY, HOLD or SELL.
pub fn check_action(p: &ParsedOutput) -> Result<(), OutputError> {
    let raw = p.get("action");
    raw.parse::<Action>()
        .map(|_| ())
        .map_err(|_| OutputError::InvalidValue {
            field: "action".into(),
            value: raw.to_string(),
            reason: "expected one of BUY, HOLD, SELL".into(),
        })
}

/// Drives one day's calls and accumulates the trace.
struct Runner<'a> {
    library: &'a TemplateLibrary,
    backend: &'a dyn Backend,
    config: &'a AgentConfig,
    trace: StepTrace,
    params: PromptParams,
}

impl Runner<'_> {
    fn set(&mut self, key: &str, value: impl Into<ParamValue>) {
        self.params.insert(key.to_string(), value.into());
    }

    fn call(
        &mut self,
        step: &str,
        template: &str,
        disabled: &[&str],
        check: impl Fn(&ParsedOutput) -> Result<(), OutputError>,
    ) -> Result<ParsedOutput, AgentError> {
        self.trace.steps.push(step.to_string());
        let doc = self.library.template(template)?;
        let doc = drop_sections(&self.library.resolve_iframes(&doc)?, disabled);
        let sections = doc.section_classes();
        let messages = to_messages(&substitute(&doc, &self.params)?)?;
        let schema = self.library.schema(template)?.clone();
        let request = ChatRequest::new(messages).with_model(
            &self.config.model,
            self.config.temperature,
            self.config.max_tokens,
        );
        let mut call = CallTrace {
            step: step.to_string(),
            template: template.to_string(),
            sections,
            request_keys: Vec::new(),
            responses: Vec::new(),
            provenance: Vec::new(),
            usage: Vec::new(),
        };
        match complete_parsed(
            self.backend,
            &request,
            &schema,
            self.config.max_attempts,
            check,
        ) {
            Ok(done) => {
                call.request_keys = done.request_keys;
                call.responses = done.attempts;
                call.provenance = done.responses.iter().map(|r| r.provenance).collect();
                call.usage = done.responses.iter().map(|r| r.usage).collect();
                self.trace.calls.push(call);
                Ok(done.parsed)
            }
            Err(e) => {
                if let crate::llm::LlmError::ParseFailedAfterRetries { attempts, .. } = &e {
                    call.responses = attempts.clone();
                }
                self.trace.calls.push(call);
                Err(e.into())
            }
        }
    }

    fn note(&mut self, step: &str) {
        self.trace.steps.push(step.to_string());
    }

    fn write(&mut self, namespace: Namespace, id: String) {
        self.trace.memory_writes.push(MemoryWrite { namespace, id });
    }

    fn horizon_params(&mut self, bars: &[Bar], today: usize, with_next: Option<usize>) {
        let horizons = self.config.horizons;
        for (name, h) in horizons.named() {
            let from = today.saturating_sub(h);
            self.set(
                &format!("{name}_term_past_date_range"),
                (today - from).to_string(),
            );
            self.set(
                &format!("{name}_term_past_price_movement"),
                describe_movement(bars, from, today),
            );
            if let Some(last) = with_next {
                let to = (today + h).min(last);
                self.set(
                    &format!("{name}_term_next_date_range"),
                    (to - today).to_string(),
                );
                self.set(
                    &format!("{name}_term_next_price_movement"),
                    describe_movement(bars, today, to),
                );
            }
        }
    }
}

fn llr_from(p: &ParsedOutput) -> LlrOutput {
    LlrOutput {
        short_term_reasoning: p.get_in("reasoning", "short_term_reasoning").to_string(),
        medium_term_reasoning: p.get_in("reasoning", "medium_term_reasoning").to_string(),
        long_term_reasoning: p.get_in("reasoning", "long_term_reasoning").to_string(),
        query: p.get("query").to_string(),
    }
}

fn strategy_line(strategy: &Strategy, bars: &[Bar], ctx: &TradeContext) -> String {
    let s = strategy.signal(bars, ctx);
    format!("Decision: {}. Explanation: {}", s.action, s.explanation)
}

fn strategy_for(config: &AgentConfig, kind: StrategyKind) -> Result<Strategy, AgentError> {
    Ok(match config.strategy_params.get(kind.id()) {
        Some(p) => Strategy::from_params(kind, p)?,
        None => Strategy::default_for(kind),
    })
}

/// Runs the day's workflow and returns the decision with its trace. Invalid
/// actions are coerced to HOLD; the environment step is left to the caller.
pub fn run_step(
    ctx: &DayContext<'_>,
    memory: &mut Memory,
    library: &TemplateLibrary,
    backend: &dyn Backend,
    config: &AgentConfig,
) -> Result<StepOutput, StepFailure> {
    let date = ctx.dataset.bars[ctx.index].date;
    let mut runner = Runner {
        library,
        backend,
        config,
        trace: StepTrace::new(date, config.toggles),
        params: PromptParams::new(),
    };
    match step_inner(ctx, memory, &mut runner) {
        Ok(decision) => Ok(StepOutput {
            decision,
            trace: runner.trace,
        }),
        Err(error) => Err(StepFailure {
            error,
            trace: Box::new(runner.trace),
        }),
    }
}

fn step_inner(
    ctx: &DayContext<'_>,
    memory: &mut Memory,
    r: &mut Runner<'_>,
) -> Result<Decision, AgentError> {
    let config = r.config;
    let toggles = config.toggles;
    let disabled = toggles.disabled_sections();
    let ds = ctx.dataset;
    let bars = &ds.bars[..=ctx.index];
    let today = &ds.bars[ctx.index];
    let date = today.date;
    let symbol = ds.asset.symbol.clone();
    let pre = ctx.id_prefix;
    let k = config.top_k;

    for (key, v) in ds.asset.template_params() {
        r.set(&key, v);
    }
    r.set("date", date.to_string());
    r.set(
        "trader_preference",
        config
            .trader_preference
            .clone()
            .unwrap_or_else(|| r.library.trader_preference().to_string()),
    );
    r.set(
        "previous_action_look_back_days",
        config.look_back_days.to_string(),
    );

    if toggles.low_level_reflection {
        r.note(STEP_KLINE);
        let chart = render_kline(&symbol, bars, ctx.index, &config.chart)?;
        let written = chart.write(
            ctx.charts_dir,
            &format!("{pre}kline_{date}"),
            config.chart_format,
        )?;
        r.trace.kline_chart = Some(relative_chart(ctx.charts_dir, written.image()));
        r.set("kline_path", written.image().to_path_buf());
    }

    if toggles.tools {
        r.note(STEP_TOOLS);
        let tc = TradeContext::from(&ctx.state);
        let tools = ToolOutputs {
            strategy1: strategy_line(&strategy_for(config, StrategyKind::Macd)?, bars, &tc),
            strategy2: strategy_line(&strategy_for(config, StrategyKind::KdjRsi)?, bars, &tc),
            strategy4: strategy_line(&strategy_for(config, StrategyKind::ZScore)?, bars, &tc),
            guidance: format_guidance(&ds.guidance_on(date)),
        };
        r.set("strategy1", tools.strategy1.clone());
        r.set("strategy2", tools.strategy2.clone());
        r.set("strategy4", tools.strategy4.clone());
        r.set("guidance", tools.guidance.clone());
        r.trace.tools = Some(tools);
    }

    if toggles.market_intelligence {
        let news = ds.news_on(date);
        r.set("latest_market_intelligence", format_news(&symbol, &news));
        let lmi = r.call(
            STEP_LATEST_MI,
            "latest_market_intelligence",
            &disabled,
            |_| Ok(()),
        )?;
        let summary = lmi.get("summary").to_string();
        let queries: BTreeMap<RetrievalType, String> = RetrievalType::HORIZONS
            .into_iter()
            .map(|t| {
                let h = t.horizon().expect("horizon type");
                (
                    t,
                    lmi.get_in("query", &format!("{h}_term_query")).to_string(),
                )
            })
            .collect();
        r.trace.latest_market_intelligence_summary = Some(summary.clone());
        r.trace.latest_market_intelligence_queries = Some(
            queries
                .iter()
                .map(|(t, q)| (t.as_str().to_string(), q.clone()))
                .collect(),
        );
        r.set("latest_market_intelligence_summary", summary.clone());

        r.note(STEP_RETRIEVE_MI);
        let dq = DiversifiedQuery::new(queries.clone(), k)?;
        let groups = memory.diversified_retrieve(Namespace::MarketIntelligence, &dq, date)?;
        r.trace.retrieved.insert(
            STEP_RETRIEVE_MI.to_string(),
            groups
                .values()
                .flatten()
                .map(|h| h.record.id.clone())
                .collect(),
        );
        let past_listing = format_grouped(&groups);

        r.note(STEP_ADD_MI);
        if !news.is_empty() {
            for (t, q) in &queries {
                let h = t.horizon().expect("horizon type");
                let id = memory.add_text(
                    Namespace::MarketIntelligence,
                    &format!("{pre}mi-{date}-{h}"),
                    date,
                    &summary,
                    q,
                    *t,
                )?;
                r.write(Namespace::MarketIntelligence, id);
            }
        }

        let spmi = if toggles.low_level_reflection {
            r.set("past_market_intelligence", past_listing);
            let pmi = r.call(STEP_PAST_MI, "past_market_intelligence", &disabled, |_| {
                Ok(())
            })?;
            pmi.get("summary").to_string()
        } else {
            past_listing
        };
        r.trace.past_market_intelligence_summary = Some(spmi.clone());
        r.set("past_market_intelligence_summary", spmi);
    }

    if toggles.low_level_reflection {
        r.horizon_params(bars, ctx.index, None);
        let out = r.call(STEP_LLR, "low_level_reflection", &disabled, |_| Ok(()))?;
        let llr = llr_from(&out);
        let latest = format_llr(&llr);
        r.set("latest_low_level_reflection", latest.clone());

        r.note(STEP_RETRIEVE_LLR);
        let hits = memory.retrieve(Namespace::LowLevelReflection, &llr.query, k, None, date)?;
        r.trace.retrieved.insert(
            STEP_RETRIEVE_LLR.to_string(),
            hits.iter().map(|h| h.record.id.clone()).collect(),
        );
        r.set(
            "past_low_level_reflection",
            format_hits(&hits, "No past analysis of price movements is available."),
        );

        r.note(STEP_ADD_LLR);
        let id = memory.add_text(
            Namespace::LowLevelReflection,
            &format!("{pre}llr-{date}"),
            date,
            &latest,
            &llr.query,
            RetrievalType::Untyped,
        )?;
        r.write(Namespace::LowLevelReflection, id);
        r.trace.low_level_reflection = Some(llr);

        if config.lagged_reflection && ctx.index >= config.reflection_lag {
            lagged_reflection(ctx, memory, r)?;
        }
    }

    if toggles.high_level_reflection {
        r.note(STEP_TRADING);
        let mut points: Vec<TradingPoint> = ctx
            .history
            .iter()
            .map(|h| TradingPoint {
                date: h.date,
                adj_close: h.adj_close,
                cumulative_return: h.value / ctx.initial_value - 1.0,
                action: h.executed,
            })
            .collect();
        points.push(TradingPoint {
            date,
            adj_close: today.adj_close,
            cumulative_return: ctx.state.portfolio_value() / ctx.initial_value - 1.0,
            action: Action::Hold,
        });
        let spec = ChartSpec {
            past_window: config.chart.past_window.max(config.look_back_days + 1),
            ..config.chart
        };
        let chart = render_trading(&symbol, &points, &spec)?;
        let written = chart.write(
            ctx.charts_dir,
            &format!("{pre}trading_{date}"),
            config.chart_format,
        )?;
        r.trace.trading_chart = Some(relative_chart(ctx.charts_dir, written.image()));
        r.set("trading_path", written.image().to_path_buf());
        r.set(
            "previous_action_and_reasoning",
            format_previous(ctx.history, config.look_back_days),
        );

        let out = r.call(STEP_HLR, "high_level_reflection", &disabled, |_| Ok(()))?;
        let hlr = HlrOutput {
            reasoning: out.get("reasoning").to_string(),
            improvement: out.get("improvement").to_string(),
            summary: out.get("summary").to_string(),
            query: out.get("query").to_string(),
        };
        let latest = format_hlr(&hlr);
        r.set("latest_high_level_reflection", latest.clone());

        r.note(STEP_RETRIEVE_HLR);
        let hits = memory.retrieve(Namespace::HighLevelReflection, &hlr.query, k, None, date)?;
        r.trace.retrieved.insert(
            STEP_RETRIEVE_HLR.to_string(),
            hits.iter().map(|h| h.record.id.clone()).collect(),
        );
        r.set(
            "past_high_level_reflection",
            format_hits(
                &hits,
                "No past reflections on trading decisions are available.",
            ),
        );

        r.note(STEP_ADD_HLR);
        let id = memory.add_text(
            Namespace::HighLevelReflection,
            &format!("{pre}hlr-{date}"),
            date,
            &latest,
            &hlr.query,
            RetrievalType::Untyped,
        )?;
        r.write(Namespace::HighLevelReflection, id);
        r.trace.high_level_reflection = Some(hlr);
    }

    let state = ctx.state;
    let allowed = valid_actions(state.cash, state.position, state.price);
    r.set("cash", money(state.cash));
    r.set("position", format!("{:.4}", state.position));
    r.set("adj_close", money(state.price));
    r.set("valid_actions", allowed.to_string());
    r.trace.valid_actions = allowed.to_string();

    let template = if toggles.only_tools() {
        "strategy_router"
    } else {
        "decision"
    };
    let out = r.call(STEP_DECISION, template, &disabled, check_action)?;
    let action: Action = out.get("action").parse().expect("checked");
    let decision = Decision {
        analysis: out.get("analysis").to_string(),
        action,
        reasoning: out.get("reasoning").to_string(),
    };
    let executed = if allowed.contains(action) {
        action
    } else {
        Action::Hold
    };
    r.trace.executed_action = Some(executed);
    r.trace.coerced = executed != action;
    r.trace.decision = Some(decision.clone());
    Ok(decision)
}

/// Re-reflects the day `reflection_lag` trading days back, now that its
/// next windows have been realized, and stores the result.
fn lagged_reflection(
    ctx: &DayContext<'_>,
    memory: &mut Memory,
    r: &mut Runner<'_>,
) -> Result<(), AgentError> {
    let config = r.config;
    let j = ctx.index - config.reflection_lag;
    let ds = ctx.dataset;
    let bars = &ds.bars[..=ctx.index];
    let day = ds.bars[j].date;
    let spec = ChartSpec {
        future_window: config.horizons.long,
        ..config.chart
    };
    let chart = render_kline(&ds.asset.symbol, bars, j, &spec)?;
    let written = chart.write(
        ctx.charts_dir,
        &format!("{}kline_next_{day}", ctx.id_prefix),
        config.chart_format,
    )?;

    let saved = r.params.clone();
    r.set("kline_path", written.image().to_path_buf());
    r.set("date", day.to_string());
    r.horizon_params(bars, j, Some(ctx.index));
    let mut disabled = config.toggles.disabled_sections();
    disabled.extend_from_slice(MARKET_INTELLIGENCE_SECTIONS);
    let out = r.call(
        STEP_LAGGED_LLR,
        "low_level_reflection_with_next",
        &disabled,
        |_| Ok(()),
    );
    r.params = saved;
    let llr = llr_from(&out?);

    let id = memory.add_text(
        Namespace::LowLevelReflection,
        &format!("{}llr-next-{day}", ctx.id_prefix),
        day,
        &format_llr(&llr),
        &llr.query,
        RetrievalType::Untyped,
    )?;
    r.write(Namespace::LowLevelReflection, id);
    r.trace.lagged_low_level_reflection = Some((day, llr));
    Ok(())
}

fn relative_chart(dir: &Path, file: &Path) -> String {
    let name = file.file_name().unwrap_or_default().to_string_lossy();
    match dir.file_name() {
        Some(d) => format!("{}/{name}", d.to_string_lossy()),
        None => name.into_owned(),
    }
}
