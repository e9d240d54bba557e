//! Episodes over a date range, warmup, run-directory artifacts and resume.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::step::{run_step, DayContext, HistoryEntry};
use super::trace::{ExecutionTrace, MemoryWrite, StepTrace};
use super::{AgentConfig, AgentError};
use crate::data::{Action, Dataset, DateRange, TradingEnv};
use crate::hashing::{canonical_json, sha256_hex};
use crate::llm::Backend;
use crate::memory::{Memory, Namespace};
use crate::metrics::{MetricsReport, ValueSeries};
use crate::prompt::TemplateLibrary;
use crate::strategies::{tune, Params, StrategyKind, TuneConfig};

pub const TRADES_LOG: &str = "trades.log";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_SNAPSHOT: &str = "config.snapshot";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CALLS_LOG: &str = "calls.log";
pub(crate) const TRACE_DIR: &str = "trace";
pub(crate) const CHARTS_DIR: &str = "charts";
const RECORD_EXT: &str = "record";

/// Where and how an episode runs.
pub struct RunContext<'a> {
    pub dir: PathBuf,
    pub library: &'a TemplateLibrary,
    pub backend: &'a dyn Backend,
    /// Backend label recorded in the manifest, e.g. `scripted`.
    pub backend_mode: String,
    /// Command line that produced the run, recorded in the manifest.
    pub command: Vec<String>,
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: Vec<String>,
    pub config_hash: String,
    pub dataset_hash: String,
    pub range: String,
    pub toggles: String,
    pub backend: String,
    pub provenance: String,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| AgentError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| AgentError::io(&path, e))
    }
}

/// One line of `trades.log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRow {
    pub date: NaiveDate,
    pub action: Action,
    pub executed: Action,
    pub coerced: bool,
    pub price: f64,
    pub fee_paid: f64,
    pub cash: f64,
    pub position: f64,
    pub value: f64,
    pub reasoning_ref: String,
}

impl TradeRow {
    pub fn read_log(path: &Path) -> Result<Vec<TradeRow>, AgentError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| AgentError::io(path, e))?;
        rdr.deserialize()
            .collect::<Result<Vec<TradeRow>, _>>()
            .map_err(|e| AgentError::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub rows: Vec<TradeRow>,
    /// Initial cash followed by each day's post-trade value.
    pub values: Vec<f64>,
    pub metrics: MetricsReport,
    pub traces: Vec<StepTrace>,
    /// Days restored from an earlier partial run.
    pub resumed_days: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupOutcome {
    /// Strategy parameters tuned on the training range, by strategy id.
    pub tuned: BTreeMap<String, Params>,
    pub episode: EpisodeOutcome,
}

pub fn dataset_hash(ds: &Dataset) -> String {
    let v = json!({
        "asset": ds.asset,
        "bars": ds.bars,
        "news": ds.news,
        "guidance": ds.guidance,
    });
    sha256_hex(canonical_json(&v))
}

fn write(path: &Path, text: &str) -> Result<(), AgentError> {
    fs::write(path, text).map_err(|e| AgentError::io(path, e))
}

fn trace_path(dir: &Path, date: NaiveDate) -> PathBuf {
    dir.join(TRACE_DIR).join(format!("{date}.{RECORD_EXT}"))
}

fn write_trades(path: &Path, rows: &[TradeRow]) -> Result<(), AgentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| AgentError::io(path, e))?;
    }
    if rows.is_empty() {
        w.write_record([
            "date",
            "action",
            "executed",
            "coerced",
            "price",
            "fee_paid",
            "cash",
            "position",
            "value",
            "reasoning_ref",
        ])
        .map_err(|e| AgentError::io(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| AgentError::io(path, e))?;
    fs::write(path, bytes).map_err(|e| AgentError::io(path, e))
}

fn append_calls(path: &Path, trace: &StepTrace) -> Result<(), AgentError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| AgentError::io(path, e))?;
    for c in &trace.calls {
        for (i, key) in c.request_keys.iter().enumerate() {
            let usage = c.usage.get(i).copied().unwrap_or_default();
            let line = json!({
                "date": trace.date,
                "step": c.step,
                "template": c.template,
                "attempt": i + 1,
                "request_key": key,
                "provenance": c.provenance.get(i).map(|p| p.as_str()),
                "prompt_tokens": usage.prompt_tokens,
                "completion_tokens": usage.completion_tokens,
            });
            writeln!(f, "{line}").map_err(|e| AgentError::io(path, e))?;
        }
    }
    Ok(())
}

/// Request keys referenced by a run's `calls.log`.
pub fn referenced_keys(run_dir: &Path) -> Result<HashSet<String>, AgentError> {
    let path = run_dir.join(CALLS_LOG);
    let text = fs::read_to_string(&path).map_err(|e| AgentError::io(&path, e))?;
    let mut keys = HashSet::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| AgentError::io(&path, e))?;
        if let Some(k) = v["request_key"].as_str() {
            keys.insert(k.to_string());
        }
    }
    Ok(keys)
}

fn history_entry(t: &StepTrace) -> Result<HistoryEntry, AgentError> {
    let missing = || AgentError::Resume(format!("trace for {} is incomplete", t.date));
    let ex = t.execution.ok_or_else(missing)?;
    let d = t.decision.as_ref().ok_or_else(missing)?;
    Ok(HistoryEntry {
        date: t.date,
        adj_close: ex.price,
        value: ex.value,
        requested: d.action,
        executed: t.executed_action.ok_or_else(missing)?,
        reasoning: d.reasoning.clone(),
    })
}

fn trade_row(t: &StepTrace) -> Result<TradeRow, AgentError> {
    let h = history_entry(t)?;
    let ex = t.execution.expect("checked by history_entry");
    Ok(TradeRow {
        date: t.date,
        action: h.requested,
        executed: h.executed,
        coerced: t.coerced,
        price: ex.price,
        fee_paid: ex.fee_paid,
        cash: ex.cash,
        position: ex.position,
        value: ex.value,
        reasoning_ref: format!("{TRACE_DIR}/{}.{RECORD_EXT}", t.date),
    })
}

fn prepare_dir(
    dataset: &Dataset,
    range: &DateRange,
    config: &AgentConfig,
    ctx: &RunContext<'_>,
) -> Result<(), AgentError> {
    let dir = &ctx.dir;
    fs::create_dir_all(dir.join(TRACE_DIR)).map_err(|e| AgentError::io(dir, e))?;
    fs::create_dir_all(dir.join(CHARTS_DIR)).map_err(|e| AgentError::io(dir, e))?;
    let snapshot = config.to_toml();
    let config_hash = sha256_hex(&snapshot);
    let snap_path = dir.join(CONFIG_SNAPSHOT);
    if ctx.resume {
        let old = fs::read_to_string(&snap_path).map_err(|e| AgentError::io(&snap_path, e))?;
        if sha256_hex(&old) != config_hash {
            return Err(AgentError::Resume(
                "configuration differs from the interrupted run".into(),
            ));
        }
        return Ok(());
    }
    let has_records = fs::read_dir(dir.join(TRACE_DIR))
        .map_err(|e| AgentError::io(dir, e))?
        .filter_map(Result::ok)
        .any(|e| e.path().extension().is_some_and(|x| x == RECORD_EXT));
    if has_records {
        return Err(AgentError::Resume(format!(
            "{} already holds a run; pass resume or choose a new directory",
            dir.display()
        )));
    }
    let dataset_hash = dataset_hash(dataset);
    let manifest = RunManifest {
        run_id: sha256_hex(format!(
            "{config_hash}:{dataset_hash}:{range}:{}",
            ctx.backend_mode
        ))[..16]
            .to_string(),
        command: ctx.command.clone(),
        config_hash,
        dataset_hash,
        range: range.to_string(),
        toggles: config.toggles.to_string(),
        backend: ctx.backend_mode.clone(),
        provenance: format!("finagent-core {}", env!("CARGO_PKG_VERSION")),
    };
    write(&snap_path, &snapshot)?;
    write(
        &dir.join(MANIFEST_FILE),
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;
    let calls = dir.join(CALLS_LOG);
    write(&calls, "")
}

/// Runs one decision per trading day of `range`, writing traces, charts,
/// `trades.log`, `metrics.csv`, `calls.log`, `config.snapshot` and
/// `manifest.json` under `ctx.dir`. A failing day halts the run; its partial
/// trace is kept as `trace/DATE.failed` and its memory writes are undone.
pub fn run_episode(
    dataset: &Dataset,
    range: DateRange,
    config: &AgentConfig,
    memory: &mut Memory,
    ctx: &RunContext<'_>,
) -> Result<EpisodeOutcome, AgentError> {
    config.validate()?;
    let mut env = TradingEnv::for_range(config.env, dataset, range)?;
    let offset = dataset.range_indices(&range).start;
    prepare_dir(dataset, &range, config, ctx)?;
    let dir = &ctx.dir;
    let charts_dir = dir.join(CHARTS_DIR);
    let trades_path = dir.join(TRADES_LOG);
    let initial = env.state().portfolio_value();

    let mut traces: Vec<StepTrace> = Vec::new();
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut rows: Vec<TradeRow> = Vec::new();
    let mut values = vec![initial];

    if ctx.resume {
        while !env.is_done() {
            let date = env.state().date;
            let path = trace_path(dir, date);
            if !path.exists() {
                break;
            }
            let text = fs::read_to_string(&path).map_err(|e| AgentError::io(&path, e))?;
            let t: StepTrace = serde_json::from_str(&text).map_err(|e| AgentError::io(&path, e))?;
            let h = history_entry(&t)?;
            let res = env.step(h.requested)?;
            if res.executed != h.executed || res.post_trade_value.to_bits() != h.value.to_bits() {
                return Err(AgentError::Resume(format!(
                    "{date}: replayed execution differs from the trace"
                )));
            }
            values.push(res.post_trade_value);
            rows.push(trade_row(&t)?);
            history.push(h);
            traces.push(t);
        }
        let written: HashSet<MemoryWrite> = traces
            .iter()
            .flat_map(|t| t.memory_writes.iter().cloned())
            .collect();
        memory.store.retain(|r| {
            !range.contains(r.date)
                || written.contains(&MemoryWrite {
                    namespace: r.namespace,
                    id: r.id.clone(),
                })
        })?;
        write_trades(&trades_path, &rows)?;
        log::info!(
            "resumed {} completed day(s) from {}",
            traces.len(),
            dir.display()
        );
    }
    let resumed_days = traces.len();

    while !env.is_done() {
        let state = env.state();
        let day = DayContext {
            dataset,
            index: offset + state.t,
            state,
            initial_value: initial,
            history: &history,
            charts_dir: &charts_dir,
            id_prefix: "",
        };
        let out = match run_step(&day, memory, ctx.library, ctx.backend, config) {
            Ok(out) => out,
            Err(failure) => {
                let path = dir.join(TRACE_DIR).join(format!("{}.failed", state.date));
                write(&path, &failure.trace.to_json())?;
                append_calls(&dir.join(CALLS_LOG), &failure.trace)?;
                let undo: HashSet<MemoryWrite> =
                    failure.trace.memory_writes.iter().cloned().collect();
                memory.store.retain(|r| {
                    !undo.contains(&MemoryWrite {
                        namespace: r.namespace,
                        id: r.id.clone(),
                    })
                })?;
                let step = failure.trace.steps.last().cloned().unwrap_or_default();
                return Err(AgentError::Step {
                    date: state.date,
                    step,
                    source: Box::new(failure.error),
                });
            }
        };
        let mut trace = out.trace;
        let res = env.step(out.decision.action)?;
        debug_assert_eq!(Some(res.executed), trace.executed_action);
        trace.execution = Some(ExecutionTrace {
            price: res.price,
            fee_paid: res.fee_paid,
            cash: res.cash,
            position: res.position,
            value: res.post_trade_value,
        });
        write(&trace_path(dir, state.date), &trace.to_json())?;
        append_calls(&dir.join(CALLS_LOG), &trace)?;
        values.push(res.post_trade_value);
        rows.push(trade_row(&trace)?);
        write_trades(&trades_path, &rows)?;
        history.push(history_entry(&trace)?);
        traces.push(trace);
    }

    let metrics = MetricsReport::compute(&ValueSeries::new(values.clone())?);
    write(&dir.join(METRICS_FILE), &metrics.to_csv())?;
    Ok(EpisodeOutcome {
        rows,
        values,
        metrics,
        traces,
        resumed_days,
    })
}

/// Tunes the auxiliary strategies on `train` and runs the workflow over it
/// with lagged reflections on, filling `memory`. Artifacts go to
/// `ctx.dir/warmup`. `train` must end on or before `test_start`.
pub fn warmup(
    dataset: &Dataset,
    train: DateRange,
    test_start: NaiveDate,
    config: &AgentConfig,
    memory: &mut Memory,
    ctx: &RunContext<'_>,
) -> Result<WarmupOutcome, AgentError> {
    if train.end > test_start {
        return Err(AgentError::Config(format!(
            "warmup range {train} overlaps the test range starting {test_start}"
        )));
    }
    let bars = dataset.bars_in(&train);
    let mut tuned = BTreeMap::new();
    for kind in [
        StrategyKind::Macd,
        StrategyKind::KdjRsi,
        StrategyKind::ZScore,
    ] {
        match tune(
            kind,
            bars,
            config.env,
            &kind.default_search_space(),
            TuneConfig::default(),
        ) {
            Ok(res) => {
                tuned.insert(kind.id().to_string(), res.best);
            }
            Err(e) => log::warn!("keeping default {} parameters: {e}", kind.id()),
        }
    }
    let mut warm_config = config.clone();
    warm_config.lagged_reflection = true;
    warm_config.reflection_lag = warm_config.reflection_lag.max(warm_config.horizons.long);
    for (k, v) in &tuned {
        warm_config.strategy_params.insert(k.clone(), v.clone());
    }
    let warm_ctx = RunContext {
        dir: ctx.dir.join("warmup"),
        library: ctx.library,
        backend: ctx.backend,
        backend_mode: ctx.backend_mode.clone(),
        command: ctx.command.clone(),
        resume: ctx.resume && ctx.dir.join("warmup").join(CONFIG_SNAPSHOT).exists(),
    };
    let episode = run_episode(dataset, train, &warm_config, memory, &warm_ctx)?;
    debug_assert!(Namespace::ALL.iter().all(|ns| memory
        .store
        .records(*ns)
        .iter()
        .all(|r| r.date < test_start)));
    Ok(WarmupOutcome { tuned, episode })
}
