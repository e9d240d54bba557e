use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::ValueEnum;
use finagent_core::agent::{
    self, canned_backend, dataset_hash, AgentConfig, RunContext, RunManifest, Toggles, TradeRow,
    CONFIG_SNAPSHOT, MANIFEST_FILE, METRICS_FILE, TRADES_LOG,
};
use finagent_core::data::{Dataset, DateRange};
use finagent_core::hashing::sha256_hex;
use finagent_core::llm::{
    Backend, RemoteBackend, RemoteConfig, ReplayBackend, ReplayCache, ReplayMode, ScriptedBackend,
    UreqTransport, ENV_MODEL,
};
use finagent_core::memory::{HashEmbedder, Memory, MemoryStore, DEFAULT_DIM};
use finagent_core::metrics::{MetricsReport, ValueSeries};
use finagent_core::prompt::TemplateLibrary;
use finagent_core::strategies::{self, Params, Strategy, StrategyKind, TunedParams};
use serde_json::json;

use crate::error::io_err;
use crate::{CliError, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    Finagent,
    Bh,
    Macd,
    Kdjrsi,
    Zmr,
}

impl AgentKind {
    fn strategy(self) -> Option<StrategyKind> {
        match self {
            AgentKind::Finagent => None,
            AgentKind::Bh => Some(StrategyKind::BuyAndHold),
            AgentKind::Macd => Some(StrategyKind::Macd),
            AgentKind::Kdjrsi => Some(StrategyKind::KdjRsi),
            AgentKind::Zmr => Some(StrategyKind::ZScore),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    /// OpenAI-compatible chat completions; key from FINAGENT_API_KEY or OPENAI_API_KEY.
    Remote,
    /// Canned responses from `--script`, or fixed HOLD decisions without one.
    Scripted,
    /// Cached responses only; a miss is an error.
    Replay,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset bundle written by `finagent ingest`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "finagent")]
    agent: AgentKind,
    /// Test range START..END (end exclusive).
    #[arg(long)]
    range: DateRange,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Model backend for `--agent finagent`.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Scripted responses (TOML with `[[rules]]`) for `--backend scripted`.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Response cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Store every response in `--cache`; cached requests are not re-sent.
    #[arg(long)]
    record: bool,
    /// Enabled modules as a subset of MLHT, or `-` for none.
    #[arg(long)]
    toggles: Option<Toggles>,
    /// Training range used to tune tools and fill memory before the test range.
    #[arg(long)]
    warmup_range: Option<DateRange>,
    /// Continue an interrupted run in `--out`.
    #[arg(long)]
    resume: bool,
    /// Agent configuration (TOML). Flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tuned parameters written by `finagent tune`.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Memory directory; defaults to `<out>/memory`.
    #[arg(long)]
    memory: Option<PathBuf>,
    /// Proportional trading fee, e.g. 0.001.
    #[arg(long)]
    fee: Option<f64>,
    /// Starting cash
    #[arg(long)]
    cash: Option<f64>,
    /// Model name sent to the remote backend; FINAGENT_MODEL is the fallback.
    #[arg(long)]
    model: Option<String>,
}

fn load_config(args: &Args) -> Result<AgentConfig, CliError> {
    let mut config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            AgentConfig::from_toml(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => AgentConfig::default(),
    };
    if let Some(t) = args.toggles {
        config.toggles = t;
    }
    if let Some(f) = args.fee {
        config.env.fee_rate = f;
    }
    if let Some(c) = args.cash {
        config.env.initial_cash = c;
    }
    match (&args.model, std::env::var(ENV_MODEL)) {
        (Some(m), _) => config.model = m.clone(),
        (None, Ok(m)) if args.config.is_none() && !m.is_empty() => config.model = m,
        _ => {}
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn check_flags(args: &Args) -> Result<(), CliError> {
    let usage = |m: &str| Err(CliError::Usage(m.to_string()));
    if args.agent != AgentKind::Finagent {
        if args.backend.is_some() || args.script.is_some() || args.cache.is_some() || args.record {
            return usage(
                "--backend, --script, --cache and --record apply to --agent finagent only",
            );
        }
        if args.toggles.is_some()
            || args.warmup_range.is_some()
            || args.resume
            || args.memory.is_some()
        {
            return usage(
                "--toggles, --warmup-range, --resume and --memory apply to --agent finagent only",
            );
        }
        return Ok(());
    }
    let Some(backend) = args.backend else {
        return usage("--agent finagent needs --backend remote, scripted or replay");
    };
    if args.script.is_some() && backend != BackendKind::Scripted {
        return usage("--script needs --backend scripted");
    }
    if args.record && args.cache.is_none() {
        return usage("--record needs --cache");
    }
    if backend == BackendKind::Replay && (args.cache.is_none() || args.record) {
        return usage("--backend replay needs --cache and reads it without recording");
    }
    if args.cache.is_some() && !args.record && backend != BackendKind::Replay {
        return usage("--cache with a live backend needs --record");
    }
    Ok(())
}

fn remote_backend() -> Result<RemoteBackend, CliError> {
    let config = RemoteConfig::from_env();
    if config.api_key.is_none() {
        return Err(CliError::Usage(
            "the remote backend needs FINAGENT_API_KEY or OPENAI_API_KEY in the environment".into(),
        ));
    }
    Ok(RemoteBackend::new(
        Box::new(UreqTransport::new(Duration::from_secs(120))),
        config,
    ))
}

/// Builds the backend and the label recorded in the manifest.
fn build_backend(args: &Args) -> Result<(Box<dyn Backend>, String), CliError> {
    let kind = args.backend.expect("checked");
    let inner: Option<Box<dyn Backend>> = match kind {
        BackendKind::Remote => Some(Box::new(remote_backend()?)),
        BackendKind::Scripted => Some(match &args.script {
            Some(p) => Box::new(
                ScriptedBackend::from_toml_file(p).map_err(|e| CliError::Usage(e.to_string()))?,
            ),
            None => Box::new(canned_backend(&[])),
        }),
        BackendKind::Replay => None,
    };
    let name = kind
        .to_possible_value()
        .expect("not skipped")
        .get_name()
        .to_string();
    match (&args.cache, inner) {
        (Some(dir), Some(inner)) => {
            let cache = ReplayCache::open(dir)?;
            Ok((
                Box::new(ReplayBackend::new(cache, ReplayMode::Record(inner))),
                format!("{name}+record"),
            ))
        }
        (Some(dir), None) => Ok((
            Box::new(ReplayBackend::new(
                ReplayCache::open(dir)?,
                ReplayMode::Strict,
            )),
            name,
        )),
        (None, Some(inner)) => Ok((inner, name)),
        (None, None) => unreachable!("replay without a cache is rejected"),
    }
}

pub fn run(args: &Args, seed: u64, command: Vec<String>) -> Result<Outcome, CliError> {
    check_flags(args)?;
    let mut config = load_config(args)?;
    let ds = Dataset::load_bundle(&args.data)?;
    if ds.bars_in(&args.range).is_empty() {
        return Err(CliError::Runtime(format!(
            "no trading days in {}",
            args.range
        )));
    }
    let tuned = match &args.params {
        Some(p) => TunedParams::load(p)?,
        None => TunedParams::default(),
    };
    match args.agent.strategy() {
        Some(kind) => run_baseline(args, &ds, kind, &config, &tuned, command),
        None => {
            for kind in [
                StrategyKind::Macd,
                StrategyKind::KdjRsi,
                StrategyKind::ZScore,
            ] {
                if let Some(p) = tuned.find(&ds.asset.symbol, kind) {
                    config
                        .strategy_params
                        .entry(kind.id().to_string())
                        .or_insert_with(|| p.clone());
                }
            }
            run_agent(args, &ds, config, seed, command)
        }
    }
}

fn run_agent(
    args: &Args,
    ds: &Dataset,
    mut config: AgentConfig,
    seed: u64,
    command: Vec<String>,
) -> Result<Outcome, CliError> {
    let (backend, mode) = build_backend(args)?;
    let library = TemplateLibrary::builtin();
    let mem_dir = args
        .memory
        .clone()
        .unwrap_or_else(|| args.out.join("memory"));
    let store = MemoryStore::open(&mem_dir, DEFAULT_DIM)?;
    let mut memory = Memory::new(store, Arc::new(HashEmbedder::new(DEFAULT_DIM, seed)))?;
    let ctx = RunContext {
        dir: args.out.clone(),
        library: &library,
        backend: backend.as_ref(),
        backend_mode: mode.clone(),
        command,
        resume: args.resume,
    };
    let mut warm = None;
    if let Some(train) = args.warmup_range {
        if args.resume {
            log::info!(
                "resume: skipping warmup; memory is reused from {}",
                mem_dir.display()
            );
        } else {
            let w = agent::warmup(ds, train, args.range.start, &config, &mut memory, &ctx)?;
            for (id, p) in &w.tuned {
                config.strategy_params.insert(id.clone(), p.clone());
            }
            warm = Some(w);
        }
    }
    let outcome = agent::run_episode(ds, args.range, &config, &mut memory, &ctx)?;
    let calls: usize = outcome
        .traces
        .iter()
        .map(|t| t.calls.iter().map(|c| c.request_keys.len()).sum::<usize>())
        .sum();
    let mut text = summary(&args.out, "finagent", &outcome.rows, &outcome.metrics);
    text.push_str(&format!(
        "  toggles {}, backend {mode}, {calls} model calls, {} coerced orders\n",
        config.toggles,
        outcome.rows.iter().filter(|r| r.coerced).count()
    ));
    if outcome.resumed_days > 0 {
        text.push_str(&format!(
            "  resumed {} completed days\n",
            outcome.resumed_days
        ));
    }
    if let Some(w) = &warm {
        text.push_str(&format!(
            "  warmup over {} days; tuned {}\n",
            w.episode.rows.len(),
            w.tuned.keys().cloned().collect::<Vec<_>>().join(", ")
        ));
    }
    Ok(Outcome {
        text,
        json: json!({
            "run_dir": args.out,
            "agent": "finagent",
            "toggles": config.toggles.to_string(),
            "backend": mode,
            "days": outcome.rows.len(),
            "model_calls": calls,
            "resumed_days": outcome.resumed_days,
            "warmup_days": warm.as_ref().map(|w| w.episode.rows.len()),
            "metrics": metrics_json(&outcome.metrics),
            "final_value": outcome.values.last(),
        }),
    })
}

fn run_baseline(
    args: &Args,
    ds: &Dataset,
    kind: StrategyKind,
    config: &AgentConfig,
    tuned: &TunedParams,
    command: Vec<String>,
) -> Result<Outcome, CliError> {
    if args.out.join(MANIFEST_FILE).exists() {
        return Err(CliError::Runtime(format!(
            "{} already holds a run",
            args.out.display()
        )));
    }
    let params: Params = tuned
        .find(&ds.asset.symbol, kind)
        .or_else(|| config.strategy_params.get(kind.id()))
        .cloned()
        .unwrap_or_else(|| kind.default_params());
    let strategy =
        Strategy::from_params(kind, &params).map_err(|e| CliError::Usage(e.to_string()))?;

    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let snapshot = toml::to_string(&json!({
        "agent": kind.id(),
        "params": params,
        "env": config.env,
    }))
    .expect("snapshot serializes");
    let config_hash = sha256_hex(&snapshot);
    let data_hash = dataset_hash(ds);
    let manifest = RunManifest {
        run_id: sha256_hex(format!("{config_hash}:{data_hash}:{}:rules", args.range))[..16]
            .to_string(),
        command,
        config_hash,
        dataset_hash: data_hash,
        range: args.range.to_string(),
        toggles: "-".into(),
        backend: "rules".into(),
        provenance: format!("finagent-cli {}", env!("CARGO_PKG_VERSION")),
    };
    write(&args.out.join(CONFIG_SNAPSHOT), &snapshot)?;
    write(
        &args.out.join(MANIFEST_FILE),
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;

    let idx = ds.range_indices(&args.range);
    let bt = strategies::backtest_from(&strategy, &ds.bars[..idx.end], idx.start, config.env)?;
    let rows: Vec<TradeRow> = bt
        .steps
        .iter()
        .zip(&bt.signals)
        .map(|(s, sig)| TradeRow {
            date: s.date,
            action: s.requested,
            executed: s.executed,
            coerced: s.coerced,
            price: s.price,
            fee_paid: s.fee_paid,
            cash: s.cash,
            position: s.position,
            value: s.post_trade_value,
            reasoning_ref: sig.explanation.clone(),
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let trades_path = args.out.join(TRADES_LOG);
    fs::write(
        &trades_path,
        w.into_inner()
            .map_err(|e| CliError::Runtime(e.to_string()))?,
    )
    .map_err(|e| io_err(&trades_path, e))?;
    let metrics = MetricsReport::compute(&ValueSeries::new(bt.values.clone())?);
    write(&args.out.join(METRICS_FILE), &metrics.to_csv())?;

    Ok(Outcome {
        text: summary(&args.out, kind.id(), &rows, &metrics),
        json: json!({
            "run_dir": args.out,
            "agent": kind.id(),
            "params": params,
            "days": rows.len(),
            "metrics": metrics_json(&metrics),
            "final_value": bt.values.last(),
        }),
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn summary(dir: &Path, agent: &str, rows: &[TradeRow], m: &MetricsReport) -> String {
    let trades = rows
        .iter()
        .filter(|r| r.executed != finagent_core::data::Action::Hold)
        .count();
    let mut s = format!(
        "{agent}: {} days, {trades} trades -> {}\n",
        rows.len(),
        dir.display()
    );
    for r in m.rows() {
        s.push_str(&format!("  {:<5} {}\n", r.name, r.display));
    }
    s
}

pub fn metrics_json(m: &MetricsReport) -> serde_json::Value {
    m.rows()
        .into_iter()
        .map(|r| (r.name.to_string(), json!(r.display.value())))
        .collect::<serde_json::Map<_, _>>()
        .into()
}
