use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use finagent_core::agent::{referenced_keys, CALLS_LOG};
use finagent_core::llm::ReplayCache;
use serde_json::{json, Value};

use crate::error::io_err;
use crate::{CliError, Outcome};

#[derive(clap::Args, Debug)]
#[command(group(clap::ArgGroup::new("action").required(true).args(["inspect", "prune"])))]
pub struct Args {
    /// List cached request keys.
    #[arg(long, value_name = "CACHE_DIR")]
    inspect: Option<PathBuf>,
    /// Delete unreadable entries and, with `--run`, entries no run references.
    #[arg(long, value_name = "CACHE_DIR")]
    prune: Option<PathBuf>,
    /// Run directory to check against the cache (inspect) or whose calls
    /// must stay cached (prune). Repeatable.
    #[arg(long = "run", value_name = "RUN_DIR")]
    runs: Vec<PathBuf>,
}

fn count_images(request: &Value) -> usize {
    let mut n = 0;
    if let Some(msgs) = request["messages"].as_array() {
        for m in msgs {
            if let Some(parts) = m["parts"].as_array() {
                n += parts.iter().filter(|p| p["type"] == "image").count();
            }
        }
    }
    n
}

pub fn run(args: &Args) -> Result<Outcome, CliError> {
    if let Some(dir) = &args.inspect {
        return inspect(dir, &args.runs);
    }
    let dir = args.prune.as_ref().expect("clap enforces one action");
    let cache = ReplayCache::open(dir)?;
    let keep = if args.runs.is_empty() {
        None
    } else {
        let mut keys = HashSet::new();
        for run in &args.runs {
            keys.extend(referenced_keys(run)?);
        }
        Some(keys)
    };
    let removed = cache.prune(keep.as_ref())?;
    let (left, _) = cache.list()?;
    let mut text = format!(
        "pruned {} entries from {}, {} left\n",
        removed.len(),
        dir.display(),
        left.len()
    );
    for p in &removed {
        text.push_str(&format!("  removed {}\n", p.display()));
    }
    Ok(Outcome {
        text,
        json: json!({"cache": dir, "removed": removed, "remaining": left.len()}),
    })
}

/// Calls per trading day in a run's `calls.log`, and how many are cached.
fn coverage(run: &Path, cached: &HashSet<&str>) -> Result<(Value, String), CliError> {
    let path = run.join(CALLS_LOG);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut per_day: BTreeMap<String, usize> = BTreeMap::new();
    let (mut calls, mut hits) = (0, 0);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).map_err(|e| io_err(&path, e))?;
        *per_day
            .entry(v["date"].as_str().unwrap_or_default().to_string())
            .or_default() += 1;
        calls += 1;
        hits += v["request_key"]
            .as_str()
            .is_some_and(|k| cached.contains(k)) as usize;
    }
    let summary = format!(
        "  run {}: {calls} calls over {} days, {hits} cached\n",
        run.display(),
        per_day.len()
    );
    Ok((
        json!({"run": run, "calls": calls, "cached": hits, "calls_per_day": per_day}),
        summary,
    ))
}

fn inspect(dir: &Path, runs: &[PathBuf]) -> Result<Outcome, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Runtime(format!(
            "{}: not a cache directory",
            dir.display()
        )));
    }
    let (entries, bad) = ReplayCache::open(dir)?.list()?;
    let mut text = format!("{} cached responses in {}\n", entries.len(), dir.display());
    let mut rows = Vec::new();
    for e in &entries {
        let messages = e.request["messages"].as_array().map_or(0, Vec::len);
        let images = count_images(&e.request);
        let model = e.request["model"].as_str().unwrap_or("");
        text.push_str(&format!(
            "  {}  {model}  {messages} messages, {images} images, {} response chars\n",
            e.request_key,
            e.response.text.chars().count()
        ));
        rows.push(json!({
            "request_key": e.request_key,
            "model": model,
            "messages": messages,
            "images": images,
            "response_chars": e.response.text.chars().count(),
            "prompt_tokens": e.response.usage.prompt_tokens,
            "completion_tokens": e.response.usage.completion_tokens,
        }));
    }
    for p in &bad {
        text.push_str(&format!("  unreadable {}\n", p.display()));
    }
    let cached: HashSet<&str> = entries.iter().map(|e| e.request_key.as_str()).collect();
    let mut run_info = Vec::new();
    for run in runs {
        let (v, line) = coverage(run, &cached)?;
        text.push_str(&line);
        run_info.push(v);
    }
    Ok(Outcome {
        text,
        json: json!({"cache": dir, "entries": rows, "unreadable": bad, "runs": run_info}),
    })
}
