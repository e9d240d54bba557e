use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use finagent_core::data::{
    load_asset, load_guidance, load_news, load_prices, Dataset, ASSET_FILE, GUIDANCE_FILE,
    NEWS_FILE, PRICES_FILE,
};
use finagent_core::hashing::sha256_hex;
use serde_json::json;

use crate::error::io_err;
use crate::{CliError, Outcome};

pub const CHECKSUMS_FILE: &str = "checksums.json";

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory holding prices.csv, news.jsonl, guidance.jsonl and asset.toml.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Daily price CSV (date, open, high, low, close, adj close, volume).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// News as JSON lines.
    #[arg(long)]
    news: Option<PathBuf>,
    /// Expert guidance as JSON lines.
    #[arg(long)]
    guidance: Option<PathBuf>,
    /// Asset description (TOML).
    #[arg(long)]
    asset: Option<PathBuf>,
    /// Bundle directory to write.
    #[arg(long)]
    out: PathBuf,
}

/// Explicit flags win over files found under `--from`. Optional files that
/// are absent from `--from` are skipped.
fn resolve(
    explicit: &Option<PathBuf>,
    from: &Option<PathBuf>,
    name: &str,
    required: bool,
) -> Result<Option<PathBuf>, CliError> {
    if let Some(p) = explicit {
        return Ok(Some(p.clone()));
    }
    match from {
        Some(dir) if required || dir.join(name).exists() => Ok(Some(dir.join(name))),
        _ if required => Err(CliError::Usage(format!(
            "no input for {name}: pass --from or the matching file flag"
        ))),
        _ => Ok(None),
    }
}

fn write(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    sums: &mut BTreeMap<String, String>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    sums.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("item serializes"));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn run(args: &Args) -> Result<Outcome, CliError> {
    let prices = resolve(&args.prices, &args.from, PRICES_FILE, true)?.expect("required");
    let asset = resolve(&args.asset, &args.from, ASSET_FILE, true)?.expect("required");
    let news = resolve(&args.news, &args.from, NEWS_FILE, false)?;
    let guidance = resolve(&args.guidance, &args.from, GUIDANCE_FILE, false)?;

    // Every file is checked so one run reports all problems.
    let mut diagnostics = Vec::new();
    let bars = load_prices(&prices)
        .map_err(|e| diagnostics.push(e.to_string()))
        .ok();
    let meta = load_asset(&asset)
        .map_err(|e| diagnostics.push(e.to_string()))
        .ok();
    let news_items = match &news {
        Some(p) => load_news(p)
            .map_err(|e| diagnostics.push(e.to_string()))
            .ok(),
        None => Some(Vec::new()),
    };
    let guidance_items = match &guidance {
        Some(p) => load_guidance(p)
            .map_err(|e| diagnostics.push(e.to_string()))
            .ok(),
        None => Some(Vec::new()),
    };
    let (Some(bars), Some(meta), Some(news_items), Some(guidance_items)) =
        (bars, meta, news_items, guidance_items)
    else {
        return Err(CliError::Runtime(format!(
            "ingest failed:\n  {}",
            diagnostics.join("\n  ")
        )));
    };
    if bars.is_empty() {
        return Err(CliError::Runtime(format!(
            "{}: no price rows",
            prices.display()
        )));
    }

    let ds = Dataset::new(meta, bars, news_items, guidance_items);
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let mut sums = BTreeMap::new();
    let mut w = csv::Writer::from_writer(Vec::new());
    for b in &ds.bars {
        w.serialize(b)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let price_bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&args.out, PRICES_FILE, &price_bytes, &mut sums)?;
    write(&args.out, NEWS_FILE, &jsonl(&ds.news), &mut sums)?;
    write(&args.out, GUIDANCE_FILE, &jsonl(&ds.guidance), &mut sums)?;
    let asset_text = toml::to_string(&ds.asset).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&args.out, ASSET_FILE, asset_text.as_bytes(), &mut sums)?;
    let sums_path = args.out.join(CHECKSUMS_FILE);
    let text = serde_json::to_string_pretty(&sums).expect("map serializes") + "\n";
    fs::write(&sums_path, text).map_err(|e| io_err(&sums_path, e))?;

    let unattached = ds.unattached_news();
    if unattached > 0 {
        log::warn!("{unattached} news items fall after the last trading day and are ignored");
    }
    let first = ds.bars[0].date;
    let last = ds.bars[ds.bars.len() - 1].date;
    let mut text = format!(
        "bundle {}: {} bars {first}..={last}, {} news, {} guidance\n",
        args.out.display(),
        ds.bars.len(),
        ds.news.len(),
        ds.guidance.len()
    );
    for (name, sum) in &sums {
        text.push_str(&format!("  {sum}  {name}\n"));
    }
    Ok(Outcome {
        text,
        json: json!({
            "bundle": args.out,
            "symbol": ds.asset.symbol,
            "bars": ds.bars.len(),
            "first_date": first,
            "last_date": last,
            "news": ds.news.len(),
            "guidance": ds.guidance.len(),
            "unattached_news": unattached,
            "checksums": sums,
        }),
    })
}
