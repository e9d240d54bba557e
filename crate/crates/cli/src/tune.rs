use std::fs;
use std::path::PathBuf;

use finagent_core::data::{Dataset, DateRange, EnvConfig};
use finagent_core::strategies::{
    self, Objective, SearchSpace, StrategyKind, TuneConfig, TunedParams,
};
use serde_json::json;

use crate::error::io_err;
use crate::{CliError, Outcome};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset bundle written by `finagent ingest`.
    #[arg(long)]
    data: PathBuf,
    /// macd, kdjrsi or zmr.
    #[arg(long)]
    strategy: StrategyKind,
    /// Training range START..END (end exclusive).
    #[arg(long)]
    range: DateRange,
    /// Search space as TOML, one array of values per parameter.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// arr or sharpe.
    #[arg(long, default_value = "arr")]
    objective: Objective,
    /// Grids above this size are subsampled with `--seed`.
    #[arg(long, default_value_t = 512)]
    max_candidates: usize,
    /// Proportional trading fee used while scoring candidates
    #[arg(long)]
    fee: Option<f64>,
    /// Parameters file to create or update.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: &Args, seed: u64) -> Result<Outcome, CliError> {
    let space = match &args.grid {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            toml::from_str::<SearchSpace>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => args.strategy.default_search_space(),
    };
    let mut env = EnvConfig::default();
    if let Some(f) = args.fee {
        env.fee_rate = f;
    }
    env.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = Dataset::load_bundle(&args.data)?;
    let bars = ds.bars_in(&args.range);
    let config = TuneConfig {
        objective: args.objective,
        max_candidates: args.max_candidates,
        seed,
    };
    let result =
        strategies::tune(args.strategy, bars, env, &space, config).map_err(|e| match e {
            strategies::StrategyError::UnknownParam { .. }
            | strategies::StrategyError::EmptySearchSpace
            | strategies::StrategyError::EmptyAxis(_) => CliError::Usage(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        })?;

    let mut file = TunedParams::load(&args.out)?;
    let key = TunedParams::key(
        &ds.asset.symbol,
        args.strategy,
        &strategies::range_hash(bars),
    );
    // One entry per asset and strategy, so `find` stays unambiguous.
    let prefix = format!("{}/{}/", ds.asset.symbol, args.strategy.id());
    file.entries.retain(|k, _| !k.starts_with(&prefix));
    file.entries.insert(key.clone(), result.best.clone());
    file.save(&args.out)?;

    let params = result
        .best
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    let feasible = result
        .evaluated
        .iter()
        .filter(|e| e.score.is_some())
        .count();
    Ok(Outcome {
        text: format!(
            "{} on {}: best {params} ({:?} {:.6}), {feasible}/{} candidates feasible -> {}\n",
            args.strategy,
            args.range,
            args.objective,
            result.score,
            result.evaluated.len(),
            args.out.display()
        ),
        json: json!({
            "strategy": args.strategy.id(),
            "key": key,
            "best": result.best,
            "score": result.score,
            "objective": args.objective,
            "candidates": result.evaluated.len(),
            "feasible": feasible,
            "params_file": args.out,
        }),
    })
}
