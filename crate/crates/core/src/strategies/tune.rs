//! Deterministic grid (or seeded random) search over strategy parameters.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{backtest, Params, Strategy, StrategyError, StrategyKind};
use crate::data::{Bar, EnvConfig};
use crate::hashing::sha256_hex;
use crate::metrics::{self, ValueSeries};

/// Parameter name to the list of values to try.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace(pub BTreeMap<String, Vec<f64>>);

impl SearchSpace {
    pub fn size(&self) -> usize {
        self.0.values().map(Vec::len).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Arr,
    Sharpe,
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "arr" => Ok(Objective::Arr),
            "sharpe" | "sr" => Ok(Objective::Sharpe),
            _ => Err(format!("unknown objective `{s}` (expected arr or sharpe)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneConfig {
    pub objective: Objective,
    /// Grids larger than this are subsampled with a seeded RNG.
    pub max_candidates: usize,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Arr,
            max_candidates: 512,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub params: Params,
    /// `None` when the candidate is infeasible or its objective is undefined.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: Params,
    pub score: f64,
    pub evaluated: Vec<Evaluated>,
}

/// Cartesian product of the axes in lexicographic key order, the last key
/// varying fastest.
pub fn candidates(space: &SearchSpace) -> Result<Vec<Params>, StrategyError> {
    if space.0.is_empty() {
        return Err(StrategyError::EmptySearchSpace);
    }
    if let Some((k, _)) = space.0.iter().find(|(_, v)| v.is_empty()) {
        return Err(StrategyError::EmptyAxis(k.clone()));
    }
    let mut out = vec![Params::new()];
    for (k, values) in &space.0 {
        out = out
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(k.clone(), *v);
                    q
                })
            })
            .collect();
    }
    Ok(out)
}

fn score(
    kind: StrategyKind,
    params: &Params,
    bars: &[Bar],
    env: EnvConfig,
    objective: Objective,
) -> Option<f64> {
    let strategy = Strategy::from_params(kind, params).ok()?;
    let bt = backtest(&strategy, bars, env).ok()?;
    let series = ValueSeries::new(bt.values).ok()?;
    match objective {
        Objective::Arr => Some(metrics::arr(&series)),
        Objective::Sharpe => metrics::sharpe(&series).value(),
    }
}

/// Evaluates every candidate on `bars` and returns the best one. Ties go to
/// the earliest candidate in enumeration order.
pub fn tune(
    kind: StrategyKind,
    bars: &[Bar],
    env: EnvConfig,
    space: &SearchSpace,
    config: TuneConfig,
) -> Result<TuneResult, StrategyError> {
    let known = kind.default_params();
    if let Some(name) = space.0.keys().find(|k| !known.contains_key(*k)) {
        return Err(StrategyError::UnknownParam {
            strategy: kind.id(),
            name: name.clone(),
        });
    }
    if bars.len() < 2 {
        return Err(StrategyError::TooFewBars);
    }
    let mut all = candidates(space)?;
    if all.len() > config.max_candidates {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picked =
            rand::seq::index::sample(&mut rng, all.len(), config.max_candidates).into_vec();
        picked.sort_unstable();
        all = picked.into_iter().map(|i| all[i].clone()).collect();
    }
    let evaluated: Vec<Evaluated> = all
        .into_par_iter()
        .map(|params| Evaluated {
            score: score(kind, &params, bars, env, config.objective),
            params,
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in evaluated.iter().enumerate() {
        if let Some(s) = e.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    let (i, s) = best.ok_or(StrategyError::NoFeasibleCandidate)?;
    Ok(TuneResult {
        best: evaluated[i].params.clone(),
        score: s,
        evaluated,
    })
}

/// Short content hash of a training slice, used to key tuned parameters.
pub fn range_hash(bars: &[Bar]) -> String {
    let mut text = String::new();
    for b in bars {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.date, b.open, b.high, b.low, b.close, b.adj_close
        ));
    }
    sha256_hex(text)[..16].to_string()
}

/// Persisted tuning results keyed by `asset/strategy/train-range-hash`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    #[serde(default)]
    pub entries: BTreeMap<String, Params>,
}

impl TunedParams {
    pub fn key(asset: &str, kind: StrategyKind, train_hash: &str) -> String {
        format!("{asset}/{}/{train_hash}", kind.id())
    }

    pub fn load(path: &Path) -> Result<Self, StrategyError> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| StrategyError::ParamsFile(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| StrategyError::ParamsFile(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), StrategyError> {
        let text = toml::to_string(self).map_err(|e| StrategyError::ParamsFile(e.to_string()))?;
        std::fs::write(path, text)
            .map_err(|e| StrategyError::ParamsFile(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, key: &str) -> Option<&Params> {
        self.entries.get(key)
    }

    /// Returns the stored parameters for `asset`/`kind` regardless of the
    /// training hash, when exactly one entry exists.
    pub fn find(&self, asset: &str, kind: StrategyKind) -> Option<&Params> {
        let prefix = format!("{asset}/{}/", kind.id());
        let mut it = self.entries.iter().filter(|(k, _)| k.starts_with(&prefix));
        match (it.next(), it.next()) {
            (Some((_, p)), None) => Some(p),
            _ => None,
        }
    }
}
