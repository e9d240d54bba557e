//! Market data, news and guidance loading, plus the single-asset trading environment.

mod env;
mod load;
mod types;

pub use env::{execute, valid_actions, ActionSet, EnvConfig, EnvState, StepResult, TradingEnv};
pub use load::{
    attach_to_trading_days, load_asset, load_guidance, load_news, load_prices, parse_guidance,
    parse_news, parse_prices, Dataset, DatedIndex, ASSET_FILE, GUIDANCE_FILE, NEWS_FILE,
    PRICES_FILE,
};
pub use types::{Action, AssetMeta, Bar, DateRange, GuidanceItem, NewsItem, Sentiment};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: row {row}: {message}")]
    Parse {
        file: String,
        row: usize,
        message: String,
    },
    #[error("{file}: row {row}: date {date} does not follow {previous}")]
    DateOrder {
        file: String,
        row: usize,
        date: chrono::NaiveDate,
        previous: chrono::NaiveDate,
    },
    #[error("{file}: row {row}: {field} must be positive, got {value}")]
    NonPositive {
        file: String,
        row: usize,
        field: &'static str,
        value: f64,
    },
    #[error(
        "{file}: row {row}: inconsistent OHLC (low={low}, high={high}, open={open}, close={close})"
    )]
    Ohlc {
        file: String,
        row: usize,
        open: f64,
        high: f64,
        low: f64,
        close: f64,
    },
    #[error("{file}: line {line}: missing field `{field}`")]
    MissingField {
        file: String,
        line: usize,
        field: &'static str,
    },
    #[error("{file}: duplicate id `{id}`")]
    DuplicateId { file: String, id: String },
    #[error("invalid date range: {0}")]
    Range(String),
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("no trading days in range {0}")]
    EmptyRange(DateRange),
    #[error("episode is done")]
    Done,
    #[error("invalid environment config: {0}")]
    Config(String),
}
