use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Buy,
    Hold,
    Sell,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Buy, Action::Hold, Action::Sell];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Buy => "BUY",
            Action::Hold => "HOLD",
            Action::Sell => "SELL",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action `{0}` (expected BUY, HOLD or SELL)")]
pub struct ParseActionError(pub String);

impl FromStr for Action {
    type Err = ParseActionError;

    /// Case-insensitive, surrounding whitespace and trailing punctuation ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cleaned = s
            .trim()
            .trim_matches(|c: char| c == '.' || c == '"' || c == '\'' || c == '*' || c == '`')
            .trim()
            .to_ascii_uppercase();
        match cleaned.as_str() {
            "BUY" => Ok(Action::Buy),
            "HOLD" => Ok(Action::Hold),
            "SELL" => Ok(Action::Sell),
            _ => Err(ParseActionError(s.trim().to_string())),
        }
    }
}

/// One daily OHLCV bar. `adj_close` is the execution and valuation price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    #[serde(default)]
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub date: NaiveDate,
    pub headline: String,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

impl Sentiment {
    pub fn label(self) -> &'static str {
        match self {
            Sentiment::Positive => "POSITIVE",
            Sentiment::Neutral => "NEUTRAL",
            Sentiment::Negative => "NEGATIVE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceItem {
    pub id: String,
    pub date: NaiveDate,
    pub headline: String,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Sentiment>,
}

/// Descriptive metadata about the traded asset, used to fill prompt templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMeta {
    pub symbol: String,
    pub name: String,
    #[serde(default = "default_asset_type")]
    pub asset_type: String,
    #[serde(default)]
    pub exchange: String,
    #[serde(default)]
    pub sector: String,
    #[serde(default)]
    pub industry: String,
    #[serde(default)]
    pub description: String,
}

fn default_asset_type() -> String {
    "company".to_string()
}

impl AssetMeta {
    pub fn template_params(&self) -> BTreeMap<String, String> {
        [
            ("asset_symbol", &self.symbol),
            ("asset_name", &self.name),
            ("asset_type", &self.asset_type),
            ("asset_exchange", &self.exchange),
            ("asset_sector", &self.sector),
            ("asset_industry", &self.industry),
            ("asset_description", &self.description),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
    }
}

/// Half-open calendar range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, DataError> {
        if start >= end {
            return Err(DataError::Range(format!(
                "start {start} is not before end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for DateRange {
    type Err = DataError;

    /// Accepts `YYYY-MM-DD..YYYY-MM-DD` or `YYYY-MM-DD~YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .or_else(|| s.split_once('~'))
            .ok_or_else(|| DataError::Range(format!("`{s}` is not START..END")))?;
        let parse = |x: &str| {
            NaiveDate::parse_from_str(x.trim(), "%Y-%m-%d")
                .map_err(|e| DataError::Range(format!("`{}`: {e}", x.trim())))
        };
        DateRange::new(parse(a)?, parse(b)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_parsing_is_lenient_about_case_and_punctuation() {
        assert_eq!("buy".parse::<Action>().unwrap(), Action::Buy);
        assert_eq!(" Sell. ".parse::<Action>().unwrap(), Action::Sell);
        assert_eq!("**HOLD**".parse::<Action>().unwrap(), Action::Hold);
        assert!("short".parse::<Action>().is_err());
    }

    #[test]
    fn range_parsing() {
        let r: DateRange = "2023-06-01..2024-01-01".parse().unwrap();
        assert!(r.contains(NaiveDate::from_ymd_opt(2023, 6, 1).unwrap()));
        assert!(!r.contains(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()));
        assert!("2024-01-01..2023-06-01".parse::<DateRange>().is_err());
        let r2: DateRange = "2022-06-01 ~ 2023-06-01".parse().unwrap();
        assert!(!r.overlaps(&r2));
    }
}
