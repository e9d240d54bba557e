use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::NaiveDate;
use serde_json::Value;

use super::types::{AssetMeta, Bar, DateRange, GuidanceItem, NewsItem, Sentiment};
use super::DataError;

fn open(path: &Path) -> Result<std::fs::File, DataError> {
    std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn load_prices(path: &Path) -> Result<Vec<Bar>, DataError> {
    parse_prices(open(path)?, &label(path))
}

/// Parses a daily price CSV with columns date, open, high, low, close, adj_close
/// and an optional volume. Header names are matched case-insensitively and
/// `Adj Close` style spellings are accepted.
pub fn parse_prices<R: Read>(reader: R, file: &str) -> Result<Vec<Bar>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |row: usize, message: String| DataError::Parse {
        file: file.to_string(),
        row,
        message,
    };
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase().replace([' ', '-'], "_"))
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &'static str| {
        col(name).ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let (c_date, c_open, c_high, c_low, c_close) = (
        need("date")?,
        need("open")?,
        need("high")?,
        need("low")?,
        need("close")?,
    );
    let c_adj = col("adj_close").or_else(|| col("adjclose"));
    let c_vol = col("volume");

    let mut bars: Vec<Bar> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Data rows start on line 2.
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let num = |idx: usize, name: &'static str| -> Result<f64, DataError> {
            let s = field(idx);
            let v: f64 = s
                .parse()
                .map_err(|_| parse_err(row, format!("`{name}` is not a number: `{s}`")))?;
            if !v.is_finite() || v <= 0.0 {
                return Err(DataError::NonPositive {
                    file: file.to_string(),
                    row,
                    field: name,
                    value: v,
                });
            }
            Ok(v)
        };
        let date_s = field(c_date);
        let date =
            parse_date(date_s).ok_or_else(|| parse_err(row, format!("bad date `{date_s}`")))?;
        let open = num(c_open, "open")?;
        let high = num(c_high, "high")?;
        let low = num(c_low, "low")?;
        let close = num(c_close, "close")?;
        let adj_close = match c_adj {
            Some(c) => num(c, "adj_close")?,
            None => close,
        };
        let volume = match c_vol {
            Some(c) if !field(c).is_empty() => field(c)
                .parse()
                .map_err(|_| parse_err(row, format!("`volume` is not a number: `{}`", field(c))))?,
            _ => 0.0,
        };
        if low > high || open < low || open > high || close < low || close > high {
            return Err(DataError::Ohlc {
                file: file.to_string(),
                row,
                open,
                high,
                low,
                close,
            });
        }
        if let Some(prev) = bars.last() {
            if date <= prev.date {
                return Err(DataError::DateOrder {
                    file: file.to_string(),
                    row,
                    date,
                    previous: prev.date,
                });
            }
        }
        bars.push(Bar {
            date,
            open,
            high,
            low,
            close,
            adj_close,
            volume,
        });
    }
    Ok(bars)
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    // Accept a trailing time component, e.g. `2023-06-01 00:00:00`.
    let head = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

struct JsonLine {
    line: usize,
    value: serde_json::Map<String, Value>,
}

fn json_lines<R: Read>(reader: R, file: &str) -> Result<Vec<JsonLine>, DataError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DataError::Parse {
            file: file.to_string(),
            row: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            file: file.to_string(),
            row: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(value) = value else {
            return Err(DataError::Parse {
                file: file.to_string(),
                row: line_no,
                message: "expected a JSON object".into(),
            });
        };
        out.push(JsonLine {
            line: line_no,
            value,
        });
    }
    Ok(out)
}

fn str_field(
    obj: &serde_json::Map<String, Value>,
    key: &'static str,
    file: &str,
    line: usize,
) -> Result<String, DataError> {
    let missing = || DataError::MissingField {
        file: file.to_string(),
        line,
        field: key,
    };
    match obj.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(missing()),
    }
}

fn opt_str(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Some(s.clone()),
        _ => None,
    }
}

fn item_date(
    obj: &serde_json::Map<String, Value>,
    file: &str,
    line: usize,
) -> Result<NaiveDate, DataError> {
    let s = str_field(obj, "date", file, line)?;
    parse_date(&s).ok_or_else(|| DataError::Parse {
        file: file.to_string(),
        row: line,
        message: format!("bad date `{s}`"),
    })
}

pub fn load_news(path: &Path) -> Result<Vec<NewsItem>, DataError> {
    parse_news(open(path)?, &label(path))
}

/// Parses JSON-lines news. Items come back sorted by (date, id).
pub fn parse_news<R: Read>(reader: R, file: &str) -> Result<Vec<NewsItem>, DataError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for JsonLine { line, value } in json_lines(reader, file)? {
        let id = str_field(&value, "id", file, line)?;
        let date = item_date(&value, file, line)?;
        let headline = str_field(&value, "headline", file, line)?;
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId {
                file: file.to_string(),
                id,
            });
        }
        items.push(NewsItem {
            id,
            date,
            headline,
            content: opt_str(&value, "content").unwrap_or_default(),
            source: opt_str(&value, "source"),
        });
    }
    items.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
    Ok(items)
}

pub fn load_guidance(path: &Path) -> Result<Vec<GuidanceItem>, DataError> {
    parse_guidance(open(path)?, &label(path))
}

pub fn parse_guidance<R: Read>(reader: R, file: &str) -> Result<Vec<GuidanceItem>, DataError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for JsonLine { line, value } in json_lines(reader, file)? {
        let id = str_field(&value, "id", file, line)?;
        let date = item_date(&value, file, line)?;
        let headline = str_field(&value, "headline", file, line)?;
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId {
                file: file.to_string(),
                id,
            });
        }
        let sentiment = match opt_str(&value, "sentiment").map(|s| s.to_ascii_lowercase()) {
            None => None,
            Some(s) => Some(match s.as_str() {
                "positive" => Sentiment::Positive,
                "negative" => Sentiment::Negative,
                "neutral" => Sentiment::Neutral,
                other => {
                    return Err(DataError::Parse {
                        file: file.to_string(),
                        row: line,
                        message: format!("unknown sentiment `{other}`"),
                    })
                }
            }),
        };
        items.push(GuidanceItem {
            id,
            date,
            headline,
            content: opt_str(&value, "content").unwrap_or_default(),
            sentiment,
        });
    }
    items.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
    Ok(items)
}

pub fn load_asset(path: &Path) -> Result<AssetMeta, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| DataError::Parse {
        file: label(path),
        row: e
            .span()
            .map(|s| text[..s.start].lines().count().max(1))
            .unwrap_or(0),
        message: e.message().to_string(),
    })
}

/// Maps each trading day to the indices of the items attached to it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatedIndex {
    pub by_day: BTreeMap<NaiveDate, Vec<usize>>,
    /// Items dated after the last bar.
    pub unattached: Vec<usize>,
}

impl DatedIndex {
    pub fn on(&self, day: NaiveDate) -> &[usize] {
        self.by_day.get(&day).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Attaches each dated item to the first trading day on or after its date, so
/// weekend and holiday items roll forward to the next session.
pub fn attach_to_trading_days(item_dates: &[NaiveDate], bars: &[Bar]) -> DatedIndex {
    let mut index = DatedIndex::default();
    for (i, &d) in item_dates.iter().enumerate() {
        let pos = bars.partition_point(|b| b.date < d);
        match bars.get(pos) {
            Some(bar) => index.by_day.entry(bar.date).or_default().push(i),
            None => index.unattached.push(i),
        }
    }
    index
}

/// Prices, news and guidance for one asset, with news and guidance aligned to
/// trading days.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub asset: AssetMeta,
    pub bars: Vec<Bar>,
    pub news: Vec<NewsItem>,
    pub guidance: Vec<GuidanceItem>,
    news_index: DatedIndex,
    guidance_index: DatedIndex,
}

pub const PRICES_FILE: &str = "prices.csv";
pub const NEWS_FILE: &str = "news.jsonl";
pub const GUIDANCE_FILE: &str = "guidance.jsonl";
pub const ASSET_FILE: &str = "asset.toml";

impl Dataset {
    pub fn new(
        asset: AssetMeta,
        bars: Vec<Bar>,
        news: Vec<NewsItem>,
        guidance: Vec<GuidanceItem>,
    ) -> Self {
        let news_index =
            attach_to_trading_days(&news.iter().map(|n| n.date).collect::<Vec<_>>(), &bars);
        let guidance_index =
            attach_to_trading_days(&guidance.iter().map(|g| g.date).collect::<Vec<_>>(), &bars);
        Self {
            asset,
            bars,
            news,
            guidance,
            news_index,
            guidance_index,
        }
    }

    /// Loads a normalized bundle directory (`prices.csv`, `news.jsonl`,
    /// optional `guidance.jsonl`, `asset.toml`).
    pub fn load_bundle(dir: &Path) -> Result<Self, DataError> {
        let bars = load_prices(&dir.join(PRICES_FILE))?;
        let news_path = dir.join(NEWS_FILE);
        let news = if news_path.exists() {
            load_news(&news_path)?
        } else {
            Vec::new()
        };
        let g_path = dir.join(GUIDANCE_FILE);
        let guidance = if g_path.exists() {
            load_guidance(&g_path)?
        } else {
            Vec::new()
        };
        let asset = load_asset(&dir.join(ASSET_FILE))?;
        Ok(Self::new(asset, bars, news, guidance))
    }

    /// Index range of bars inside `range`.
    pub fn range_indices(&self, range: &DateRange) -> std::ops::Range<usize> {
        let lo = self.bars.partition_point(|b| b.date < range.start);
        let hi = self.bars.partition_point(|b| b.date < range.end);
        lo..hi
    }

    pub fn bars_in(&self, range: &DateRange) -> &[Bar] {
        &self.bars[self.range_indices(range)]
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.bars.binary_search_by(|b| b.date.cmp(&date)).ok()
    }

    pub fn news_on(&self, day: NaiveDate) -> Vec<&NewsItem> {
        self.news_index
            .on(day)
            .iter()
            .map(|&i| &self.news[i])
            .collect()
    }

    pub fn guidance_on(&self, day: NaiveDate) -> Vec<&GuidanceItem> {
        self.guidance_index
            .on(day)
            .iter()
            .map(|&i| &self.guidance[i])
            .collect()
    }

    pub fn unattached_news(&self) -> usize {
        self.news_index.unattached.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn parses_yahoo_style_headers() {
        let csv = "Date,Open,High,Low,Close,Adj Close,Volume\n\
                   2023-06-01,10,11,9,10.5,10.4,1000\n\
                   2023-06-02,10.5,12,10,11,10.9,1200\n";
        let bars = parse_prices(csv.as_bytes(), "p.csv").unwrap();
        assert_eq!(bars.len(), 2);
        assert_eq!(bars[1].adj_close, 10.9);
        assert_eq!(bars[0].volume, 1000.0);
    }

    #[test]
    fn rejects_out_of_order_dates() {
        let csv = "date,open,high,low,close,adj_close\n\
                   2023-06-02,10,11,9,10,10\n\
                   2023-06-01,10,11,9,10,10\n";
        match parse_prices(csv.as_bytes(), "p.csv") {
            Err(DataError::DateOrder { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_dates_and_bad_ohlc() {
        let dup = "date,open,high,low,close,adj_close\n\
                   2023-06-01,10,11,9,10,10\n\
                   2023-06-01,10,11,9,10,10\n";
        assert!(matches!(
            parse_prices(dup.as_bytes(), "p.csv"),
            Err(DataError::DateOrder { .. })
        ));
        let bad = "date,open,high,low,close,adj_close\n2023-06-01,10,9,11,10,10\n";
        assert!(matches!(
            parse_prices(bad.as_bytes(), "p.csv"),
            Err(DataError::Ohlc { row: 2, .. })
        ));
        let neg = "date,open,high,low,close,adj_close\n2023-06-01,10,11,9,10,-1\n";
        assert!(matches!(
            parse_prices(neg.as_bytes(), "p.csv"),
            Err(DataError::NonPositive {
                field: "adj_close",
                ..
            })
        ));
    }

    #[test]
    fn news_missing_headline_names_the_line() {
        let jsonl = "{\"id\":\"1\",\"date\":\"2023-06-01\",\"headline\":\"a\"}\n{\"id\":\"2\",\"date\":\"2023-06-02\"}\n";
        match parse_news(jsonl.as_bytes(), "news.jsonl") {
            Err(DataError::MissingField { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "headline");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weekend_news_rolls_forward() {
        let bars: Vec<Bar> = ["2023-06-02", "2023-06-05"]
            .iter()
            .map(|s| Bar {
                date: d(s),
                open: 1.0,
                high: 1.0,
                low: 1.0,
                close: 1.0,
                adj_close: 1.0,
                volume: 0.0,
            })
            .collect();
        // Saturday, Friday, and after the last bar.
        let idx =
            attach_to_trading_days(&[d("2023-06-03"), d("2023-06-02"), d("2023-06-07")], &bars);
        assert_eq!(idx.on(d("2023-06-05")), &[0]);
        assert_eq!(idx.on(d("2023-06-02")), &[1]);
        assert_eq!(idx.unattached, vec![2]);
    }
}
