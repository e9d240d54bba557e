//! Kline and trading charts rendered to SVG and PNG, each with a JSON sidecar
//! describing what was drawn.

mod raster;
pub mod scene;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{Action, Bar};
use crate::indicators;
use scene::{Anchor, Color, Scene, Shape, BLACK, BLUE, DARK, GREEN, GREY, LIGHT_GREY, RED, YELLOW};

#[derive(Debug, thiserror::Error)]
pub enum ChartError {
    #[error("nothing to draw")]
    Empty,
    #[error("today index {today} is outside the {len} available bars")]
    TodayOutOfRange { today: usize, len: usize },
    #[error("invalid chart spec: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartFormat {
    Svg,
    #[default]
    Png,
    Both,
}

impl ChartFormat {
    fn svg(self) -> bool {
        matches!(self, ChartFormat::Svg | ChartFormat::Both)
    }

    fn png(self) -> bool {
        matches!(self, ChartFormat::Png | ChartFormat::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartSpec {
    pub width: u32,
    pub height: u32,
    /// Bars shown up to and including today.
    pub past_window: usize,
    /// Bars shown after today, when they are available.
    pub future_window: usize,
}

impl Default for ChartSpec {
    fn default() -> Self {
        Self {
            width: 960,
            height: 560,
            past_window: 14,
            future_window: 0,
        }
    }
}

impl ChartSpec {
    pub fn validate(&self) -> Result<(), ChartError> {
        if self.width < 240 || self.height < 180 {
            return Err(ChartError::Spec(format!(
                "size {}x{} is below the 240x180 minimum",
                self.width, self.height
            )));
        }
        if self.past_window == 0 {
            return Err(ChartError::Spec("past window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineMeta {
    pub name: String,
    pub color: String,
    /// Points actually drawn (indicator warm-up excluded).
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerMeta {
    pub kind: String,
    pub shape: String,
    pub color: String,
    pub index: usize,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartMetadata {
    pub kind: String,
    pub width: u32,
    pub height: u32,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub today: NaiveDate,
    pub candles: usize,
    pub green_bodies: usize,
    pub red_bodies: usize,
    pub doji_bodies: usize,
    pub lines: Vec<LineMeta>,
    pub markers: Vec<MarkerMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub scene: Scene,
    pub metadata: ChartMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrittenChart {
    pub svg: Option<PathBuf>,
    pub png: Option<PathBuf>,
    pub meta: PathBuf,
}

impl WrittenChart {
    /// The file to attach to a prompt, preferring PNG.
    pub fn image(&self) -> &Path {
        self.png
            .as_deref()
            .or(self.svg.as_deref())
            .expect("at least one image format is written")
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ChartError> {
    std::fs::write(path, bytes).map_err(|source| ChartError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Chart {
    pub fn svg(&self) -> String {
        self.scene.to_svg()
    }

    pub fn png(&self) -> Vec<u8> {
        raster::to_png(&self.scene)
    }

    /// Writes `<stem>.svg` and/or `<stem>.png` plus `<stem>.meta.json` into `dir`.
    pub fn write(
        &self,
        dir: &Path,
        stem: &str,
        format: ChartFormat,
    ) -> Result<WrittenChart, ChartError> {
        std::fs::create_dir_all(dir).map_err(|source| ChartError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut out = WrittenChart {
            svg: None,
            png: None,
            meta: dir.join(format!("{stem}.meta.json")),
        };
        if format.svg() {
            let p = dir.join(format!("{stem}.svg"));
            write_file(&p, self.svg().as_bytes())?;
            out.svg = Some(p);
        }
        if format.png() {
            let p = dir.join(format!("{stem}.png"));
            write_file(&p, &self.png())?;
            out.png = Some(p);
        }
        let meta = serde_json::to_string_pretty(&self.metadata).expect("metadata serializes");
        write_file(&out.meta, format!("{meta}\n").as_bytes())?;
        Ok(out)
    }
}

/// Maps data coordinates into a plot rectangle.
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    slots: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn new(left: f64, top: f64, width: f64, height: f64, slots: usize, lo: f64, hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            let pad = (hi - lo) * 0.05;
            (lo - pad, hi + pad)
        } else {
            let pad = lo.abs().max(1.0) * 0.05;
            (lo - pad, hi + pad)
        };
        Self {
            left,
            top,
            width,
            height,
            slots,
            lo,
            hi,
        }
    }

    fn slot(&self) -> f64 {
        self.width / self.slots as f64
    }

    fn x(&self, i: usize) -> f64 {
        self.left + (i as f64 + 0.5) * self.slot()
    }

    fn y(&self, v: f64) -> f64 {
        self.top + (self.hi - v) / (self.hi - self.lo) * self.height
    }

    fn axes(&self, scene: &mut Scene, dates: &[NaiveDate], label: impl Fn(f64) -> String) {
        let bottom = self.top + self.height;
        for k in 0..=4 {
            let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
            let y = self.y(v);
            scene.push(Shape::Line {
                x1: self.left,
                y1: y,
                x2: self.left + self.width,
                y2: y,
                stroke: LIGHT_GREY,
                width: 1.0,
                dashed: false,
            });
            scene.text(self.left - 6.0, y + 4.0, label(v), 11.0, Anchor::End);
        }
        scene.push(Shape::Line {
            x1: self.left,
            y1: bottom,
            x2: self.left + self.width,
            y2: bottom,
            stroke: BLACK,
            width: 1.0,
            dashed: false,
        });
        scene.push(Shape::Line {
            x1: self.left,
            y1: self.top,
            x2: self.left,
            y2: bottom,
            stroke: BLACK,
            width: 1.0,
            dashed: false,
        });
        let step = dates.len().div_ceil(6).max(1);
        for (i, d) in dates.iter().enumerate() {
            if i % step == 0 || i + 1 == dates.len() && i % step > step / 2 {
                scene.text(
                    self.x(i),
                    bottom + 16.0,
                    d.format("%Y-%m-%d").to_string(),
                    10.0,
                    Anchor::Middle,
                );
            }
        }
    }
}

fn polyline_segments(
    scene: &mut Scene,
    frame: &Frame,
    values: &[Option<f64>],
    color: Color,
) -> usize {
    let mut drawn = 0;
    let mut run: Vec<(f64, f64)> = Vec::new();
    let flush = |scene: &mut Scene, run: &mut Vec<(f64, f64)>| {
        if run.len() >= 2 {
            scene.push(Shape::Polyline {
                points: std::mem::take(run),
                stroke: color,
                width: 2.0,
            });
        } else if let Some(&(x, y)) = run.first() {
            scene.push(Shape::Circle {
                cx: x,
                cy: y,
                r: 2.0,
                fill: color,
            });
            run.clear();
        }
    };
    for (i, v) in values.iter().enumerate() {
        match v {
            Some(v) => {
                run.push((frame.x(i), frame.y(*v)));
                drawn += 1;
            }
            None => flush(scene, &mut run),
        }
    }
    flush(scene, &mut run);
    drawn
}

fn balloon(scene: &mut Scene, x: f64, tip_y: f64, color: Color) {
    let r = 7.0;
    let cy = tip_y - 16.0;
    scene.push(Shape::Polygon {
        points: vec![
            (x - r * 0.7, cy + r * 0.5),
            (x + r * 0.7, cy + r * 0.5),
            (x, tip_y),
        ],
        fill: color,
    });
    scene.push(Shape::Circle {
        cx: x,
        cy,
        r,
        fill: color,
    });
}

fn rhombus(scene: &mut Scene, x: f64, y: f64, color: Color) {
    let r = 7.0;
    scene.push(Shape::Polygon {
        points: vec![(x, y - r), (x + r, y), (x, y + r), (x - r, y)],
        fill: color,
    });
}

fn legend(scene: &mut Scene, x: f64, y: f64, items: &[(&str, Color)]) {
    let mut cx = x;
    for (name, color) in items {
        scene.push(Shape::Line {
            x1: cx,
            y1: y - 4.0,
            x2: cx + 18.0,
            y2: y - 4.0,
            stroke: *color,
            width: 3.0,
            dashed: false,
        });
        scene.text(cx + 22.0, y, *name, 11.0, Anchor::Start);
        cx += 36.0 + 7.0 * name.len() as f64;
    }
}

const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 40.0;

/// Candlestick chart of `bars[today]` and up to `past_window - 1` earlier bars
/// (plus `future_window` later bars when present), overlaid with MA5 and
/// Bollinger(20, 2) bands and a marker on today.
pub fn render_kline(
    symbol: &str,
    bars: &[Bar],
    today: usize,
    spec: &ChartSpec,
) -> Result<Chart, ChartError> {
    spec.validate()?;
    if bars.is_empty() {
        return Err(ChartError::Empty);
    }
    if today >= bars.len() {
        return Err(ChartError::TodayOutOfRange {
            today,
            len: bars.len(),
        });
    }
    let start = (today + 1).saturating_sub(spec.past_window);
    let end = (today + spec.future_window).min(bars.len() - 1);
    let history = &bars[..=end];
    let closes: Vec<f64> = history.iter().map(|b| b.close).collect();
    let ma5 = indicators::sma(&closes, 5).expect("window 5 is valid");
    let bb = indicators::bollinger(&closes, 20, 2.0).expect("window 20 is valid");
    let window = &bars[start..=end];
    let slice = |s: &indicators::IndicatorSeries| s.values[start..=end].to_vec();
    let (ma5, bbl, bbu) = (slice(&ma5), slice(&bb.lower), slice(&bb.upper));

    let mut lo = window.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
    let mut hi = window
        .iter()
        .map(|b| b.high)
        .fold(f64::NEG_INFINITY, f64::max);
    for v in ma5.iter().chain(&bbl).chain(&bbu).flatten() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let (w, h) = (spec.width as f64, spec.height as f64);
    let frame = Frame::new(
        MARGIN_LEFT,
        MARGIN_TOP,
        w - MARGIN_LEFT - MARGIN_RIGHT,
        h - MARGIN_TOP - MARGIN_BOTTOM,
        window.len(),
        lo,
        hi,
    );
    let mut scene = Scene::new(spec.width, spec.height);
    let dates: Vec<NaiveDate> = window.iter().map(|b| b.date).collect();
    scene.text(
        MARGIN_LEFT,
        22.0,
        format!("{symbol} KLINE {} TO {}", dates[0], dates[dates.len() - 1]),
        14.0,
        Anchor::Start,
    );
    legend(
        &mut scene,
        w - MARGIN_RIGHT - 250.0,
        22.0,
        &[("MA5", BLUE), ("BBL", GREEN), ("BBU", YELLOW)],
    );
    frame.axes(&mut scene, &dates, |v| format!("{v:.2}"));

    let (mut green, mut red, mut doji) = (0, 0, 0);
    let body_w = (frame.slot() * 0.6).max(1.0);
    for (i, b) in window.iter().enumerate() {
        let color = if b.close > b.open {
            green += 1;
            GREEN
        } else if b.close < b.open {
            red += 1;
            RED
        } else {
            doji += 1;
            GREY
        };
        let x = frame.x(i);
        scene.push(Shape::Line {
            x1: x,
            y1: frame.y(b.high),
            x2: x,
            y2: frame.y(b.low),
            stroke: color,
            width: 1.0,
            dashed: false,
        });
        let top = frame.y(b.open.max(b.close));
        let bottom = frame.y(b.open.min(b.close));
        scene.push(Shape::Rect {
            x: x - body_w / 2.0,
            y: top,
            w: body_w,
            h: (bottom - top).max(1.0),
            fill: color,
        });
    }
    let lines = vec![
        LineMeta {
            name: "MA5".into(),
            color: BLUE.name.into(),
            points: polyline_segments(&mut scene, &frame, &ma5, BLUE),
        },
        LineMeta {
            name: "BBL".into(),
            color: GREEN.name.into(),
            points: polyline_segments(&mut scene, &frame, &bbl, GREEN),
        },
        LineMeta {
            name: "BBU".into(),
            color: YELLOW.name.into(),
            points: polyline_segments(&mut scene, &frame, &bbu, YELLOW),
        },
    ];
    let ti = today - start;
    let tip = frame.y(window[ti].high) - 4.0;
    balloon(&mut scene, frame.x(ti), tip, GREY);

    Ok(Chart {
        scene,
        metadata: ChartMetadata {
            kind: "kline".into(),
            width: spec.width,
            height: spec.height,
            start_date: dates[0],
            end_date: dates[dates.len() - 1],
            today: window[ti].date,
            candles: window.len(),
            green_bodies: green,
            red_bodies: red,
            doji_bodies: doji,
            lines,
            markers: vec![MarkerMeta {
                kind: "today".into(),
                shape: "balloon".into(),
                color: GREY.name.into(),
                index: ti,
                date: window[ti].date,
            }],
        },
    })
}

/// One day of trading history for the trading chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradingPoint {
    pub date: NaiveDate,
    pub adj_close: f64,
    /// `V_t / V_0 - 1`.
    pub cumulative_return: f64,
    pub action: Action,
}

/// Two-panel chart: adjusted close with BUY/SELL markers on top, cumulative
/// return with a zero line below. Shows the last `past_window` points.
pub fn render_trading(
    symbol: &str,
    points: &[TradingPoint],
    spec: &ChartSpec,
) -> Result<Chart, ChartError> {
    spec.validate()?;
    if points.is_empty() {
        return Err(ChartError::Empty);
    }
    let start = points.len().saturating_sub(spec.past_window);
    let window = &points[start..];
    let dates: Vec<NaiveDate> = window.iter().map(|p| p.date).collect();
    let (w, h) = (spec.width as f64, spec.height as f64);
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let avail = h - MARGIN_TOP - MARGIN_BOTTOM - 36.0;
    let top_h = avail * 0.62;
    let bottom_top = MARGIN_TOP + top_h + 36.0;
    let bottom_h = avail - top_h;

    let price_lo = window
        .iter()
        .map(|p| p.adj_close)
        .fold(f64::INFINITY, f64::min);
    let price_hi = window
        .iter()
        .map(|p| p.adj_close)
        .fold(f64::NEG_INFINITY, f64::max);
    let top = Frame::new(
        MARGIN_LEFT,
        MARGIN_TOP,
        plot_w,
        top_h,
        window.len(),
        price_lo,
        price_hi,
    );
    let ret_lo = window
        .iter()
        .map(|p| p.cumulative_return)
        .fold(0.0, f64::min);
    let ret_hi = window
        .iter()
        .map(|p| p.cumulative_return)
        .fold(0.0, f64::max);
    let bottom = Frame::new(
        MARGIN_LEFT,
        bottom_top,
        plot_w,
        bottom_h,
        window.len(),
        ret_lo,
        ret_hi,
    );

    let mut scene = Scene::new(spec.width, spec.height);
    scene.text(
        MARGIN_LEFT,
        22.0,
        format!(
            "{symbol} TRADING {} TO {}",
            dates[0],
            dates[dates.len() - 1]
        ),
        14.0,
        Anchor::Start,
    );
    legend(
        &mut scene,
        w - MARGIN_RIGHT - 260.0,
        22.0,
        &[("ADJ CLOSE", DARK), ("BUY", GREEN), ("SELL", RED)],
    );
    top.axes(&mut scene, &[], |v| format!("{v:.2}"));
    bottom.axes(&mut scene, &dates, |v| format!("{:.1}%", v * 100.0));
    scene.text(
        MARGIN_LEFT,
        bottom_top - 8.0,
        "CUMULATIVE RETURN",
        11.0,
        Anchor::Start,
    );

    let prices: Vec<Option<f64>> = window.iter().map(|p| Some(p.adj_close)).collect();
    let rets: Vec<Option<f64>> = window.iter().map(|p| Some(p.cumulative_return)).collect();
    let price_points = polyline_segments(&mut scene, &top, &prices, DARK);
    scene.push(Shape::Line {
        x1: MARGIN_LEFT,
        y1: bottom.y(0.0),
        x2: MARGIN_LEFT + plot_w,
        y2: bottom.y(0.0),
        stroke: GREY,
        width: 1.0,
        dashed: true,
    });
    let ret_points = polyline_segments(&mut scene, &bottom, &rets, BLUE);

    let mut markers = Vec::new();
    for (i, p) in window.iter().enumerate() {
        let (x, y) = (top.x(i), top.y(p.adj_close));
        match p.action {
            Action::Buy => {
                rhombus(&mut scene, x, y, GREEN);
                markers.push(MarkerMeta {
                    kind: "buy".into(),
                    shape: "rhombus".into(),
                    color: GREEN.name.into(),
                    index: i,
                    date: p.date,
                });
            }
            Action::Sell => {
                balloon(&mut scene, x, y - 2.0, RED);
                markers.push(MarkerMeta {
                    kind: "sell".into(),
                    shape: "balloon".into(),
                    color: RED.name.into(),
                    index: i,
                    date: p.date,
                });
            }
            Action::Hold => {}
        }
    }

    Ok(Chart {
        scene,
        metadata: ChartMetadata {
            kind: "trading".into(),
            width: spec.width,
            height: spec.height,
            start_date: dates[0],
            end_date: dates[dates.len() - 1],
            today: dates[dates.len() - 1],
            candles: 0,
            green_bodies: 0,
            red_bodies: 0,
            doji_bodies: 0,
            lines: vec![
                LineMeta {
                    name: "ADJ_CLOSE".into(),
                    color: DARK.name.into(),
                    points: price_points,
                },
                LineMeta {
                    name: "CUMULATIVE_RETURN".into(),
                    color: BLUE.name.into(),
                    points: ret_points,
                },
            ],
            markers,
        },
    })
}

/// A named value curve for the equity chart.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    pub name: String,
    /// Value the cumulative return is measured against.
    pub initial: f64,
    pub points: Vec<(NaiveDate, f64)>,
}

const CURVE_COLORS: [Color; 5] = [BLUE, RED, GREEN, YELLOW, DARK];

/// Cumulative return of several runs on one shared date axis. A run missing a
/// date leaves a gap in its line. Every date is shown.
pub fn render_equity(curves: &[EquityCurve], spec: &ChartSpec) -> Result<Chart, ChartError> {
    spec.validate()?;
    let mut dates: Vec<NaiveDate> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .collect();
    dates.sort_unstable();
    dates.dedup();
    if dates.is_empty() {
        return Err(ChartError::Empty);
    }
    let aligned: Vec<Vec<Option<f64>>> = curves
        .iter()
        .map(|c| {
            let base = Some(c.initial).filter(|v| *v > 0.0);
            let mut out = vec![None; dates.len()];
            for (d, v) in &c.points {
                if let (Ok(i), Some(b)) = (dates.binary_search(d), base) {
                    out[i] = Some(v / b - 1.0);
                }
            }
            out
        })
        .collect();
    let all = aligned.iter().flatten().flatten();
    let lo = all.clone().fold(0.0, |a, &b| f64::min(a, b));
    let hi = all.fold(0.0, |a, &b| f64::max(a, b));
    let (w, h) = (spec.width as f64, spec.height as f64);
    let frame = Frame::new(
        MARGIN_LEFT,
        MARGIN_TOP,
        w - MARGIN_LEFT - MARGIN_RIGHT,
        h - MARGIN_TOP - MARGIN_BOTTOM,
        dates.len(),
        lo,
        hi,
    );
    let mut scene = Scene::new(spec.width, spec.height);
    scene.text(
        MARGIN_LEFT,
        22.0,
        format!(
            "CUMULATIVE RETURN {} TO {}",
            dates[0],
            dates[dates.len() - 1]
        ),
        14.0,
        Anchor::Start,
    );
    let names: Vec<(&str, Color)> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), CURVE_COLORS[i % CURVE_COLORS.len()]))
        .collect();
    legend(&mut scene, MARGIN_LEFT, 40.0, &names);
    frame.axes(&mut scene, &dates, |v| format!("{:.1}%", v * 100.0));
    scene.push(Shape::Line {
        x1: MARGIN_LEFT,
        y1: frame.y(0.0),
        x2: w - MARGIN_RIGHT,
        y2: frame.y(0.0),
        stroke: GREY,
        width: 1.0,
        dashed: true,
    });
    let mut lines = Vec::new();
    for (values, (name, color)) in aligned.iter().zip(&names) {
        let points = polyline_segments(&mut scene, &frame, values, *color);
        lines.push(LineMeta {
            name: name.to_string(),
            color: color.name.into(),
            points,
        });
    }
    Ok(Chart {
        scene,
        metadata: ChartMetadata {
            kind: "equity".into(),
            width: spec.width,
            height: spec.height,
            start_date: dates[0],
            end_date: dates[dates.len() - 1],
            today: dates[dates.len() - 1],
            candles: 0,
            green_bodies: 0,
            red_bodies: 0,
            doji_bodies: 0,
            lines,
            markers: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar(i: u64, open: f64, close: f64) -> Bar {
        Bar {
            date: NaiveDate::from_ymd_opt(2023, 1, 2).unwrap() + chrono::Days::new(i),
            open,
            high: open.max(close) + 1.0,
            low: open.min(close) - 1.0,
            close,
            adj_close: close,
            volume: 0.0,
        }
    }

    #[test]
    fn kline_counts_and_colors() {
        let bars: Vec<Bar> = (0..30)
            .map(|i| match i % 3 {
                0 => bar(i, 10.0, 11.0),
                1 => bar(i, 11.0, 10.0),
                _ => bar(i, 10.5, 10.5),
            })
            .collect();
        let spec = ChartSpec {
            past_window: 30,
            ..ChartSpec::default()
        };
        let c = render_kline("TEST", &bars, 29, &spec).unwrap();
        assert_eq!(c.metadata.candles, 30);
        assert_eq!(c.metadata.green_bodies, 10);
        assert_eq!(c.metadata.red_bodies, 10);
        assert_eq!(c.metadata.doji_bodies, 10);
        assert_eq!(c.metadata.lines[0].points, 26);
        assert_eq!(c.metadata.markers[0].index, 29);
    }

    #[test]
    fn single_bar_renders_without_indicators() {
        let c = render_kline("X", &[bar(0, 1.0, 1.0)], 0, &ChartSpec::default()).unwrap();
        assert_eq!(c.metadata.candles, 1);
        assert!(c.metadata.lines.iter().all(|l| l.points == 0));
        assert!(!c.png().is_empty());
    }

    #[test]
    fn bad_specs_rejected() {
        let b = [bar(0, 1.0, 1.0)];
        let tiny = ChartSpec {
            width: 10,
            ..ChartSpec::default()
        };
        assert!(render_kline("X", &b, 0, &tiny).is_err());
        assert!(render_kline("X", &b, 3, &ChartSpec::default()).is_err());
        assert!(render_trading("X", &[], &ChartSpec::default()).is_err());
    }

    #[test]
    fn trading_markers() {
        let pts: Vec<TradingPoint> = (0..5)
            .map(|i| TradingPoint {
                date: NaiveDate::from_ymd_opt(2023, 1, 2).unwrap() + chrono::Days::new(i),
                adj_close: 10.0 + i as f64,
                cumulative_return: i as f64 * 0.01,
                action: [
                    Action::Buy,
                    Action::Hold,
                    Action::Sell,
                    Action::Hold,
                    Action::Buy,
                ][i as usize],
            })
            .collect();
        let c = render_trading("X", &pts, &ChartSpec::default()).unwrap();
        let kinds: Vec<&str> = c.metadata.markers.iter().map(|m| m.kind.as_str()).collect();
        assert_eq!(kinds, ["buy", "sell", "buy"]);
        assert_eq!(c.metadata.markers[1].color, "red");
    }

    #[test]
    fn equity_aligns_runs_on_shared_dates() {
        let d = |i: u64| NaiveDate::from_ymd_opt(2023, 1, 2).unwrap() + chrono::Days::new(i);
        let a = EquityCurve {
            name: "a".into(),
            initial: 100.0,
            points: (0..5).map(|i| (d(i), 100.0 + i as f64)).collect(),
        };
        let b = EquityCurve {
            name: "b".into(),
            initial: 50.0,
            points: (2..7).map(|i| (d(i), 50.0)).collect(),
        };
        let c = render_equity(&[a, b], &ChartSpec::default()).unwrap();
        assert_eq!(c.metadata.start_date, d(0));
        assert_eq!(c.metadata.end_date, d(6));
        assert_eq!(
            c.metadata
                .lines
                .iter()
                .map(|l| l.points)
                .collect::<Vec<_>>(),
            [5, 5]
        );
        assert!(render_equity(&[], &ChartSpec::default()).is_err());
    }
}
