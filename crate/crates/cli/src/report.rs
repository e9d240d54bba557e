use std::fs;
use std::path::{Path, PathBuf};

use finagent_core::agent::{TradeRow, CONFIG_SNAPSHOT, TRADES_LOG};
use finagent_core::charting::{render_equity, ChartFormat, ChartSpec, EquityCurve};
use finagent_core::metrics::{Metric, MetricsReport, ValueSeries};
use serde_json::json;

use crate::backtest::metrics_json;
use crate::error::io_err;
use crate::{CliError, Outcome};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Run directories written by `finagent backtest`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for report.csv and the equity chart.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "svg")]
    chart_format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Svg,
    Png,
    Both,
}

struct Run {
    name: String,
    initial: f64,
    rows: Vec<TradeRow>,
    metrics: MetricsReport,
}

fn initial_cash(dir: &Path) -> Result<f64, CliError> {
    let path = dir.join(CONFIG_SNAPSHOT);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let v: toml::Table = toml::from_str(&text).map_err(|e| io_err(&path, e))?;
    v.get("env")
        .and_then(|e| e.get("initial_cash"))
        .and_then(|c| c.as_float().or_else(|| c.as_integer().map(|i| i as f64)))
        .ok_or_else(|| io_err(&path, "missing env.initial_cash"))
}

fn load(dir: &Path) -> Result<Run, CliError> {
    let initial = initial_cash(dir)?;
    let rows = TradeRow::read_log(&dir.join(TRADES_LOG))?;
    let mut values = vec![initial];
    values.extend(rows.iter().map(|r| r.value));
    let metrics = MetricsReport::compute(&ValueSeries::new(values).map_err(|e| io_err(dir, e))?);
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(Run {
        name,
        initial,
        rows,
        metrics,
    })
}

fn cell(m: Metric, decimals: usize) -> String {
    match m.value() {
        Some(v) => format!("{v:.decimals$}"),
        None => "n/a".into(),
    }
}

pub const HEADER: [&str; 7] = ["run", "ARR%", "SR", "MDD%", "SOR", "CR", "VOL"];

fn table_rows(runs: &[Run]) -> Vec<[String; 7]> {
    runs.iter()
        .map(|r| {
            let m = r.metrics.rows();
            [
                r.name.clone(),
                cell(m[0].display, 2),
                cell(m[1].display, 3),
                cell(m[2].display, 2),
                cell(m[3].display, 2),
                cell(m[4].display, 2),
                cell(m[5].display, 4),
            ]
        })
        .collect()
}

fn render_table(rows: &[[String; 7]]) -> String {
    let mut widths = HEADER.map(str::len);
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: [&str; 7]| {
        let mut s = format!("{:<w$}", cells[0], w = widths[0]);
        for (c, w) in cells.iter().zip(widths).skip(1) {
            s.push_str(&format!("  {c:>w$}"));
        }
        s + "\n"
    };
    let mut out = line(HEADER);
    for r in rows {
        out.push_str(&line(r.each_ref().map(String::as_str)));
    }
    out
}

pub fn run(args: &Args) -> Result<Outcome, CliError> {
    let runs = args
        .runs
        .iter()
        .map(|d| load(d))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = table_rows(&runs);
    let mut text = render_table(&rows);
    let mut chart = None;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for r in &rows {
            w.write_record(r)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        let path = out.join("report.csv");
        fs::write(
            &path,
            w.into_inner()
                .map_err(|e| CliError::Runtime(e.to_string()))?,
        )
        .map_err(|e| io_err(&path, e))?;
        let curves: Vec<EquityCurve> = runs
            .iter()
            .map(|r| EquityCurve {
                name: r.name.clone(),
                initial: r.initial,
                points: r.rows.iter().map(|t| (t.date, t.value)).collect(),
            })
            .collect();
        let format = match args.chart_format {
            Format::Svg => ChartFormat::Svg,
            Format::Png => ChartFormat::Png,
            Format::Both => ChartFormat::Both,
        };
        let written =
            render_equity(&curves, &ChartSpec::default())?.write(out, "equity", format)?;
        text.push_str(&format!(
            "wrote {} and {}\n",
            path.display(),
            written.image().display()
        ));
        chart = Some(written.image().to_path_buf());
    }
    Ok(Outcome {
        text,
        json: json!({
            "runs": runs.iter().map(|r| json!({
                "name": r.name,
                "days": r.rows.len(),
                "metrics": metrics_json(&r.metrics),
            })).collect::<Vec<_>>(),
            "chart": chart,
        }),
    })
}
