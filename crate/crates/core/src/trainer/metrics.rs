use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 12] = [
    "iteration",
    "env_steps",
    "mean_episode_return",
    "normalized_return",
    "value_loss",
    "clip_loss",
    "entropy_term",
    "branch_fraction_L1",
    "expected_ambiguity_mean",
    "persons_localized_rate",
    "false_detection_rate",
    "wall_time_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub env_steps: u64,
    pub mean_episode_return: f64,
    pub normalized_return: f64,
    pub value_loss: f64,
    pub clip_loss: f64,
    pub entropy_term: f64,
    #[serde(rename = "branch_fraction_L1")]
    pub branch_fraction_l1: f64,
    pub expected_ambiguity_mean: f64,
    pub persons_localized_rate: f64,
    pub false_detection_rate: f64,
    pub wall_time_s: f64,
}

/// Appends rows to a CSV stream, writing the header first.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        inner
            .write_record(METRICS_HEADER)
            .map_err(|e| Error::format("metrics csv", e.to_string()))?;
        Ok(Self { inner })
    }

    /// Writes and flushes one row.
    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner
            .serialize(row)
            .map_err(|e| Error::format("metrics csv", e.to_string()))?;
        self.inner.flush().map_err(|e| Error::io("writing metrics", e))
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = MetricsWriter::new(out)?;
    rows.iter().try_for_each(|r| w.write(r))
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected header {}", METRICS_HEADER.join(",")),
        });
    }
    r.deserialize::<MetricsRow>()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Ordinary least squares slope of `y` against `x`; zero when `x` is constant.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeReport {
    pub slope_a: f64,
    pub slope_b: f64,
    /// `slope_a / slope_b`; `None` when `slope_b` is zero.
    pub ratio: Option<f64>,
    /// Mean return over the last 10% of each series.
    pub terminal_mean_a: f64,
    pub terminal_mean_b: f64,
    pub terminal_difference: f64,
}

impl std::fmt::Display for SlopeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "slope_a,slope_b,ratio,terminal_mean_a,terminal_mean_b,terminal_difference")?;
        let ratio = self.ratio.map_or_else(|| "undefined".to_string(), |r| r.to_string());
        write!(
            f,
            "{},{},{},{},{},{}",
            self.slope_a,
            self.slope_b,
            ratio,
            self.terminal_mean_a,
            self.terminal_mean_b,
            self.terminal_difference
        )
    }
}

/// Rows in the trailing window: the last 10%, at least one.
pub fn terminal_window(rows: &[MetricsRow]) -> &[MetricsRow] {
    let k = (rows.len() / 10).max(1).min(rows.len());
    &rows[rows.len() - k..]
}

/// Rows in the leading window: the first 10%, at least one.
pub fn initial_window(rows: &[MetricsRow]) -> &[MetricsRow] {
    let k = (rows.len() / 10).max(1).min(rows.len());
    &rows[..k]
}

pub fn mean_return(rows: &[MetricsRow]) -> f64 {
    rows.iter().map(|r| r.mean_episode_return).sum::<f64>() / rows.len() as f64
}

/// Learning-curve slopes of mean episode return against iteration.
pub fn compare_runs(a: &[MetricsRow], b: &[MetricsRow]) -> Result<SlopeReport> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::contract("slope comparison needs at least two rows per series"));
    }
    let slope = |rows: &[MetricsRow]| {
        let x: Vec<f64> = rows.iter().map(|r| r.iteration as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mean_episode_return).collect();
        ols_slope(&x, &y)
    };
    let (slope_a, slope_b) = (slope(a), slope(b));
    let terminal_mean_a = mean_return(terminal_window(a));
    let terminal_mean_b = mean_return(terminal_window(b));
    Ok(SlopeReport {
        slope_a,
        slope_b,
        ratio: (slope_b != 0.0).then(|| slope_a / slope_b),
        terminal_mean_a,
        terminal_mean_b,
        terminal_difference: terminal_mean_a - terminal_mean_b,
    })
}

/// At most `budget` evenly spaced rows, always keeping the first and last.
pub fn downsample(rows: &[MetricsRow], budget: usize) -> Vec<MetricsRow> {
    let n = rows.len();
    if n <= budget {
        return rows.to_vec();
    }
    match budget {
        0 => Vec::new(),
        1 => vec![rows[n - 1]],
        _ => {
            let mut idx: Vec<usize> = (0..budget)
                .map(|k| ((k as f64) * (n - 1) as f64 / (budget - 1) as f64).round() as usize)
                .collect();
            idx.dedup();
            idx.into_iter().map(|i| rows[i]).collect()
        }
    }
}
