use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaseMetrics, Metric, Region};
use crate::error::{Error, Result};

/// Row labels of the summary table, in order.
pub const STAT_LABELS: [&str; 5] = ["Mean", "StdDev", "Median", "25quantile", "75quantile"];

/// Linear interpolation between order statistics (`q` in `[0, 1]`).
///
/// `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean, population standard deviation and quartiles of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std_dev: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("statistics need at least one value"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Stats {
            mean,
            std_dev: var.sqrt(),
            median: quantile(&sorted, 0.5),
            q25: quantile(&sorted, 0.25),
            q75: quantile(&sorted, 0.75),
        })
    }

    /// Values in [`STAT_LABELS`] order.
    pub fn row(&self) -> [f64; 5] {
        [self.mean, self.std_dev, self.median, self.q25, self.q75]
    }
}

/// Statistics per metric and region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub cases: usize,
    /// `stats[metric][region]` in [`Metric::ALL`] and [`Region::ALL`] order.
    pub stats: [[Stats; 3]; 4],
}

impl SummaryStats {
    pub fn get(&self, metric: Metric, region: Region) -> &Stats {
        let m = Metric::ALL.iter().position(|&x| x == metric).expect("listed");
        &self.stats[m][region as usize]
    }

    /// Column names after the leading statistic column.
    pub fn columns() -> Vec<String> {
        Metric::ALL
            .iter()
            .flat_map(|m| Region::ALL.iter().map(move |r| format!("{}_{}", m.name(), r)))
            .collect()
    }
}

fn column(rows: &[CaseMetrics], metric: Metric, region: Region) -> Vec<f64> {
    rows.iter().map(|c| metric.of(c.region(region))).collect()
}

/// Cohort statistics over per-case metrics.
pub fn summarize(rows: &[CaseMetrics]) -> Result<SummaryStats> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("summary needs at least one case"));
    }
    let mut stats = [[Stats::of(&[0.0])?; 3]; 4];
    for (mi, &m) in Metric::ALL.iter().enumerate() {
        for r in Region::ALL {
            stats[mi][r as usize] = Stats::of(&column(rows, m, r))?;
        }
    }
    Ok(SummaryStats {
        cases: rows.len(),
        stats,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

/// One row per case and region.
pub fn write_case_csv(path: impl AsRef<Path>, rows: &[CaseMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["case_id", "region", "dice", "sensitivity", "specificity", "hd95"])
        .map_err(err)?;
    for c in rows {
        for r in Region::ALL {
            let m = c.region(r);
            w.write_record([
                c.case_id.clone(),
                r.to_string(),
                m.dice.to_string(),
                m.sensitivity.to_string(),
                m.specificity.to_string(),
                m.hd95.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rows Mean/StdDev/Median/25quantile/75quantile; columns `<Metric>_<Region>`.
pub fn write_summary_csv(path: impl AsRef<Path>, summary: &SummaryStats) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let err = |e| Error::csv(path, e);
    let mut header = vec!["statistic".to_string()];
    header.extend(SummaryStats::columns());
    w.write_record(&header).map_err(err)?;
    for (row, label) in STAT_LABELS.iter().enumerate() {
        let mut rec = vec![label.to_string()];
        for per_metric in &summary.stats {
            for s in per_metric {
                rec.push(s.row()[row].to_string());
            }
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Five-number summary with Tukey (1.5 IQR) whiskers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPlot {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

pub fn box_plot(values: &[f64]) -> Result<BoxPlot> {
    if values.is_empty() {
        return Err(Error::EmptyInput("box plot needs at least one value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
    Ok(BoxPlot {
        min: inside[0],
        q1,
        median: quantile(&sorted, 0.5),
        q3,
        max: *inside.last().expect("quartiles lie inside the fences"),
        outliers: sorted.into_iter().filter(|v| !(lo..=hi).contains(v)).collect(),
    })
}

/// One row per metric and region; outliers are `;`-separated.
pub fn write_box_plot_csv(path: impl AsRef<Path>, rows: &[CaseMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["metric", "region", "min", "q1", "median", "q3", "max", "outliers"])
        .map_err(err)?;
    for m in Metric::ALL {
        for r in Region::ALL {
            let b = box_plot(&column(rows, m, r))?;
            let outliers: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
            w.write_record([
                m.name().to_string(),
                r.to_string(),
                b.min.to_string(),
                b.q1.to_string(),
                b.median.to_string(),
                b.q3.to_string(),
                b.max.to_string(),
                outliers.join(";"),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
