use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::tradeoff;

use super::config::ExperimentConfig;
use super::run::{metrics_csv, RunOutput};
use super::CliError;

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n.max(1.0);
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub name: String,
    pub overrides: Vec<(String, String)>,
    pub metrics: BTreeMap<String, Stat>,
}

impl CellSummary {
    pub fn from_runs(name: &str, overrides: Vec<(String, String)>, runs: &[RunOutput]) -> Self {
        let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for run in runs {
            for (k, v) in run.headline() {
                series.entry(k.to_string()).or_default().push(v);
            }
        }
        Self {
            name: name.to_string(),
            overrides,
            metrics: series.into_iter().map(|(k, v)| (k, Stat::from_values(v))).collect(),
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|s| s.mean)
    }
}

/// Self-contained record of a run or preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub kind: String,
    /// Resolved base configuration as a config document.
    pub config: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellSummary>,
    pub table: String,
}

fn fmt_stat(metric: &str, s: &Stat) -> String {
    if metric.contains("bytes") || metric.contains("link") {
        format!("{} ± {}", human_bytes(s.mean), human_bytes(s.sd))
    } else {
        format!("{:.4} ± {:.4}", s.mean, s.sd)
    }
}

pub fn human_bytes(b: f64) -> String {
    if b >= 1e6 {
        format!("{:.2}MB", b / 1e6)
    } else if b >= 1e3 {
        format!("{:.2}KB", b / 1e3)
    } else {
        format!("{b:.0}B")
    }
}

/// Plain rows × columns table with a left header column.
pub fn render_table(title: &str, corner: &str, columns: &[String], rows: &[(String, Vec<String>)]) -> String {
    let mut widths: Vec<usize> = std::iter::once(corner.chars().count())
        .chain(columns.iter().map(|c| c.chars().count()))
        .collect();
    for (name, cells) in rows {
        widths[0] = widths[0].max(name.chars().count());
        for (i, c) in cells.iter().enumerate() {
            widths[i + 1] = widths[i + 1].max(c.chars().count());
        }
    }
    let line = |out: &mut String, first: &str, rest: &[String]| {
        let _ = write!(out, "{first:<w$}", w = widths[0]);
        for (i, c) in rest.iter().enumerate() {
            let _ = write!(out, "  {c:>w$}", w = widths[i + 1]);
        }
        out.push('\n');
    };
    let mut out = format!("{title}\n");
    line(&mut out, corner, columns);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for (name, cells) in rows {
        line(&mut out, name, cells);
    }
    out
}

/// One row per cell, one column per metric.
pub fn cell_table(title: &str, cells: &[CellSummary], metrics: &[&str]) -> String {
    let columns: Vec<String> = metrics.iter().map(|m| m.to_string()).collect();
    let rows: Vec<(String, Vec<String>)> = cells
        .iter()
        .map(|c| {
            let vals = metrics
                .iter()
                .map(|m| c.metrics.get(*m).map(|s| fmt_stat(m, s)).unwrap_or_else(|| "-".into()))
                .collect();
            (c.name.clone(), vals)
        })
        .collect();
    render_table(title, "cell", &columns, &rows)
}

/// Tradeoff of every cell against the cell named `baseline`.
pub fn tradeoff_column(cells: &[CellSummary], baseline: &str) -> Vec<String> {
    let base = cells.iter().find(|c| c.name == baseline);
    cells
        .iter()
        .map(|c| match (base, c.mean("attack_f1"), c.mean("ndcg")) {
            (Some(b), Some(f1), Some(ndcg)) if c.name != baseline => {
                match (b.mean("attack_f1"), b.mean("ndcg")) {
                    (Some(bf), Some(bn)) => tradeoff(bf, bn, f1, ndcg).to_string(),
                    _ => "-".into(),
                }
            }
            _ => "-".into(),
        })
        .collect()
}

pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from("cell,metric,mean,sd,n\n");
    for c in cells {
        for (m, s) in &c.metrics {
            let _ = writeln!(out, "{},{},{},{},{}", c.name, m, s.mean, s.sd, s.values.len());
        }
    }
    out
}

pub fn per_seed_csv(cells: &[CellSummary], seeds: &[u64]) -> String {
    let mut out = String::from("cell,seed,metric,value\n");
    for c in cells {
        for (m, s) in &c.metrics {
            for (seed, v) in seeds.iter().zip(&s.values) {
                let _ = writeln!(out, "{},{},{},{}", c.name, seed, m, v);
            }
        }
    }
    out
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Write the per-run artifacts of one cell under `dir/<cell>/`.
pub fn write_cell_runs(dir: &Path, cell: &str, runs: &[RunOutput], top_k: usize) -> Result<(), CliError> {
    let cell_dir = dir.join(file_safe(cell));
    fs::create_dir_all(&cell_dir).map_err(|source| CliError::Io {
        path: cell_dir.clone(),
        source,
    })?;
    for run in runs {
        let s = run.seed;
        write(cell_dir.join(format!("report-seed{s}.json")), serde_json::to_string_pretty(&run.report)?)?;
        write(cell_dir.join(format!("metrics-seed{s}.csv")), metrics_csv(&run.report, top_k))?;
        write(cell_dir.join(format!("ledger-seed{s}.csv")), &run.ledger_csv)?;
        if let Some(ckpt) = &run.checkpoint {
            write(cell_dir.join(format!("server-seed{s}.ptfm")), ckpt)?;
        }
    }
    Ok(())
}

/// Write the summary files shared by runs and presets.
pub fn write_summary(dir: &Path, cfg: &ExperimentConfig, summary: &BundleSummary) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write(dir.join("config.txt"), cfg.echo())?;
    write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    write(dir.join("summary.csv"), summary_csv(&summary.cells))?;
    write(dir.join("per-seed.csv"), per_seed_csv(&summary.cells, &summary.seeds))?;
    write(dir.join("summary.txt"), &summary.table)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<BundleSummary, CliError> {
    let file = if path.is_dir() { path.join("summary.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|source| CliError::Io { path: file, source })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        let s = Stat::from_values(vec![1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.sd), (2.0, 1.0));
        assert_eq!(Stat::from_values(vec![5.0]).sd, 0.0);
    }

    #[test]
    fn bytes_formatting() {
        assert_eq!(human_bytes(3020.0), "3.02KB");
        assert_eq!(human_bytes(430_592.0), "430.59KB");
        assert_eq!(human_bytes(12.0), "12B");
    }
}
