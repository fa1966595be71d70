use std::path::Path;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::report::{cell_table, render_table, tradeoff_column, write_cell_runs, write_summary, BundleSummary, CellSummary};
use super::run::run_single;
use super::CliError;

pub const PRESETS: &[&str] = &[
    "main",
    "comm",
    "privacy",
    "hint-ablation",
    "model-grid",
    "beta-gamma-lambda-sweep",
    "alpha-sweep",
];

/// One configuration of a preset's matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub overrides: Vec<(String, String)>,
}

impl Cell {
    fn new(name: impl Into<String>, overrides: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            overrides: overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn apply(&self, base: &ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        let mut cfg = base.clone();
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.validate(true)?;
        Ok(cfg)
    }
}

pub fn preset_cells(name: &str) -> Result<Vec<Cell>, CliError> {
    let archs = ["neumf", "ngcf", "lightgcn"];
    Ok(match name {
        "main" => archs
            .iter()
            .map(|a| Cell::new(format!("server={a}"), &[("client_arch", "neumf"), ("server_arch", a)]))
            .collect(),
        "comm" => ["ptf", "fcf"].iter().map(|p| Cell::new(*p, &[("protocol", p)])).collect(),
        "privacy" => ["none", "ldp(0.1)", "sampling", "sampling+swapping"]
            .iter()
            .map(|d| Cell::new(*d, &[("defense", d)]))
            .collect(),
        "hint-ablation" => ["full", "no-hard", "no-confidence", "random"]
            .iter()
            .map(|h| Cell::new(*h, &[("hint", h)]))
            .collect(),
        "model-grid" => archs
            .iter()
            .flat_map(|c| {
                archs
                    .iter()
                    .map(move |s| Cell::new(format!("{c}/{s}"), &[("client_arch", c), ("server_arch", s)]))
            })
            .collect(),
        "beta-gamma-lambda-sweep" => {
            let mut cells = Vec::new();
            for b in ["0.2", "0.4", "0.6", "0.8", "1.0"] {
                cells.push(Cell::new(format!("beta={b}"), &[("beta_min", b), ("beta_max", b)]));
            }
            for g in ["1", "2", "3", "4"] {
                cells.push(Cell::new(format!("gamma={g}"), &[("gamma_min", g), ("gamma_max", g)]));
            }
            for l in ["0", "0.1", "0.2", "0.3", "0.4"] {
                cells.push(Cell::new(format!("lambda={l}"), &[("lambda", l)]));
            }
            cells
        }
        "alpha-sweep" => ["10", "30", "50", "70"]
            .iter()
            .map(|a| Cell::new(format!("alpha={a}"), &[("alpha", a)]))
            .collect(),
        other => return Err(CliError::UnknownPreset(other.to_string())),
    })
}

/// Render the preset's table in the layout of the corresponding experiment.
pub fn render_preset(name: &str, cells: &[CellSummary]) -> String {
    match name {
        "main" | "hint-ablation" | "alpha-sweep" => cell_table(name, cells, &["recall", "ndcg"]),
        "comm" => cell_table(
            name,
            cells,
            &["bytes_per_client_round", "uplink_per_client_round", "downlink_per_client_round"],
        ),
        "privacy" => {
            let trade = tradeoff_column(cells, "none");
            let mut t = cell_table(name, cells, &["attack_f1", "attack_f1_all_positives", "ndcg"]);
            t.push_str("\ntradeoff (dF1/dNDCG vs none)\n");
            for (c, v) in cells.iter().zip(trade) {
                t.push_str(&format!("  {:<20} {v}\n", c.name));
            }
            t
        }
        "model-grid" => {
            let archs = ["neumf", "ngcf", "lightgcn"];
            let rows: Vec<(String, Vec<String>)> = archs
                .iter()
                .map(|c| {
                    let vals = archs
                        .iter()
                        .map(|s| {
                            cells
                                .iter()
                                .find(|x| x.name == format!("{c}/{s}"))
                                .and_then(|x| x.metrics.get("ndcg"))
                                .map(|st| format!("{:.4} ± {:.4}", st.mean, st.sd))
                                .unwrap_or_else(|| "-".into())
                        })
                        .collect();
                    (c.to_string(), vals)
                })
                .collect();
            let cols: Vec<String> = archs.iter().map(|s| format!("server={s}")).collect();
            render_table("model-grid (ndcg)", "client", &cols, &rows)
        }
        _ => cell_table(name, cells, &["ndcg", "attack_f1"]),
    }
}

/// Run every cell of `name` for every seed of `base` and write the bundle.
pub fn run_preset(name: &str, base: &ExperimentConfig, out: &Path) -> Result<BundleSummary, CliError> {
    let cells = preset_cells(name)?;
    base.validate(true)?;
    let mut summaries = Vec::with_capacity(cells.len());
    for cell in &cells {
        let cfg = cell.apply(base)?;
        let mut runs = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let started = Instant::now();
            let run = run_single(&cfg, seed)?;
            eprintln!(
                "[{name}] {} seed {seed}: recall {:.4} ndcg {:.4} ({:.0}s)",
                cell.name,
                run.report.final_metrics.recall,
                run.report.final_metrics.ndcg,
                started.elapsed().as_secs_f64()
            );
            runs.push(run);
        }
        write_cell_runs(out, &cell.name, &runs, cfg.top_k)?;
        summaries.push(CellSummary::from_runs(&cell.name, cell.overrides.clone(), &runs));
    }
    let table = render_preset(name, &summaries);
    let summary = BundleSummary {
        kind: name.to_string(),
        config: base.echo(),
        seeds: base.seeds.clone(),
        cells: summaries,
        table,
    };
    write_summary(out, base, &summary)?;
    Ok(summary)
}

/// A single configuration is a one-cell bundle.
pub fn run_config(cfg: &ExperimentConfig, out: &Path) -> Result<BundleSummary, CliError> {
    cfg.validate(true)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let run = run_single(cfg, seed)?;
        eprintln!(
            "seed {seed}: recall {:.4} ndcg {:.4} ({:.0}s)",
            run.report.final_metrics.recall,
            run.report.final_metrics.ndcg,
            started.elapsed().as_secs_f64()
        );
        runs.push(run);
    }
    write_cell_runs(out, "run", &runs, cfg.top_k)?;
    let cells = vec![CellSummary::from_runs("run", Vec::new(), &runs)];
    let mut metrics = vec!["recall", "ndcg", "bytes_per_client_round"];
    if cells[0].metrics.contains_key("attack_f1") {
        metrics.push("attack_f1");
    }
    let table = cell_table("run", &cells, &metrics);
    let summary = BundleSummary {
        kind: "run".into(),
        config: cfg.echo(),
        seeds: cfg.seeds.clone(),
        cells,
        table,
    };
    write_summary(out, cfg, &summary)?;
    Ok(summary)
}
