//! Grids over one block setting (heads, insertion layer or encoder kind).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::experiment::ExperimentConfig;
use crate::semantics::GnnKind;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    Heads,
    Layer,
    Gnn,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heads" => Ok(AblationAxis::Heads),
            "layer" | "layers" => Ok(AblationAxis::Layer),
            "gnn" => Ok(AblationAxis::Gnn),
            other => Err(Error::InvalidArgument(format!("unknown ablation axis {other:?}"))),
        }
    }
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Heads => "heads",
            AblationAxis::Layer => "layer",
            AblationAxis::Gnn => "gnn",
        }
    }

    pub fn default_cells(self) -> Vec<CellValue> {
        match self {
            AblationAxis::Heads => [1, 2, 4, 6, 8].into_iter().map(CellValue::Heads).collect(),
            AblationAxis::Layer => (1..=4).map(CellValue::Layer).collect(),
            AblationAxis::Gnn => GnnKind::ALL.into_iter().map(CellValue::Gnn).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellValue {
    Heads(usize),
    Layer(usize),
    Gnn(GnnKind),
}

impl CellValue {
    pub fn label(&self) -> String {
        match self {
            CellValue::Heads(n) => n.to_string(),
            CellValue::Layer(l) => format!("layer{l}"),
            CellValue::Gnn(k) => k.name().to_string(),
        }
    }

    /// `base` with this cell's setting, checked for validity.
    pub fn configure(&self, base: &ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let signa = cfg
            .signa
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("ablation cells need the attention block enabled".into()))?;
        match *self {
            CellValue::Heads(n) => signa.heads = n,
            CellValue::Layer(l) => signa.insertion_layer = l,
            CellValue::Gnn(k) => signa.gnn = k,
        }
        signa.validate_settings()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub axis: AblationAxis,
    pub cells: Vec<CellValue>,
    pub seeds: Vec<u64>,
}

impl AblationGrid {
    /// Default cells of `axis` with seeds `0..seeds`.
    pub fn new(axis: AblationAxis, seeds: u64) -> Self {
        AblationGrid { axis, cells: axis.default_cells(), seeds: (0..seeds).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: CellValue,
    /// Test example-based F1 per seed, in grid seed order.
    pub per_seed: Vec<f64>,
    pub mean: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    /// Collects the per-seed outcomes of one cell; the first error wins.
    pub fn from_runs(cell: CellValue, runs: Vec<Result<f64>>) -> Self {
        let mut per_seed = Vec::with_capacity(runs.len());
        for run in runs {
            match run {
                Ok(f1) => per_seed.push(f1),
                Err(e) => return CellResult::failed(cell, &e),
            }
        }
        let mean = (!per_seed.is_empty()).then(|| per_seed.iter().sum::<f64>() / per_seed.len() as f64);
        CellResult { cell, per_seed, mean, error: None }
    }

    pub fn failed(cell: CellValue, err: &Error) -> Self {
        CellResult { cell, per_seed: Vec::new(), mean: None, error: Some(err.to_string()) }
    }
}

/// Runs every (cell, seed) pair through `run`, which returns the test
/// example-based F1 of one training run. Invalid cells are reported in
/// their row and the grid carries on.
pub fn run_ablation<F>(grid: &AblationGrid, base: &ExperimentConfig, mut run: F) -> Vec<CellResult>
where
    F: FnMut(&ExperimentConfig, u64) -> Result<f64>,
{
    grid.cells
        .iter()
        .map(|&cell| match cell.configure(base) {
            Err(e) => CellResult::failed(cell, &e),
            Ok(cfg) => CellResult::from_runs(cell, grid.seeds.iter().map(|&s| run(&cfg, s)).collect()),
        })
        .collect()
}

/// Markdown table, one row per cell, scores in percent.
pub fn format_table(axis: AblationAxis, seeds: &[u64], results: &[CellResult]) -> String {
    let mut out = String::new();
    let _ = write!(out, "| {} | F1_e mean |", axis.name());
    for s in seeds {
        let _ = write!(out, " seed {s} |");
    }
    out.push('\n');
    out.push_str("|---|---:|");
    for _ in seeds {
        out.push_str("---:|");
    }
    out.push('\n');
    for r in results {
        let _ = write!(out, "| {} |", r.cell.label());
        match (&r.error, r.mean) {
            (Some(e), _) => {
                let _ = write!(out, " error: {} |", e.replace('|', "/"));
                for _ in seeds {
                    out.push_str(" - |");
                }
            }
            (None, mean) => {
                let _ = write!(out, " {:.2} |", mean.unwrap_or(f64::NAN) * 100.0);
                for f in &r.per_seed {
                    let _ = write!(out, " {:.2} |", f * 100.0);
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_axes() {
        assert_eq!(AblationGrid::new(AblationAxis::Heads, 3).cells.len(), 5);
        assert_eq!(AblationGrid::new(AblationAxis::Layer, 1).cells.len(), 4);
        assert_eq!(AblationGrid::new(AblationAxis::Gnn, 1).cells, alloc::vec![
            CellValue::Gnn(GnnKind::Gcn),
            CellValue::Gnn(GnnKind::Sage),
            CellValue::Gnn(GnnKind::Gat)
        ]);
        assert_eq!("layers".parse::<AblationAxis>().unwrap(), AblationAxis::Layer);
    }

    #[test]
    fn mean_is_arithmetic_and_errors_stay_in_their_cell() {
        let grid = AblationGrid { axis: AblationAxis::Heads, cells: alloc::vec![CellValue::Heads(0), CellValue::Heads(2)], seeds: alloc::vec![0, 1] };
        let results = run_ablation(&grid, &ExperimentConfig::default(), |cfg, seed| {
            Ok(0.1 * cfg.signa.as_ref().unwrap().heads as f64 + 0.25 * seed as f64)
        });
        assert!(results[0].error.is_some());
        assert_eq!(results[1].per_seed, alloc::vec![0.2, 0.45]);
        assert!((results[1].mean.unwrap() - (0.2 + 0.45) / 2.0).abs() < 1e-12);
        let table = format_table(grid.axis, &grid.seeds, &results);
        assert_eq!(table.lines().count(), 4);
        assert!(table.contains("| 2 | 32.50 | 20.00 | 45.00 |"));
    }

    #[test]
    fn cells_need_the_block() {
        let cell = CellValue::Gnn(GnnKind::Gat);
        assert!(cell.configure(&ExperimentConfig::baseline()).is_err());
        assert_eq!(cell.configure(&ExperimentConfig::default()).unwrap().signa.unwrap().gnn, GnnKind::Gat);
    }
}
