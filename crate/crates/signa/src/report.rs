//! Metric reports of single runs and comparison tables across runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use signa_core::metrics::{AggregateScores, MetricReport};
use signa_core::model::EpochRecord;

use crate::history::{read_history, HISTORY_FILE};
use crate::{fsutil, Error, Result};

pub const METRICS_FILE: &str = "metrics.json";
pub const PER_CLASS_CSV: &str = "per_class.csv";
pub const PER_CLASS_MD: &str = "per_class.md";

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// `metrics.json`, `per_class.csv` (fractions) and `per_class.md` (percent).
pub fn write_metric_report(report: &MetricReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fsutil::create_dir(dir)?;
    let json = dir.join(METRICS_FILE);
    fsutil::write_json(&json, report)?;

    let csv_path = dir.join(PER_CLASS_CSV);
    let mut w = fsutil::csv_writer(&csv_path)?;
    for row in &report.per_class {
        w.serialize(row).map_err(|e| Error::csv(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let md = dir.join(PER_CLASS_MD);
    fsutil::write_bytes(&md, format_single(report).as_bytes())?;
    Ok(vec![json, csv_path, md])
}

fn aggregate_line(out: &mut String, name: &str, s: &AggregateScores) {
    let _ = writeln!(out, "| {name} | {} | {} | {} | {} |", pct(s.f1), pct(s.f2), pct(s.precision), pct(s.recall));
}

fn format_single(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} examples, {} classes\n", report.examples, report.classes);
    out.push_str("| scores | F1 | F2 | P | R |\n|---|---:|---:|---:|---:|\n");
    aggregate_line(&mut out, "example-based", &report.example);
    aggregate_line(&mut out, "label-based", &report.label);
    out.push_str("\n| label | F1 | P | R |\n|---|---:|---:|---:|\n");
    for row in &report.per_class {
        let _ = writeln!(out, "| {} | {} | {} | {} |", row.label, pct(row.f1), pct(row.precision), pct(row.recall));
    }
    out
}

/// What `report` needs from one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub name: String,
    pub history: Vec<EpochRecord>,
    pub metrics: MetricReport,
}

impl RunRecord {
    /// Reads `metrics.json` and, when present, `history.csv`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let metrics = fsutil::read_json(&dir.join(METRICS_FILE))?;
        let history_path = dir.join(HISTORY_FILE);
        let history = if history_path.exists() { read_history(&history_path)? } else { Vec::new() };
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        Ok(RunRecord { name, history, metrics })
    }

    fn best_val(&self) -> Option<&EpochRecord> {
        self.history.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
            Some(b) if b.val_f1_example >= r.val_f1_example => Some(b),
            _ => Some(r),
        })
    }
}

/// Summary table plus a per-class table with F1/P/R columns for each run.
pub fn comparison_markdown(runs: &[RunRecord]) -> Result<String> {
    let mut out = String::new();
    out.push_str("| run | epochs | best epoch | best val F1_e | F1_e | F2_e | P_e | R_e | F1_l | F2_l | P_l | R_l |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for run in runs {
        let (best_epoch, best_val) = run
            .best_val()
            .map_or(("-".to_string(), "-".to_string()), |r| (r.epoch.to_string(), pct(r.val_f1_example)));
        let (e, l) = (&run.metrics.example, &run.metrics.label);
        let _ = writeln!(
            out,
            "| {} | {} | {best_epoch} | {best_val} | {} | {} | {} | {} | {} | {} | {} | {} |",
            run.name,
            run.history.len(),
            pct(e.f1),
            pct(e.f2),
            pct(e.precision),
            pct(e.recall),
            pct(l.f1),
            pct(l.f2),
            pct(l.precision),
            pct(l.recall)
        );
    }

    let Some(first) = runs.first() else { return Ok(out) };
    let labels: Vec<&str> = first.metrics.per_class.iter().map(|r| r.label.as_str()).collect();
    for run in &runs[1..] {
        if !run.metrics.per_class.iter().map(|r| r.label.as_str()).eq(labels.iter().copied()) {
            return Err(Error::format(&run.name, "label vocabulary differs from the first run"));
        }
    }
    out.push_str("\n| label |");
    for run in runs {
        let _ = write!(out, " F1 ({0}) | P ({0}) | R ({0}) |", run.name);
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(3 * runs.len()));
    out.push('\n');
    for (i, label) in labels.iter().enumerate() {
        let _ = write!(out, "| {label} |");
        for run in runs {
            let r = &run.metrics.per_class[i];
            let _ = write!(out, " {} | {} | {} |", pct(r.f1), pct(r.precision), pct(r.recall));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Long-format CSV with one row per run, scope and metric.
pub fn comparison_csv(runs: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = fsutil::csv_writer(path)?;
    w.write_record(["run", "scope", "metric", "value"]).map_err(|e| Error::csv(path, e))?;
    for run in runs {
        let mut rows: Vec<(String, &str, f64)> = Vec::new();
        for (scope, s) in [("example-based", &run.metrics.example), ("label-based", &run.metrics.label)] {
            rows.extend([
                (scope.to_string(), "f1", s.f1),
                (scope.to_string(), "f2", s.f2),
                (scope.to_string(), "precision", s.precision),
                (scope.to_string(), "recall", s.recall),
            ]);
        }
        for c in &run.metrics.per_class {
            rows.extend([
                (format!("class:{}", c.label), "f1", c.f1),
                (format!("class:{}", c.label), "precision", c.precision),
                (format!("class:{}", c.label), "recall", c.recall),
            ]);
        }
        for (scope, metric, v) in rows {
            w.write_record([run.name.as_str(), &scope, metric, &v.to_string()]).map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
