//! Label-graph artifacts: the four matrices as CSV, a JSON summary and a
//! grayscale heatmap of the conditional probabilities.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signa_core::numerics::Tensor;
use signa_core::semantics::LabelGraph;

use crate::fsutil;
use crate::{Error, Result};

pub const COUNTS_FILE: &str = "counts.csv";
pub const PROBABILITY_FILE: &str = "probability.csv";
pub const ADJACENCY_FILE: &str = "adjacency.csv";
pub const NORMALIZED_FILE: &str = "normalized.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const HEATMAP_FILE: &str = "probability.pgm";

/// Pixels per matrix cell in the heatmap.
const HEATMAP_CELL: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    #[serde(rename = "C")]
    pub classes: usize,
    #[serde(rename = "Q")]
    pub threshold: f64,
    pub directed_edge_count: usize,
}

impl GraphSummary {
    pub fn of(graph: &LabelGraph) -> Self {
        GraphSummary { classes: graph.classes(), threshold: graph.threshold(), directed_edge_count: graph.directed_edge_count() }
    }
}

/// Writes every artifact into `dir` and returns the written paths.
pub fn export_graph_artifacts(graph: &LabelGraph, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fsutil::create_dir(dir)?;
    let labels = graph.labels();
    let counts = graph.counts().to_tensor();
    let mut written = Vec::new();
    for (name, matrix) in [
        (COUNTS_FILE, &counts),
        (PROBABILITY_FILE, graph.probability()),
        (ADJACENCY_FILE, graph.adjacency()),
        (NORMALIZED_FILE, graph.normalized()),
    ] {
        let path = dir.join(name);
        write_matrix_csv(&path, labels, matrix)?;
        written.push(path);
    }
    let path = dir.join(SUMMARY_FILE);
    fsutil::write_json(&path, &GraphSummary::of(graph))?;
    written.push(path);
    let path = dir.join(HEATMAP_FILE);
    fsutil::write_bytes(&path, &heatmap_pgm(graph.probability()))?;
    written.push(path);
    Ok(written)
}

/// Square matrix with a header row and a leading column of labels.
pub fn write_matrix_csv(path: &Path, labels: &[String], matrix: &Tensor) -> Result<()> {
    let n = labels.len();
    if matrix.shape() != [n, n] {
        return Err(Error::format(path, format!("matrix shape {:?} for {n} labels", matrix.shape())));
    }
    let mut w = fsutil::csv_writer(path)?;
    let header = std::iter::once("label").chain(labels.iter().map(String::as_str));
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for (i, label) in labels.iter().enumerate() {
        let row = std::iter::once(label.clone()).chain((0..n).map(|j| matrix.at(i, j).to_string()));
        w.write_record(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Tensor)> {
    let path = path.as_ref();
    let mut r = fsutil::csv_reader(path)?;
    let labels: Vec<String> = r.headers().map_err(|e| Error::csv(path, e))?.iter().skip(1).map(str::to_string).collect();
    let mut data = Vec::with_capacity(labels.len() * labels.len());
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.get(0) != labels.get(rows).map(String::as_str) {
            return Err(Error::format(path, format!("row {rows} is not labelled {:?}", labels.get(rows))));
        }
        for cell in rec.iter().skip(1) {
            data.push(cell.parse::<f64>().map_err(|e| Error::format(path, format!("{cell:?}: {e}")))?);
        }
        rows += 1;
    }
    let n = labels.len();
    if rows != n {
        return Err(Error::format(path, format!("{rows} rows for {n} labels")));
    }
    Ok((labels, Tensor::new([n, n], data)?))
}

/// Binary PGM, probability 0 black and 1 white.
pub fn heatmap_pgm(prob: &Tensor) -> Vec<u8> {
    let (rows, cols) = (prob.rows(), prob.cols());
    let (h, w) = (rows * HEATMAP_CELL, cols * HEATMAP_CELL);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            let p = prob.at(y / HEATMAP_CELL, x / HEATMAP_CELL).clamp(0.0, 1.0);
            out.push((p * 255.0).round() as u8);
        }
    }
    out
}

/// Width, height and pixels of a binary PGM with maxval 255.
pub fn parse_pgm(bytes: &[u8]) -> Option<(usize, usize, &[u8])> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    pos += 1;
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    if fields[0] != "P5" || fields[3] != "255" || bytes.len() != pos + w * h {
        return None;
    }
    Some((w, h, &bytes[pos..]))
}
