//! Label corpora (one CSV row per image) and GloVe text embeddings.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use signa_core::semantics::EmbeddingMatrix;

use crate::{Error, Result};

/// Binary label matrix in file row order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTable {
    pub vocabulary: Vec<String>,
    pub image_ids: Vec<String>,
    pub matrix: Vec<Vec<u8>>,
}

impl LabelTable {
    pub fn classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }
}

fn sniff_delimiter(path: &Path) -> Result<Option<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim().is_empty() {
        return Ok(None);
    }
    Ok(Some(if first.contains('\t') && !first.contains(',') { b'\t' } else { b',' }))
}

/// Reads a header row (`image_id`, then one column per label) followed by
/// one row of 0/1 cells per image. Tab-separated files are accepted too.
pub fn load_label_csv(path: impl AsRef<Path>) -> Result<LabelTable> {
    let path = path.as_ref();
    let delimiter = sniff_delimiter(path)?.ok_or_else(|| Error::EmptyFile { path: path.into() })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.len() < 2 {
        return Err(Error::format(path, "header needs an id column and at least one label column"));
    }
    let vocabulary: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut table = LabelTable { vocabulary, image_ids: Vec::new(), matrix: Vec::new() };
    let mut seen: HashMap<String, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].to_string();
        if let Some(&first) = seen.get(&id) {
            return Err(Error::DuplicateImage { path: path.into(), line, first, id });
        }
        let mut row = Vec::with_capacity(table.classes());
        for (j, cell) in record.iter().enumerate().skip(1) {
            row.push(match cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::LabelCell {
                        path: path.into(),
                        line,
                        column: header[j].to_string(),
                        value: other.to_string(),
                    })
                }
            });
        }
        seen.insert(id.clone(), line);
        table.image_ids.push(id);
        table.matrix.push(row);
    }
    if table.is_empty() {
        return Err(Error::EmptyFile { path: path.into() });
    }
    Ok(table)
}

pub fn write_label_csv(path: impl AsRef<Path>, image_ids: &[String], vocabulary: &[String], matrix: &[Vec<u8>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = crate::fsutil::csv_writer(path)?;
    let header = std::iter::once("image_id").chain(vocabulary.iter().map(String::as_str));
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for (id, row) in image_ids.iter().zip(matrix) {
        let cells = std::iter::once(id.clone()).chain(row.iter().map(u8::to_string));
        w.write_record(cells).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Looks up every vocabulary label in a GloVe text file.
pub fn load_glove(path: impl AsRef<Path>, vocabulary: &[String]) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut io_error = None;
    let lines = BufReader::new(file).lines().map_while(|l| match l {
        Ok(s) => Some(s),
        Err(e) => {
            io_error = Some(e);
            None
        }
    });
    let matrix = EmbeddingMatrix::from_glove_lines(lines, vocabulary);
    if let Some(e) = io_error {
        return Err(Error::io(path, e));
    }
    Ok(matrix?)
}
