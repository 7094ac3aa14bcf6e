use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;
use crate::rng;
use crate::{Error, Result};

/// Width of the public GloVe vectors.
pub const GLOVE_DIM: usize = 300;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    GloveFile,
    Synthetic { seed: u64 },
}

/// One word vector per vocabulary label, rows in vocabulary order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub matrix: Tensor,
    pub source: EmbeddingSource,
}

impl EmbeddingMatrix {
    /// Standard-normal rows drawn from `seed`.
    pub fn synthetic(labels: usize, dim: usize, seed: u64) -> Result<Self> {
        if labels == 0 || dim == 0 {
            return Err(Error::InvalidArgument("embedding matrix needs labels and dimensions".into()));
        }
        let mut r = rng::seeded(rng::derive_seed(seed, "embeddings"));
        Ok(EmbeddingMatrix {
            matrix: rng::normal_tensor(&[labels, dim], &mut r),
            source: EmbeddingSource::Synthetic { seed },
        })
    }

    /// Selects vocabulary rows from GloVe text lines (`token v1 v2 ...`).
    ///
    /// Every non-blank line must carry the same number of values. The first
    /// occurrence of a token wins.
    pub fn from_glove_lines<I, S>(lines: I, vocabulary: &[String]) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if vocabulary.is_empty() {
            return Err(Error::InvalidArgument("empty vocabulary".into()));
        }
        let wanted: BTreeMap<&str, usize> =
            vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let mut rows: Vec<Option<Vec<f64>>> = alloc::vec![None; vocabulary.len()];
        let mut dim: Option<usize> = None;

        for (lineno, line) in lines.into_iter().enumerate() {
            let line = line.as_ref();
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::Format(format!("line {}: value {f:?} is not a number", lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if values.is_empty() {
                return Err(Error::Format(format!("line {}: token {token:?} has no values", lineno + 1)));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Format(format!(
                        "line {}: {} values, expected {d}",
                        lineno + 1,
                        values.len()
                    )))
                }
                Some(_) => {}
            }
            if let Some(&i) = wanted.get(token) {
                if rows[i].is_none() {
                    rows[i] = Some(values);
                }
            }
        }

        let missing: Vec<String> = vocabulary
            .iter()
            .zip(&rows)
            .filter(|(_, r)| r.is_none())
            .map(|(w, _)| w.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingToken(missing));
        }
        let dim = dim.expect("at least one row was found");
        let data: Vec<f64> = rows.into_iter().flatten().flatten().collect();
        Ok(EmbeddingMatrix {
            matrix: Tensor::new([vocabulary.len(), dim], data)?,
            source: EmbeddingSource::GloveFile,
        })
    }

    pub fn labels(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}
