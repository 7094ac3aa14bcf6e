use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;
use crate::{Error, Result};

/// Default edge threshold applied to co-occurrence probabilities.
pub const DEFAULT_THRESHOLD: f64 = 0.4;

/// Symmetric `C×C` label counts: the diagonal holds how many images carry
/// each label, off-diagonal entries how many carry both.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    classes: usize,
    data: Vec<u64>,
}

impl CountMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if c == 0 || rows.iter().any(|r| r.len() != c) {
            return Err(Error::shape("count matrix", "counts must be a non-empty square matrix"));
        }
        Ok(CountMatrix { classes: c, data: rows.concat() })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.classes + j]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([self.classes, self.classes], self.data.iter().map(|&v| v as f64).collect())
            .expect("count matrix is square")
    }
}

/// Counts label occurrences and pairwise co-occurrences over a corpus of
/// per-image label sets. Repeated indices within one image count once.
pub fn count_cooccurrence<S: AsRef<[usize]>>(label_sets: &[S], classes: usize) -> Result<CountMatrix> {
    if classes == 0 {
        return Err(Error::InvalidArgument("label count must be at least 1".into()));
    }
    if label_sets.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut data = vec![0u64; classes * classes];
    let mut present = vec![false; classes];
    for set in label_sets {
        present.iter_mut().for_each(|p| *p = false);
        for &l in set.as_ref() {
            if l >= classes {
                return Err(Error::LabelOutOfRange { index: l, classes });
            }
            present[l] = true;
        }
        let active: Vec<usize> = (0..classes).filter(|&i| present[i]).collect();
        for &i in &active {
            for &j in &active {
                data[i * classes + j] += 1;
            }
        }
    }
    Ok(CountMatrix { classes, data })
}

/// `P_ij = N_ij / N_ii`; rows of labels that never occur are all zero.
pub fn cooccurrence_probability(counts: &CountMatrix) -> Tensor {
    let c = counts.classes;
    let mut p = vec![0.0; c * c];
    for i in 0..c {
        let nii = counts.get(i, i);
        if nii == 0 {
            continue;
        }
        for j in 0..c {
            p[i * c + j] = counts.get(i, j) as f64 / nii as f64;
        }
    }
    Tensor::new([c, c], p).expect("square")
}

/// Zeroes probabilities strictly below `q`; the rest pass unchanged
/// (including the diagonal, which is 1 for every observed label).
pub fn threshold_graph(prob: &Tensor, q: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("threshold {q} outside [0, 1]")));
    }
    Ok(prob.map(|p| if p < q { 0.0 } else { p }))
}

/// Symmetric normalization `D^-1/2 (G + I) D^-1/2` with `D` the row sums
/// of `G + I`.
pub fn normalize_adjacency(adjacency: &Tensor) -> Result<Tensor> {
    if adjacency.rank() != 2 || adjacency.rows() != adjacency.cols() {
        return Err(Error::shape("normalize_adjacency", format!("{:?} is not square", adjacency.shape())));
    }
    if adjacency.data().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("adjacency entries must be finite and nonnegative".into()));
    }
    let n = adjacency.rows();
    let mut tilde = adjacency.clone();
    for i in 0..n {
        tilde.data_mut()[i * n + i] += 1.0;
    }
    let inv_sqrt: Vec<f64> = tilde
        .data()
        .chunks(n)
        .map(|row| 1.0 / libm::sqrt(row.iter().sum::<f64>()))
        .collect();
    let mut out = tilde;
    for i in 0..n {
        for j in 0..n {
            out.data_mut()[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(out)
}

/// The chain counts → probabilities → thresholded adjacency → normalized
/// adjacency, together with the label vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelGraph {
    labels: Vec<String>,
    counts: CountMatrix,
    prob: Tensor,
    adjacency: Tensor,
    normalized: Tensor,
    threshold: f64,
}

impl LabelGraph {
    pub fn from_label_sets<S: AsRef<[usize]>>(labels: Vec<String>, label_sets: &[S], q: f64) -> Result<Self> {
        let counts = count_cooccurrence(label_sets, labels.len())?;
        LabelGraph::from_counts(labels, counts, q)
    }

    /// Builds the graph from a binary `n×C` label matrix (row per image).
    pub fn from_label_matrix(labels: Vec<String>, matrix: &[Vec<u8>], q: f64) -> Result<Self> {
        let sets: Vec<Vec<usize>> = matrix
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &v)| v != 0).map(|(j, _)| j).collect())
            .collect();
        LabelGraph::from_label_sets(labels, &sets, q)
    }

    pub fn from_counts(labels: Vec<String>, counts: CountMatrix, q: f64) -> Result<Self> {
        if labels.len() != counts.classes() {
            return Err(Error::shape(
                "label graph",
                format!("{} labels for a {}-class count matrix", labels.len(), counts.classes()),
            ));
        }
        let prob = cooccurrence_probability(&counts);
        let adjacency = threshold_graph(&prob, q)?;
        let normalized = normalize_adjacency(&adjacency)?;
        Ok(LabelGraph { labels, counts, prob, adjacency, normalized, threshold: q })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    pub fn counts(&self) -> &CountMatrix {
        &self.counts
    }

    pub fn probability(&self) -> &Tensor {
        &self.prob
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn normalized(&self) -> &Tensor {
        &self.normalized
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Number of ordered pairs `(i, j)`, `i != j`, with a surviving edge.
    pub fn directed_edge_count(&self) -> usize {
        let c = self.classes();
        (0..c)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.adjacency.at(i, j) > 0.0)
            .count()
    }
}
