//! In-memory multi-label image corpus with a train/val/test assignment.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Train/val/test fractions applied within each group.
pub const SPLIT_FRACTIONS: (f64, f64) = (0.7, 0.1);

/// Images are `C_img×H×W` blocks stored as `f32`, labels are binary rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiLabelDataset {
    pub image_shape: [usize; 3],
    pub images: Vec<f32>,
    pub labels: Vec<Vec<u8>>,
    pub vocabulary: Vec<String>,
    pub image_ids: Vec<String>,
    /// Generating scene (or any grouping) per image; splits are drawn per group.
    pub groups: Vec<usize>,
    pub splits: Vec<Split>,
}

impl MultiLabelDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn image_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.images.len() != n * self.image_len()
            || self.image_ids.len() != n
            || self.groups.len() != n
            || self.splits.len() != n
        {
            return Err(Error::Format("dataset arrays disagree on the number of images".into()));
        }
        if self.labels.iter().any(|row| row.len() != self.classes() || row.iter().any(|&v| v > 1)) {
            return Err(Error::Format("label rows must be binary with one column per class".into()));
        }
        Ok(())
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let len = self.image_len();
        &self.images[i * len..(i + 1) * len]
    }

    pub fn image_tensor(&self, i: usize) -> Tensor {
        Tensor::new(self.image_shape, self.image(i).iter().map(|&v| f64::from(v)).collect())
            .expect("image shape")
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn label_rows(&self, indices: &[usize]) -> Vec<Vec<u8>> {
        indices.iter().map(|&i| self.labels[i].clone()).collect()
    }

    pub fn label_sets(&self, indices: &[usize]) -> Vec<Vec<usize>> {
        indices
            .iter()
            .map(|&i| {
                self.labels[i]
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect()
    }
}

/// Shuffles each group with `seed` and cuts it 70/10/20 into train, val
/// and test (rounded to the nearest image, test takes the remainder).
pub fn assign_splits(groups: &[usize], seed: u64) -> Vec<Split> {
    let mut splits = alloc::vec![Split::Train; groups.len()];
    let mut r = rng::seeded(rng::derive_seed(seed, "splits"));
    let max_group = groups.iter().copied().max().map_or(0, |g| g + 1);
    for group in 0..max_group {
        let mut members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == group).collect();
        members.shuffle(&mut r);
        let n = members.len() as f64;
        let n_train = libm::round(n * SPLIT_FRACTIONS.0) as usize;
        let n_val = (libm::round(n * SPLIT_FRACTIONS.1) as usize).min(members.len() - n_train);
        for (k, &i) in members.iter().enumerate() {
            splits[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    splits
}

/// Mirrors a `C×H×W` image left-right.
pub fn flip_horizontal(img: &Tensor) -> Tensor {
    let [c, h, w] = dims3(img);
    let src = img.data();
    let mut out = alloc::vec![0.0; src.len()];
    for ch in 0..c {
        for y in 0..h {
            let row = (ch * h + y) * w;
            for x in 0..w {
                out[row + x] = src[row + w - 1 - x];
            }
        }
    }
    Tensor::new(img.shape(), out).expect("same shape")
}

/// Mirrors a `C×H×W` image top-bottom.
pub fn flip_vertical(img: &Tensor) -> Tensor {
    let [c, h, w] = dims3(img);
    let src = img.data();
    let mut out = alloc::vec![0.0; src.len()];
    for ch in 0..c {
        for y in 0..h {
            let dst = (ch * h + y) * w;
            let from = (ch * h + (h - 1 - y)) * w;
            out[dst..dst + w].copy_from_slice(&src[from..from + w]);
        }
    }
    Tensor::new(img.shape(), out).expect("same shape")
}

fn dims3(img: &Tensor) -> [usize; 3] {
    let s = img.shape();
    assert_eq!(s.len(), 3, "image must be C×H×W");
    [s[0], s[1], s[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn splits_follow_fractions_per_group() {
        let groups: Vec<usize> = (0..100).map(|i| if i < 60 { 0 } else { 1 }).collect();
        let splits = assign_splits(&groups, 3);
        let count = |g: usize, s: Split| (0..100).filter(|&i| groups[i] == g && splits[i] == s).count();
        assert_eq!((count(0, Split::Train), count(0, Split::Val), count(0, Split::Test)), (42, 6, 12));
        assert_eq!((count(1, Split::Train), count(1, Split::Val), count(1, Split::Test)), (28, 4, 8));
        assert_eq!(splits, assign_splits(&groups, 3));
    }

    #[test]
    fn flips_are_involutions() {
        let img = Tensor::new([1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(flip_horizontal(&img).data(), &[3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        assert_eq!(flip_vertical(&img).data(), &[4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
        assert_eq!(flip_horizontal(&flip_horizontal(&img)), img);
    }
}
