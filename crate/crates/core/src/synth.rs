//! Synthetic multi-label scenes with known label co-occurrence.
//!
//! Each scene template fixes a set of base labels and independent presence
//! probabilities for extra labels. Every present label is drawn as a
//! colored, textured patch in its own cell of a regular grid. Labels listed
//! in an ambiguous pair share one appearance, so only the other labels in
//! the image tell them apart.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{assign_splits, MultiLabelDataset};
use crate::numerics::Tensor;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub name: String,
    /// Labels present in every image of the scene.
    pub base: Vec<String>,
    /// Labels present independently with the given probability.
    #[serde(default)]
    pub co_labels: BTreeMap<String, f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub labels: Vec<String>,
    pub scenes: Vec<SceneTemplate>,
    /// `C_img×H×W`.
    pub image: [usize; 3],
    /// Side of the square grid cells that hold one patch each.
    pub cell: usize,
    /// Standard deviation of the per-pixel Gaussian noise.
    pub noise: f64,
    /// Pairs rendered with the same patch (the second copies the first).
    #[serde(default)]
    pub ambiguous: Vec<[String; 2]>,
    pub seed: u64,
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn co(list: &[(&str, f64)]) -> BTreeMap<String, f64> {
    list.iter().map(|&(k, p)| (k.to_string(), p)).collect()
}

impl Default for SynthSpec {
    /// Eight labels in three scenes; `court` and `tank` look the same and
    /// are separated by context (trees and grass versus roads and water).
    fn default() -> Self {
        SynthSpec {
            labels: names(&["building", "road", "car", "tree", "grass", "water", "court", "tank"]),
            scenes: vec![
                SceneTemplate {
                    name: "residential".into(),
                    base: names(&["building", "tree"]),
                    co_labels: co(&[("grass", 0.7), ("car", 0.4), ("court", 0.5), ("road", 0.3)]),
                    count: 700,
                },
                SceneTemplate {
                    name: "industrial".into(),
                    base: names(&["building", "road"]),
                    co_labels: co(&[("car", 0.7), ("tank", 0.5), ("water", 0.3)]),
                    count: 700,
                },
                SceneTemplate {
                    name: "park".into(),
                    base: names(&["grass", "tree"]),
                    co_labels: co(&[("water", 0.5), ("court", 0.3), ("road", 0.2)]),
                    count: 600,
                },
            ],
            image: [3, 32, 32],
            cell: 8,
            noise: 1.5,
            ambiguous: vec![["court".to_string(), "tank".to_string()]],
            seed: 0,
        }
    }
}

/// Presence probability of every label in one scene.
type SceneRates = Vec<f64>;

impl SynthSpec {
    fn label_index(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::InvalidArgument(format!("scene references unknown label {name:?}")))
    }

    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    pub fn samples(&self) -> usize {
        self.scenes.iter().map(|s| s.count).sum()
    }

    fn grid(&self) -> (usize, usize) {
        (self.image[1] / self.cell, self.image[2] / self.cell)
    }

    fn scene_rates(&self) -> Result<Vec<SceneRates>> {
        self.scenes
            .iter()
            .map(|scene| {
                let mut rates = vec![0.0; self.classes()];
                for (name, &p) in &scene.co_labels {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidArgument(format!(
                            "scene {:?}: probability {p} of {name:?} outside [0, 1]",
                            scene.name
                        )));
                    }
                    rates[self.label_index(name)?] = p;
                }
                for name in &scene.base {
                    rates[self.label_index(name)?] = 1.0;
                }
                Ok(rates)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() || self.scenes.is_empty() {
            return Err(Error::InvalidArgument("spec needs labels and scenes".into()));
        }
        for (i, l) in self.labels.iter().enumerate() {
            if self.labels[..i].contains(l) {
                return Err(Error::InvalidArgument(format!("duplicate label {l:?}")));
            }
        }
        if let Some(s) = self.scenes.iter().find(|s| s.count == 0) {
            return Err(Error::InvalidArgument(format!("scene {:?} has no images", s.name)));
        }
        if self.image.contains(&0) || self.cell < 3 || self.cell > self.image[1] || self.cell > self.image[2] {
            return Err(Error::InvalidArgument(format!(
                "cell size {} does not fit image {:?}",
                self.cell, self.image
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise level {} must be finite and nonnegative", self.noise)));
        }
        for [a, b] in &self.ambiguous {
            if self.label_index(a)? == self.label_index(b)? {
                return Err(Error::InvalidArgument(format!("ambiguous pair repeats {a:?}")));
            }
        }
        let rates = self.scene_rates()?;
        let (rows, cols) = self.grid();
        for (scene, r) in self.scenes.iter().zip(&rates) {
            let most = r.iter().filter(|&&p| p > 0.0).count();
            if most > rows * cols {
                return Err(Error::InvalidArgument(format!(
                    "scene {:?} can show {most} labels but the grid has {} cells",
                    scene.name,
                    rows * cols
                )));
            }
        }
        for (j, label) in self.labels.iter().enumerate() {
            if rates.iter().all(|r| r[j] == 0.0) {
                return Err(Error::UnusedLabel(label.clone()));
            }
        }
        Ok(())
    }

    /// `P(j | i)` implied by the templates: scenes weighted by their counts,
    /// labels independent within a scene. Rows of labels that never occur
    /// are zero, the diagonal of the others is one.
    pub fn analytic_probability(&self) -> Result<Tensor> {
        let rates = self.scene_rates()?;
        let c = self.classes();
        let mut out = vec![0.0; c * c];
        for i in 0..c {
            let denom: f64 = self.scenes.iter().zip(&rates).map(|(s, r)| s.count as f64 * r[i]).sum();
            if denom == 0.0 {
                continue;
            }
            for j in 0..c {
                out[i * c + j] = if i == j {
                    1.0
                } else {
                    let joint: f64 = self.scenes.iter().zip(&rates).map(|(s, r)| s.count as f64 * r[i] * r[j]).sum();
                    joint / denom
                };
            }
        }
        Tensor::new([c, c], out)
    }

    /// Label whose patch label `j` is drawn with.
    fn appearance_of(&self, j: usize) -> Result<usize> {
        for [a, b] in &self.ambiguous {
            if self.label_index(b)? == j {
                return self.label_index(a);
            }
        }
        Ok(j)
    }
}

const PALETTE: [[f64; 3]; 8] = [
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, 1.0, -1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, -1.0, -1.0],
];

/// Texture value in `{0.3, 1}` at patch-local `(y, x)`.
fn texture(kind: usize, y: usize, x: usize) -> f64 {
    let on = match kind % 4 {
        0 => true,
        1 => y % 2 == 0,
        2 => x % 2 == 0,
        _ => (x + y) % 2 == 0,
    };
    if on {
        1.0
    } else {
        0.3
    }
}

fn paint(img: &mut [f64], shape: [usize; 3], appearance: usize, top: usize, left: usize, side: usize) {
    let [channels, h, w] = shape;
    let color = PALETTE[appearance % PALETTE.len()];
    let kind = appearance + appearance / PALETTE.len();
    for ch in 0..channels {
        let tint = color[ch % 3];
        for y in 0..side {
            for x in 0..side {
                img[(ch * h + top + y) * w + left + x] = tint * texture(kind, y, x);
            }
        }
    }
}

/// Generates the corpus described by `spec`, deterministically per seed.
pub fn synthesize(spec: &SynthSpec) -> Result<MultiLabelDataset> {
    spec.validate()?;
    let rates = spec.scene_rates()?;
    let appearance = (0..spec.classes()).map(|j| spec.appearance_of(j)).collect::<Result<Vec<_>>>()?;
    let (rows, cols) = spec.grid();
    let side = spec.cell - 2;
    let per_image: usize = spec.image.iter().product();
    let mut r = rng::seeded(rng::derive_seed(spec.seed, "synth"));

    let n = spec.samples();
    let mut images = Vec::with_capacity(n * per_image);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let mut canvas = vec![0.0; per_image];
    for (s, scene_rates) in rates.iter().enumerate() {
        for _ in 0..spec.scenes[s].count {
            let present: Vec<usize> =
                (0..spec.classes()).filter(|&j| scene_rates[j] >= 1.0 || r.random_bool(scene_rates[j])).collect();
            canvas.iter_mut().for_each(|v| *v = 0.0);
            let cells = index::sample(&mut r, rows * cols, present.len());
            for (&j, cell) in present.iter().zip(cells.iter()) {
                let (cy, cx) = (cell / cols, cell % cols);
                paint(&mut canvas, spec.image, appearance[j], cy * spec.cell + 1, cx * spec.cell + 1, side);
            }
            for v in &canvas {
                let eps: f64 = StandardNormal.sample(&mut r);
                images.push((v + spec.noise * eps) as f32);
            }
            let mut row = vec![0u8; spec.classes()];
            present.iter().for_each(|&j| row[j] = 1);
            labels.push(row);
            groups.push(s);
        }
    }
    for (j, label) in spec.labels.iter().enumerate() {
        if labels.iter().all(|row| row[j] == 0) {
            return Err(Error::UnusedLabel(label.clone()));
        }
    }
    let splits = assign_splits(&groups, spec.seed);
    let data = MultiLabelDataset {
        image_shape: spec.image,
        images,
        labels,
        vocabulary: spec.labels.clone(),
        image_ids: (0..n).map(|i| format!("img{i:05}")).collect(),
        groups,
        splits,
    };
    data.validate()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    #[test]
    fn default_spec_is_valid() {
        let spec = SynthSpec::default();
        spec.validate().unwrap();
        assert_eq!((spec.classes(), spec.samples()), (8, 2000));
        assert_eq!(spec.appearance_of(7).unwrap(), 6);
    }

    #[test]
    fn noiseless_single_label_scene_is_constant() {
        let spec = SynthSpec {
            labels: names(&["only"]),
            scenes: vec![SceneTemplate { name: "s".into(), base: names(&["only"]), co_labels: BTreeMap::new(), count: 5 }],
            image: [3, 8, 8],
            cell: 8,
            noise: 0.0,
            ambiguous: vec![],
            seed: 4,
        };
        let d = synthesize(&spec).unwrap();
        for i in 1..d.len() {
            assert_eq!(d.image(i), d.image(0));
            assert_eq!(d.labels[i], d.labels[0]);
        }
        assert!(d.image(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn ambiguous_labels_render_identically() {
        let mut spec = SynthSpec::default();
        spec.noise = 0.0;
        spec.image = [3, 8, 8];
        spec.scenes = vec![
            SceneTemplate { name: "a".into(), base: names(&["court"]), co_labels: BTreeMap::new(), count: 2 },
            SceneTemplate { name: "b".into(), base: names(&["tank"]), co_labels: BTreeMap::new(), count: 2 },
        ];
        spec.labels = names(&["court", "tank"]);
        let d = synthesize(&spec).unwrap();
        assert_ne!(d.labels[0], d.labels[2]);
        assert_eq!(d.image(0), d.image(2));
    }

    #[test]
    fn unused_label_is_named() {
        let mut spec = SynthSpec::default();
        spec.labels.push("ghost".into());
        assert_eq!(spec.validate().unwrap_err(), Error::UnusedLabel("ghost".into()));
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut spec = SynthSpec::default();
        spec.scenes[0].co_labels.insert("car".into(), 1.5);
        assert!(spec.validate().is_err());
        let mut spec = SynthSpec::default();
        spec.scenes[0].base.push("castle".into());
        assert!(spec.validate().is_err());
        let mut spec = SynthSpec::default();
        spec.cell = 32;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn analytic_probability_of_default_spec() {
        let p = SynthSpec::default().analytic_probability().unwrap();
        // P(tree | court): court only ever appears next to trees
        assert!((p.at(6, 3) - 1.0).abs() < 1e-15);
        assert_eq!(p.at(7, 3), 0.0);
        // P(building | car) = (700·0.4 + 700·0.7) / (700·0.4 + 700·0.7)
        assert!((p.at(2, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn splits_cover_every_scene() {
        let d = synthesize(&SynthSpec { noise: 0.1, ..SynthSpec::default() }).unwrap();
        for s in 0..3 {
            for split in [Split::Train, Split::Val, Split::Test] {
                assert!((0..d.len()).any(|i| d.groups[i] == s && d.splits[i] == split));
            }
        }
        assert_eq!(d.indices(Split::Train).len(), 490 + 490 + 420);
    }
}
