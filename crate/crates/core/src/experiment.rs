//! One train-and-evaluate run on a dataset.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attention::SignaConfig;
use crate::dataset::{MultiLabelDataset, Split};
use crate::metrics::MetricReport;
use crate::model::{
    build_model, evaluate_split, train_with_observer, BackboneConfig, EpochRecord, Model, TrainConfig, TrainOutcome,
    DEFAULT_DECISION_THRESHOLD,
};
use crate::rng;
use crate::semantics::{EmbeddingMatrix, LabelGraph, GLOVE_DIM};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub stage_channels: [usize; 4],
    /// `None` trains the plain backbone. `dim` and `labels` are filled in
    /// from the backbone and the dataset.
    pub signa: Option<SignaConfig>,
    pub train: TrainConfig,
    /// Width of the synthetic label embeddings when no file is given.
    pub embedding_dim: usize,
    pub decision_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            stage_channels: BackboneConfig::DEFAULT_STAGES,
            signa: Some(SignaConfig::new(BackboneConfig::DEFAULT_STAGES[1], 0)),
            train: TrainConfig::default(),
            embedding_dim: GLOVE_DIM,
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
        }
    }
}

impl ExperimentConfig {
    pub fn baseline() -> Self {
        ExperimentConfig { signa: None, ..Self::default() }
    }

    pub fn backbone(&self, data: &MultiLabelDataset) -> BackboneConfig {
        BackboneConfig { stage_channels: self.stage_channels, ..BackboneConfig::new(data.image_shape, data.classes()) }
    }

    /// Block settings with the width of the insertion stage and the label count.
    pub fn resolved_signa(&self, data: &MultiLabelDataset) -> Option<SignaConfig> {
        self.signa.clone().map(|mut cfg| {
            if (1..=4).contains(&cfg.insertion_layer) {
                cfg.dim = self.stage_channels[cfg.insertion_layer - 1];
            }
            cfg.labels = data.classes();
            cfg
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub training: TrainOutcome,
    pub test: MetricReport,
    pub test_predictions: Vec<Vec<u8>>,
}

impl ExperimentOutcome {
    pub fn model(&self) -> &Model {
        &self.training.model
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.training.history
    }
}

/// Builds the label graph from the training split only.
pub fn training_graph(data: &MultiLabelDataset, threshold: f64) -> Result<LabelGraph> {
    let rows = data.label_rows(&data.indices(Split::Train));
    LabelGraph::from_label_matrix(data.vocabulary.clone(), &rows, threshold)
}

/// Initializes a model for `cfg`, with synthetic embeddings drawn from `seed`
/// unless `embeddings` is given.
pub fn prepare_model(
    data: &MultiLabelDataset,
    cfg: &ExperimentConfig,
    seed: u64,
    embeddings: Option<&EmbeddingMatrix>,
) -> Result<Model> {
    let backbone = cfg.backbone(data);
    match cfg.resolved_signa(data) {
        None => build_model(backbone, None, None, None, seed),
        Some(signa) => {
            let graph = training_graph(data, signa.threshold)?;
            let synthetic;
            let emb = match embeddings {
                Some(e) => e,
                None => {
                    synthetic = EmbeddingMatrix::synthetic(data.classes(), cfg.embedding_dim, rng::derive_seed(seed, "labels"))?;
                    &synthetic
                }
            };
            build_model(backbone, Some(signa), Some(&graph), Some(emb), seed)
        }
    }
}

pub fn run_experiment(
    data: &MultiLabelDataset,
    cfg: &ExperimentConfig,
    seed: u64,
    embeddings: Option<&EmbeddingMatrix>,
    observe: impl FnMut(&EpochRecord),
) -> Result<ExperimentOutcome> {
    let model = prepare_model(data, cfg, seed, embeddings)?;
    let tc = TrainConfig { seed, ..cfg.train.clone() };
    let training = train_with_observer(model, data, &tc, observe)?;
    let (test_predictions, test) = evaluate_split(&training.model, data, Split::Test, cfg.decision_threshold)?;
    Ok(ExperimentOutcome { training, test, test_predictions })
}
