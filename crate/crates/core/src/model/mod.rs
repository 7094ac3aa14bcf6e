//! Four-stage convolutional backbone with an optional attention block,
//! its optimizer, and the training loop.

mod backbone;
mod optim;
mod train;

pub use backbone::{build_model, BackboneConfig, Model, SemanticContext};
pub use optim::{Adam, AdamConfig, StepSchedule};
pub use train::{
    evaluate_split, predict, predict_logits, train, train_with_observer, EpochRecord, TrainConfig,
    TrainOutcome, DEFAULT_DECISION_THRESHOLD,
};
