//! Training runs written to disk, and independent runs executed in parallel.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use signa_core::ablation::{run_ablation, AblationGrid, CellResult};
use signa_core::dataset::MultiLabelDataset;
use signa_core::experiment::{run_experiment, ExperimentConfig, ExperimentOutcome};
use signa_core::model::EpochRecord;
use signa_core::semantics::EmbeddingMatrix;

use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::history::{write_history, HISTORY_FILE};
use crate::report::write_metric_report;
use crate::{fsutil, Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.signa";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

/// Trains one model and writes its checkpoint (best validation epoch),
/// history and test report into `out`. Returns the outcome and the files.
pub fn train_to_dir(
    data: &MultiLabelDataset,
    cfg: &ExperimentConfig,
    seed: u64,
    embeddings: Option<&EmbeddingMatrix>,
    config_echo: serde_json::Value,
    out: &Path,
    observe: impl FnMut(&EpochRecord),
) -> Result<(ExperimentOutcome, Vec<PathBuf>)> {
    let outcome = run_experiment(data, cfg, seed, embeddings, observe)?;
    fsutil::create_dir(out)?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    let meta = CheckpointMeta {
        config: config_echo,
        epoch: outcome.training.best_epoch,
        rng: Some(outcome.training.rng_state.clone()),
    };
    save_checkpoint(&checkpoint, outcome.model(), &meta)?;
    let history = out.join(HISTORY_FILE);
    write_history(&history, outcome.history())?;
    let mut files = vec![checkpoint, history];
    files.extend(write_metric_report(&outcome.test, out)?);
    let test_ids: Vec<String> = data.indices(signa_core::dataset::Split::Test).iter().map(|&i| data.image_ids[i].clone()).collect();
    let predictions = out.join(PREDICTIONS_FILE);
    crate::corpus::write_label_csv(&predictions, &test_ids, &data.vocabulary, &outcome.test_predictions)?;
    files.push(predictions);
    Ok((outcome, files))
}

/// Runs every `(config, seed)` pair as an independent unit on the rayon pool.
/// Results come back in input order.
pub fn run_many(
    data: &MultiLabelDataset,
    runs: &[(ExperimentConfig, u64)],
    embeddings: Option<&EmbeddingMatrix>,
) -> Vec<signa_core::Result<ExperimentOutcome>> {
    runs.par_iter().map(|(cfg, seed)| run_experiment(data, cfg, *seed, embeddings, |_| {})).collect()
}

/// Ablation grid with every (cell, seed) training run scheduled in parallel.
pub fn run_ablation_parallel(
    data: &MultiLabelDataset,
    grid: &AblationGrid,
    base: &ExperimentConfig,
    embeddings: Option<&EmbeddingMatrix>,
) -> Vec<CellResult> {
    let runs: Vec<(ExperimentConfig, u64)> = grid
        .cells
        .iter()
        .filter_map(|cell| cell.configure(base).ok())
        .flat_map(|cfg| grid.seeds.iter().map(move |&s| (cfg.clone(), s)))
        .collect();
    let mut scores = run_many(data, &runs, embeddings).into_iter().map(|r| r.map(|o| o.test.example.f1));
    // `run_ablation` visits valid cells and seeds in the order built above.
    run_ablation(grid, base, |_, _| scores.next().expect("one result per run"))
}

/// Builds a rayon pool with `jobs` threads, or the default size for `None`.
pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::format("<thread pool>", e.to_string()))
}
