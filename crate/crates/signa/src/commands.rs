//! Execution of the CLI subcommands.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use signa_core::ablation::{format_table, AblationGrid};
use signa_core::semantics::{EmbeddingMatrix, LabelGraph};
use signa_core::suites::{run_gradient_suites, SuiteLevel};
use signa_core::synth::{synthesize, SynthSpec};

use crate::cli::*;
use crate::checkpoint::load_checkpoint;
use crate::corpus::{load_glove, load_label_csv};
use crate::dataset_io::{read_dataset, write_dataset};
use crate::graph_io::{export_graph_artifacts, GraphSummary};
use crate::manifest::RunManifest;
use crate::report::{comparison_csv, comparison_markdown, write_metric_report, RunRecord};
use crate::runner::{run_ablation_parallel, thread_pool, train_to_dir, PREDICTIONS_FILE};
use crate::{corpus, fsutil};

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> anyhow::Result<&'a T> {
    value.as_ref().with_context(|| format!("--{flag} is required"))
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Graph(GraphCommand::Build(args)) => {
            let config = args.config.clone();
            graph_build(with_config(args, config.as_deref())?.resolved())
        }
        Command::Data(DataCommand::Synth(args)) => {
            let config = args.config.clone();
            data_synth(with_config(args, config.as_deref())?)
        }
        Command::Train(args) => {
            let config = args.config.clone();
            train(with_config(args, config.as_deref())?)
        }
        Command::Eval(args) => {
            let config = args.config.clone();
            eval(with_config(args, config.as_deref())?)
        }
        Command::Gradcheck(args) => {
            let config = args.config.clone();
            gradcheck(with_config(args, config.as_deref())?)
        }
        Command::Ablate(args) => {
            let config = args.config.clone();
            ablate(with_config(args, config.as_deref())?)
        }
        Command::Report(args) => {
            let config = args.config.clone();
            report(with_config(args, config.as_deref())?)
        }
    }
    .map(|()| ExitCode::SUCCESS)
    .or_else(|e| match e.downcast::<SuitesFailed>() {
        Ok(_) => Ok(ExitCode::FAILURE),
        Err(e) => Err(e),
    })
}

fn finish(manifest: &mut RunManifest, out: &Path, files: &[PathBuf]) -> anyhow::Result<()> {
    manifest.record(out, files)?;
    manifest.write(out)?;
    Ok(())
}

fn graph_build(args: GraphBuildArgs) -> anyhow::Result<()> {
    let labels = required(&args.labels, "labels")?;
    let out = required(&args.out, "out")?;
    let q = args.q.expect("resolved");
    let table = load_label_csv(labels)?;
    let graph = LabelGraph::from_label_matrix(table.vocabulary.clone(), &table.matrix, q)?;
    let files = export_graph_artifacts(&graph, out)?;
    let summary = GraphSummary::of(&graph);
    println!("{} images, {} labels, Q = {}", table.len(), summary.classes, summary.threshold);
    println!("directed_edge_count = {}", summary.directed_edge_count);
    finish(&mut RunManifest::new("graph build", &args, None)?, out, &files)
}

fn data_synth(args: SynthArgs) -> anyhow::Result<()> {
    let out = required(&args.out, "out")?;
    let mut spec: SynthSpec = match &args.spec {
        Some(path) => fsutil::read_json(path)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(noise) = args.noise {
        spec.noise = noise;
    }
    let data = synthesize(&spec)?;
    let mut files = write_dataset(&data, out)?;
    let spec_path = out.join("spec.json");
    fsutil::write_json(&spec_path, &spec)?;
    files.push(spec_path);
    println!("{} images, {} labels written to {}", data.len(), data.classes(), out.display());
    finish(&mut RunManifest::new("data synth", &args, Some(spec.seed))?, out, &files)
}

fn load_embeddings(model: &ModelArgs, vocabulary: &[String]) -> anyhow::Result<Option<EmbeddingMatrix>> {
    Ok(match &model.embeddings {
        Some(path) => Some(load_glove(path, vocabulary)?),
        None => None,
    })
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let data_dir = required(&args.data, "data")?;
    let out = required(&args.out, "out")?;
    let seed = args.seed.unwrap_or(0);
    let cfg = args.model.experiment()?;
    let resolved = TrainArgs { seed: Some(seed), model: args.model.clone().resolved(), ..args.clone() };
    let data = read_dataset(data_dir)?;
    let embeddings = load_embeddings(&resolved.model, &data.vocabulary)?;
    // The output location is left out so a checkpoint does not depend on where it was written.
    let echo = serde_json::to_value(TrainArgs { out: None, ..resolved.clone() })?;
    let (outcome, files) = train_to_dir(&data, &cfg, seed, embeddings.as_ref(), echo, out, |r| {
        eprintln!("epoch {:>3}  lr {:.0e}  loss {:.4}  val F1_e {:.4}", r.epoch, r.lr, r.train_loss, r.val_f1_example);
    })?;
    let t = &outcome.test.example;
    println!(
        "best epoch {}; test F1_e {:.2} P_e {:.2} R_e {:.2}",
        outcome.training.best_epoch,
        t.f1 * 100.0,
        t.precision * 100.0,
        t.recall * 100.0
    );
    finish(&mut RunManifest::new("train", &resolved, Some(seed))?, out, &files)
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let checkpoint = required(&args.checkpoint, "checkpoint")?;
    let data_dir = required(&args.data, "data")?;
    let out = required(&args.report, "report")?;
    let resolved = EvalArgs {
        split: Some(args.split.unwrap_or(signa_core::dataset::Split::Test)),
        threshold: Some(args.threshold.unwrap_or(signa_core::model::DEFAULT_DECISION_THRESHOLD)),
        ..args.clone()
    };
    let split = resolved.split.expect("resolved");
    let (model, _) = load_checkpoint(checkpoint)?;
    let data = read_dataset(data_dir)?;
    if let Some(s) = &model.semantic {
        if s.graph.labels() != data.vocabulary.as_slice() {
            bail!("dataset vocabulary differs from the checkpoint's label graph");
        }
    }
    let (pred, report) = signa_core::model::evaluate_split(&model, &data, split, resolved.threshold.expect("resolved"))?;
    let mut files = write_metric_report(&report, out)?;
    let ids: Vec<String> = data.indices(split).iter().map(|&i| data.image_ids[i].clone()).collect();
    let predictions = out.join(PREDICTIONS_FILE);
    corpus::write_label_csv(&predictions, &ids, &data.vocabulary, &pred)?;
    files.push(predictions);
    let e = &report.example;
    println!("{} split: F1_e {:.2} F2_e {:.2} P_e {:.2} R_e {:.2}", split.name(), e.f1 * 100.0, e.f2 * 100.0, e.precision * 100.0, e.recall * 100.0);
    finish(&mut RunManifest::new("eval", &resolved, None)?, out, &files)
}

#[derive(Debug, thiserror::Error)]
#[error("gradient suites failed")]
struct SuitesFailed;

fn gradcheck(args: GradcheckArgs) -> anyhow::Result<()> {
    let level = if args.full { SuiteLevel::Full } else { SuiteLevel::Quick };
    let seed = args.seed.unwrap_or(0);
    let start = std::time::Instant::now();
    let results = run_gradient_suites(level, seed);
    let mut failed = 0;
    for r in &results {
        let status = if r.passed() { "ok  " } else { "FAIL" };
        failed += usize::from(!r.passed());
        print!("{status} {:<28} instances {:>3}  coords {:>6}  max rel err {:.3e}  (tol {:.0e})", r.name, r.instances, r.coordinates, r.max_rel_error, r.tolerance);
        match &r.error {
            Some(e) => println!("  error: {e}"),
            None => println!(),
        }
    }
    println!("{} suites, {failed} failed, {:.1}s", results.len(), start.elapsed().as_secs_f64());
    if let Some(out) = &args.out {
        fsutil::create_dir(out)?;
        let path = out.join("gradcheck.json");
        fsutil::write_json(&path, &results)?;
        finish(&mut RunManifest::new("gradcheck", &args, Some(seed))?, out, &[path])?;
    }
    if failed > 0 {
        return Err(SuitesFailed.into());
    }
    Ok(())
}

fn ablate(args: AblateArgs) -> anyhow::Result<()> {
    let axis = *required(&args.axis, "axis")?;
    let data_dir = required(&args.data, "data")?;
    let out = required(&args.out, "out")?;
    let seeds = args.seeds.unwrap_or(3);
    let resolved = AblateArgs { seeds: Some(seeds), model: args.model.clone().resolved(), ..args.clone() };
    let base = resolved.model.experiment()?;
    if base.signa.is_none() {
        bail!("ablation needs --signa on");
    }
    let data = read_dataset(data_dir)?;
    let embeddings = load_embeddings(&resolved.model, &data.vocabulary)?;
    let grid = AblationGrid::new(axis, seeds);
    let pool = thread_pool(args.jobs)?;
    eprintln!("{} cells x {} seeds on {} threads", grid.cells.len(), seeds, pool.current_num_threads());
    let results = pool.install(|| run_ablation_parallel(&data, &grid, &base, embeddings.as_ref()));
    let table = format_table(axis, &grid.seeds, &results);
    print!("{table}");
    fsutil::create_dir(out)?;
    let md = out.join("ablation.md");
    fsutil::write_bytes(&md, table.as_bytes())?;
    let json = out.join("ablation.json");
    fsutil::write_json(&json, &results)?;
    finish(&mut RunManifest::new("ablate", &resolved, None)?, out, &[md, json])
}

fn report(args: ReportArgs) -> anyhow::Result<()> {
    if args.runs.is_empty() {
        bail!("--runs needs at least one run directory");
    }
    let runs = args.runs.iter().map(RunRecord::load).collect::<Result<Vec<_>, _>>()?;
    let table = comparison_markdown(&runs)?;
    match &args.out {
        None => print!("{table}"),
        Some(out) => {
            fsutil::create_dir(out)?;
            let md = out.join("comparison.md");
            fsutil::write_bytes(&md, table.as_bytes())?;
            let csv = out.join("comparison.csv");
            comparison_csv(&runs, &csv)?;
            finish(&mut RunManifest::new("report", &args, None)?, out, &[md, csv])?;
        }
    }
    Ok(())
}
