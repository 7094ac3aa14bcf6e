//! Command-line arguments. Every subcommand also accepts `--config <json>`
//! whose keys are the long flag names; flags given on the command line win.
//! A run manifest is accepted as a config file too.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use signa_core::ablation::AblationAxis;
use signa_core::attention::{GateMode, SignaConfig};
use signa_core::dataset::Split;
use signa_core::experiment::ExperimentConfig;
use signa_core::model::{BackboneConfig, TrainConfig, DEFAULT_DECISION_THRESHOLD};
use signa_core::semantics::{GnnKind, DEFAULT_THRESHOLD, GLOVE_DIM};

#[derive(Debug, Parser)]
#[command(name = "signa", version, about = "Semantic interleaving channel attention for multi-label classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label co-occurrence graphs.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Synthetic datasets.
    #[command(subcommand)]
    Data(DataCommand),
    /// Train one model and write checkpoint, history and test report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Finite-difference gradient suites; exits nonzero on any failure.
    Gradcheck(GradcheckArgs),
    /// Grid over heads, insertion layer or encoder kind.
    Ablate(AblateArgs),
    /// Merge run directories into comparison tables.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum GraphCommand {
    /// Build the graph of a label CSV and export its matrices.
    Build(GraphBuildArgs),
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Generate a planted co-occurrence dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

fn parse_lowercase<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Fills every `None` field of `self` from `file`.
pub trait Layer: Sized {
    fn over(self, file: Self) -> Self;
}

macro_rules! layer {
    ($ty:ty { $($field:ident),* $(,)? } $(nested { $($inner:ident),* })?) => {
        impl Layer for $ty {
            fn over(self, file: Self) -> Self {
                Self {
                    config: self.config,
                    $($field: self.$field.or(file.$field),)*
                    $($($inner: self.$inner.over(file.$inner),)*)?
                }
            }
        }
    };
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct GraphBuildArgs {
    /// Label CSV: image id, then one 0/1 column per label.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Edge threshold.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
layer!(GraphBuildArgs { labels, q, out });

impl GraphBuildArgs {
    pub fn resolved(mut self) -> Self {
        self.q.get_or_insert(DEFAULT_THRESHOLD);
        self
    }
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// JSON generator spec; the built-in spec when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec's pixel noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
layer!(SynthArgs { spec, seed, noise, out });

/// Model and optimisation settings shared by `train` and `ablate`.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub signa: Option<Switch>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Backbone stage (1-4) followed by the block.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long, value_parser = parse_lowercase::<GnnKind>)]
    pub gnn: Option<GnnKind>,
    #[arg(long, value_parser = parse_lowercase::<GateMode>)]
    pub gate: Option<GateMode>,
    #[arg(long, value_enum)]
    pub residual: Option<Switch>,
    /// Edge threshold of the label graph.
    #[arg(long)]
    pub q: Option<f64>,
    /// Channels of the four backbone stages.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub stages: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub decay_factor: Option<f64>,
    #[arg(long)]
    pub hflip: Option<f64>,
    #[arg(long)]
    pub vflip: Option<f64>,
    /// GloVe text file; synthetic embeddings otherwise.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Width of synthetic embeddings.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Decision threshold on sigmoid outputs.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl Layer for ModelArgs {
    fn over(self, f: Self) -> Self {
        ModelArgs {
            signa: self.signa.or(f.signa),
            heads: self.heads.or(f.heads),
            layer: self.layer.or(f.layer),
            gnn: self.gnn.or(f.gnn),
            gate: self.gate.or(f.gate),
            residual: self.residual.or(f.residual),
            q: self.q.or(f.q),
            stages: self.stages.or(f.stages),
            epochs: self.epochs.or(f.epochs),
            batch_size: self.batch_size.or(f.batch_size),
            lr: self.lr.or(f.lr),
            decay_every: self.decay_every.or(f.decay_every),
            decay_factor: self.decay_factor.or(f.decay_factor),
            hflip: self.hflip.or(f.hflip),
            vflip: self.vflip.or(f.vflip),
            embeddings: self.embeddings.or(f.embeddings),
            embedding_dim: self.embedding_dim.or(f.embedding_dim),
            threshold: self.threshold.or(f.threshold),
        }
    }
}

impl ModelArgs {
    /// Every unset field replaced by its default.
    pub fn resolved(self) -> Self {
        let tc = TrainConfig::default();
        let sc = SignaConfig::new(0, 0);
        ModelArgs {
            signa: self.signa.or(Some(Switch::On)),
            heads: self.heads.or(Some(sc.heads)),
            layer: self.layer.or(Some(sc.insertion_layer)),
            gnn: self.gnn.or(Some(sc.gnn)),
            gate: self.gate.or(Some(sc.gate)),
            residual: self.residual.or(Some(Switch::On)),
            q: self.q.or(Some(DEFAULT_THRESHOLD)),
            stages: self.stages.or(Some(BackboneConfig::DEFAULT_STAGES.to_vec())),
            epochs: self.epochs.or(Some(tc.epochs)),
            batch_size: self.batch_size.or(Some(tc.batch_size)),
            lr: self.lr.or(Some(tc.lr)),
            decay_every: self.decay_every.or(Some(tc.decay_every)),
            decay_factor: self.decay_factor.or(Some(tc.decay_factor)),
            hflip: self.hflip.or(Some(tc.hflip)),
            vflip: self.vflip.or(Some(tc.vflip)),
            embeddings: self.embeddings,
            embedding_dim: self.embedding_dim.or(Some(GLOVE_DIM)),
            threshold: self.threshold.or(Some(DEFAULT_DECISION_THRESHOLD)),
        }
    }

    /// Experiment configuration of resolved arguments.
    pub fn experiment(&self) -> anyhow::Result<ExperimentConfig> {
        let r = self.clone().resolved();
        let stages = r.stages.expect("resolved");
        let stage_channels: [usize; 4] = stages
            .as_slice()
            .try_into()
            .map_err(|_| anyhow::anyhow!("--stages needs exactly four values, got {}", stages.len()))?;
        let signa = r.signa.expect("resolved").is_on().then(|| SignaConfig {
            heads: r.heads.expect("resolved"),
            insertion_layer: r.layer.expect("resolved"),
            gnn: r.gnn.expect("resolved"),
            threshold: r.q.expect("resolved"),
            gate: r.gate.expect("resolved"),
            residual: r.residual.expect("resolved").is_on(),
            ..SignaConfig::new(0, 0)
        });
        let train = TrainConfig {
            lr: r.lr.expect("resolved"),
            decay_factor: r.decay_factor.expect("resolved"),
            decay_every: r.decay_every.expect("resolved"),
            batch_size: r.batch_size.expect("resolved"),
            epochs: r.epochs.expect("resolved"),
            hflip: r.hflip.expect("resolved"),
            vflip: r.vflip.expect("resolved"),
            ..TrainConfig::default()
        };
        train.validate()?;
        Ok(ExperimentConfig {
            stage_channels,
            signa,
            train,
            embedding_dim: r.embedding_dim.expect("resolved"),
            decision_threshold: r.threshold.expect("resolved"),
        })
    }
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Dataset directory written by `data synth`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
layer!(TrainArgs { data, seed, out } nested { model });

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_lowercase::<Split>)]
    pub split: Option<Split>,
    /// Output directory of the report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
layer!(EvalArgs { checkpoint, data, split, report, threshold });

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct GradcheckArgs {
    /// Twenty instances per suite plus the end-to-end model.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for a JSON result file and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Layer for GradcheckArgs {
    fn over(self, file: Self) -> Self {
        GradcheckArgs {
            full: self.full || file.full,
            seed: self.seed.or(file.seed),
            out: self.out.or(file.out),
            config: self.config,
        }
    }
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AblateArgs {
    #[arg(long, value_parser = parse_axis)]
    pub axis: Option<AblationAxis>,
    /// Number of seeds per cell, `0..seeds`.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
layer!(AblateArgs { axis, seeds, data, out, jobs } nested { model });

fn parse_axis(s: &str) -> Result<AblationAxis, String> {
    s.parse().map_err(|e: signa_core::Error| e.to_string())
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ReportArgs {
    /// Run directories holding `metrics.json` and optionally `history.csv`.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// Write the tables here instead of printing them.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Layer for ReportArgs {
    fn over(self, file: Self) -> Self {
        ReportArgs {
            runs: if self.runs.is_empty() { file.runs } else { self.runs },
            out: self.out.or(file.out),
            config: self.config,
        }
    }
}

/// Reads a config file (or the `config` object of a manifest), rejecting
/// keys that name no flag.
pub fn read_config<T: DeserializeOwned + Serialize + Default>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    if let Some(inner) = value.get("config").filter(|_| value.get("command").is_some()) {
        value = inner.clone();
    }
    let known = serde_json::to_value(T::default())?;
    if let (Some(given), Some(known)) = (value.as_object(), known.as_object()) {
        let unknown: Vec<&String> = given.keys().filter(|k| !known.contains_key(*k)).collect();
        if !unknown.is_empty() {
            anyhow::bail!("{}: unknown keys {unknown:?}", path.display());
        }
    }
    serde_json::from_value(value).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

/// Command-line values layered over the `--config` file, if any.
pub fn with_config<T>(args: T, config: Option<&Path>) -> anyhow::Result<T>
where
    T: Layer + DeserializeOwned + Serialize + Default,
{
    match config {
        None => Ok(args),
        Some(path) => Ok(args.over(read_config(path)?)),
    }
}
