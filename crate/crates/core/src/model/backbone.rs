use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attention::{init_signa_params, signa_block, SignaConfig, SignaNodes};
use crate::numerics::{Activation, DiffGraph, NodeId, Tensor, DEFAULT_LEAKY_SLOPE};
use crate::params::{Bindings, ParamStore};
use crate::rng;
use crate::semantics::{EmbeddingMatrix, GraphOperators, LabelGraph, SemanticEncoder};
use crate::{Error, Result};

const SIGNA_PREFIX: &str = "signa";
const GNN_PREFIX: &str = "gnn";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Output channels of the four stride-2 stages.
    pub stage_channels: [usize; 4],
    /// `C_img×H×W`.
    pub input: [usize; 3],
    /// Label count of the final affine classifier.
    pub classes: usize,
    #[serde(default = "default_slope")]
    pub slope: f64,
}

fn default_slope() -> f64 {
    DEFAULT_LEAKY_SLOPE
}

impl BackboneConfig {
    pub const DEFAULT_STAGES: [usize; 4] = [16, 32, 64, 128];

    pub fn new(input: [usize; 3], classes: usize) -> Self {
        BackboneConfig { stage_channels: Self::DEFAULT_STAGES, input, classes, slope: DEFAULT_LEAKY_SLOPE }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.contains(&0) || self.input.contains(&0) || self.classes == 0 {
            return Err(Error::InvalidArgument(format!(
                "backbone needs positive sizes, got stages {:?}, input {:?}, {} classes",
                self.stage_channels, self.input, self.classes
            )));
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::InvalidArgument(format!("leaky slope {} outside (0, 1)", self.slope)));
        }
        Ok(())
    }

    /// Spatial size after each stage (`ceil(x/2)` per stage).
    pub fn stage_extents(&self) -> [(usize, usize); 4] {
        let (mut h, mut w) = (self.input[1], self.input[2]);
        let mut out = [(0, 0); 4];
        for e in &mut out {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
            *e = (h, w);
        }
        out
    }
}

/// Label graph, word embeddings and the encoder that turns them into `L_s`.
#[derive(Clone, Debug)]
pub struct SemanticContext {
    pub graph: LabelGraph,
    pub embeddings: EmbeddingMatrix,
    pub encoder: SemanticEncoder,
    operators: GraphOperators,
}

impl SemanticContext {
    pub fn new(graph: LabelGraph, embeddings: EmbeddingMatrix, encoder: SemanticEncoder) -> Result<Self> {
        if embeddings.labels() != graph.classes() {
            return Err(Error::shape(
                "semantic_context",
                format!("{} embedding rows for {} graph labels", embeddings.labels(), graph.classes()),
            ));
        }
        if embeddings.dim() != encoder.in_dim {
            return Err(Error::shape(
                "semantic_context",
                format!("embedding width {} but encoder expects {}", embeddings.dim(), encoder.in_dim),
            ));
        }
        let operators = GraphOperators::from_graph(&graph);
        Ok(SemanticContext { graph, embeddings, encoder, operators })
    }

    pub fn operators(&self) -> &GraphOperators {
        &self.operators
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub backbone: BackboneConfig,
    pub signa: Option<SignaConfig>,
    pub semantic: Option<SemanticContext>,
    pub params: ParamStore,
}

fn stage_path(stage: usize, leaf: &str) -> String {
    format!("backbone.stage{stage}.{leaf}")
}

/// Builds and initializes a model. Every parameter tensor is drawn from its
/// own stream derived from `seed` and its path, so the backbone of a model
/// with the block matches the baseline built from the same seed.
pub fn build_model(
    backbone: BackboneConfig,
    signa: Option<SignaConfig>,
    graph: Option<&LabelGraph>,
    embeddings: Option<&EmbeddingMatrix>,
    seed: u64,
) -> Result<Model> {
    backbone.validate()?;
    let mut params = ParamStore::new();
    let mut cin = backbone.input[0];
    for (s, &cout) in backbone.stage_channels.iter().enumerate() {
        let path = stage_path(s + 1, "weight");
        let fan_in = (cin * 9) as f64;
        let bound = libm::sqrt(6.0 / ((1.0 + backbone.slope * backbone.slope) * fan_in));
        let mut r = rng::seeded(rng::derive_seed(seed, &path));
        params.insert(path, rng::uniform_tensor(&[cout, cin, 3, 3], bound, &mut r));
        params.insert(stage_path(s + 1, "bias"), Tensor::zeros([cout]));
        cin = cout;
    }
    let bound = libm::sqrt(1.0 / cin as f64);
    for (leaf, shape) in [("weight", alloc::vec![backbone.classes, cin]), ("bias", alloc::vec![backbone.classes])] {
        let path = format!("classifier.{leaf}");
        let mut r = rng::seeded(rng::derive_seed(seed, &path));
        params.insert(path, rng::uniform_tensor(&shape, bound, &mut r));
    }

    let semantic = match &signa {
        None => None,
        Some(cfg) => {
            cfg.validate()?;
            let stage_dim = backbone.stage_channels[cfg.insertion_layer - 1];
            if cfg.dim != stage_dim {
                return Err(Error::DimensionMismatch { semantic: cfg.dim, stage: stage_dim });
            }
            if cfg.labels != backbone.classes {
                return Err(Error::InvalidArgument(format!(
                    "block configured for {} labels, classifier has {}",
                    cfg.labels, backbone.classes
                )));
            }
            let graph = graph.ok_or_else(|| Error::InvalidArgument("the attention block needs a label graph".into()))?;
            let embeddings =
                embeddings.ok_or_else(|| Error::InvalidArgument("the attention block needs label embeddings".into()))?;
            if graph.classes() != backbone.classes {
                return Err(Error::InvalidArgument(format!(
                    "label graph has {} labels, classifier has {}",
                    graph.classes(),
                    backbone.classes
                )));
            }
            let encoder = SemanticEncoder::new(cfg.gnn, embeddings.dim(), cfg.dim)?;
            encoder.init_params(&mut params, GNN_PREFIX, seed);
            init_signa_params(&mut params, SIGNA_PREFIX, cfg, seed);
            Some(SemanticContext::new(graph.clone(), embeddings.clone(), encoder)?)
        }
    };
    Ok(Model { backbone, signa, semantic, params })
}

struct ModelNodes {
    stages: Vec<(NodeId, NodeId)>,
    classifier: (NodeId, NodeId),
    signa: Option<(SignaNodes, NodeId)>,
}

impl Model {
    pub fn classes(&self) -> usize {
        self.backbone.classes
    }

    /// Copies every parameter the two models share (same path and shape).
    pub fn copy_shared_params(&mut self, other: &Model) {
        for (path, t) in self.params.iter_mut() {
            if let Ok(src) = other.params.get(path) {
                if src.shape() == t.shape() {
                    *t = src.clone();
                }
            }
        }
    }

    fn bind_nodes(&self, g: &mut DiffGraph, bindings: &Bindings) -> Result<ModelNodes> {
        let stages = (1..=4)
            .map(|s| Ok((bindings.node(&stage_path(s, "weight"))?, bindings.node(&stage_path(s, "bias"))?)))
            .collect::<Result<Vec<_>>>()?;
        let classifier = (bindings.node("classifier.weight")?, bindings.node("classifier.bias")?);
        let signa = match (&self.signa, &self.semantic) {
            (Some(cfg), Some(ctx)) => {
                let nodes = SignaNodes::bind(bindings, SIGNA_PREFIX, cfg.heads)?;
                let emb = g.constant(ctx.embeddings.matrix.clone());
                let ls = ctx.encoder.forward(g, bindings, GNN_PREFIX, emb, ctx.operators())?;
                Some((nodes, ls))
            }
            (None, _) => None,
            (Some(_), None) => return Err(Error::InvalidArgument("attention block without semantic context".into())),
        };
        Ok(ModelNodes { stages, classifier, signa })
    }

    fn record_sample(&self, g: &mut DiffGraph, nodes: &ModelNodes, image: NodeId) -> Result<NodeId> {
        let act = Activation::LeakyRelu(self.backbone.slope);
        let mut x = image;
        for (s, &(w, b)) in nodes.stages.iter().enumerate() {
            x = g.conv2d(x, w, 2, 1)?;
            x = g.add_channel_bias(x, b)?;
            x = g.activation(x, act)?;
            if let (Some(cfg), Some((signa, ls))) = (&self.signa, &nodes.signa) {
                if cfg.insertion_layer == s + 1 {
                    x = signa_block(g, x, *ls, signa, cfg)?;
                }
            }
        }
        let pooled = g.global_avg_pool(x)?;
        g.affine(pooled, nodes.classifier.0, nodes.classifier.1)
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.backbone.input {
            return Err(Error::shape(
                "forward",
                format!("image {:?} does not match input {:?}", image.shape(), self.backbone.input),
            ));
        }
        Ok(())
    }

    /// Records the forward pass of `images` on `g` and returns the `B×C`
    /// logits node together with the parameter bindings.
    pub fn record(&self, g: &mut DiffGraph, images: &[Tensor]) -> Result<(NodeId, Bindings)> {
        if images.is_empty() {
            return Err(Error::shape("forward", "empty batch"));
        }
        for img in images {
            self.check_image(img)?;
        }
        let bindings = self.params.bind(g);
        let nodes = self.bind_nodes(g, &bindings)?;
        let rows = images
            .iter()
            .map(|img| {
                let x = g.constant(img.clone());
                self.record_sample(g, &nodes, x)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((g.stack_rows(&rows)?, bindings))
    }

    /// Logits (`B×C`) of a list of `C_img×H×W` images.
    pub fn forward_images(&self, images: &[Tensor]) -> Result<Tensor> {
        let mut g = DiffGraph::new();
        let (logits, _) = self.record(&mut g, images)?;
        Ok(g.value(logits).clone())
    }

    /// Logits (`B×C`) of a `B×C_img×H×W` batch.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.backbone.input {
            return Err(Error::shape(
                "forward",
                format!("batch {:?} does not match B×{:?}", s, self.backbone.input),
            ));
        }
        let per = self.backbone.input.iter().product::<usize>();
        let images = batch
            .data()
            .chunks(per)
            .map(|c| Tensor::new(self.backbone.input, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        self.forward_images(&images)
    }

    /// `L_s` for the current parameters, when the model has the block.
    pub fn semantic_features(&self) -> Result<Option<Tensor>> {
        let Some(ctx) = &self.semantic else { return Ok(None) };
        let mut g = DiffGraph::new();
        let bindings = self.params.bind(&mut g);
        let emb = g.constant(ctx.embeddings.matrix.clone());
        let ls = ctx.encoder.forward(&mut g, &bindings, GNN_PREFIX, emb, ctx.operators())?;
        Ok(Some(g.value(ls).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::GateMode;
    use crate::semantics::GnnKind;
    use alloc::string::ToString;
    use alloc::vec;

    fn tiny_backbone() -> BackboneConfig {
        BackboneConfig { stage_channels: [4, 8, 8, 8], input: [3, 8, 8], classes: 3, slope: 0.01 }
    }

    fn tiny_context() -> (LabelGraph, EmbeddingMatrix) {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let sets: Vec<Vec<usize>> = vec![vec![0, 1], vec![1, 2], vec![0, 1, 2], vec![2]];
        let graph = LabelGraph::from_label_sets(labels, &sets, 0.4).unwrap();
        (graph, EmbeddingMatrix::synthetic(3, 5, 1).unwrap())
    }

    fn tiny_signa(gnn: GnnKind) -> SignaConfig {
        SignaConfig { heads: 2, gnn, ..SignaConfig::new(8, 3) }
    }

    fn image(seed: u64) -> Tensor {
        rng::normal_tensor(&[3, 8, 8], &mut rng::seeded(seed))
    }

    #[test]
    fn baseline_has_fewer_parameters() {
        let (graph, emb) = tiny_context();
        let base = build_model(tiny_backbone(), None, None, None, 0).unwrap();
        let full = build_model(tiny_backbone(), Some(tiny_signa(GnnKind::Sage)), Some(&graph), Some(&emb), 0).unwrap();
        assert!(base.params.numel() < full.params.numel());
        for (path, t) in base.params.iter() {
            assert_eq!(full.params.get(path).unwrap(), t, "{path}");
        }
    }

    #[test]
    fn insertion_dimension_must_match_stage() {
        let (graph, emb) = tiny_context();
        let mut backbone = tiny_backbone();
        backbone.stage_channels = [16, 32, 64, 128];
        let cfg = SignaConfig { heads: 2, ..SignaConfig::new(16, 3) };
        let err = build_model(backbone.clone(), Some(cfg), Some(&graph), Some(&emb), 0).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { semantic: 16, stage: 32 });
        let cfg = SignaConfig { heads: 2, ..SignaConfig::new(32, 3) };
        assert!(build_model(backbone, Some(cfg), Some(&graph), Some(&emb), 0).is_ok());
    }

    #[test]
    fn output_has_one_logit_per_class() {
        let (graph, emb) = tiny_context();
        for layer in 1..=4 {
            for gnn in GnnKind::ALL {
                let dim = tiny_backbone().stage_channels[layer - 1];
                let cfg = SignaConfig { insertion_layer: layer, ..tiny_signa(gnn) };
                let cfg = SignaConfig { dim, ..cfg };
                let m = build_model(tiny_backbone(), Some(cfg), Some(&graph), Some(&emb), 3).unwrap();
                let out = m.forward_images(&[image(1), image(2)]).unwrap();
                assert_eq!(out.shape(), &[2, 3]);
                assert!(out.all_finite());
            }
        }
    }

    #[test]
    fn zero_parameters_give_classifier_bias() {
        let (graph, emb) = tiny_context();
        let mut m = build_model(tiny_backbone(), Some(tiny_signa(GnnKind::Gat)), Some(&graph), Some(&emb), 0).unwrap();
        for (_, t) in m.params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let bias = [0.25, -1.0, 3.0];
        m.params.get_mut("classifier.bias").unwrap().data_mut().copy_from_slice(&bias);
        let out = m.forward_images(&[image(4)]).unwrap();
        assert_eq!(out.data(), &bias);
    }

    #[test]
    fn rows_do_not_depend_on_batch_mates() {
        let (graph, emb) = tiny_context();
        let m = build_model(tiny_backbone(), Some(tiny_signa(GnnKind::Sage)), Some(&graph), Some(&emb), 5).unwrap();
        let imgs: Vec<Tensor> = (0..4).map(image).collect();
        let batch = m.forward_images(&imgs).unwrap();
        for (i, img) in imgs.iter().enumerate() {
            let single = m.forward_images(core::slice::from_ref(img)).unwrap();
            assert_eq!(single.data(), &batch.data()[i * 3..(i + 1) * 3]);
        }
    }

    #[test]
    fn batch_tensor_matches_image_list() {
        let m = build_model(tiny_backbone(), None, None, None, 2).unwrap();
        let imgs: Vec<Tensor> = (0..2).map(image).collect();
        let flat: Vec<f64> = imgs.iter().flat_map(|t| t.data().to_vec()).collect();
        let batch = Tensor::new([2, 3, 8, 8], flat).unwrap();
        assert_eq!(m.forward(&batch).unwrap(), m.forward_images(&imgs).unwrap());
        assert!(m.forward(&Tensor::zeros([2, 3, 4, 4])).is_err());
    }

    #[test]
    fn neutral_block_reproduces_baseline() {
        let (graph, emb) = tiny_context();
        let cfg = SignaConfig { gate: GateMode::Linear, residual: true, ..tiny_signa(GnnKind::Sage) };
        let base = build_model(tiny_backbone(), None, None, None, 9).unwrap();
        let mut full = build_model(tiny_backbone(), Some(cfg), Some(&graph), Some(&emb), 9).unwrap();
        for path in ["signa.fuse.weight", "signa.fuse.bias"] {
            full.params.get_mut(path).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let imgs: Vec<Tensor> = (10..13).map(image).collect();
        let a = base.forward_images(&imgs).unwrap();
        let b = full.forward_images(&imgs).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
