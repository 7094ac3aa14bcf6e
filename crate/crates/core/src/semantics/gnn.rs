use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, LabelGraph};
use crate::numerics::{Activation, DiffGraph, NodeId, Tensor, DEFAULT_LEAKY_SLOPE};
use crate::params::{Bindings, ParamStore};
use crate::rng;
use crate::{Error, Result};

/// Negative slope inside the GAT scoring function.
pub const GAT_ATTENTION_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Gcn,
    #[default]
    Sage,
    Gat,
}

impl GnnKind {
    pub const ALL: [GnnKind; 3] = [GnnKind::Gcn, GnnKind::Sage, GnnKind::Gat];

    pub fn name(self) -> &'static str {
        match self {
            GnnKind::Gcn => "gcn",
            GnnKind::Sage => "sage",
            GnnKind::Gat => "gat",
        }
    }
}

impl FromStr for GnnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(GnnKind::Gcn),
            "sage" | "graphsage" => Ok(GnnKind::Sage),
            "gat" => Ok(GnnKind::Gat),
            other => Err(Error::InvalidArgument(format!("unknown gnn kind {other:?}"))),
        }
    }
}

impl core::fmt::Display for GnnKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Constant graph operators derived from a thresholded adjacency matrix.
///
/// Node `j` is a neighbour of `i` when `i != j` and `G_ij > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphOperators {
    /// Symmetrically normalized adjacency with self loops (GCN).
    pub normalized: Tensor,
    /// Row `i` averages over the neighbours of `i`; zero for isolated nodes (GraphSAGE).
    pub neighbor_mean: Tensor,
    /// Row-major mask of `neighbours(i) ∪ {i}` (GAT).
    pub attention_mask: Vec<bool>,
}

impl GraphOperators {
    pub fn from_graph(graph: &LabelGraph) -> Self {
        Self::build(graph.adjacency(), graph.normalized().clone())
    }

    pub fn from_adjacency(adjacency: &Tensor) -> Result<Self> {
        let normalized = super::normalize_adjacency(adjacency)?;
        Ok(Self::build(adjacency, normalized))
    }

    fn build(adjacency: &Tensor, normalized: Tensor) -> Self {
        let n = adjacency.rows();
        let mut neighbor_mean = vec![0.0; n * n];
        let mut attention_mask = vec![false; n * n];
        for i in 0..n {
            let neighbours: Vec<usize> = (0..n).filter(|&j| j != i && adjacency.at(i, j) > 0.0).collect();
            for &j in &neighbours {
                neighbor_mean[i * n + j] = 1.0 / neighbours.len() as f64;
                attention_mask[i * n + j] = true;
            }
            attention_mask[i * n + i] = true;
        }
        GraphOperators {
            normalized,
            neighbor_mean: Tensor::new([n, n], neighbor_mean).expect("square"),
            attention_mask,
        }
    }

    pub fn nodes(&self) -> usize {
        self.normalized.rows()
    }
}

/// `act(Ĝ · H · W)`
pub fn gcn_layer(g: &mut DiffGraph, h: NodeId, g_hat: NodeId, w: NodeId, act: Activation) -> Result<NodeId> {
    let propagated = g.matmul(g_hat, h)?;
    let mixed = g.matmul(propagated, w)?;
    g.activation(mixed, act)
}

/// Mean-aggregator GraphSAGE: `act(H · W_self + mean_neigh(H) · W_neigh)`.
pub fn sage_layer(
    g: &mut DiffGraph,
    h: NodeId,
    neighbor_mean: NodeId,
    w_self: NodeId,
    w_neigh: NodeId,
    act: Activation,
) -> Result<NodeId> {
    let own = g.matmul(h, w_self)?;
    let pooled = g.matmul(neighbor_mean, h)?;
    let neigh = g.matmul(pooled, w_neigh)?;
    let sum = g.add(own, neigh)?;
    g.activation(sum, act)
}

/// Single-head GAT. Scores `e_ij = LeakyReLU(a_src·Wh_i + a_dst·Wh_j)` are
/// normalized over `j ∈ neighbours(i) ∪ {i}` and mix the rows of `H·W`.
///
/// `attn_src` and `attn_dst` are `d'×1` columns.
pub fn gat_layer(
    g: &mut DiffGraph,
    h: NodeId,
    mask: &[bool],
    w: NodeId,
    attn_src: NodeId,
    attn_dst: NodeId,
    act: Activation,
) -> Result<NodeId> {
    let wh = g.matmul(h, w)?;
    let src = g.matmul(wh, attn_src)?;
    let dst = g.matmul(wh, attn_dst)?;
    let scores = g.outer_sum(src, dst)?;
    let scores = g.activation(scores, Activation::LeakyRelu(GAT_ATTENTION_SLOPE))?;
    let alpha = g.masked_softmax_rows(scores, mask.to_vec())?;
    let mixed = g.matmul(alpha, wh)?;
    g.activation(mixed, act)
}

/// Two stacked GNN layers, `d_in → ⌊D/2⌋ → D`, hidden LeakyReLU and
/// identity on the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticEncoder {
    pub kind: GnnKind,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub slope: f64,
}

impl SemanticEncoder {
    pub fn new(kind: GnnKind, in_dim: usize, out_dim: usize) -> Result<Self> {
        if out_dim < 2 {
            return Err(Error::InvalidArgument(format!("semantic width must be at least 2, got {out_dim}")));
        }
        if in_dim == 0 {
            return Err(Error::InvalidArgument("embedding width must be positive".into()));
        }
        Ok(SemanticEncoder { kind, in_dim, hidden: out_dim / 2, out_dim, slope: DEFAULT_LEAKY_SLOPE })
    }

    fn layer_dims(&self) -> [(usize, usize); 2] {
        [(self.in_dim, self.hidden), (self.hidden, self.out_dim)]
    }

    fn param_shapes(&self, prefix: &str) -> Vec<(String, Vec<usize>, usize)> {
        let mut shapes = Vec::new();
        for (l, (din, dout)) in self.layer_dims().into_iter().enumerate() {
            let base = format!("{prefix}.layer{}", l + 1);
            match self.kind {
                GnnKind::Gcn => shapes.push((format!("{base}.weight"), vec![din, dout], din)),
                GnnKind::Sage => {
                    shapes.push((format!("{base}.self"), vec![din, dout], din));
                    shapes.push((format!("{base}.neigh"), vec![din, dout], din));
                }
                GnnKind::Gat => {
                    shapes.push((format!("{base}.weight"), vec![din, dout], din));
                    shapes.push((format!("{base}.attn_src"), vec![dout, 1], dout));
                    shapes.push((format!("{base}.attn_dst"), vec![dout, 1], dout));
                }
            }
        }
        shapes
    }

    /// Adds freshly initialized weights, uniform in `±sqrt(1/fan_in)`.
    pub fn init_params(&self, store: &mut ParamStore, prefix: &str, seed: u64) {
        for (path, shape, fan_in) in self.param_shapes(prefix) {
            let mut r = rng::seeded(rng::derive_seed(seed, &path));
            let bound = libm::sqrt(1.0 / fan_in as f64);
            store.insert(path, rng::uniform_tensor(&shape, bound, &mut r));
        }
    }

    /// Records the encoder on `g` and returns the `C×D` semantic features node.
    pub fn forward(
        &self,
        g: &mut DiffGraph,
        bindings: &Bindings,
        prefix: &str,
        embeddings: NodeId,
        ops: &GraphOperators,
    ) -> Result<NodeId> {
        let x = g.value(embeddings);
        if x.rank() != 2 || x.cols() != self.in_dim || x.rows() != ops.nodes() {
            return Err(Error::shape(
                "encode_semantics",
                format!(
                    "embeddings {:?} for {} labels and width {}",
                    x.shape(),
                    ops.nodes(),
                    self.in_dim
                ),
            ));
        }
        let constant = match self.kind {
            GnnKind::Gcn => Some(g.constant(ops.normalized.clone())),
            GnnKind::Sage => Some(g.constant(ops.neighbor_mean.clone())),
            GnnKind::Gat => None,
        };
        let mut h = embeddings;
        for layer in 1..=2 {
            let base = format!("{prefix}.layer{layer}");
            let act = if layer == 2 { Activation::Identity } else { Activation::LeakyRelu(self.slope) };
            h = match self.kind {
                GnnKind::Gcn => {
                    let w = bindings.node(&format!("{base}.weight"))?;
                    gcn_layer(g, h, constant.expect("gcn operator"), w, act)?
                }
                GnnKind::Sage => {
                    let ws = bindings.node(&format!("{base}.self"))?;
                    let wn = bindings.node(&format!("{base}.neigh"))?;
                    sage_layer(g, h, constant.expect("sage operator"), ws, wn, act)?
                }
                GnnKind::Gat => {
                    let w = bindings.node(&format!("{base}.weight"))?;
                    let a_src = bindings.node(&format!("{base}.attn_src"))?;
                    let a_dst = bindings.node(&format!("{base}.attn_dst"))?;
                    gat_layer(g, h, &ops.attention_mask, w, a_src, a_dst, act)?
                }
            };
        }
        Ok(h)
    }
}

/// Per-label semantic feature matrix `L_s` (`C×D`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticFeatures {
    pub matrix: Tensor,
}

impl SemanticFeatures {
    pub fn labels(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Encodes `graph` with freshly initialized weights drawn from `seed`.
pub fn encode_semantics(
    embeddings: &EmbeddingMatrix,
    graph: &LabelGraph,
    kind: GnnKind,
    dim: usize,
    seed: u64,
) -> Result<SemanticFeatures> {
    let encoder = SemanticEncoder::new(kind, embeddings.dim(), dim)?;
    let mut store = ParamStore::new();
    encoder.init_params(&mut store, "gnn", seed);
    let mut g = DiffGraph::new();
    let bindings = store.bind(&mut g);
    let emb = g.constant(embeddings.matrix.clone());
    let out = encoder.forward(&mut g, &bindings, "gnn", emb, &GraphOperators::from_graph(graph))?;
    Ok(SemanticFeatures { matrix: g.value(out).clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn graph_of(adj: &[&[f64]]) -> GraphOperators {
        GraphOperators::from_adjacency(&Tensor::from_rows(adj).unwrap()).unwrap()
    }

    #[test]
    fn gcn_identity_propagation() {
        let mut g = DiffGraph::new();
        let h = g.constant(Tensor::from_rows(&[&[1.0, 2.0], &[0.5, -1.0]]).unwrap());
        let i = g.constant(Tensor::identity(2));
        let w = g.constant(Tensor::identity(2));
        let out = gcn_layer(&mut g, h, i, w, Activation::LeakyRelu(0.01)).unwrap();
        assert_eq!(g.value(out).data(), &[1.0, 2.0, 0.5, -0.01]);
    }

    #[test]
    fn sage_edgeless_and_swap() {
        let mut g = DiffGraph::new();
        let h = g.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
        let ws = g.constant(Tensor::from_rows(&[&[2.0, 0.0], &[0.0, 1.0]]).unwrap());
        let wn = g.constant(Tensor::from_rows(&[&[5.0, 5.0], &[5.0, 5.0]]).unwrap());
        let edgeless = graph_of(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let m = g.constant(edgeless.neighbor_mean.clone());
        let out = sage_layer(&mut g, h, m, ws, wn, Activation::Identity).unwrap();
        assert_eq!(g.value(out).data(), &[2.0, 2.0, 6.0, 4.0]);

        let pair = graph_of(&[&[1.0, 0.5], &[0.5, 1.0]]);
        let m = g.constant(pair.neighbor_mean.clone());
        let zero = g.constant(Tensor::zeros([2, 2]));
        let eye = g.constant(Tensor::identity(2));
        let out = sage_layer(&mut g, h, m, zero, eye, Activation::Identity).unwrap();
        assert_eq!(g.value(out).data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn gat_edgeless_is_self_attention() {
        let ops = graph_of(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        let mut g = DiffGraph::new();
        let h = g.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]).unwrap());
        let w = g.constant(Tensor::from_rows(&[&[2.0, 1.0], &[-1.0, 3.0]]).unwrap());
        let a = g.constant(Tensor::from_rows(&[&[0.3], &[-0.7]]).unwrap());
        let out = gat_layer(&mut g, h, &ops.attention_mask, w, a, a, Activation::Identity).unwrap();
        assert_eq!(g.value(out).data(), &[2.0, 1.0, -1.0, 3.0, 1.0, 4.0]);
    }

    #[test]
    fn encoder_shapes_for_every_kind() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let graph = LabelGraph::from_label_sets(labels, &[vec![0, 1], vec![0], vec![1, 2]], 0.4).unwrap();
        let emb = EmbeddingMatrix::synthetic(3, 4, 1).unwrap();
        for kind in GnnKind::ALL {
            let ls = encode_semantics(&emb, &graph, kind, 8, 3).unwrap();
            assert_eq!(ls.matrix.shape(), &[3, 8]);
            let odd = encode_semantics(&emb, &graph, kind, 5, 3).unwrap();
            assert_eq!(odd.matrix.shape(), &[3, 5]);
        }
        assert!(encode_semantics(&emb, &graph, GnnKind::Gcn, 1, 3).is_err());
        assert_eq!(SemanticEncoder::new(GnnKind::Sage, 4, 5).unwrap().hidden, 2);
    }

    #[test]
    fn gnn_kind_parses() {
        assert_eq!("gat".parse::<GnnKind>().unwrap(), GnnKind::Gat);
        assert!("mlp".parse::<GnnKind>().is_err());
        assert_eq!(GnnKind::default(), GnnKind::Sage);
    }
}
