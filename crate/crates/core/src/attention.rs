//! Semantic interleaving global channel attention.
//!
//! A feature map `f` (`D×w×h`) is squeezed to `Z` (`D`). Each head expands
//! `Z` affinely to `Z_s` (`D×C`), interleaves it with the semantic features
//! `L_s` (`C×D`) into the row-stochastic `M_s = softmax_rows(Z_s · L_s)`,
//! and mixes an affine value vector `Z_v` into `Z_w = M_s · Z_v`. The head
//! outputs are concatenated and mapped back to `D` weighting logits, which
//! gate the channels of `f` with a residual connection.

use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numerics::{Activation, DiffGraph, NodeId, Tensor};
use crate::params::{Bindings, ParamStore};
use crate::rng;
use crate::semantics::{GnnKind, DEFAULT_THRESHOLD};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    /// `sigmoid(w_logits)`, bounded in `(0, 1)`.
    #[default]
    Sigmoid,
    /// `w_logits` used as is.
    Linear,
}

impl FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(GateMode::Sigmoid),
            "linear" => Ok(GateMode::Linear),
            other => Err(Error::InvalidArgument(format!("unknown gate mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignaConfig {
    /// Number of attention heads.
    pub heads: usize,
    /// Backbone stage (1-based) after which the block is inserted.
    pub insertion_layer: usize,
    pub gnn: GnnKind,
    /// Edge threshold of the label graph.
    pub threshold: f64,
    /// Channel count `D` at the insertion point.
    pub dim: usize,
    /// Label count `C`.
    pub labels: usize,
    pub gate: GateMode,
    pub residual: bool,
}

impl SignaConfig {
    pub const DEFAULT_HEADS: usize = 6;
    pub const DEFAULT_LAYER: usize = 2;

    pub fn new(dim: usize, labels: usize) -> Self {
        SignaConfig {
            heads: Self::DEFAULT_HEADS,
            insertion_layer: Self::DEFAULT_LAYER,
            gnn: GnnKind::default(),
            threshold: DEFAULT_THRESHOLD,
            dim,
            labels,
            gate: GateMode::default(),
            residual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_settings()?;
        if self.dim < 2 || self.labels == 0 {
            return Err(Error::InvalidArgument(format!(
                "need D >= 2 and C >= 1, got D={} C={}",
                self.dim, self.labels
            )));
        }
        Ok(())
    }

    /// Checks everything except `dim` and `labels`, which are often filled
    /// in later from the backbone and the dataset.
    pub fn validate_settings(&self) -> Result<()> {
        if self.heads == 0 {
            return Err(Error::InvalidArgument("head count must be at least 1".into()));
        }
        if !(1..=4).contains(&self.insertion_layer) {
            return Err(Error::InvalidArgument(format!(
                "insertion layer must be in 1..=4, got {}",
                self.insertion_layer
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidArgument(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// Parameters of one attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct SignaHeadParams {
    /// `(D·C)×D` interleaving weight.
    pub interleave_weight: Tensor,
    /// `D·C` interleaving bias.
    pub interleave_bias: Tensor,
    /// `D×D` value weight.
    pub value_weight: Tensor,
    /// `D` value bias.
    pub value_bias: Tensor,
}

/// Concatenate-then-map fusion of the head outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FuseParams {
    /// `D×(N·D)`.
    pub weight: Tensor,
    /// `D`.
    pub bias: Tensor,
}

fn head_path(prefix: &str, head: usize, leaf: &str) -> alloc::string::String {
    format!("{prefix}.head{head}.{leaf}")
}

/// Graph nodes of the block's parameters.
#[derive(Clone, Debug)]
pub struct SignaNodes {
    pub heads: Vec<HeadNodes>,
    pub fuse_weight: NodeId,
    pub fuse_bias: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadNodes {
    pub interleave_weight: NodeId,
    pub interleave_bias: NodeId,
    pub value_weight: NodeId,
    pub value_bias: NodeId,
}

impl HeadNodes {
    pub fn record(g: &mut DiffGraph, p: &SignaHeadParams) -> Self {
        HeadNodes {
            interleave_weight: g.param(p.interleave_weight.clone()),
            interleave_bias: g.param(p.interleave_bias.clone()),
            value_weight: g.param(p.value_weight.clone()),
            value_bias: g.param(p.value_bias.clone()),
        }
    }
}

impl SignaNodes {
    pub fn bind(bindings: &Bindings, prefix: &str, heads: usize) -> Result<Self> {
        let heads = (0..heads)
            .map(|h| {
                Ok(HeadNodes {
                    interleave_weight: bindings.node(&head_path(prefix, h, "interleave.weight"))?,
                    interleave_bias: bindings.node(&head_path(prefix, h, "interleave.bias"))?,
                    value_weight: bindings.node(&head_path(prefix, h, "value.weight"))?,
                    value_bias: bindings.node(&head_path(prefix, h, "value.bias"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SignaNodes {
            heads,
            fuse_weight: bindings.node(&format!("{prefix}.fuse.weight"))?,
            fuse_bias: bindings.node(&format!("{prefix}.fuse.bias"))?,
        })
    }
}

/// Adds the block's parameters under `prefix`, each entry uniform in
/// `±sqrt(1/fan_in)` of its layer.
pub fn init_signa_params(store: &mut ParamStore, prefix: &str, cfg: &SignaConfig, seed: u64) {
    let (d, c, n) = (cfg.dim, cfg.labels, cfg.heads);
    let mut put = |path: alloc::string::String, shape: &[usize], fan_in: usize| {
        let mut r = rng::seeded(rng::derive_seed(seed, &path));
        store.insert(path, rng::uniform_tensor(shape, libm::sqrt(1.0 / fan_in as f64), &mut r));
    };
    for h in 0..n {
        put(head_path(prefix, h, "interleave.weight"), &[d * c, d], d);
        put(head_path(prefix, h, "interleave.bias"), &[d * c], d);
        put(head_path(prefix, h, "value.weight"), &[d, d], d);
        put(head_path(prefix, h, "value.bias"), &[d], d);
    }
    put(format!("{prefix}.fuse.weight"), &[d, n * d], n * d);
    put(format!("{prefix}.fuse.bias"), &[d], n * d);
}

/// Reads one head's parameters out of a store.
pub fn head_params(store: &ParamStore, prefix: &str, head: usize) -> Result<SignaHeadParams> {
    Ok(SignaHeadParams {
        interleave_weight: store.get(&head_path(prefix, head, "interleave.weight"))?.clone(),
        interleave_bias: store.get(&head_path(prefix, head, "interleave.bias"))?.clone(),
        value_weight: store.get(&head_path(prefix, head, "value.weight"))?.clone(),
        value_bias: store.get(&head_path(prefix, head, "value.bias"))?.clone(),
    })
}

/// Global average pool of a `D×w×h` map.
pub fn squeeze_channels(g: &mut DiffGraph, f: NodeId) -> Result<NodeId> {
    if g.value(f).rank() != 3 {
        return Err(Error::shape("squeeze_channels", format!("expected [D,w,h], got {:?}", g.value(f).shape())));
    }
    g.global_avg_pool(f)
}

/// `softmax_rows(Z_s · L_s)` for an already expanded `Z_s` (`D×C`).
///
/// The product sums over labels in a value-determined order, so permuting
/// the label axis of both operands reproduces the softmax inputs bit for bit.
pub fn interleave_expanded(g: &mut DiffGraph, zs: NodeId, ls: NodeId) -> Result<NodeId> {
    let logits = g.matmul_canonical(zs, ls)?;
    g.softmax_rows(logits)
}

/// `M_s = softmax_rows(reshape(A·Z + b) · L_s)`, with the row-major reshape
/// placing element `d·C + c` of `A·Z + b` at `(d, c)`.
pub fn interleave(g: &mut DiffGraph, z: NodeId, ls: NodeId, head: &HeadNodes) -> Result<NodeId> {
    let (d, c) = semantic_dims(g, z, ls)?;
    let expanded = g.affine(z, head.interleave_weight, head.interleave_bias)?;
    if g.value(expanded).len() != d * c {
        return Err(Error::shape(
            "interleave",
            format!("expansion has {} entries, expected D·C = {}", g.value(expanded).len(), d * c),
        ));
    }
    let zs = g.reshape(expanded, [d, c])?;
    interleave_expanded(g, zs, ls)
}

fn semantic_dims(g: &DiffGraph, z: NodeId, ls: NodeId) -> Result<(usize, usize)> {
    let (zv, lv) = (g.value(z), g.value(ls));
    if zv.rank() != 1 || lv.rank() != 2 || lv.cols() != zv.len() {
        return Err(Error::shape(
            "interleave",
            format!("Z {:?} is incompatible with L_s {:?}", zv.shape(), lv.shape()),
        ));
    }
    Ok((zv.len(), lv.rows()))
}

/// One head: `Z_w = M_s · (V·Z + c)`.
pub fn attention_head(g: &mut DiffGraph, z: NodeId, ls: NodeId, head: &HeadNodes) -> Result<NodeId> {
    let d = g.value(z).len();
    let ms = interleave(g, z, ls, head)?;
    let zv = g.affine(z, head.value_weight, head.value_bias)?;
    let zv = g.reshape(zv, [d, 1])?;
    let zw = g.matmul(ms, zv)?;
    g.reshape(zw, [d])
}

/// Concatenates the head outputs and maps them to `D` weighting logits.
pub fn multi_head_fuse(g: &mut DiffGraph, heads: &[NodeId], weight: NodeId, bias: NodeId) -> Result<NodeId> {
    let first = heads.first().ok_or_else(|| Error::InvalidArgument("at least one head is required".into()))?;
    let d = g.value(*first).len();
    if heads.iter().any(|&h| g.value(h).len() != d) {
        return Err(Error::shape("multi_head_fuse", "head outputs differ in length"));
    }
    let w = g.value(weight);
    if w.rank() != 2 || w.cols() != heads.len() * d {
        return Err(Error::shape(
            "multi_head_fuse",
            format!("{} heads of length {d} against fusion weight {:?}", heads.len(), w.shape()),
        ));
    }
    let cat = g.concat(heads)?;
    g.affine(cat, weight, bias)
}

/// `f ⊙ gate + f` (or without the residual), gate per channel.
pub fn apply_weighting(
    g: &mut DiffGraph,
    f: NodeId,
    w_logits: NodeId,
    gate: GateMode,
    residual: bool,
) -> Result<NodeId> {
    let gate = match gate {
        GateMode::Sigmoid => g.activation(w_logits, Activation::Sigmoid)?,
        GateMode::Linear => w_logits,
    };
    let weighted = g.channel_scale(f, gate)?;
    if residual {
        g.add(weighted, f)
    } else {
        Ok(weighted)
    }
}

/// Full block: squeeze, `N` heads on the same `Z`, fusion, weighting.
pub fn signa_block(
    g: &mut DiffGraph,
    f: NodeId,
    ls: NodeId,
    params: &SignaNodes,
    cfg: &SignaConfig,
) -> Result<NodeId> {
    if params.heads.len() != cfg.heads {
        return Err(Error::InvalidArgument(format!(
            "config expects {} heads, parameters provide {}",
            cfg.heads,
            params.heads.len()
        )));
    }
    let z = squeeze_channels(g, f)?;
    let outputs = params
        .heads
        .iter()
        .map(|head| attention_head(g, z, ls, head))
        .collect::<Result<Vec<_>>>()?;
    let logits = multi_head_fuse(g, &outputs, params.fuse_weight, params.fuse_bias)?;
    apply_weighting(g, f, logits, cfg.gate, cfg.residual)
}

/// Forward-only evaluation of the block on plain tensors.
pub fn signa_block_forward(
    f: &Tensor,
    ls: &Tensor,
    store: &ParamStore,
    prefix: &str,
    cfg: &SignaConfig,
) -> Result<Tensor> {
    let mut g = DiffGraph::new();
    let bindings = store.bind(&mut g);
    let nodes = SignaNodes::bind(&bindings, prefix, cfg.heads)?;
    let fid = g.constant(f.clone());
    let lid = g.constant(ls.clone());
    let out = signa_block(&mut g, fid, lid, &nodes, cfg)?;
    Ok(g.value(out).clone())
}
