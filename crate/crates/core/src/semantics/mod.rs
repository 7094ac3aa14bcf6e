//! Label co-occurrence graphs and their GNN encoding into per-label
//! semantic features.

mod cooccurrence;
mod embedding;
mod gnn;

pub use cooccurrence::{
    cooccurrence_probability, count_cooccurrence, normalize_adjacency, threshold_graph, CountMatrix,
    LabelGraph, DEFAULT_THRESHOLD,
};
pub use embedding::{EmbeddingMatrix, EmbeddingSource, GLOVE_DIM};
pub use gnn::{
    encode_semantics, gat_layer, gcn_layer, sage_layer, GnnKind, GraphOperators, SemanticEncoder,
    SemanticFeatures, GAT_ATTENTION_SLOPE,
};
