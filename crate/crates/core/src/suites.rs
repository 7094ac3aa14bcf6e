//! Finite-difference gradient suites over every differentiable piece.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{signa_block, GateMode, HeadNodes, SignaConfig, SignaNodes};
use crate::model::{build_model, BackboneConfig};
use crate::numerics::{check_recorded, finite_diff_check, Activation, DiffGraph, NodeId, Tensor, DEFAULT_STEP};
use crate::rng::{self, SeededRng};
use crate::semantics::{gat_layer, gcn_layer, sage_layer, EmbeddingMatrix, GnnKind, GraphOperators, LabelGraph, SemanticEncoder};
use crate::{Error, Result};

pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub error: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.max_rel_error <= self.tolerance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteLevel {
    /// A few instances per primitive, no end-to-end model.
    Quick,
    /// Twenty instances per primitive plus the end-to-end model.
    Full,
}

type Builder = fn(&mut DiffGraph, &[NodeId], &mut SeededRng) -> Result<NodeId>;

struct Case {
    name: &'static str,
    inputs: fn(&mut SeededRng) -> Vec<Tensor>,
    build: Builder,
}

fn dim(r: &mut SeededRng, lo: usize, hi: usize) -> usize {
    r.random_range(lo..=hi)
}

fn normal(shape: &[usize], r: &mut SeededRng) -> Tensor {
    rng::normal_tensor(shape, r)
}

/// `Σ out ⊙ R` with a fixed random `R`, so that every output entry matters.
fn project(g: &mut DiffGraph, out: NodeId, r: &mut SeededRng) -> Result<NodeId> {
    let w = normal(g.value(out).shape(), r);
    let w = g.constant(w);
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            inputs: |r| {
                let (m, k, n) = (dim(r, 1, 4), dim(r, 1, 4), dim(r, 1, 4));
                vec![normal(&[m, k], r), normal(&[k, n], r)]
            },
            build: |g, x, r| {
                let y = g.matmul(x[0], x[1])?;
                project(g, y, r)
            },
        },
        Case {
            name: "matmul_canonical",
            inputs: |r| {
                let (m, k, n) = (dim(r, 1, 4), dim(r, 1, 4), dim(r, 1, 4));
                vec![normal(&[m, k], r), normal(&[k, n], r)]
            },
            build: |g, x, r| {
                let y = g.matmul_canonical(x[0], x[1])?;
                project(g, y, r)
            },
        },
        Case {
            name: "softmax_rows",
            inputs: |r| {
                let (m, n) = (dim(r, 1, 4), dim(r, 2, 5));
                vec![normal(&[m, n], r)]
            },
            build: |g, x, r| {
                let y = g.softmax_rows(x[0])?;
                project(g, y, r)
            },
        },
        Case {
            name: "masked_softmax_rows",
            inputs: |r| {
                let n = dim(r, 2, 5);
                vec![normal(&[n, n], r)]
            },
            build: |g, x, r| {
                let n = g.value(x[0]).rows();
                let mask = (0..n * n).map(|i| i % (n + 1) == 0 || r.random_bool(0.5)).collect();
                let y = g.masked_softmax_rows(x[0], mask)?;
                project(g, y, r)
            },
        },
        Case {
            name: "leaky_relu",
            inputs: |r| vec![normal(&[dim(r, 2, 8)], r)],
            build: |g, x, r| {
                let y = g.activation(x[0], Activation::LeakyRelu(0.01))?;
                project(g, y, r)
            },
        },
        Case {
            name: "sigmoid",
            inputs: |r| vec![normal(&[dim(r, 2, 8)], r)],
            build: |g, x, r| {
                let y = g.activation(x[0], Activation::Sigmoid)?;
                project(g, y, r)
            },
        },
        Case {
            name: "global_avg_pool",
            inputs: |r| {
                let s = [dim(r, 1, 4), dim(r, 1, 4), dim(r, 1, 4)];
                vec![normal(&s, r)]
            },
            build: |g, x, r| {
                let y = g.global_avg_pool(x[0])?;
                project(g, y, r)
            },
        },
        Case {
            name: "conv2d",
            inputs: |r| {
                let (cin, cout, k) = (dim(r, 1, 3), dim(r, 1, 3), dim(r, 1, 3));
                let (h, w) = (dim(r, k, 6), dim(r, k, 6));
                vec![normal(&[cin, h, w], r), normal(&[cout, cin, k, k], r)]
            },
            build: |g, x, r| {
                let (stride, pad) = (dim(r, 1, 2), dim(r, 0, 1));
                let y = g.conv2d(x[0], x[1], stride, pad)?;
                project(g, y, r)
            },
        },
        Case {
            name: "affine",
            inputs: |r| {
                let (m, n) = (dim(r, 1, 5), dim(r, 1, 5));
                vec![normal(&[n], r), normal(&[m, n], r), normal(&[m], r)]
            },
            build: |g, x, r| {
                let y = g.affine(x[0], x[1], x[2])?;
                project(g, y, r)
            },
        },
        Case {
            name: "add_channel_bias",
            inputs: |r| {
                let s = [dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 3)];
                vec![normal(&s, r), normal(&[s[0]], r)]
            },
            build: |g, x, r| {
                let y = g.add_channel_bias(x[0], x[1])?;
                project(g, y, r)
            },
        },
        Case {
            name: "channel_scale",
            inputs: |r| {
                let s = [dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 3)];
                vec![normal(&s, r), normal(&[s[0]], r)]
            },
            build: |g, x, r| {
                let y = g.channel_scale(x[0], x[1])?;
                project(g, y, r)
            },
        },
        Case {
            name: "add",
            inputs: |r| {
                let s = [dim(r, 1, 4), dim(r, 1, 4)];
                vec![normal(&s, r), normal(&s, r)]
            },
            build: |g, x, r| {
                let y = g.add(x[0], x[1])?;
                project(g, y, r)
            },
        },
        Case {
            name: "mul",
            inputs: |r| {
                let s = [dim(r, 1, 4), dim(r, 1, 4)];
                vec![normal(&s, r), normal(&s, r)]
            },
            build: |g, x, r| {
                let y = g.mul(x[0], x[1])?;
                project(g, y, r)
            },
        },
        Case {
            name: "sum",
            inputs: |r| vec![normal(&[dim(r, 1, 6)], r)],
            build: |g, x, _| g.sum(x[0]),
        },
        Case {
            name: "reshape",
            inputs: |r| {
                let s = [dim(r, 1, 4), dim(r, 1, 4)];
                vec![normal(&s, r)]
            },
            build: |g, x, r| {
                let s = g.value(x[0]).shape().to_vec();
                let y = g.reshape(x[0], [s[1], s[0]])?;
                project(g, y, r)
            },
        },
        Case {
            name: "concat",
            inputs: |r| (0..dim(r, 1, 3)).map(|_| normal(&[dim(r, 1, 4)], r)).collect(),
            build: |g, x, r| {
                let y = g.concat(x)?;
                project(g, y, r)
            },
        },
        Case {
            name: "stack_rows",
            inputs: |r| {
                let n = dim(r, 1, 4);
                (0..dim(r, 1, 3)).map(|_| normal(&[n], r)).collect()
            },
            build: |g, x, r| {
                let y = g.stack_rows(x)?;
                project(g, y, r)
            },
        },
        Case {
            name: "outer_sum",
            inputs: |r| vec![normal(&[dim(r, 1, 4)], r), normal(&[dim(r, 1, 4)], r)],
            build: |g, x, r| {
                let y = g.outer_sum(x[0], x[1])?;
                project(g, y, r)
            },
        },
        Case {
            name: "bce_loss",
            inputs: |r| {
                let s = [dim(r, 1, 4), dim(r, 1, 4)];
                vec![normal(&s, r)]
            },
            build: |g, x, r| {
                let n = g.value(x[0]).len();
                let targets: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.random_bool(0.5)))).collect();
                g.bce_loss(x[0], &targets, 1e-7)
            },
        },
    ]
}

fn run_instances(
    name: String,
    instances: usize,
    tolerance: f64,
    seed: u64,
    mut one: impl FnMut(&mut SeededRng) -> Result<crate::numerics::GradCheckReport>,
) -> SuiteResult {
    let mut r = rng::seeded(rng::derive_seed(seed, &name));
    let mut result =
        SuiteResult { name, instances: 0, coordinates: 0, max_rel_error: 0.0, tolerance, error: None };
    for _ in 0..instances {
        match one(&mut r) {
            Ok(rep) => {
                result.instances += 1;
                result.coordinates += rep.coordinates;
                result.max_rel_error = result.max_rel_error.max(rep.max_rel_error);
            }
            Err(e) => {
                result.error = Some(e.to_string());
                break;
            }
        }
    }
    result
}

/// One suite per graph primitive, `instances` random shapes each.
pub fn primitive_suites(instances: usize, seed: u64) -> Vec<SuiteResult> {
    cases()
        .into_iter()
        .map(|case| {
            run_instances(case.name.to_string(), instances, PRIMITIVE_TOLERANCE, seed, |r| {
                let inputs = (case.inputs)(r);
                let mut build_rng = rng::seeded(r.random());
                finite_diff_check(|g, x| (case.build)(g, x, &mut build_rng), &inputs, DEFAULT_STEP)
            })
        })
        .collect()
}

/// Random symmetric adjacency with self loops on `n` nodes.
fn random_adjacency(n: usize, r: &mut SeededRng) -> Tensor {
    let mut a = Tensor::identity(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && r.random_bool(0.5) {
                a.data_mut()[i * n + j] = 1.0;
            }
        }
    }
    a
}

/// Single layers of each kind on random graphs with `n <= 5`, plus the
/// two-layer encoder.
pub fn gnn_suites(instances: usize, seed: u64) -> Vec<SuiteResult> {
    let mut out = Vec::new();
    for kind in GnnKind::ALL {
        out.push(run_instances(format!("{}_layer", kind.name()), instances, PRIMITIVE_TOLERANCE, seed, |r| {
            let n = dim(r, 1, 5);
            let (din, dout) = (dim(r, 1, 4), dim(r, 1, 4));
            let ops = GraphOperators::from_adjacency(&random_adjacency(n, r))?;
            let mut inputs = vec![normal(&[n, din], r), normal(&[din, dout], r)];
            match kind {
                GnnKind::Gcn => {}
                GnnKind::Sage => inputs.push(normal(&[din, dout], r)),
                GnnKind::Gat => {
                    inputs.push(normal(&[dout, 1], r));
                    inputs.push(normal(&[dout, 1], r));
                }
            }
            let mut pr = rng::seeded(r.random());
            finite_diff_check(
                |g, x| {
                    let act = Activation::LeakyRelu(0.01);
                    let y = match kind {
                        GnnKind::Gcn => {
                            let gh = g.constant(ops.normalized.clone());
                            gcn_layer(g, x[0], gh, x[1], act)?
                        }
                        GnnKind::Sage => {
                            let mn = g.constant(ops.neighbor_mean.clone());
                            sage_layer(g, x[0], mn, x[1], x[2], act)?
                        }
                        GnnKind::Gat => gat_layer(g, x[0], &ops.attention_mask, x[1], x[2], x[3], act)?,
                    };
                    project(g, y, &mut pr)
                },
                &inputs,
                DEFAULT_STEP,
            )
        }));
        out.push(run_instances(format!("{}_encoder", kind.name()), instances, PRIMITIVE_TOLERANCE, seed, |r| {
            let n = dim(r, 1, 5);
            let (din, d) = (dim(r, 1, 4), dim(r, 2, 6));
            let ops = GraphOperators::from_adjacency(&random_adjacency(n, r))?;
            let encoder = SemanticEncoder::new(kind, din, d)?;
            let mut store = crate::params::ParamStore::new();
            encoder.init_params(&mut store, "gnn", r.random());
            let mut g = DiffGraph::new();
            let bindings = store.bind(&mut g);
            let emb = g.param(normal(&[n, din], r));
            let y = encoder.forward(&mut g, &bindings, "gnn", emb, &ops)?;
            let loss = project(&mut g, y, r)?;
            let mut leaves: Vec<NodeId> = bindings.iter().map(|(_, &id)| id).collect();
            leaves.push(emb);
            check_recorded(&mut g, loss, &leaves, DEFAULT_STEP)
        }));
    }
    out
}

/// Full block, `D = 8`, `C = 3`, `N = 2` on a 4×4 map, for every gate and
/// residual setting. Checks the map, `L_s` and all block parameters.
pub fn signa_block_suites(instances: usize, seed: u64) -> Vec<SuiteResult> {
    let (d, c, n) = (8, 3, 2);
    let mut out = Vec::new();
    for gate in [GateMode::Sigmoid, GateMode::Linear] {
        for residual in [true, false] {
            let name = format!("signa_block_{}_{}", gate_name(gate), if residual { "residual" } else { "plain" });
            let cfg = SignaConfig { heads: n, gate, residual, ..SignaConfig::new(d, c) };
            out.push(run_instances(name, instances, PRIMITIVE_TOLERANCE, seed, |r| {
                let scale = |t: Tensor, s: f64| t.map(|v| v * s);
                let mut inputs = vec![normal(&[d, 4, 4], r), normal(&[c, d], r)];
                for _ in 0..n {
                    inputs.push(scale(normal(&[d * c, d], r), 0.3));
                    inputs.push(scale(normal(&[d * c], r), 0.3));
                    inputs.push(scale(normal(&[d, d], r), 0.3));
                    inputs.push(scale(normal(&[d], r), 0.3));
                }
                inputs.push(scale(normal(&[d, n * d], r), 0.3));
                inputs.push(scale(normal(&[d], r), 0.3));
                let mut pr = rng::seeded(r.random());
                finite_diff_check(
                    |g, x| {
                        let heads = (0..n)
                            .map(|h| HeadNodes {
                                interleave_weight: x[2 + 4 * h],
                                interleave_bias: x[3 + 4 * h],
                                value_weight: x[4 + 4 * h],
                                value_bias: x[5 + 4 * h],
                            })
                            .collect();
                        let nodes = SignaNodes { heads, fuse_weight: x[2 + 4 * n], fuse_bias: x[3 + 4 * n] };
                        let y = signa_block(g, x[0], x[1], &nodes, &cfg)?;
                        project(g, y, &mut pr)
                    },
                    &inputs,
                    DEFAULT_STEP,
                )
            }));
        }
    }
    out
}

fn gate_name(gate: GateMode) -> &'static str {
    match gate {
        GateMode::Sigmoid => "sigmoid",
        GateMode::Linear => "linear",
    }
}

/// Tiny model (8×8 input, stages 4,8,8,8, three labels, two heads after
/// stage 2): BCE loss gradient of every block, encoder and classifier
/// parameter.
pub fn end_to_end_suite(seed: u64) -> SuiteResult {
    run_instances("end_to_end_tiny_model".into(), 1, END_TO_END_TOLERANCE, seed, |r| {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let sets: Vec<Vec<usize>> = vec![vec![0, 1], vec![1, 2], vec![0, 1, 2], vec![0]];
        let graph = LabelGraph::from_label_sets(labels, &sets, 0.4)?;
        let emb = EmbeddingMatrix::synthetic(3, 16, r.random())?;
        let backbone = BackboneConfig { stage_channels: [4, 8, 8, 8], input: [3, 8, 8], classes: 3, slope: 0.01 };
        let cfg = SignaConfig { heads: 2, ..SignaConfig::new(8, 3) };
        let model = build_model(backbone, Some(cfg), Some(&graph), Some(&emb), r.random())?;
        let images: Vec<Tensor> = (0..2).map(|_| normal(&[3, 8, 8], r)).collect();
        let mut g = DiffGraph::new();
        let (logits, bindings) = model.record(&mut g, &images)?;
        let loss = g.bce_loss(logits, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0], 1e-7)?;
        let leaves: Vec<NodeId> = bindings
            .iter()
            .filter(|(p, _)| !p.starts_with("backbone."))
            .map(|(_, &id)| id)
            .collect();
        if leaves.is_empty() {
            return Err(Error::InvalidArgument("no parameters to check".into()));
        }
        check_recorded(&mut g, loss, &leaves, DEFAULT_STEP)
    })
}

/// Every suite at the given level.
pub fn run_gradient_suites(level: SuiteLevel, seed: u64) -> Vec<SuiteResult> {
    let instances = match level {
        SuiteLevel::Quick => 3,
        SuiteLevel::Full => 20,
    };
    let mut out = primitive_suites(instances, seed);
    out.extend(gnn_suites(instances, seed));
    out.extend(signa_block_suites(instances.min(5), seed));
    if level == SuiteLevel::Full {
        out.push(end_to_end_suite(seed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        for s in run_gradient_suites(SuiteLevel::Quick, 11) {
            assert!(s.passed(), "{s:?}");
            assert!(s.instances > 0 && s.coordinates > 0, "{}", s.name);
        }
    }
}
