use alloc::format;
use alloc::vec::Vec;

use super::{DiffGraph, NodeId, Tensor};
use crate::{Error, Result};

/// Central-difference step used when callers have no better choice.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |analytic|, |numeric|)` over all coordinates.
    pub max_rel_error: f64,
    /// Number of coordinates compared.
    pub coordinates: usize,
    /// `(input position, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Builds the scalar function recorded by `build` over `inputs` and checks
/// its gradient with respect to every input coordinate.
pub fn finite_diff_check<F>(build: F, inputs: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: FnOnce(&mut DiffGraph, &[NodeId]) -> Result<NodeId>,
{
    let mut graph = DiffGraph::new();
    let leaves: Vec<NodeId> = inputs.iter().map(|t| graph.param(t.clone())).collect();
    let terminal = build(&mut graph, &leaves)?;
    check_recorded(&mut graph, terminal, &leaves, step)
}

/// Gradient check on an already recorded graph, perturbing only `leaves`.
///
/// Leaf gradients are reset before the analytic pass and the original leaf
/// values are restored afterwards.
pub fn check_recorded(
    graph: &mut DiffGraph,
    terminal: NodeId,
    leaves: &[NodeId],
    step: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")));
    }
    if graph.value(terminal).len() != 1 {
        return Err(Error::shape(
            "finite_diff_check",
            format!("function must return a scalar, got shape {:?}", graph.value(terminal).shape()),
        ));
    }
    graph.zero_grad();
    graph.backward_scalar(terminal)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, coordinates: 0, worst: None };
    for (pos, &leaf) in leaves.iter().enumerate() {
        let analytic = graph.grad(leaf).to_vec();
        let original = graph.value(leaf).clone();
        for idx in 0..original.len() {
            let mut probe = original.clone();
            probe.data_mut()[idx] = original.data()[idx] + step;
            graph.set_leaf(leaf, probe.clone())?;
            graph.replay()?;
            let up = graph.value(terminal).data()[0];
            probe.data_mut()[idx] = original.data()[idx] - step;
            graph.set_leaf(leaf, probe)?;
            graph.replay()?;
            let down = graph.value(terminal).data()[0];
            let numeric = (up - down) / (2.0 * step);

            let a = analytic[idx];
            let denom = 1.0_f64.max(libm::fabs(a)).max(libm::fabs(numeric));
            let err = libm::fabs(a - numeric) / denom;
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((pos, idx));
                }
            }
        }
        graph.set_leaf(leaf, original)?;
    }
    graph.replay()?;
    Ok(report)
}
