//! Central finite-difference verification of analytic gradients.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, GraphError, NodeId};
use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Parameter counts above this are probed on a seeded random subsample.
pub const FULL_PROBE_LIMIT: usize = 10_000;

/// Floor of the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub eps: f64,
    /// Max relative error per parameter tensor.
    pub per_param: BTreeMap<String, f64>,
    pub checked: usize,
    /// Entries skipped because a probe crossed a relu kink.
    pub excluded: usize,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.per_param.values().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() < tol
    }
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn kink_pattern<T: Scalar>(graph: &Graph<T>) -> Vec<i8> {
    graph
        .relu_inputs()
        .into_iter()
        .flat_map(|t| {
            t.data().iter().map(|v| {
                if *v > T::zero() {
                    1
                } else if *v < T::zero() {
                    -1
                } else {
                    0
                }
            })
        })
        .collect()
}

/// Probes every parameter entry of `graph` (or a seeded subsample of
/// [`FULL_PROBE_LIMIT`] entries for larger models) with central differences
/// of step `eps` and compares against [`Graph::backward`].
///
/// An entry is excluded when either probe changes the sign pattern of any
/// relu input, which covers inputs sitting exactly at zero.
pub fn gradient_check<T: Scalar>(
    graph: &mut Graph<T>,
    loss: NodeId,
    eps: f64,
    seed: u64,
) -> Result<GradReport, GraphError> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(GraphError::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let analytic = graph.backward(loss)?;
    let base_pattern = kink_pattern(graph);

    let names = graph.param_names();
    let mut slots: Vec<(usize, usize)> = Vec::new();
    let mut originals: Vec<Tensor<T>> = Vec::with_capacity(names.len());
    for (pi, name) in names.iter().enumerate() {
        let t = graph.value(graph.leaf(name).expect("param leaf")).clone();
        slots.extend((0..t.len()).map(|e| (pi, e)));
        originals.push(t);
    }
    if slots.len() > FULL_PROBE_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, slots.len(), FULL_PROBE_LIMIT).into_vec();
        picked.sort_unstable();
        slots = picked.into_iter().map(|i| slots[i]).collect();
    }

    let mut per_param: BTreeMap<String, f64> = names.iter().map(|n| (n.clone(), 0.0)).collect();
    let mut checked = 0;
    let mut excluded = 0;
    let h = T::of(eps);
    for (pi, entry) in slots {
        let name = names[pi].as_str();
        let mut probe = |delta: T| -> Result<(f64, bool), GraphError> {
            let mut t = originals[pi].clone();
            t.data_mut()[entry] = t.data()[entry] + delta;
            graph.forward(&[(name, t)])?;
            Ok((
                graph.value(loss).item().expect("scalar loss").as_f64(),
                kink_pattern(graph) == base_pattern,
            ))
        };
        let (plus, same_plus) = probe(h)?;
        let (minus, same_minus) = probe(-h)?;
        graph.forward(&[(name, originals[pi].clone())])?;
        if !(same_plus && same_minus) {
            excluded += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.params[name].data()[entry].as_f64();
        let err = relative_error(a, numeric);
        let slot = per_param.get_mut(name).expect("known param");
        *slot = slot.max(err);
        checked += 1;
    }
    Ok(GradReport {
        eps,
        per_param,
        checked,
        excluded,
    })
}
