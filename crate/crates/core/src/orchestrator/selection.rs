//! Random node selection under merged node constraints.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;

use super::OrchestratorError;
use crate::catalog::{check_node_constraints, ConstraintCheck, LatencyMatrix, NodeConstraint, NodeDescriptor};

/// Pools up to this size are enumerated exhaustively.
pub const ENUMERATION_LIMIT: usize = 20;
pub const MAX_SAMPLING_ATTEMPTS: usize = 10_000;

fn subset_ok(
    subset: &[usize],
    candidates: &[&NodeDescriptor],
    constraints: &[NodeConstraint],
    latency: &LatencyMatrix,
    threshold: Option<usize>,
) -> bool {
    let nodes: Vec<&NodeDescriptor> = subset.iter().map(|&i| candidates[i]).collect();
    check_node_constraints(constraints, &nodes, &latency.restrict(subset), threshold) == ConstraintCheck::Satisfied
}

/// All valid n-subsets in lexicographic order of candidate positions.
pub fn valid_subsets(
    candidates: &[&NodeDescriptor],
    constraints: &[NodeConstraint],
    n: usize,
    latency: &LatencyMatrix,
    threshold: Option<usize>,
) -> Vec<Vec<usize>> {
    let m = candidates.len();
    let mut out = Vec::new();
    if n == 0 || n > m {
        return out;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        if subset_ok(&idx, candidates, constraints, latency, threshold) {
            out.push(idx.clone());
        }
        // Next combination.
        let Some(i) = (0..n).rev().find(|&i| idx[i] != i + m - n) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Picks n candidate positions (ascending) satisfying every constraint.
/// `latency` is indexed by candidate position.
pub fn select_nodes<R: Rng + ?Sized>(
    candidates: &[&NodeDescriptor],
    constraints: &[NodeConstraint],
    n: usize,
    latency: &LatencyMatrix,
    threshold: Option<usize>,
    rng: &mut R,
) -> Result<Vec<usize>, OrchestratorError> {
    if n == 0 || n > candidates.len() || latency.len() != candidates.len() {
        return Err(OrchestratorError::SelectionInfeasible);
    }
    if candidates.len() <= ENUMERATION_LIMIT {
        let valid = valid_subsets(candidates, constraints, n, latency, threshold);
        if valid.is_empty() {
            return Err(OrchestratorError::SelectionInfeasible);
        }
        let pick = rng.gen_range(0..valid.len());
        return Ok(valid.into_iter().nth(pick).expect("in range"));
    }
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let mut subset = sample(rng, candidates.len(), n).into_vec();
        subset.sort_unstable();
        if subset_ok(&subset, candidates, constraints, latency, threshold) {
            return Ok(subset);
        }
    }
    Err(OrchestratorError::SelectionInfeasible)
}
