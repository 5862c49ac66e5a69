//! Automatic node selection against an independent constraint oracle.

use std::collections::{BTreeMap, BTreeSet};

use ds_core::catalog::{LatencyMatrix, NodeAttr, NodeConstraint, NodeDescriptor, PredicateValue, Protocol};
use ds_core::orchestrator::{select_nodes, valid_subsets, OrchestratorError, ENUMERATION_LIMIT};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ensure;
use crate::world::rng;
use crate::Outcome;

const N: usize = 3;
const MAX_TRIALS: usize = 10_000;
const MIN_SELECTIONS: usize = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pattern {
    /// Three entities in three countries.
    Diverse,
    /// One country, three institutions.
    SameCountry,
    /// Latency at most 10 ms, different trust zones.
    FastApart,
}

const PATTERNS: [Pattern; 3] = [Pattern::Diverse, Pattern::SameCountry, Pattern::FastApart];

fn constraints(p: Pattern) -> Vec<NodeConstraint> {
    match p {
        Pattern::Diverse => vec![
            NodeConstraint::DistinctAttr { attr: NodeAttr::Entity, min: 3 },
            NodeConstraint::DistinctAttr { attr: NodeAttr::Country, min: 3 },
        ],
        Pattern::SameCountry => vec![
            NodeConstraint::AttrEqualsAll { attr: NodeAttr::Country, value: PredicateValue::One("AT".into()) },
            NodeConstraint::DistinctAttr { attr: NodeAttr::Entity, min: 3 },
        ],
        Pattern::FastApart => vec![
            NodeConstraint::MaxPairwiseLatency { ms: 10 },
            NodeConstraint::ForbidSame { attr: NodeAttr::TrustZone },
        ],
    }
}

/// Oracle, written against the pattern definitions rather than the
/// constraint evaluator.
fn satisfies(p: Pattern, pool: &[NodeDescriptor], latency: &LatencyMatrix, subset: &[usize]) -> bool {
    let distinct = |f: fn(&NodeDescriptor) -> &str| subset.iter().map(|&i| f(&pool[i])).collect::<BTreeSet<_>>().len();
    match p {
        Pattern::Diverse => distinct(|n| &n.entity) >= 3 && distinct(|n| &n.country) >= 3,
        Pattern::SameCountry => subset.iter().all(|&i| pool[i].country == "AT") && distinct(|n| &n.entity) >= 3,
        Pattern::FastApart => {
            let fast = subset.iter().all(|&i| subset.iter().all(|&j| i == j || latency.ms[i][j] <= 10));
            fast && distinct(|n| &n.trust_zone) == subset.len()
        }
    }
}

fn all_ok(ps: &[Pattern], pool: &[NodeDescriptor], latency: &LatencyMatrix, subset: &[usize]) -> bool {
    ps.iter().all(|&p| satisfies(p, pool, latency, subset))
}

fn triples(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                out.push(vec![a, b, c]);
            }
        }
    }
    out
}

fn random_pool(m: usize, g: &mut ChaCha20Rng) -> (Vec<NodeDescriptor>, LatencyMatrix) {
    let pool: Vec<NodeDescriptor> = (0..m)
        .map(|i| NodeDescriptor {
            owner: format!("owner-{i}").as_str().into(),
            entity: format!("e{}", g.gen_range(0..5)),
            country: ["AT", "AT", "DE", "FR", "NL"].choose(g).unwrap().to_string(),
            trust_zone: format!("z{}", g.gen_range(0..3)),
            supported_protocols: BTreeSet::from([Protocol::ShamirMpcV1]),
            compute_class: "c".into(),
            encryption_key: String::new(),
        })
        .collect();
    let mut ms = vec![vec![0u32; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let l = g.gen_range(2..=14);
            ms[i][j] = l;
            ms[j][i] = l;
        }
    }
    (pool, LatencyMatrix { ms })
}

fn validity() -> Result<String, String> {
    let mut g = rng(404);
    let mut selected = 0;
    let mut infeasible = 0;
    let mut per_pattern: BTreeMap<String, usize> = BTreeMap::new();
    let mut trials = 0;
    while selected < MIN_SELECTIONS && trials < MAX_TRIALS {
        trials += 1;
        // Pools above the enumeration limit exercise the sampling path.
        let m = if g.gen_bool(0.2) { g.gen_range(21..=28) } else { g.gen_range(4..=9) };
        let (pool, latency) = random_pool(m, &mut g);
        let mut ps: Vec<Pattern> = PATTERNS.iter().copied().filter(|_| g.gen_bool(0.4)).collect();
        if ps.is_empty() {
            ps.push(*PATTERNS.choose(&mut g).unwrap());
        }
        let cs: Vec<NodeConstraint> = ps.iter().flat_map(|&p| constraints(p)).collect();
        let refs: Vec<&NodeDescriptor> = pool.iter().collect();
        let feasible = triples(pool.len()).into_iter().any(|s| all_ok(&ps, &pool, &latency, &s));
        match select_nodes(&refs, &cs, N, &latency, Some(1), &mut g) {
            Ok(mut s) => {
                s.sort_unstable();
                s.dedup();
                ensure!(s.len() == N && s.iter().all(|&i| i < pool.len()), "malformed selection {s:?}");
                ensure!(all_ok(&ps, &pool, &latency, &s), "selection {s:?} violates {ps:?}");
                selected += 1;
                *per_pattern.entry(format!("{ps:?}")).or_default() += 1;
            }
            Err(OrchestratorError::SelectionInfeasible) => {
                // Sampling may miss very rare valid sets; enumeration may not.
                ensure!(!feasible || pool.len() > ENUMERATION_LIMIT, "reported infeasible although a valid set exists for {ps:?}");
                infeasible += 1;
            }
            Err(e) => return Err(format!("unexpected error {e}")),
        }
    }
    ensure!(selected >= MIN_SELECTIONS, "only {selected} selections in {trials} trials");
    ensure!(
        PATTERNS.iter().all(|p| per_pattern.keys().any(|k| k.contains(&format!("{p:?}")))),
        "some pattern never produced a selection"
    );
    Ok(format!("{selected}/{selected} selections valid, {infeasible} pools without a selection"))
}

/// Fixed pool with between 4 and 20 valid subsets for the pattern.
fn enumerable_pool(p: Pattern, seed: u64) -> (Vec<NodeDescriptor>, LatencyMatrix, Vec<Vec<usize>>) {
    let mut g = rng(seed);
    loop {
        let m = g.gen_range(5..=8);
        let (pool, latency) = random_pool(m, &mut g);
        let valid: Vec<Vec<usize>> = triples(pool.len()).into_iter().filter(|s| satisfies(p, &pool, &latency, s)).collect();
        if (4..=20).contains(&valid.len()) {
            return (pool, latency, valid);
        }
    }
}

fn uniformity() -> Result<String, String> {
    let mut parts = Vec::new();
    for (k, p) in PATTERNS.into_iter().enumerate() {
        let (pool, latency, valid) = enumerable_pool(p, 500 + k as u64);
        let refs: Vec<&NodeDescriptor> = pool.iter().collect();
        let cs = constraints(p);
        let listed: BTreeSet<Vec<usize>> = valid_subsets(&refs, &cs, N, &latency, Some(1)).into_iter().collect();
        ensure!(listed == valid.iter().cloned().collect(), "{p:?}: enumerated subsets differ from the oracle");
        let draws = 1_000 * valid.len();
        let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        let mut g = rng(600 + k as u64);
        for _ in 0..draws {
            let mut s = select_nodes(&refs, &cs, N, &latency, Some(1), &mut g).map_err(|e| e.to_string())?;
            s.sort_unstable();
            ensure!(listed.contains(&s), "{p:?}: drew an invalid subset {s:?}");
            *counts.entry(s).or_default() += 1;
        }
        let expected = draws as f64 / valid.len() as f64;
        let chi2: f64 = valid.iter().map(|s| (counts.get(s).copied().unwrap_or(0) as f64 - expected).powi(2) / expected).sum();
        let dof = (valid.len() - 1) as f64;
        let critical = ChiSquared::new(dof).map_err(|e| e.to_string())?.inverse_cdf(0.99);
        ensure!(chi2 < critical, "{p:?}: chi2 = {chi2:.2} >= {critical:.2} ({} subsets)", valid.len());
        parts.push(format!("{p:?} {} subsets chi2 {chi2:.1} < {critical:.1}", valid.len()));
    }
    Ok(parts.join("; "))
}

pub fn node_selection() -> Outcome {
    let v = validity()?;
    let u = uniformity()?;
    Ok(format!("{v}; {u}"))
}
