//! Every proposal violating a policy clause is refused with exactly the
//! violated clauses, and nothing is signed. Every compliant proposal yields a
//! verifiable contract.

use std::collections::{BTreeMap, BTreeSet};

use ds_core::catalog::{
    AllowedFunctions, AttributePredicate, ConsumerAttr, DenyReason, EncodingMode, MaxUses, NodeAttr, NodeConstraint,
    PredicateOp, PredicateValue, UsagePolicy,
};
use ds_core::identity::Role;
use ds_core::mpc::{FunctionSpec, MpcParams, Template, ValueKind};
use ds_core::orchestrator::{
    replay_contract, verify_contract, AuditKind, ExecutionParams, Negotiation, NodeSelection,
};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::world::{dataset, function, member, node, rng, space, EXPIRY};
use crate::{ensure, Outcome};

const CODES: [DenyReason; 6] = [
    DenyReason::Expired,
    DenyReason::MaxUses,
    DenyReason::FunctionNotAllowed,
    DenyReason::ConsumerRequirement,
    DenyReason::MinInputs,
    DenyReason::NodeConstraint,
];
const NOW: u64 = 100;
const COUNTRIES: [&str; 3] = ["DE", "FR", "NL"];

/// Offers in a proposal: datasets first, then the function, then the nodes.
#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Dataset(usize),
    Function,
    Node(usize),
}

fn policy(tag: &str, violations: &BTreeSet<DenyReason>, arity: usize) -> UsagePolicy {
    let mut p = UsagePolicy::open(&format!("pol-{tag}"), tag, EXPIRY);
    for v in violations {
        match v {
            DenyReason::Expired => p.expiry = NOW,
            DenyReason::MaxUses => p.max_uses = MaxUses::Limited(2),
            DenyReason::FunctionNotAllowed => p.allowed_functions = AllowedFunctions::Only(BTreeSet::from([Template::SumCount])),
            DenyReason::ConsumerRequirement => p.consumer_requirements.push(AttributePredicate {
                attr: ConsumerAttr::Country,
                op: PredicateOp::Eq,
                value: PredicateValue::One("FR".into()),
            }),
            DenyReason::MinInputs => p.min_inputs = arity as u32 + 1,
            DenyReason::NodeConstraint => p.node_constraints.push(NodeConstraint::AttrEqualsAll {
                attr: NodeAttr::Country,
                value: PredicateValue::One("US".into()),
            }),
        }
    }
    p
}

/// One proposal with `violations` placed on random offers. Returns a line
/// describing the mismatch, if any.
fn check(seed: u64, violations: &[DenyReason], stats: &mut [usize; 2]) -> Result<(), String> {
    let mut g = rng(seed);
    let arity = g.gen_range(1..=4);
    let mut slots: Vec<Slot> = (0..arity).map(Slot::Dataset).collect();
    slots.push(Slot::Function);
    slots.extend((0..3).map(Slot::Node));
    // Each violation goes to one or two random offers.
    let mut assigned: Vec<BTreeSet<DenyReason>> = vec![BTreeSet::new(); slots.len()];
    for &v in violations {
        let k = g.gen_range(1..=2);
        for i in rand::seq::index::sample(&mut g, slots.len(), k) {
            assigned[i].insert(v);
        }
    }
    let at = |s: Slot| &assigned[slots.iter().position(|x| *x == s).unwrap()];

    let mut ds = space(seed);
    let consumer = member(&mut ds, "buyer", "DE", &[Role::Consumer]);
    let node_ids: Vec<String> =
        (0..3).map(|i| node(&mut ds, &format!("ent-{i}"), COUNTRIES[i], policy(&format!("node-{i}"), at(Slot::Node(i)), arity))).collect();
    let spec = FunctionSpec::new(Template::Sum, arity);
    let fn_id = function(&mut ds, &spec, policy("fn", at(Slot::Function), arity));
    let data: Vec<String> = (0..arity)
        .map(|j| {
            let owner = member(&mut ds, &format!("provider-{j}"), "DE", &[Role::DataProvider]);
            let id = dataset(&mut ds, &owner, EncodingMode::Synchronous, ValueKind::FieldElement, None, policy(&format!("data-{j}"), at(Slot::Dataset(j)), arity));
            ds.hold_input(&id, j as u64);
            id
        })
        .collect();

    let mut expected: BTreeMap<String, Vec<DenyReason>> = BTreeMap::new();
    for (i, s) in slots.iter().enumerate() {
        let id = match *s {
            Slot::Dataset(j) => &data[j],
            Slot::Function => &fn_id,
            Slot::Node(j) => &node_ids[j],
        };
        if assigned[i].contains(&DenyReason::MaxUses) {
            ds.catalog.consume(id);
            ds.catalog.consume(id);
        }
        if !assigned[i].is_empty() {
            // BTreeSet order is the clause order.
            expected.insert(id.clone(), assigned[i].iter().copied().collect());
        }
    }
    ds.clock = NOW;

    let signed_before = ds.audit.iter().filter(|e| e.kind == AuditKind::ContractSigned).count();
    let audit_before = ds.audit.len();
    let uses_before: Vec<u32> = ds.catalog.entries.values().map(|e| e.offer.uses_consumed).collect();
    let mut order = data.clone();
    order.shuffle(&mut g);
    let p = crate::world::proposal(&consumer, &order, &fn_id, NodeSelection::Explicit(node_ids.clone()), ExecutionParams::Mpc(MpcParams::new(1, 3)));
    let outcome = ds.propose(&p).map_err(|e| format!("seed {seed}: request failed with {}", e.code()))?;
    match outcome {
        Negotiation::Rejected(r) => {
            stats[1] += 1;
            if expected.is_empty() {
                return Err(format!("seed {seed}: compliant proposal rejected with {:?}", r.reasons));
            }
            if r.reasons != expected {
                return Err(format!("seed {seed}: reasons {:?}, expected {:?}", r.reasons, expected));
            }
            let codes: BTreeSet<DenyReason> = violations.iter().copied().collect();
            if r.codes() != codes {
                return Err(format!("seed {seed}: codes {:?}, expected {codes:?}", r.codes()));
            }
            let uses_after: Vec<u32> = ds.catalog.entries.values().map(|e| e.offer.uses_consumed).collect();
            let signed_after = ds.audit.iter().filter(|e| e.kind == AuditKind::ContractSigned).count();
            if signed_after != signed_before || ds.audit.len() != audit_before || !ds.contracts.is_empty() || uses_after != uses_before {
                return Err(format!("seed {seed}: rejection left a trace"));
            }
        }
        Negotiation::Signed(c) => {
            stats[0] += 1;
            if !expected.is_empty() {
                return Err(format!("seed {seed}: signed despite {expected:?}"));
            }
            if c.contract_id != c.compute_id() {
                return Err(format!("seed {seed}: contract id mismatch"));
            }
            verify_contract(&c, &ds.catalog, &ds.registry, &ds.orchestrator_key()).map_err(|e| format!("seed {seed}: {e:?}"))?;
            replay_contract(&c, &ds.negotiation_context()).map_err(|e| format!("seed {seed}: replay {e:?}"))?;
            let signers = 2 + arity + 3 + 1;
            if c.signatures.len() != signers {
                return Err(format!("seed {seed}: {} signatures, expected {signers}", c.signatures.len()));
            }
            let signed_after = ds.audit.iter().filter(|e| e.kind == AuditKind::ContractSigned).count();
            if signed_after != signed_before + 1 {
                return Err(format!("seed {seed}: no CONTRACT_SIGNED entry"));
            }
        }
    }
    Ok(())
}

pub fn negotiation_soundness() -> Outcome {
    let mut corpus: Vec<Vec<DenyReason>> =
        (0..64u32).map(|mask| CODES.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| *c).collect()).collect();
    let mut g = rng(0x6e65);
    for _ in 0..96 {
        let k = g.gen_range(0..=3);
        corpus.push(CODES.choose_multiple(&mut g, k).copied().collect());
    }
    let mut stats = [0usize; 2];
    for (i, violations) in corpus.iter().enumerate() {
        check(1_000 + i as u64, violations, &mut stats)?;
    }
    ensure!(stats[0] > 0 && stats[1] >= 100, "corpus too small: {stats:?}");
    Ok(format!("{} proposals, {} signed, {} rejected with exact reasons", corpus.len(), stats[0], stats[1]))
}
