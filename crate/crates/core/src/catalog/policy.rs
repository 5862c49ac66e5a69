//! Usage-policy language and its evaluation, plus compute-node constraints.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::NodeDescriptor;
use crate::identity::AttributeSet;
use crate::mpc::Template;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DenyReason {
    Expired,
    MaxUses,
    FunctionNotAllowed,
    ConsumerRequirement,
    MinInputs,
    NodeConstraint,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenyReason::Expired => "EXPIRED",
            DenyReason::MaxUses => "MAX_USES",
            DenyReason::FunctionNotAllowed => "FUNCTION_NOT_ALLOWED",
            DenyReason::ConsumerRequirement => "CONSUMER_REQUIREMENT",
            DenyReason::MinInputs => "MIN_INPUTS",
            DenyReason::NodeConstraint => "NODE_CONSTRAINT",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyDecision {
    Permit,
    /// Every violated clause, in clause order.
    Deny(Vec<DenyReason>),
}

impl PolicyDecision {
    pub fn is_permit(&self) -> bool {
        matches!(self, PolicyDecision::Permit)
    }

    pub fn reasons(&self) -> &[DenyReason] {
        match self {
            PolicyDecision::Permit => &[],
            PolicyDecision::Deny(r) => r,
        }
    }
}

/// `UNLIMITED` or a positive count of signed contracts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaxUses {
    Limited(u32),
    Unlimited,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CountOrKeyword {
    Count(u32),
    Keyword(String),
}

impl Serialize for MaxUses {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            MaxUses::Limited(n) => CountOrKeyword::Count(n),
            MaxUses::Unlimited => CountOrKeyword::Keyword("UNLIMITED".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MaxUses {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match CountOrKeyword::deserialize(d)? {
            CountOrKeyword::Count(n) => Ok(MaxUses::Limited(n)),
            CountOrKeyword::Keyword(k) if k == "UNLIMITED" => Ok(MaxUses::Unlimited),
            CountOrKeyword::Keyword(k) => Err(serde::de::Error::custom(alloc::format!("unknown max_uses keyword {k}"))),
        }
    }
}

/// `ANY` or an explicit set of templates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AllowedFunctions {
    Any,
    Only(BTreeSet<Template>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ListOrKeyword {
    List(BTreeSet<Template>),
    Keyword(String),
}

impl Serialize for AllowedFunctions {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AllowedFunctions::Any => ListOrKeyword::Keyword("ANY".into()),
            AllowedFunctions::Only(set) => ListOrKeyword::List(set.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AllowedFunctions {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ListOrKeyword::deserialize(d)? {
            ListOrKeyword::List(set) => Ok(AllowedFunctions::Only(set)),
            ListOrKeyword::Keyword(k) if k == "ANY" => Ok(AllowedFunctions::Any),
            ListOrKeyword::Keyword(k) => Err(serde::de::Error::custom(alloc::format!("unknown allowed_functions keyword {k}"))),
        }
    }
}

impl AllowedFunctions {
    pub fn allows(&self, t: Template) -> bool {
        match self {
            AllowedFunctions::Any => true,
            AllowedFunctions::Only(set) => set.contains(&t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumerAttr {
    Entity,
    Country,
    TrustZone,
    Roles,
    DisplayName,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PredicateOp {
    Eq,
    In,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredicateValue {
    One(String),
    Many(Vec<String>),
}

impl PredicateValue {
    fn contains(&self, candidate: &str) -> bool {
        match self {
            PredicateValue::One(v) => v == candidate,
            PredicateValue::Many(vs) => vs.iter().any(|v| v == candidate),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributePredicate {
    pub attr: ConsumerAttr,
    pub op: PredicateOp,
    pub value: PredicateValue,
}

impl AttributePredicate {
    pub fn holds(&self, attrs: &AttributeSet) -> bool {
        let single = |v: &str| self.value.contains(v);
        match self.attr {
            ConsumerAttr::Entity => single(&attrs.entity),
            ConsumerAttr::Country => single(&attrs.country),
            ConsumerAttr::TrustZone => single(&attrs.trust_zone),
            ConsumerAttr::DisplayName => single(&attrs.display_name),
            ConsumerAttr::Roles => attrs.roles.iter().any(|r| single(r.name())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeAttr {
    Owner,
    Entity,
    Country,
    TrustZone,
    ComputeClass,
}

impl NodeAttr {
    pub fn of<'a>(&self, node: &'a NodeDescriptor) -> &'a str {
        match self {
            NodeAttr::Owner => node.owner.as_str(),
            NodeAttr::Entity => &node.entity,
            NodeAttr::Country => &node.country,
            NodeAttr::TrustZone => &node.trust_zone,
            NodeAttr::ComputeClass => &node.compute_class,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum NodeConstraint {
    /// At least `min` distinct values of `attr` among the nodes.
    DistinctAttr { attr: NodeAttr, min: usize },
    /// Every node's `attr` equals the value (or lies in the listed set).
    AttrEqualsAll { attr: NodeAttr, value: PredicateValue },
    /// No two nodes share a value of `attr`.
    ForbidSame { attr: NodeAttr },
    MaxPairwiseLatency { ms: u32 },
    MinNodes { n: usize },
    MinThreshold { t: usize },
}

impl NodeConstraint {
    pub fn validate(&self) -> Result<(), &'static str> {
        match *self {
            NodeConstraint::DistinctAttr { min, .. } if min < 2 => Err("DISTINCT_ATTR needs min >= 2"),
            NodeConstraint::MaxPairwiseLatency { ms: 0 } => Err("latency bound must be positive"),
            _ => Ok(()),
        }
    }

    /// Whether the constraint holds for `nodes`. `threshold` is the privacy
    /// threshold of the deployment, `None` for single-node HE.
    pub fn holds(&self, nodes: &[&NodeDescriptor], latency: &LatencyMatrix, threshold: Option<usize>) -> bool {
        match self {
            NodeConstraint::DistinctAttr { attr, min } => {
                nodes.iter().map(|n| attr.of(n)).collect::<BTreeSet<_>>().len() >= *min
            }
            NodeConstraint::AttrEqualsAll { attr, value } => nodes.iter().all(|n| value.contains(attr.of(n))),
            NodeConstraint::ForbidSame { attr } => {
                nodes.iter().map(|n| attr.of(n)).collect::<BTreeSet<_>>().len() == nodes.len()
            }
            NodeConstraint::MaxPairwiseLatency { ms } => (0..nodes.len())
                .all(|i| (i + 1..nodes.len()).all(|j| latency.get(i, j).is_some_and(|l| l <= *ms) && latency.get(j, i).is_some_and(|l| l <= *ms))),
            NodeConstraint::MinNodes { n } => nodes.len() >= *n,
            NodeConstraint::MinThreshold { t } => threshold.is_some_and(|have| have >= *t),
        }
    }
}

/// Declared one-way link delays in milliseconds, indexed by position in a
/// node list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyMatrix {
    pub ms: Vec<Vec<u32>>,
}

impl LatencyMatrix {
    pub fn uniform(n: usize, ms: u32) -> Self {
        LatencyMatrix { ms: (0..n).map(|i| (0..n).map(|j| if i == j { 0 } else { ms }).collect()).collect() }
    }

    pub fn len(&self) -> usize {
        self.ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ms.is_empty()
    }

    pub fn get(&self, from: usize, to: usize) -> Option<u32> {
        self.ms.get(from)?.get(to).copied()
    }

    pub fn set_symmetric(&mut self, a: usize, b: usize, ms: u32) {
        self.ms[a][b] = ms;
        self.ms[b][a] = ms;
    }

    /// Sub-matrix for the listed positions, in that order.
    pub fn restrict(&self, positions: &[usize]) -> LatencyMatrix {
        LatencyMatrix {
            ms: positions.iter().map(|&i| positions.iter().map(|&j| self.ms[i][j]).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConstraintCheck {
    Satisfied,
    /// Indices of the failing constraints.
    Violated(Vec<usize>),
}

pub fn check_node_constraints(
    constraints: &[NodeConstraint],
    nodes: &[&NodeDescriptor],
    latency: &LatencyMatrix,
    threshold: Option<usize>,
) -> ConstraintCheck {
    let failed: Vec<usize> = constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.holds(nodes, latency, threshold))
        .map(|(i, _)| i)
        .collect();
    if failed.is_empty() {
        ConstraintCheck::Satisfied
    } else {
        ConstraintCheck::Violated(failed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsagePolicy {
    pub policy_id: String,
    pub asset_id: String,
    /// Logical time from which the policy no longer permits anything.
    pub expiry: u64,
    pub max_uses: MaxUses,
    pub allowed_functions: AllowedFunctions,
    #[serde(default)]
    pub consumer_requirements: Vec<AttributePredicate>,
    #[serde(default)]
    pub node_constraints: Vec<NodeConstraint>,
    pub min_inputs: u32,
}

impl UsagePolicy {
    /// A policy that permits everything until `expiry`.
    pub fn open(policy_id: &str, asset_id: &str, expiry: u64) -> Self {
        UsagePolicy {
            policy_id: policy_id.into(),
            asset_id: asset_id.into(),
            expiry,
            max_uses: MaxUses::Unlimited,
            allowed_functions: AllowedFunctions::Any,
            consumer_requirements: Vec::new(),
            node_constraints: Vec::new(),
            min_inputs: 1,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.expiry == 0 {
            return Err("expiry must be positive");
        }
        if self.min_inputs == 0 {
            return Err("min_inputs must be at least 1");
        }
        if self.max_uses == MaxUses::Limited(0) {
            return Err("max_uses must be positive");
        }
        for p in &self.consumer_requirements {
            match (p.op, &p.value) {
                (PredicateOp::Eq, PredicateValue::One(_)) | (PredicateOp::In, PredicateValue::Many(_)) => {}
                _ => return Err("EQ takes a single value and IN takes a list"),
            }
        }
        self.node_constraints.iter().try_for_each(NodeConstraint::validate)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestContext {
    pub consumer_attributes: AttributeSet,
    pub function_template: Template,
    pub input_count: usize,
    pub now: u64,
    pub uses_consumed: u32,
}

/// PERMIT iff every clause holds; otherwise DENY with every violated clause.
pub fn evaluate_policy(policy: &UsagePolicy, ctx: &RequestContext) -> PolicyDecision {
    let mut reasons = Vec::new();
    if ctx.now >= policy.expiry {
        reasons.push(DenyReason::Expired);
    }
    if let MaxUses::Limited(max) = policy.max_uses {
        if ctx.uses_consumed >= max {
            reasons.push(DenyReason::MaxUses);
        }
    }
    if !policy.allowed_functions.allows(ctx.function_template) {
        reasons.push(DenyReason::FunctionNotAllowed);
    }
    if !policy.consumer_requirements.iter().all(|p| p.holds(&ctx.consumer_attributes)) {
        reasons.push(DenyReason::ConsumerRequirement);
    }
    if (ctx.input_count as u64) < policy.min_inputs as u64 {
        reasons.push(DenyReason::MinInputs);
    }
    if reasons.is_empty() {
        PolicyDecision::Permit
    } else {
        PolicyDecision::Deny(reasons)
    }
}

/// Combines several decisions by conjunction, keyed by offer.
pub fn combine_decisions<K: Ord + Clone>(decisions: &BTreeMap<K, PolicyDecision>) -> BTreeMap<K, Vec<DenyReason>> {
    decisions
        .iter()
        .filter(|(_, d)| !d.is_permit())
        .map(|(k, d)| (k.clone(), d.reasons().to_vec()))
        .collect()
}
