//! End-to-end runs of the three reference use cases.
//!
//! * `uc1` air-traffic slot scoring: static node set, LINEAR_SCORE over
//!   synchronous airline inputs, results only for the network manager.
//! * `uc2` sealed-bid auction: FIRST_PRICE_AUCTION over bit-shared bids,
//!   half stored early (IMMEDIATE) and half synchronous.
//! * `uc3` secondary use of health records: SUM_COUNT over LATE handles with
//!   a sample-size policy, a consumer restriction and automatic diverse
//!   node selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use ds_core::catalog::{
    AllowedFunctions, Asset, AttributePredicate, ConsumerAttr, DatasetDescriptor, EncodingMode, FunctionDescriptor,
    MaxUses, NodeAttr, NodeConstraint, NodeDescriptor, PredicateOp, PredicateValue, Protocol, UsagePolicy,
};
use ds_core::identity::{AttributeSet, ParticipantId, Role};
use ds_core::mpc::{compile_function, eval_plain, Fe, FunctionSpec, MpcParams, Template, ValueKind};
use ds_core::orchestrator::{
    audit_to_jsonl, AuditVerdict, ContractProposal, DataSpace, ExecutionParams, Negotiation, NodeSelection,
    OrchestratorError, ParameterFingerprint, TransactionResult,
};

use crate::files::{transcript_jsonl, write_json};

const ANCHOR: &str = "ds-trust-anchor";
const EXPIRY: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    #[serde(rename = "UC1_AIR_TRAFFIC")]
    Uc1AirTraffic,
    #[serde(rename = "UC2_AUCTION")]
    Uc2Auction,
    #[serde(rename = "UC3_SECONDARY_USE")]
    Uc3SecondaryUse,
}

impl Scenario {
    pub fn parse(name: &str) -> Option<Scenario> {
        match name.to_ascii_lowercase().as_str() {
            "uc1" => Some(Scenario::Uc1AirTraffic),
            "uc2" => Some(Scenario::Uc2Auction),
            "uc3" => Some(Scenario::Uc3SecondaryUse),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Uc1AirTraffic => "UC1_AIR_TRAFFIC",
            Scenario::Uc2Auction => "UC2_AUCTION",
            Scenario::Uc3SecondaryUse => "UC3_SECONDARY_USE",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Options {
    pub seed: u64,
    /// UC3 only: how many of the five clinics join the request.
    pub contributors: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub offer_id: String,
    pub entity: String,
    pub country: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeniedRequest {
    pub consumer_entity: String,
    pub reasons: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub participants_created: usize,
    pub contract_id: Option<String>,
    pub outputs: Vec<u64>,
    pub expected_outputs: Vec<u64>,
    /// Private inputs generated for the simulated providers.
    pub simulated_inputs: Vec<u64>,
    /// Requests turned down before the main one.
    pub denied_requests: Vec<DeniedRequest>,
    pub rejection: Option<DeniedRequest>,
    pub error: Option<String>,
    pub audit_verification: AuditVerdict,
    pub audit_trail: Vec<String>,
    pub message_count: usize,
    pub round_count: u32,
    pub nodes: Vec<NodeSummary>,
}

impl ScenarioReport {
    /// 0 success, 2 policy rejection, 3 execution failure.
    pub fn exit_code(&self) -> i32 {
        if self.rejection.is_some() {
            2
        } else if self.error.is_some() || self.audit_verification != AuditVerdict::Ok || self.outputs != self.expected_outputs {
            3
        } else {
            0
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario      {}", self.scenario.name());
        let _ = writeln!(s, "seed          {}", self.seed);
        let _ = writeln!(s, "participants  {}", self.participants_created);
        for n in &self.nodes {
            let _ = writeln!(s, "node          {} {} {}", &n.offer_id[..12], n.entity, n.country);
        }
        for d in &self.denied_requests {
            let _ = writeln!(s, "denied        {} {}", d.consumer_entity, codes(d).join(","));
        }
        if let Some(id) = &self.contract_id {
            let _ = writeln!(s, "contract      {id}");
        }
        let _ = writeln!(s, "inputs        {:?}", self.simulated_inputs);
        let _ = writeln!(s, "outputs       {:?}", self.outputs);
        let _ = writeln!(s, "expected      {:?}", self.expected_outputs);
        let _ = writeln!(s, "messages      {}", self.message_count);
        let _ = writeln!(s, "rounds        {}", self.round_count);
        let verdict = match self.audit_verification {
            AuditVerdict::Ok => "OK".to_string(),
            AuditVerdict::Broken(i) => format!("BROKEN({i})"),
        };
        let _ = writeln!(s, "audit         {verdict} ({} entries)", self.audit_trail.len());
        if let Some(r) = &self.rejection {
            let _ = writeln!(s, "rejected      {}", codes(r).join(","));
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "error         {e}");
        }
        let _ = writeln!(s, "exit          {}", self.exit_code());
        s
    }
}

fn codes(d: &DeniedRequest) -> Vec<String> {
    d.reasons.values().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

/// A finished run: the report plus the data space it left behind.
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub space: DataSpace,
    pub result: Option<TransactionResult>,
}

impl ScenarioRun {
    /// Writes report.json, report.txt, audit.jsonl and transcript.jsonl.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("report.json"), &self.report)?;
        fs::write(dir.join("report.txt"), self.report.summary())?;
        fs::write(dir.join("audit.jsonl"), audit_to_jsonl(&self.space.audit))?;
        let transcript = self.result.as_ref().map(|r| transcript_jsonl(&r.transcript)).unwrap_or_default();
        fs::write(dir.join("transcript.jsonl"), transcript)
    }
}

struct World {
    ds: DataSpace,
}

impl World {
    fn new(seed: u64) -> Self {
        let mut ds = DataSpace::new(seed, ParameterFingerprint::standard(MpcParams::DEFAULT_BIT_WIDTH));
        ds.create_anchor(ANCHOR);
        World { ds }
    }

    fn member(&mut self, entity: &str, country: &str, roles: &[Role]) -> Result<ParticipantId, OrchestratorError> {
        self.ds.enroll(ANCHOR, AttributeSet::new(entity, country, "eu-trusted", roles))
    }

    fn node(&mut self, entity: &str, country: &str) -> Result<(String, NodeSummary), OrchestratorError> {
        let owner = self.member(entity, country, &[Role::ComputeProvider])?;
        let encryption_key = self.ds.new_encryption_key();
        let descriptor = NodeDescriptor {
            owner,
            entity: entity.into(),
            country: country.into(),
            trust_zone: "eu-trusted".into(),
            supported_protocols: BTreeSet::from([Protocol::ShamirMpcV1]),
            compute_class: "standard".into(),
            encryption_key,
        };
        let id = self.ds.offer(Asset::Node(descriptor), policy(&format!("node-{entity}")))?;
        Ok((id.clone(), NodeSummary { offer_id: id, entity: entity.into(), country: country.into() }))
    }

    fn dataset(
        &mut self,
        owner: &ParticipantId,
        mode: EncodingMode,
        kind: ValueKind,
        handle_id: Option<String>,
        policy: UsagePolicy,
    ) -> Result<String, OrchestratorError> {
        let custodian = self.ds.custodian.as_ref().map(|c| c.id.clone()).filter(|_| mode != EncodingMode::Synchronous);
        let d = DatasetDescriptor { owner: owner.clone(), encoding_mode: mode, value_kind: kind, record_count: 1, custodian, handle_id };
        self.ds.offer(Asset::Dataset(d), policy)
    }

    fn function(&mut self, entity: &str, template: Template, public_params: BTreeMap<String, Fe>) -> Result<String, OrchestratorError> {
        let owner = self.member(entity, "DE", &[Role::FunctionProvider])?;
        let f = FunctionDescriptor { owner, template, arity_min: template.arity_min(), public_params };
        let policy = UsagePolicy { allowed_functions: AllowedFunctions::Only(BTreeSet::from([template])), ..policy(entity) };
        self.ds.offer(Asset::Function(f), policy)
    }
}

fn policy(tag: &str) -> UsagePolicy {
    UsagePolicy::open(&format!("policy-{tag}"), tag, EXPIRY)
}

fn consumer_only(entities: &[&str]) -> AttributePredicate {
    AttributePredicate {
        attr: ConsumerAttr::Entity,
        op: PredicateOp::In,
        value: PredicateValue::Many(entities.iter().map(|e| e.to_string()).collect()),
    }
}

fn denied(entity: &str, outcome: &Negotiation) -> Option<DeniedRequest> {
    match outcome {
        Negotiation::Rejected(r) => Some(DeniedRequest {
            consumer_entity: entity.into(),
            reasons: r.reasons.iter().map(|(k, v)| (k.clone(), v.iter().map(|c| c.to_string()).collect())).collect(),
        }),
        Negotiation::Signed(_) => None,
    }
}

fn plain(template: Template, weights: &BTreeMap<String, Fe>, inputs: &[u64], params: &MpcParams) -> Result<Vec<u64>, OrchestratorError> {
    let spec = FunctionSpec { template, arity: inputs.len(), public_params: weights.clone() };
    let circuit = compile_function(&spec, params)?;
    Ok(eval_plain(&circuit, inputs, params)?.into_iter().map(|f| f.value()).collect())
}

/// The parts of a run common to every use case.
struct Plan {
    consumer_entity: &'static str,
    consumer: ParticipantId,
    datasets: Vec<String>,
    function: String,
    nodes: NodeSelection,
    params: ExecutionParams,
    expected: Vec<u64>,
    inputs: Vec<u64>,
    summaries: Vec<NodeSummary>,
    denied: Vec<DeniedRequest>,
}

pub fn run_scenario(scenario: Scenario, opts: &Options) -> Result<ScenarioRun, OrchestratorError> {
    let mut world = World::new(opts.seed);
    let plan = match scenario {
        Scenario::Uc1AirTraffic => uc1(&mut world)?,
        Scenario::Uc2Auction => uc2(&mut world)?,
        Scenario::Uc3SecondaryUse => uc3(&mut world, opts.contributors.unwrap_or(5))?,
    };
    let mut report = ScenarioReport {
        scenario,
        seed: opts.seed,
        participants_created: world.ds.registry.len(),
        contract_id: None,
        outputs: Vec::new(),
        expected_outputs: plan.expected.clone(),
        simulated_inputs: plan.inputs.clone(),
        denied_requests: plan.denied.clone(),
        rejection: None,
        error: None,
        audit_verification: AuditVerdict::Ok,
        audit_trail: Vec::new(),
        message_count: 0,
        round_count: 0,
        nodes: Vec::new(),
    };
    let proposal = ContractProposal {
        consumer: plan.consumer.clone(),
        dataset_offer_ids: plan.datasets.clone(),
        function_offer_id: plan.function.clone(),
        node_offer_ids: plan.nodes.clone(),
        requested_params: plan.params,
        created_at: world.ds.clock,
    };
    let mut result = None;
    match world.ds.propose(&proposal) {
        Ok(Negotiation::Signed(contract)) => {
            report.contract_id = Some(contract.contract_id.clone());
            report.nodes = contract
                .resolved_nodes
                .iter()
                .map(|id| plan.summaries.iter().find(|s| &s.offer_id == id).cloned().unwrap_or(NodeSummary { offer_id: id.clone(), entity: String::new(), country: String::new() }))
                .collect();
            match world.ds.run_transaction(&contract.contract_id) {
                Ok(r) => {
                    report.outputs = r.outputs.clone();
                    report.message_count = r.message_count;
                    report.round_count = r.rounds;
                    result = Some(r);
                }
                Err(e) => report.error = Some(e.to_string()),
            }
        }
        Ok(outcome) => report.rejection = denied(plan.consumer_entity, &outcome),
        Err(e) => report.error = Some(format!("{}: {e}", e.code())),
    }
    report.audit_verification = world.ds.verify_audit();
    report.audit_trail = world.ds.audit.iter().map(|e| serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()).collect();
    Ok(ScenarioRun { report, space: world.ds, result })
}

fn uc1(w: &mut World) -> Result<Plan, OrchestratorError> {
    let mut rng = w.ds.rng();
    let mut summaries = Vec::new();
    let mut nodes = Vec::new();
    for (entity, country) in [("AirNav-DE", "DE"), ("AirNav-FR", "FR"), ("AirNav-NL", "NL")] {
        let (id, s) = w.node(entity, country)?;
        nodes.push(id);
        summaries.push(s);
    }
    let manager = "NetworkManager";
    let consumer = w.member(manager, "BE", &[Role::Consumer])?;
    let mut datasets = Vec::new();
    let mut inputs = Vec::new();
    for (i, (airline, country)) in [("Airline-A", "DE"), ("Airline-B", "FR"), ("Airline-C", "IT")].into_iter().enumerate() {
        let owner = w.member(airline, country, &[Role::DataProvider])?;
        let p = UsagePolicy {
            consumer_requirements: vec![consumer_only(&[manager])],
            allowed_functions: AllowedFunctions::Only(BTreeSet::from([Template::LinearScore])),
            ..policy(&format!("slot-demand-{i}"))
        };
        let id = w.dataset(&owner, EncodingMode::Synchronous, ValueKind::FieldElement, None, p)?;
        let demand = rng.gen_range(10..200u64);
        w.ds.hold_input(&id, demand);
        datasets.push(id);
        inputs.push(demand);
    }
    let weights: BTreeMap<String, Fe> = (0..inputs.len()).map(|i| (Template::weight_key(i), Fe::from(rng.gen_range(1..10u64)))).collect();
    let function = w.function("SlotScoring", Template::LinearScore, weights.clone())?;
    let params = MpcParams::new(1, 3);
    Ok(Plan {
        consumer_entity: manager,
        consumer,
        datasets,
        function,
        nodes: NodeSelection::Explicit(nodes),
        params: ExecutionParams::Mpc(params),
        expected: plain(Template::LinearScore, &weights, &inputs, &params)?,
        inputs,
        summaries,
        denied: Vec::new(),
    })
}

fn uc2(w: &mut World) -> Result<Plan, OrchestratorError> {
    let mut rng = w.ds.rng();
    let mut summaries = Vec::new();
    let mut nodes = Vec::new();
    for (entity, country) in [("GridOp-A", "DE"), ("GridOp-B", "AT"), ("GridOp-C", "CH")] {
        let (id, s) = w.node(entity, country)?;
        nodes.push(id);
        summaries.push(s);
    }
    let buyer = "EnergyBuyer";
    let consumer = w.member(buyer, "DE", &[Role::Consumer])?;
    let custodian = w.member("BidVault", "DE", &[Role::Custodian])?;
    w.ds.set_custodian(custodian)?;
    let params = MpcParams::new(1, 3);
    let mut datasets = Vec::new();
    let mut inputs = Vec::new();
    for i in 0..4 {
        let producer = w.member(&format!("Producer-{i}"), "DE", &[Role::DataProvider])?;
        let bid = rng.gen_range(1..u16::MAX as u64);
        let p = UsagePolicy {
            allowed_functions: AllowedFunctions::Only(BTreeSet::from([Template::FirstPriceAuction])),
            max_uses: MaxUses::Limited(1),
            ..policy(&format!("bid-{i}"))
        };
        let id = if i < 2 {
            let handle = w.ds.store(&producer, bid, ValueKind::Bits16, EncodingMode::Immediate, Some((params, nodes.clone())))?;
            w.dataset(&producer, EncodingMode::Immediate, ValueKind::Bits16, Some(handle), p)?
        } else {
            let id = w.dataset(&producer, EncodingMode::Synchronous, ValueKind::Bits16, None, p)?;
            w.ds.hold_input(&id, bid);
            id
        };
        datasets.push(id);
        inputs.push(bid);
    }
    let function = w.function("AuctionHouse", Template::FirstPriceAuction, BTreeMap::new())?;
    Ok(Plan {
        consumer_entity: buyer,
        consumer,
        datasets,
        function,
        nodes: NodeSelection::Explicit(nodes),
        params: ExecutionParams::Mpc(params),
        expected: plain(Template::FirstPriceAuction, &BTreeMap::new(), &inputs, &params)?,
        inputs,
        summaries,
        denied: Vec::new(),
    })
}

fn uc3(w: &mut World, contributors: usize) -> Result<Plan, OrchestratorError> {
    if !(1..=5).contains(&contributors) {
        return Err(OrchestratorError::ParamInvalid("contributors must be between 1 and 5".into()));
    }
    let mut rng = w.ds.rng();
    let mut summaries = Vec::new();
    for (entity, country) in [("HealthCloud-A", "DE"), ("HealthCloud-A", "AT"), ("HealthCloud-B", "FR"), ("HealthCloud-C", "NL"), ("HealthCloud-D", "FR")] {
        summaries.push(w.node(entity, country)?.1);
    }
    let institute = "MedResearchInstitute";
    let consumer = w.member(institute, "DE", &[Role::Consumer])?;
    let adtech = w.member("AdTechCo", "DE", &[Role::Consumer])?;
    let custodian = w.member("RecordVault", "DE", &[Role::Custodian])?;
    w.ds.set_custodian(custodian)?;
    let mut committee = Vec::new();
    for (i, country) in ["DE", "FR", "NL"].into_iter().enumerate() {
        committee.push(w.member(&format!("KeyHolder-{i}"), country, &[Role::Committee])?);
    }
    w.ds.set_committee(committee)?;
    let diversity = vec![
        NodeConstraint::DistinctAttr { attr: NodeAttr::Entity, min: 3 },
        NodeConstraint::DistinctAttr { attr: NodeAttr::Country, min: 3 },
    ];
    let mut all = Vec::new();
    let mut values = Vec::new();
    for i in 0..5 {
        let clinic = w.member(&format!("Clinic-{i}"), "DE", &[Role::DataProvider])?;
        let count = rng.gen_range(0..500u64);
        let handle = w.ds.store(&clinic, count, ValueKind::FieldElement, EncodingMode::Late, None)?;
        let p = UsagePolicy {
            consumer_requirements: vec![consumer_only(&[institute])],
            allowed_functions: AllowedFunctions::Only(BTreeSet::from([Template::SumCount])),
            node_constraints: diversity.clone(),
            min_inputs: 5,
            ..policy(&format!("records-{i}"))
        };
        all.push(w.dataset(&clinic, EncodingMode::Late, ValueKind::FieldElement, Some(handle), p)?);
        values.push(count);
    }
    let function = w.function("StatsLib", Template::SumCount, BTreeMap::new())?;
    let params = MpcParams::new(1, 3);
    let nodes = NodeSelection::Auto { constraints: diversity };

    let probe = ContractProposal {
        consumer: adtech,
        dataset_offer_ids: all.clone(),
        function_offer_id: function.clone(),
        node_offer_ids: nodes.clone(),
        requested_params: ExecutionParams::Mpc(params),
        created_at: w.ds.clock,
    };
    let denied = denied("AdTechCo", &w.ds.propose(&probe)?).into_iter().collect();

    let datasets = all[..contributors].to_vec();
    let inputs = values[..contributors].to_vec();
    Ok(Plan {
        consumer_entity: institute,
        consumer,
        datasets,
        function,
        nodes,
        params: ExecutionParams::Mpc(params),
        expected: plain(Template::SumCount, &BTreeMap::new(), &inputs, &params)?,
        inputs,
        summaries,
        denied,
    })
}
