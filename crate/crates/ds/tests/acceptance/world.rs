//! Data-space fixtures shared by several criteria.

use std::collections::{BTreeMap, BTreeSet};

use ds_core::catalog::{
    Asset, DatasetDescriptor, EncodingMode, FunctionDescriptor, NodeDescriptor, Protocol, UsagePolicy,
};
use ds_core::identity::{AttributeSet, ParticipantId, Role};
use ds_core::mpc::{
    compile_function, deal_triples, Circuit, Fe, FunctionSpec, MpcParams, Template, ValueKind,
};
use ds_core::orchestrator::{ContractProposal, DataSpace, ExecutionParams, NodeSelection, ParameterFingerprint};
use ds_core::provisioning::{dispatches_to_messages, provision_synchronous, ReleaseOrder};
use ds_core::runtime::{
    execute_session, open_outputs, Cluster, Endpoint, NodeConfig, Session, SimTransport,
    TransportConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const ANCHOR: &str = "anchor";
pub const EXPIRY: u64 = 1_000;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn space(seed: u64) -> DataSpace {
    let mut ds = DataSpace::new(seed, ParameterFingerprint::standard(MpcParams::DEFAULT_BIT_WIDTH));
    ds.create_anchor(ANCHOR);
    ds
}

pub fn member(ds: &mut DataSpace, entity: &str, country: &str, roles: &[Role]) -> ParticipantId {
    ds.enroll(ANCHOR, AttributeSet::new(entity, country, "zone", roles)).unwrap()
}

pub fn open_policy(tag: &str) -> UsagePolicy {
    UsagePolicy::open(&format!("pol-{tag}"), tag, EXPIRY)
}

pub fn node(ds: &mut DataSpace, entity: &str, country: &str, policy: UsagePolicy) -> String {
    let owner = member(ds, entity, country, &[Role::ComputeProvider]);
    let encryption_key = ds.new_encryption_key();
    let descriptor = NodeDescriptor {
        owner,
        entity: entity.into(),
        country: country.into(),
        trust_zone: "zone".into(),
        supported_protocols: BTreeSet::from([Protocol::ShamirMpcV1, Protocol::MockHeV1]),
        compute_class: "standard".into(),
        encryption_key,
    };
    ds.offer(Asset::Node(descriptor), policy).unwrap()
}

/// Nodes from distinct entities and countries.
pub fn nodes(ds: &mut DataSpace, n: usize) -> Vec<String> {
    const COUNTRIES: [&str; 6] = ["DE", "FR", "NL", "IT", "AT", "BE"];
    (0..n).map(|i| node(ds, &format!("ent-{i}"), COUNTRIES[i], open_policy(&format!("node-{i}")))).collect()
}

pub fn dataset(
    ds: &mut DataSpace,
    owner: &ParticipantId,
    mode: EncodingMode,
    kind: ValueKind,
    handle_id: Option<String>,
    policy: UsagePolicy,
) -> String {
    let custodian = ds.custodian.as_ref().map(|c| c.id.clone()).filter(|_| mode != EncodingMode::Synchronous);
    let d = DatasetDescriptor { owner: owner.clone(), encoding_mode: mode, value_kind: kind, record_count: 1, custodian, handle_id };
    ds.offer(Asset::Dataset(d), policy).unwrap()
}

pub fn function(ds: &mut DataSpace, spec: &FunctionSpec, policy: UsagePolicy) -> String {
    let owner = member(ds, "fn-vendor", "DE", &[Role::FunctionProvider]);
    let f = FunctionDescriptor {
        owner,
        template: spec.template,
        arity_min: spec.template.arity_min(),
        public_params: spec.public_params.clone(),
    };
    ds.offer(Asset::Function(f), policy).unwrap()
}

pub fn proposal(consumer: &ParticipantId, datasets: &[String], function: &str, nodes: NodeSelection, params: ExecutionParams) -> ContractProposal {
    ContractProposal {
        consumer: consumer.clone(),
        dataset_offer_ids: datasets.to_vec(),
        function_offer_id: function.into(),
        node_offer_ids: nodes,
        requested_params: params,
        created_at: 0,
    }
}

/// A random function of the template with `arity` inputs. LINEAR_SCORE
/// weights are drawn from the whole field.
pub fn random_spec(template: Template, arity: usize, params: &MpcParams, g: &mut impl Rng) -> FunctionSpec {
    let public_params: BTreeMap<String, Fe> = match template {
        Template::LinearScore => (0..arity).map(|i| (Template::weight_key(i), Fe::from(g.gen_range(0..params.p)))).collect(),
        _ => BTreeMap::new(),
    };
    FunctionSpec { template, arity, public_params }
}

/// A random input for the template: a field element or a k-bit value.
pub fn random_input(template: Template, params: &MpcParams, g: &mut impl Rng) -> u64 {
    match template.input_kind() {
        ValueKind::FieldElement => g.gen_range(0..params.p),
        ValueKind::Bits16 => g.gen_range(0..params.bit_limit()),
    }
}

/// Shares every input synchronously, runs the circuit on n simulated nodes
/// and opens the outputs.
pub fn run_mpc(circuit: &Circuit, inputs: &[u64], params: MpcParams, g: &mut ChaCha20Rng) -> Vec<Fe> {
    let mut cluster = Cluster::new("s", params, SimTransport::new(TransportConfig::uniform(params.n, 5))).unwrap();
    for i in 1..=params.n as u16 {
        cluster.start_node(NodeConfig { node_index: i, params, encryption: None }).unwrap();
    }
    cluster.declare_inputs(circuit).unwrap();
    let mut dispatches = Vec::new();
    for (j, &v) in inputs.iter().enumerate() {
        let order = ReleaseOrder { session_id: "s".into(), params, node_keys: vec![String::new(); params.n], wires: circuit.input_wires(j) };
        dispatches.extend(provision_synchronous(Endpoint::Party(format!("input:{j}")), v, circuit.input_kind, Ok(order), g).unwrap());
    }
    for m in dispatches_to_messages("s", dispatches).unwrap() {
        cluster.send(m, 0).unwrap();
    }
    cluster.pump().unwrap();
    let triples = deal_triples(circuit.mul_count(), &params, g).unwrap();
    let session = Session { session_id: "s".into(), circuit: circuit.clone(), params };
    let out = execute_session(&mut cluster, &session, triples).unwrap();
    open_outputs(&out.fragments, &params).unwrap()
}

pub fn compile(spec: &FunctionSpec, params: &MpcParams) -> Circuit {
    compile_function(spec, params).unwrap()
}
