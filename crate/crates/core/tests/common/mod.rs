#![allow(dead_code)]

use std::collections::BTreeMap;

use ds_core::mpc::{deal_triples, Circuit, Fe, MpcParams, Share};
use ds_core::provisioning::{dispatches_to_messages, provision_synchronous, ReleaseOrder};
use ds_core::runtime::{execute_session, open_outputs, Cluster, Endpoint, NodeConfig, Session, SimTransport, TransportConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn cluster(params: MpcParams, transport: TransportConfig) -> Cluster {
    let mut c = Cluster::new("s", params, SimTransport::new(transport)).unwrap();
    for i in 1..=params.n as u16 {
        c.start_node(NodeConfig { node_index: i, params, encryption: None }).unwrap();
    }
    c
}

/// Shares every input synchronously and delivers the shares.
pub fn provision(cluster: &mut Cluster, circuit: &Circuit, inputs: &[u64], rng: &mut ChaCha20Rng) {
    let params = *cluster.params();
    cluster.declare_inputs(circuit).unwrap();
    let mut dispatches = Vec::new();
    for (j, &v) in inputs.iter().enumerate() {
        let order = ReleaseOrder { session_id: "s".into(), params, node_keys: vec![String::new(); params.n], wires: circuit.input_wires(j) };
        dispatches.extend(provision_synchronous(Endpoint::Party(format!("input:{j}")), v, circuit.input_kind, Ok(order), rng).unwrap());
    }
    for m in dispatches_to_messages("s", dispatches).unwrap() {
        cluster.send(m, 0).unwrap();
    }
    cluster.pump().unwrap();
}

pub struct Run {
    pub outputs: Vec<Fe>,
    pub fragments: BTreeMap<u16, Vec<Share>>,
    pub cluster: Cluster,
    pub rounds: u32,
}

pub fn run(circuit: &Circuit, inputs: &[u64], params: MpcParams, seed: u64) -> Run {
    let mut rng = rng(seed);
    let mut cluster = cluster(params, TransportConfig::uniform(params.n, 5));
    provision(&mut cluster, circuit, inputs, &mut rng);
    let triples = deal_triples(circuit.mul_count(), &params, &mut rng).unwrap();
    let session = Session { session_id: "s".into(), circuit: circuit.clone(), params };
    let out = execute_session(&mut cluster, &session, triples).unwrap();
    let outputs = open_outputs(&out.fragments, &params).unwrap();
    Run { outputs, fragments: out.fragments, cluster, rounds: out.rounds }
}

pub mod world {
    use std::collections::{BTreeMap, BTreeSet};

    use ds_core::catalog::{
        AllowedFunctions, Asset, DatasetDescriptor, EncodingMode, FunctionDescriptor, MaxUses, NodeDescriptor, Protocol,
        UsagePolicy,
    };
    use ds_core::identity::{AttributeSet, ParticipantId, Role};
    use ds_core::mpc::{Fe, Template, ValueKind};
    use ds_core::orchestrator::{
        ContractProposal, DataSpace, ExecutionParams, Negotiation, NodeSelection, ParameterFingerprint, SignedContract,
    };

    pub const ANCHOR: &str = "anchor";
    pub const EXPIRY: u64 = 1_000;

    pub fn space(seed: u64) -> DataSpace {
        let mut ds = DataSpace::new(seed, ParameterFingerprint::standard(16));
        ds.create_anchor(ANCHOR);
        ds
    }

    pub fn member(ds: &mut DataSpace, entity: &str, country: &str, roles: &[Role]) -> ParticipantId {
        ds.enroll(ANCHOR, AttributeSet::new(entity, country, "zone-a", roles)).unwrap()
    }

    pub fn open_policy(tag: &str) -> UsagePolicy {
        UsagePolicy::open(&format!("pol-{tag}"), tag, EXPIRY)
    }

    /// A node offer; its owner is enrolled with the node's entity and country.
    pub fn node(ds: &mut DataSpace, entity: &str, country: &str, policy: UsagePolicy) -> String {
        let owner = member(ds, entity, country, &[Role::ComputeProvider]);
        let encryption_key = ds.new_encryption_key();
        let descriptor = NodeDescriptor {
            owner,
            entity: entity.into(),
            country: country.into(),
            trust_zone: "zone-a".into(),
            supported_protocols: BTreeSet::from([Protocol::ShamirMpcV1, Protocol::MockHeV1]),
            compute_class: "standard".into(),
            encryption_key,
        };
        ds.offer(Asset::Node(descriptor), policy).unwrap()
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

    pub fn function(ds: &mut DataSpace, template: Template, public_params: BTreeMap<String, Fe>, policy: UsagePolicy) -> String {
        let owner = member(ds, "fn-vendor", "DE", &[Role::FunctionProvider]);
        let f = FunctionDescriptor { owner, template, arity_min: template.arity_min(), public_params };
        ds.offer(Asset::Function(f), policy).unwrap()
    }

    pub fn limited(tag: &str, uses: u32) -> UsagePolicy {
        UsagePolicy { max_uses: MaxUses::Limited(uses), ..open_policy(tag) }
    }

    pub fn only(tag: &str, templates: &[Template]) -> UsagePolicy {
        UsagePolicy { allowed_functions: AllowedFunctions::Only(templates.iter().copied().collect()), ..open_policy(tag) }
    }

    pub fn proposal(
        consumer: &ParticipantId,
        datasets: &[String],
        function: &str,
        nodes: NodeSelection,
        params: ExecutionParams,
    ) -> ContractProposal {
        ContractProposal {
            consumer: consumer.clone(),
            dataset_offer_ids: datasets.to_vec(),
            function_offer_id: function.into(),
            node_offer_ids: nodes,
            requested_params: params,
            created_at: 0,
        }
    }

    pub fn signed(outcome: Negotiation) -> SignedContract {
        match outcome {
            Negotiation::Signed(c) => c,
            Negotiation::Rejected(r) => panic!("rejected: {:?}", r.reasons),
        }
    }

    /// Three nodes from distinct entities and countries.
    pub fn three_nodes(ds: &mut DataSpace) -> Vec<String> {
        [("ent-a", "DE"), ("ent-b", "FR"), ("ent-c", "NL")]
            .iter()
            .map(|(e, c)| node(ds, e, c, open_policy(&format!("node-{e}"))))
            .collect()
    }

    pub fn consumer(ds: &mut DataSpace) -> ParticipantId {
        member(ds, "buyer", "DE", &[Role::Consumer])
    }
}
