//! Additive circuits evaluated under mock-HE decrypt to the plaintext result,
//! both with the key and through the committee. Circuits with MUL gates are
//! refused.

use ds_core::catalog::EncodingMode;
use ds_core::identity::Role;
use ds_core::mpc::{eval_plain, Circuit, Fe, FunctionSpec, Gate, MpcParams, Template, ValueKind};
use ds_core::orchestrator::{ExecutionParams, Negotiation, NodeSelection};
use ds_core::runtime::{he_decrypt, he_encrypt, he_eval, he_threshold_decrypt, partial_decrypt, HeKeyMaterial};
use rand::Rng;

use crate::world::*;
use crate::{ensure, Outcome};

const CASES: u64 = 1_000;
const CONTRACTS: u64 = 40;

fn plain(spec: &FunctionSpec, inputs: &[u64], params: &MpcParams) -> Result<Vec<Fe>, String> {
    eval_plain(&compile(spec, params), inputs, params).map_err(|e| e.to_string())
}

pub fn mock_he() -> Outcome {
    let params = MpcParams::new(1, 3);
    let field = params.validate().map_err(|e| e.to_string())?;
    let mut g = rng(0x4e);
    for case in 0..CASES {
        let template = if case % 2 == 0 { Template::Sum } else { Template::LinearScore };
        let arity = g.gen_range(1..=10);
        let d = g.gen_range(2..=5);
        let spec = random_spec(template, arity, &params, &mut g);
        let inputs: Vec<u64> = (0..arity).map(|_| random_input(template, &params, &mut g)).collect();
        let mut key = HeKeyMaterial::generate(&field, Some(d), &mut g).map_err(|e| e.to_string())?;
        ensure!(key.splits_consistent(), "case {case}: fragments do not add up to the key");
        let base: u64 = g.gen_range(0..1 << 40);
        let cts = inputs
            .iter()
            .enumerate()
            .map(|(j, &v)| he_encrypt(Fe::from(v), &mut key, base + j as u64))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let out = he_eval(&compile(&spec, &params), &cts, &field).map_err(|e| format!("case {case}: {e}"))?;
        let want = plain(&spec, &inputs, &params)?;
        let fragments = key.fragments().map_err(|e| e.to_string())?;
        for (ct, w) in out.iter().zip(&want) {
            let direct = he_decrypt(ct, &key).map_err(|e| e.to_string())?;
            let partials: Vec<Option<Fe>> = fragments.iter().map(|&f| Some(partial_decrypt(ct, f, &field))).collect();
            let joint = he_threshold_decrypt(ct, &partials, &field).map_err(|e| e.to_string())?;
            ensure!(direct == *w && joint == *w, "case {case} {template:?}: decrypted {direct:?}/{joint:?}, plaintext {w:?}");
            let mut missing = partials.clone();
            missing[g.gen_range(0..d)] = None;
            let err = he_threshold_decrypt(ct, &missing, &field).err().map(|e| e.code());
            ensure!(err == Some("MISSING_PARTIAL"), "case {case}: decryption with a missing partial gave {err:?}");
        }
    }

    let auction = compile(&FunctionSpec::new(Template::FirstPriceAuction, 3), &params);
    let mut key = HeKeyMaterial::generate(&field, Some(2), &mut g).map_err(|e| e.to_string())?;
    let cts = (0..3).map(|j| he_encrypt(Fe::from(j), &mut key, j)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let refused = he_eval(&auction, &cts, &field).err().map(|e| e.code());
    ensure!(refused == Some("UNSUPPORTED_GATE"), "auction under HE gave {refused:?}");
    let product = Circuit {
        template: "PRODUCT".into(),
        arity: 2,
        input_kind: ValueKind::FieldElement,
        bit_width: params.bit_width,
        gates: vec![
            Gate::Input { party: 0, bit: None },
            Gate::Input { party: 1, bit: None },
            Gate::Mul { a: 0, b: 1 },
            Gate::Output { a: 2, receiver: "consumer".into() },
        ],
        boolean_wires: Vec::new(),
    };
    let refused = he_eval(&product, &cts[..2], &field).err().map(|e| e.code());
    ensure!(refused == Some("UNSUPPORTED_GATE"), "product under HE gave {refused:?}");

    // End to end through contracts with a registered committee.
    for trial in 0..CONTRACTS {
        let seed = 9_000 + trial;
        let mut g = rng(seed);
        let template = if trial % 2 == 0 { Template::Sum } else { Template::LinearScore };
        let mut ds = space(seed);
        let node_ids = nodes(&mut ds, 1);
        let consumer = member(&mut ds, "buyer", "DE", &[Role::Consumer]);
        let d = g.gen_range(2..=5);
        let committee: Vec<_> = (0..d).map(|i| member(&mut ds, &format!("keeper-{i}"), "DE", &[Role::Committee])).collect();
        ds.set_committee(committee).map_err(|e| e.to_string())?;
        let arity = g.gen_range(1..=6);
        let spec = random_spec(template, arity, &params, &mut g);
        let inputs: Vec<u64> = (0..arity).map(|_| random_input(template, &params, &mut g)).collect();
        let data: Vec<String> = inputs
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let owner = member(&mut ds, &format!("provider-{j}"), "DE", &[Role::DataProvider]);
                let id = dataset(&mut ds, &owner, EncodingMode::Synchronous, ValueKind::FieldElement, None, open_policy(&format!("d{j}")));
                ds.hold_input(&id, v);
                id
            })
            .collect();
        let f = function(&mut ds, &spec, open_policy("f"));
        let p = proposal(&consumer, &data, &f, NodeSelection::Explicit(node_ids), ExecutionParams::HeMode);
        let contract = match ds.propose(&p).map_err(|e| e.to_string())? {
            Negotiation::Signed(c) => c,
            Negotiation::Rejected(r) => return Err(format!("HE proposal rejected: {:?}", r.reasons)),
        };
        let r = ds.run_transaction(&contract.contract_id).map_err(|e| format!("HE trial {trial}: {e}"))?;
        let want: Vec<u64> = plain(&spec, &inputs, &params)?.into_iter().map(|v| v.value()).collect();
        ensure!(r.outputs == want, "HE trial {trial}: outputs {:?}, plaintext {want:?}", r.outputs);
    }
    Ok(format!("{CASES} evaluations decrypt correctly with key and committee, MUL refused, {CONTRACTS} HE contracts match"))
}
