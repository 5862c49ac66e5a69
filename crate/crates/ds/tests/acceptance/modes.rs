//! The same inputs provisioned SYNCHRONOUS, IMMEDIATE and LATE give the same
//! outputs.

use ds_core::catalog::EncodingMode;
use ds_core::identity::Role;
use ds_core::mpc::{eval_plain, MpcParams, Template};
use ds_core::orchestrator::{ExecutionParams, Negotiation, NodeSelection};
use rand::Rng;

use crate::ensure;
use crate::world::*;
use crate::Outcome;

const TRIALS: u64 = 50;

pub fn mode_equivalence() -> Outcome {
    let params = MpcParams::new(1, 3);
    let mut runs = 0;
    for template in Template::ALL {
        for trial in 0..TRIALS {
            let seed = 3_000 + 100 * template as u64 + trial;
            let mut g = rng(seed);
            let mut ds = space(seed);
            let node_ids = nodes(&mut ds, 3);
            let consumer = member(&mut ds, "buyer", "DE", &[Role::Consumer]);
            let custodian = member(&mut ds, "vault", "DE", &[Role::Custodian]);
            ds.set_custodian(custodian).map_err(|e| e.to_string())?;
            let committee: Vec<_> = (0..3).map(|i| member(&mut ds, &format!("keeper-{i}"), "DE", &[Role::Committee])).collect();
            ds.set_committee(committee).map_err(|e| e.to_string())?;

            let arity = g.gen_range(template.arity_min()..=6);
            let spec = random_spec(template, arity, &params, &mut g);
            let inputs: Vec<u64> = (0..arity).map(|_| random_input(template, &params, &mut g)).collect();
            let kind = template.input_kind();
            let mut by_mode: [Vec<String>; 3] = Default::default();
            for (j, &v) in inputs.iter().enumerate() {
                let owner = member(&mut ds, &format!("provider-{j}"), "DE", &[Role::DataProvider]);
                let sync = dataset(&mut ds, &owner, EncodingMode::Synchronous, kind, None, open_policy(&format!("s{j}")));
                ds.hold_input(&sync, v);
                let h = ds.store(&owner, v, kind, EncodingMode::Immediate, Some((params, node_ids.clone()))).map_err(|e| e.to_string())?;
                let imm = dataset(&mut ds, &owner, EncodingMode::Immediate, kind, Some(h), open_policy(&format!("i{j}")));
                let h = ds.store(&owner, v, kind, EncodingMode::Late, None).map_err(|e| e.to_string())?;
                let late = dataset(&mut ds, &owner, EncodingMode::Late, kind, Some(h), open_policy(&format!("l{j}")));
                by_mode[0].push(sync);
                by_mode[1].push(imm);
                by_mode[2].push(late);
            }
            let f = function(&mut ds, &spec, open_policy("f"));
            let want: Vec<u64> = eval_plain(&compile(&spec, &params), &inputs, &params)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|v| v.value())
                .collect();
            let mut outputs = Vec::new();
            for (mode, data) in ["SYNCHRONOUS", "IMMEDIATE", "LATE"].iter().zip(&by_mode) {
                let p = proposal(&consumer, data, &f, NodeSelection::Explicit(node_ids.clone()), ExecutionParams::Mpc(params));
                let contract = match ds.propose(&p).map_err(|e| e.to_string())? {
                    Negotiation::Signed(c) => c,
                    Negotiation::Rejected(r) => return Err(format!("{mode} proposal rejected: {:?}", r.reasons)),
                };
                let r = ds.run_transaction(&contract.contract_id).map_err(|e| format!("{template:?} {mode}: {e}"))?;
                outputs.push(r.outputs);
                runs += 1;
            }
            ensure!(
                outputs.iter().all(|o| *o == want),
                "{template:?} trial {trial} inputs {inputs:?}: outputs {outputs:?}, plaintext {want:?}"
            );
        }
    }
    Ok(format!("{} trials x 3 modes ({runs} transactions) agree with each other and eval_plain", TRIALS * 4))
}
