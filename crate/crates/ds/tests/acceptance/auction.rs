//! In the auction only the masked differences of MUL gates and the outputs
//! are ever opened, and no losing bid shows up among the opened values.

use std::collections::{BTreeMap, BTreeSet};

use ds::scenario::{run_scenario, Options, Scenario};
use ds_core::mpc::{compile_function, reconstruct, FunctionSpec, Gate, MpcParams, Share, Template, WireId};
use ds_core::runtime::{Endpoint, MessageKind, Payload, CONSUMER};

use crate::{ensure, Outcome};

const RUNS: u64 = 100;

pub fn auction_confidentiality() -> Outcome {
    let params = MpcParams::new(1, 3);
    let circuit = compile_function(&FunctionSpec::new(Template::FirstPriceAuction, 4), &params).map_err(|e| e.to_string())?;
    let mul_gates: BTreeSet<WireId> =
        circuit.gates.iter().enumerate().filter(|(_, g)| matches!(g, Gate::Mul { .. })).map(|(i, _)| i as WireId).collect();
    let output_wires: BTreeSet<WireId> = circuit.output_wires().into_iter().collect();
    let mut opened_total = 0;
    for seed in 0..RUNS {
        let run = run_scenario(Scenario::Uc2Auction, &Options { seed, contributors: None }).map_err(|e| e.to_string())?;
        let report = &run.report;
        ensure!(report.exit_code() == 0, "seed {seed}: exit {}", report.exit_code());
        let result = run.result.as_ref().ok_or(format!("seed {seed}: no transaction"))?;

        let mut openings: BTreeMap<WireId, (BTreeMap<u16, _>, BTreeMap<u16, _>)> = BTreeMap::new();
        let mut outputs: BTreeMap<WireId, BTreeMap<u16, _>> = BTreeMap::new();
        for rec in &result.transcript {
            let m = &rec.message;
            let payload = m.decode().map_err(|e| format!("seed {seed}: {e}"))?;
            match (m.kind, payload) {
                (MessageKind::InputShare, Payload::Inputs(_)) => {}
                (MessageKind::BeaverOpen, Payload::Openings(list)) => {
                    let Endpoint::Node(from) = m.from else { return Err(format!("seed {seed}: opening from {}", m.from)) };
                    for o in list {
                        let entry = openings.entry(o.gate).or_default();
                        entry.0.insert(from, o.d);
                        entry.1.insert(from, o.e);
                    }
                }
                (MessageKind::OutputFragment, Payload::Outputs(list)) => {
                    ensure!(m.to == Endpoint::Party(CONSUMER.into()), "seed {seed}: output fragment sent to {}", m.to);
                    for o in list {
                        outputs.entry(o.wire).or_default().insert(o.share.node_index, o.share.value);
                    }
                }
                (kind, p) => return Err(format!("seed {seed}: unexpected {kind:?} message {p:?}")),
            }
        }
        let gates: BTreeSet<WireId> = openings.keys().copied().collect();
        ensure!(gates == mul_gates, "seed {seed}: opened gates {gates:?} differ from the MUL gates");
        let out: BTreeSet<WireId> = outputs.keys().copied().collect();
        ensure!(out == output_wires, "seed {seed}: output fragments for wires {out:?}");

        let open = |frags: &BTreeMap<u16, _>| {
            let shares: Vec<Share> = frags.iter().map(|(&node_index, &value)| Share { node_index, value }).collect();
            reconstruct(&shares, &params).map(|v| v.value())
        };
        let mut opened: BTreeSet<u64> = BTreeSet::new();
        for (gate, (d, e)) in &openings {
            for frags in [d, e] {
                ensure!(frags.len() == params.n, "seed {seed}: gate {gate} opened by {} nodes", frags.len());
                opened.insert(open(frags).map_err(|err| format!("seed {seed}: gate {gate}: {err}"))?);
            }
        }
        opened_total += 2 * openings.len();
        let revealed: Vec<u64> = circuit.output_wires().iter().map(|w| open(&outputs[w])).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        ensure!(revealed == report.outputs, "seed {seed}: reconstructed {revealed:?}, reported {:?}", report.outputs);

        let bids = &report.simulated_inputs;
        let winner = *bids.iter().max().expect("four bids");
        for &bid in bids.iter().filter(|&&b| b != winner) {
            ensure!(!opened.contains(&bid), "seed {seed}: losing bid {bid} opened");
            ensure!(!revealed.contains(&bid), "seed {seed}: losing bid {bid} in the outputs");
        }
    }
    Ok(format!("{RUNS} auctions, {opened_total} opened values, only MUL differences and outputs opened"))
}
