use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ds_core::mpc::{eval_plain, reconstruct, share, Fe, MpcError, MpcParams, Share, Template};
use ds_core::runtime::{open_outputs, RuntimeError};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::ensure;
use crate::world::{compile, random_input, random_spec, rng, run_mpc};
use crate::Outcome;

const INSTANCES: usize = 200;
const PARAMS: [(usize, usize); 2] = [(1, 3), (2, 5)];

/// Distributed execution equals plaintext evaluation, exactly, on 200
/// random instances per template and (t, n).
pub fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    for (t, n) in PARAMS {
        let params = MpcParams::new(t, n);
        for template in Template::ALL {
            let mut g = rng(1_000 * t as u64 + template as u64);
            for _ in 0..INSTANCES {
                let arity = g.gen_range(template.arity_min()..=8);
                let spec = random_spec(template, arity, &params, &mut g);
                let circuit = compile(&spec, &params);
                let inputs: Vec<u64> = (0..arity).map(|_| random_input(template, &params, &mut g)).collect();
                let got = run_mpc(&circuit, &inputs, params, &mut g);
                let want = eval_plain(&circuit, &inputs, &params).map_err(|e| e.to_string())?;
                ensure!(got == want, "{template:?} ({t},{n}) inputs {inputs:?}: got {got:?}, want {want:?}");
                runs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {:.1}s, limit 120s", elapsed.as_secs_f64());
    Ok(format!("{runs} instances equal to eval_plain in {:.1}s", elapsed.as_secs_f64()))
}

/// One corrupted share among the n supplied is always detected.
pub fn reconstruction_robustness() -> Outcome {
    const TRIALS: usize = 500;
    let mut checked = 0;
    for (t, n) in PARAMS {
        let params = MpcParams::new(t, n);
        let field = params.validate().map_err(|e| e.to_string())?;
        let mut g = rng(80 + t as u64);
        for _ in 0..TRIALS {
            let secret = field.random(&mut g);
            let mut shares = share(secret, &params, &mut g).map_err(|e| e.to_string())?;
            ensure!(reconstruct(&shares, &params) == Ok(secret), "clean shares did not reconstruct");
            let victim = g.gen_range(0..n);
            let delta = Fe::from(g.gen_range(1..params.p));
            shares[victim].value = field.add(shares[victim].value, delta);
            shares.shuffle(&mut g);
            ensure!(
                reconstruct(&shares, &params) == Err(MpcError::InconsistentShares),
                "({t},{n}): corruption of node {} not detected", victim + 1
            );

            // The same through output opening: one output wire, one bad fragment.
            let clean = share(secret, &params, &mut g).map_err(|e| e.to_string())?;
            let mut fragments: BTreeMap<u16, Vec<Share>> = clean.iter().map(|s| (s.node_index, vec![*s])).collect();
            let bad = fragments.get_mut(&(victim as u16 + 1)).unwrap();
            bad[0].value = field.add(bad[0].value, delta);
            ensure!(
                open_outputs(&fragments, &params) == Err(RuntimeError::from(MpcError::InconsistentShares)),
                "({t},{n}): corrupted output fragment not detected"
            );
            checked += 1;
        }
    }
    Ok(format!("{checked} corrupted sharings detected as INCONSISTENT_SHARES"))
}
