//! Two runs of a scenario with the same seed write byte-identical files.

use std::fs;

use ds::scenario::{run_scenario, Options, Scenario};
use ds_core::orchestrator::{audit_to_jsonl, strip_signatures};

use crate::{ensure, Outcome};

const SEED: u64 = 20_240;
const FILES: [&str; 4] = ["report.json", "report.txt", "audit.jsonl", "transcript.jsonl"];

pub fn scenario_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = 0;
    for scenario in [Scenario::Uc1AirTraffic, Scenario::Uc2Auction, Scenario::Uc3SecondaryUse] {
        let mut stripped = Vec::new();
        for attempt in 0..2 {
            let run = run_scenario(scenario, &Options { seed: SEED, contributors: None }).map_err(|e| e.to_string())?;
            ensure!(run.report.exit_code() == 0, "{} exited {}", scenario.name(), run.report.exit_code());
            run.write(&tmp.path().join(format!("{}-{attempt}", scenario.name()))).map_err(|e| e.to_string())?;
            stripped.push(audit_to_jsonl(&strip_signatures(&run.space.audit)));
        }
        for f in FILES {
            let a = fs::read(tmp.path().join(format!("{}-0", scenario.name())).join(f)).map_err(|e| e.to_string())?;
            let b = fs::read(tmp.path().join(format!("{}-1", scenario.name())).join(f)).map_err(|e| e.to_string())?;
            ensure!(!a.is_empty(), "{} {f} is empty", scenario.name());
            ensure!(a == b, "{} {f} differs between runs", scenario.name());
            bytes += a.len();
        }
        ensure!(stripped[0] == stripped[1], "{} audit differs after removing signatures", scenario.name());
    }
    Ok(format!("3 scenarios x {} files byte-identical across runs ({bytes} bytes)", FILES.len()))
}
