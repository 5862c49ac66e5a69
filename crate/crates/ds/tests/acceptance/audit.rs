//! Tampering with any single byte of an audit log, or swapping two entries,
//! is detected at the first affected entry.

use ds_core::identity::KeyPair;
use ds_core::orchestrator::{append_audit, audit_to_jsonl, verify_audit_jsonl, AuditKind, AuditVerdict};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

use crate::world::rng;
use crate::{ensure, Outcome};

const LOGS: usize = 100;
const FLIPS_PER_ENTRY: usize = 2;
const KINDS: [AuditKind; 8] = [
    AuditKind::Onboarded,
    AuditKind::OfferPublished,
    AuditKind::OfferWithdrawn,
    AuditKind::ContractSigned,
    AuditKind::InputsProvisioned,
    AuditKind::ExecutionStarted,
    AuditKind::OutputDelivered,
    AuditKind::TransactionFailed,
];

pub fn audit_integrity() -> Outcome {
    let mut g = rng(0xa0d1);
    let (mut flips, mut swaps) = (0, 0);
    for l in 0..LOGS {
        let key = KeyPair::from_rng(&mut g);
        let vk = key.verify_key();
        let len = g.gen_range(1..=50);
        let mut log = Vec::new();
        append_audit(&mut log, AuditKind::Genesis, &json!({"log": l}), &key);
        for i in 1..len {
            let kind = *KINDS.choose(&mut g).expect("kinds");
            let payload = json!({"i": i, "value": g.gen::<u32>(), "note": format!("entry-{}", g.gen::<u16>())});
            append_audit(&mut log, kind, &payload, &key);
        }
        let bytes = audit_to_jsonl(&log);
        ensure!(verify_audit_jsonl(&bytes, &vk) == AuditVerdict::Ok, "log {l}: untouched log rejected");

        // Byte ranges of each entry, newline included.
        let mut starts = vec![0];
        starts.extend(bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').map(|(i, _)| i + 1));
        for i in 0..len {
            for _ in 0..FLIPS_PER_ENTRY {
                let pos = g.gen_range(starts[i]..starts[i + 1]);
                let mut t = bytes.clone();
                t[pos] ^= g.gen_range(1..=255u8);
                let verdict = verify_audit_jsonl(&t, &vk);
                ensure!(verdict == AuditVerdict::Broken(i as u64), "log {l}: flip at byte {pos} of entry {i} gave {verdict:?}");
                flips += 1;
            }
        }
        if len >= 2 {
            let i = g.gen_range(0..len - 1);
            let j = g.gen_range(i + 1..len);
            let mut t = log.clone();
            t.swap(i, j);
            let verdict = verify_audit_jsonl(&audit_to_jsonl(&t), &vk);
            ensure!(verdict == AuditVerdict::Broken(i as u64), "log {l}: swap of {i} and {j} gave {verdict:?}");
            swaps += 1;
        }
    }
    Ok(format!("{LOGS} logs, {flips} byte flips and {swaps} swaps all detected at the first affected entry"))
}
