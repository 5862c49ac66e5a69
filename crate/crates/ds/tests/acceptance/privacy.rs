//! Exhaustive distribution checks over the 31-element field.

use std::collections::BTreeMap;

use ds_core::identity::ParticipantId;
use ds_core::mpc::{opening_fragments, reconstruct, share_with_coefficients, Fe, Field, MpcParams, Share, TripleShare, ValueKind};
use ds_core::provisioning::{store_late, Committee, Custodian, HandlePayload};
use ds_core::runtime::EncryptionKeyPair;

use crate::ensure;
use crate::world::rng;
use crate::Outcome;

const P: u64 = 31;

fn params() -> MpcParams {
    MpcParams::new(1, 3).with_modulus(P).with_bit_width(4)
}

/// (a) For each node, the distribution of its share over all sharing
/// polynomials is the same for every secret (uniform over the field).
fn single_share() -> Result<(), String> {
    let params = params();
    let field = params.validate().map_err(|e| e.to_string())?;
    let mut reference: Option<Vec<[u32; P as usize]>> = None;
    for s in 0..P {
        let mut hist = vec![[0u32; P as usize]; params.n];
        for c in 0..P {
            let shares = share_with_coefficients(field.elem(s), &[field.elem(c)], &params).map_err(|e| e.to_string())?;
            for sh in shares {
                hist[sh.node_index as usize - 1][sh.value.value() as usize] += 1;
            }
        }
        ensure!(hist.iter().all(|h| h.iter().all(|&k| k == 1)), "share distribution for secret {s} is not uniform");
        match &reference {
            None => reference = Some(hist),
            Some(r) => ensure!(*r == hist, "share distribution depends on the secret ({s})"),
        }
    }
    Ok(())
}

fn sharing(field: &Field, v: u64, coeff: u64, params: &MpcParams) -> Vec<Share> {
    share_with_coefficients(field.elem(v), &[field.elem(coeff)], params).unwrap()
}

/// (b) Over a uniform triple (a, b), the opened (d, e) is uniform on F^2
/// and identical for every pair of secrets (x, y).
fn beaver_openings() -> Result<(), String> {
    let params = params();
    let field = params.validate().map_err(|e| e.to_string())?;
    // Fixed sharing polynomials; the opened values do not depend on them.
    let (cx, cy, ca, cb) = (3, 7, 11, 19);
    let sa: Vec<Vec<Share>> = (0..P).map(|a| sharing(&field, a, ca, &params)).collect();
    let sb: Vec<Vec<Share>> = (0..P).map(|b| sharing(&field, b, cb, &params)).collect();
    for x in 0..P {
        let sx = sharing(&field, x, cx, &params);
        for y in 0..P {
            let sy = sharing(&field, y, cy, &params);
            let mut hist = vec![0u32; (P * P) as usize];
            for a in 0..P as usize {
                for b in 0..P as usize {
                    let mut ds = Vec::new();
                    let mut es = Vec::new();
                    for i in 0..params.n {
                        let triple = TripleShare { node_index: i as u16 + 1, a: sa[a][i].value, b: sb[b][i].value, c: Fe::ZERO };
                        let (d, e) = opening_fragments(&sx[i], &sy[i], &triple, &params).map_err(|e| e.to_string())?;
                        ds.push(Share { node_index: i as u16 + 1, value: d });
                        es.push(Share { node_index: i as u16 + 1, value: e });
                    }
                    let d = reconstruct(&ds, &params).map_err(|e| e.to_string())?;
                    let e = reconstruct(&es, &params).map_err(|e| e.to_string())?;
                    hist[(d.value() * P + e.value()) as usize] += 1;
                }
            }
            ensure!(hist.iter().all(|&k| k == 1), "openings for secrets ({x},{y}) are not uniform");
        }
    }
    Ok(())
}

/// (c) Late encoding with a committee of d = 3: the custodian's masked value
/// together with any d-1 fragments is consistent with every plaintext
/// exactly once. Checked over all 31^4 (m, k1, k2, k3), after confirming
/// that stored handles have the shape c = m + k1 + k2 + k3.
fn late_views() -> Result<(), String> {
    let params = params();
    let field = params.validate().map_err(|e| e.to_string())?;
    let mut g = rng(31);
    let mut custodian = Custodian::new(ParticipantId::from("custodian"), EncryptionKeyPair::from_rng(&mut g));
    let mut committee = Committee::new((0..3).map(|i| ParticipantId(format!("member{i}"))).collect()).map_err(|e| e.to_string())?;
    for m in 0..P {
        let id = store_late(&mut custodian, ParticipantId::from("o"), m, ValueKind::FieldElement, &params, &mut committee, &mut g)
            .map_err(|e| e.to_string())?;
        let HandlePayload::Late { masked, .. } = &custodian.handle(&id).unwrap().payload else {
            return Err("late handle without a masked payload".into());
        };
        let ks: Vec<Fe> = committee.members.iter().map(|mem| mem.fragments(&id).unwrap()[0]).collect();
        ensure!(field.sub(masked[0], field.sum(ks.iter().copied())) == field.elem(m), "stored handle is not m + sum of fragments");
    }

    // view = (c, fragments of the d-1 known members) -> plaintext counts
    for hidden in 0..3usize {
        let mut views: BTreeMap<(u64, u64, u64), [u32; P as usize]> = BTreeMap::new();
        for m in 0..P {
            for k0 in 0..P {
                for k1 in 0..P {
                    for k2 in 0..P {
                        let ks = [k0, k1, k2];
                        let c = field.sum([field.elem(m), field.elem(k0), field.elem(k1), field.elem(k2)]).value();
                        let known: Vec<u64> = (0..3).filter(|&j| j != hidden).map(|j| ks[j]).collect();
                        views.entry((c, known[0], known[1])).or_insert([0; P as usize])[m as usize] += 1;
                    }
                }
            }
        }
        ensure!(views.len() == (P * P * P) as usize, "unexpected number of views");
        ensure!(
            views.values().all(|h| h.iter().all(|&k| k == 1)),
            "some view without member {hidden} rules out a plaintext"
        );
    }
    Ok(())
}

pub fn exact_privacy() -> Outcome {
    single_share().map_err(|e| format!("(a) {e}"))?;
    beaver_openings().map_err(|e| format!("(b) {e}"))?;
    late_views().map_err(|e| format!("(c) {e}"))?;
    Ok("single shares, Beaver openings and late committee views all exactly uniform".into())
}
