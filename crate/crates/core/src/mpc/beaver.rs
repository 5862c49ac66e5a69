//! Dealer-generated multiplication triples and the Beaver combination step.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{share, Fe, MpcError, MpcParams, Share};

/// One node's shares of a triple (a, b, c) with c = a * b.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleShare {
    pub node_index: u16,
    pub a: Fe,
    pub b: Fe,
    pub c: Fe,
}

/// Deals `count` triples. The result is indexed by node (position 0 is node 1)
/// and each inner list holds that node's shares in dealing order.
pub fn deal_triples<R: Rng + ?Sized>(
    count: usize,
    params: &MpcParams,
    rng: &mut R,
) -> Result<Vec<Vec<TripleShare>>, MpcError> {
    let field = params.validate()?;
    let mut per_node: Vec<Vec<TripleShare>> = (0..params.n).map(|_| Vec::with_capacity(count)).collect();
    for _ in 0..count {
        let a = field.random(rng);
        let b = field.random(rng);
        let c = field.mul(a, b);
        let (sa, sb, sc) = (share(a, params, rng)?, share(b, params, rng)?, share(c, params, rng)?);
        for (i, node) in per_node.iter_mut().enumerate() {
            node.push(TripleShare { node_index: sa[i].node_index, a: sa[i].value, b: sb[i].value, c: sc[i].value });
        }
    }
    Ok(per_node)
}

/// A node's fragments of the masked openings d = x - a and e = y - b.
pub fn opening_fragments(x: &Share, y: &Share, triple: &TripleShare, params: &MpcParams) -> Result<(Fe, Fe), MpcError> {
    let field = params.validate()?;
    Ok((field.sub(x.value, triple.a), field.sub(y.value, triple.b)))
}

/// Share of x*y given the opened d and e:
/// `c + d*b + e*a + d*e`, where the public d*e is added by every node.
pub fn beaver_combine(
    x_share: &Share,
    y_share: &Share,
    triple_share: &TripleShare,
    d: Fe,
    e: Fe,
    node_index: u16,
    params: &MpcParams,
) -> Result<Share, MpcError> {
    let field = params.validate()?;
    if x_share.node_index != node_index || y_share.node_index != node_index || triple_share.node_index != node_index {
        return Err(MpcError::BadShareIndex(node_index));
    }
    let value = field.sum([
        triple_share.c,
        field.mul(d, triple_share.b),
        field.mul(e, triple_share.a),
        field.mul(d, e),
    ]);
    Ok(Share { node_index, value })
}
