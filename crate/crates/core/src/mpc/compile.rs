//! Compilation of function templates into circuits.
//!
//! Boolean algebra over 0/1 wires: AND = a*b, XOR = a + b - 2ab, NOT = 1 - a,
//! OR = a + b - ab, MUX(s, x, y) = y + s*(x - y).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{Circuit, Fe, Field, Gate, MpcError, MpcParams, ValueKind, WireId};

pub const RESULT_PARTY: &str = "consumer";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Template {
    Sum,
    SumCount,
    LinearScore,
    FirstPriceAuction,
}

impl Template {
    pub const ALL: [Template; 4] = [Template::Sum, Template::SumCount, Template::LinearScore, Template::FirstPriceAuction];

    pub fn arity_min(self) -> usize {
        match self {
            Template::FirstPriceAuction => 2,
            _ => 1,
        }
    }

    pub fn input_kind(self) -> ValueKind {
        match self {
            Template::FirstPriceAuction => ValueKind::Bits16,
            _ => ValueKind::FieldElement,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Template::Sum => "SUM",
            Template::SumCount => "SUM_COUNT",
            Template::LinearScore => "LINEAR_SCORE",
            Template::FirstPriceAuction => "FIRST_PRICE_AUCTION",
        }
    }

    pub fn parse(name: &str) -> Result<Template, MpcError> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| MpcError::UnsupportedTemplate(name.to_string()))
    }

    /// Key under which LINEAR_SCORE looks up the weight of input `i`.
    pub fn weight_key(i: usize) -> String {
        format!("w{i}")
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub template: Template,
    pub arity: usize,
    #[serde(default)]
    pub public_params: BTreeMap<String, Fe>,
}

impl FunctionSpec {
    pub fn new(template: Template, arity: usize) -> Self {
        FunctionSpec { template, arity, public_params: BTreeMap::new() }
    }

    pub fn linear_score(weights: &[u64]) -> Self {
        let public_params = weights.iter().enumerate().map(|(i, &w)| (Template::weight_key(i), Fe::from(w))).collect();
        FunctionSpec { template: Template::LinearScore, arity: weights.len(), public_params }
    }
}

struct Builder {
    field: Field,
    gates: Vec<Gate>,
    boolean: Vec<WireId>,
}

impl Builder {
    fn new(field: Field) -> Self {
        Builder { field, gates: Vec::new(), boolean: Vec::new() }
    }

    fn push(&mut self, gate: Gate) -> WireId {
        self.gates.push(gate);
        (self.gates.len() - 1) as WireId
    }

    fn bit(&mut self, w: WireId) -> WireId {
        self.boolean.push(w);
        w
    }

    fn input(&mut self, party: usize, bit: Option<u32>) -> WireId {
        let w = self.push(Gate::Input { party, bit });
        if bit.is_some() {
            self.bit(w);
        }
        w
    }

    fn konst(&mut self, v: u64) -> WireId {
        let value = self.field.elem(v);
        self.push(Gate::Const { value })
    }

    fn add(&mut self, a: WireId, b: WireId) -> WireId {
        self.push(Gate::Add { a, b })
    }

    fn sub(&mut self, a: WireId, b: WireId) -> WireId {
        self.push(Gate::Sub { a, b })
    }

    fn cmul(&mut self, a: WireId, k: Fe) -> WireId {
        let k = self.field.elem(k.value());
        self.push(Gate::CMul { a, k })
    }

    fn mul(&mut self, a: WireId, b: WireId) -> WireId {
        self.push(Gate::Mul { a, b })
    }

    fn output(&mut self, a: WireId) {
        self.push(Gate::Output { a, receiver: RESULT_PARTY.into() });
    }

    fn sum_tree(&mut self, mut layer: Vec<WireId>) -> WireId {
        while layer.len() > 1 {
            layer = layer.chunks(2).map(|c| if c.len() == 2 { self.add(c[0], c[1]) } else { c[0] }).collect();
        }
        layer[0]
    }

    /// XOR given the already computed product a*b.
    fn xor_with_product(&mut self, a: WireId, b: WireId, ab: WireId) -> WireId {
        let s = self.add(a, b);
        let two = self.field.elem(2);
        let twice = self.cmul(ab, two);
        let x = self.sub(s, twice);
        self.bit(x)
    }

    fn not(&mut self, a: WireId) -> WireId {
        let one = self.konst(1);
        self.bit(one);
        let x = self.sub(one, a);
        self.bit(x)
    }

    fn mux(&mut self, s: WireId, x: WireId, y: WireId) -> WireId {
        let diff = self.sub(x, y);
        let scaled = self.mul(s, diff);
        self.add(y, scaled)
    }

    /// 1 iff x > y, comparing bit vectors MSB first.
    ///
    /// gt = OR_j (eq_0 ... eq_{j-1}) AND x_j AND NOT y_j. The disjuncts are
    /// mutually exclusive, so the OR is a plain sum.
    fn gt(&mut self, x: &[WireId], y: &[WireId]) -> WireId {
        let k = x.len();
        let mut above = Vec::with_capacity(k);
        let mut equal = Vec::with_capacity(k);
        for j in 0..k {
            let xy = self.mul(x[j], y[j]);
            self.bit(xy);
            let x_not_y = self.sub(x[j], xy);
            above.push(self.bit(x_not_y));
            let xor = self.xor_with_product(x[j], y[j], xy);
            equal.push(self.not(xor));
        }
        let mut gt = above[0];
        let mut prefix = equal[0];
        for j in 1..k {
            let term = self.mul(prefix, above[j]);
            self.bit(term);
            gt = self.add(gt, term);
            self.bit(gt);
            if j + 1 < k {
                prefix = self.mul(prefix, equal[j]);
                self.bit(prefix);
            }
        }
        gt
    }

    /// Winner of a contiguous range of bidders. Ties go to the left half, so
    /// the lowest index among equal maxima wins.
    fn tournament(&mut self, players: &[(WireId, Vec<WireId>)]) -> (WireId, Vec<WireId>) {
        if players.len() == 1 {
            return players[0].clone();
        }
        let mid = players.len().div_ceil(2);
        let left = self.tournament(&players[..mid]);
        let right = self.tournament(&players[mid..]);
        let right_wins = self.gt(&right.1, &left.1);
        let index = self.mux(right_wins, right.0, left.0);
        let bits = left
            .1
            .iter()
            .zip(&right.1)
            .map(|(&l, &r)| {
                let b = self.mux(right_wins, r, l);
                self.bit(b)
            })
            .collect();
        (index, bits)
    }

    fn finish(self, template: String, arity: usize, input_kind: ValueKind, bit_width: u32) -> Circuit {
        let mut boolean_wires = self.boolean;
        boolean_wires.sort_unstable();
        boolean_wires.dedup();
        Circuit { template, arity, input_kind, bit_width, gates: self.gates, boolean_wires }
    }
}

pub fn compile_function(spec: &FunctionSpec, params: &MpcParams) -> Result<Circuit, MpcError> {
    let field = Field::new(params.p)?;
    if params.bit_width == 0 || params.bit_width >= 63 || (1u64 << params.bit_width) >= params.p {
        return Err(MpcError::ParamInvalid("2^k must be below the modulus".into()));
    }
    let m = spec.arity;
    let min = spec.template.arity_min();
    if m < min {
        return Err(MpcError::ArityTooSmall { got: m, min });
    }
    let mut b = Builder::new(field);
    let k = params.bit_width;
    match spec.template {
        Template::Sum | Template::SumCount => {
            let inputs = (0..m).map(|i| b.input(i, None)).collect();
            let sum = b.sum_tree(inputs);
            b.output(sum);
            if spec.template == Template::SumCount {
                let count = b.konst(m as u64);
                b.output(count);
            }
        }
        Template::LinearScore => {
            let mut terms = Vec::with_capacity(m);
            for i in 0..m {
                let w = *spec
                    .public_params
                    .get(&Template::weight_key(i))
                    .ok_or_else(|| MpcError::ParamInvalid(format!("missing weight {}", Template::weight_key(i))))?;
                let x = b.input(i, None);
                terms.push(b.cmul(x, w));
            }
            let score = b.sum_tree(terms);
            b.output(score);
        }
        Template::FirstPriceAuction => {
            let players: Vec<(WireId, Vec<WireId>)> = (0..m)
                .map(|i| {
                    let bits = (0..k).map(|j| b.input(i, Some(j))).collect();
                    (b.konst(i as u64), bits)
                })
                .collect();
            let (index, bits) = b.tournament(&players);
            let weighted: Vec<WireId> =
                bits.iter().enumerate().map(|(j, &w)| b.cmul(w, field.elem(1u64 << (k as usize - 1 - j)))).collect();
            let value = b.sum_tree(weighted);
            b.output(index);
            b.output(value);
        }
    }
    let circuit = b.finish(spec.template.name().to_string(), m, spec.template.input_kind(), k);
    circuit.validate()?;
    Ok(circuit)
}

/// Two-party strict comparison `x > y` over `bit_width`-bit inputs.
pub fn compile_comparator(params: &MpcParams) -> Result<Circuit, MpcError> {
    let field = Field::new(params.p)?;
    let k = params.bit_width;
    let mut b = Builder::new(field);
    let x: Vec<WireId> = (0..k).map(|j| b.input(0, Some(j))).collect();
    let y: Vec<WireId> = (0..k).map(|j| b.input(1, Some(j))).collect();
    let gt = b.gt(&x, &y);
    b.output(gt);
    let circuit = b.finish("GT".into(), 2, ValueKind::Bits16, k);
    circuit.validate()?;
    Ok(circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::{eval_plain, eval_plain_wires};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn values(out: Vec<Fe>) -> Vec<u64> {
        out.into_iter().map(Fe::value).collect()
    }

    #[test]
    fn single_input_sum_is_identity() {
        let params = MpcParams::new(1, 3);
        let c = compile_function(&FunctionSpec::new(Template::Sum, 1), &params).unwrap();
        assert_eq!(c.gates, vec![Gate::Input { party: 0, bit: None }, Gate::Output { a: 0, receiver: RESULT_PARTY.into() }]);
        assert_eq!(values(eval_plain(&c, &[42], &params).unwrap()), vec![42]);
    }

    #[test]
    fn template_examples() {
        let params = MpcParams::new(1, 3);
        let sum = compile_function(&FunctionSpec::new(Template::Sum, 3), &params).unwrap();
        assert_eq!(values(eval_plain(&sum, &[1, 2, 3], &params).unwrap()), vec![6]);
        assert_eq!(sum.mul_depth(), 0);
        let sc = compile_function(&FunctionSpec::new(Template::SumCount, 4), &params).unwrap();
        assert_eq!(values(eval_plain(&sc, &[1, 2, 3, 4], &params).unwrap()), vec![10, 4]);
        let ls = compile_function(&FunctionSpec::linear_score(&[2, 3]), &params).unwrap();
        assert_eq!(values(eval_plain(&ls, &[4, 5], &params).unwrap()), vec![23]);
    }

    #[test]
    fn arity_and_weights_are_checked() {
        let params = MpcParams::new(1, 3);
        assert_eq!(
            compile_function(&FunctionSpec::new(Template::FirstPriceAuction, 1), &params),
            Err(MpcError::ArityTooSmall { got: 1, min: 2 })
        );
        assert_eq!(compile_function(&FunctionSpec::new(Template::Sum, 0), &params), Err(MpcError::ArityTooSmall { got: 0, min: 1 }));
        assert!(matches!(
            compile_function(&FunctionSpec::new(Template::LinearScore, 2), &params),
            Err(MpcError::ParamInvalid(_))
        ));
        assert_eq!(Template::parse("MEDIAN"), Err(MpcError::UnsupportedTemplate("MEDIAN".into())));
    }

    #[test]
    fn comparator_truth_table() {
        let params = MpcParams::new(1, 3).with_bit_width(4);
        let gt = compile_comparator(&params).unwrap();
        assert_eq!(values(eval_plain(&gt, &[9, 7], &params).unwrap()), vec![1]);
        assert_eq!(values(eval_plain(&gt, &[7, 9], &params).unwrap()), vec![0]);
        for x in 0..16 {
            for y in 0..16 {
                assert_eq!(values(eval_plain(&gt, &[x, y], &params).unwrap()), vec![(x > y) as u64], "{x} > {y}");
            }
        }
    }

    #[test]
    fn auction_examples() {
        let params = MpcParams::new(1, 3);
        let c3 = compile_function(&FunctionSpec::new(Template::FirstPriceAuction, 3), &params).unwrap();
        assert_eq!(values(eval_plain(&c3, &[7, 3, 9], &params).unwrap()), vec![2, 9]);
        let c2 = compile_function(&FunctionSpec::new(Template::FirstPriceAuction, 2), &params).unwrap();
        assert_eq!(values(eval_plain(&c2, &[5, 5], &params).unwrap()), vec![0, 5]);
    }

    /// Oracle: first index of the maximum.
    fn argmax(bids: &[u64]) -> (u64, u64) {
        let max = *bids.iter().max().unwrap();
        (bids.iter().position(|&b| b == max).unwrap() as u64, max)
    }

    #[test]
    fn auction_matches_argmax_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for m in 2..=8 {
            let params = MpcParams::new(1, 3).with_bit_width(5);
            let c = compile_function(&FunctionSpec::new(Template::FirstPriceAuction, m), &params).unwrap();
            for _ in 0..60 {
                // Small range forces plenty of ties.
                let bids: Vec<u64> = (0..m).map(|_| rng.gen_range(0..6)).collect();
                let (i, v) = argmax(&bids);
                assert_eq!(values(eval_plain(&c, &bids, &params).unwrap()), vec![i, v], "{bids:?}");
            }
        }
    }

    #[test]
    fn bit_wires_stay_boolean() {
        let params = MpcParams::new(1, 3).with_bit_width(4);
        let field = params.validate().unwrap();
        let c = compile_function(&FunctionSpec::new(Template::FirstPriceAuction, 4), &params).unwrap();
        assert!(!c.boolean_wires.is_empty());
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..100 {
            let bids: Vec<u64> = (0..4).map(|_| rng.gen_range(0..16)).collect();
            let wires = eval_plain_wires(&c, &bids, &field).unwrap();
            for &w in &c.boolean_wires {
                let b = wires[w as usize];
                assert_eq!(field.mul(b, field.sub(Fe::ONE, b)), Fe::ZERO, "wire {w}");
            }
        }
    }
}
