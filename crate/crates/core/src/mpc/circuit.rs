//! Arithmetic circuits: a topologically ordered gate list where gate `i`
//! defines wire `i`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Fe, Field, MpcError, MpcParams};

pub type WireId = u32;

/// How an input party encodes its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValueKind {
    FieldElement,
    /// Bit-decomposed into `bit_width` shared bits (16 by default).
    #[serde(rename = "BITS16")]
    Bits16,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gate {
    /// Input from party `party` (0-based). For bit inputs, `bit` is the
    /// position counted from the most significant bit.
    Input { party: usize, bit: Option<u32> },
    Const { value: Fe },
    Add { a: WireId, b: WireId },
    Sub { a: WireId, b: WireId },
    #[serde(rename = "CMUL")]
    CMul { a: WireId, k: Fe },
    Mul { a: WireId, b: WireId },
    /// Marks wire `a` as an output delivered to `receiver`. Its own wire
    /// aliases `a`.
    Output { a: WireId, receiver: String },
}

impl Gate {
    fn operands(&self) -> impl Iterator<Item = WireId> {
        let (x, y) = match *self {
            Gate::Input { .. } | Gate::Const { .. } => (None, None),
            Gate::Add { a, b } | Gate::Sub { a, b } | Gate::Mul { a, b } => (Some(a), Some(b)),
            Gate::CMul { a, .. } | Gate::Output { a, .. } => (Some(a), None),
        };
        x.into_iter().chain(y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub template: String,
    pub arity: usize,
    pub input_kind: ValueKind,
    pub bit_width: u32,
    pub gates: Vec<Gate>,
    /// Wires whose plaintext is always 0 or 1.
    #[serde(default)]
    pub boolean_wires: Vec<WireId>,
}

impl Circuit {
    pub fn validate(&self) -> Result<(), MpcError> {
        let mut inputs = Vec::new();
        for (i, gate) in self.gates.iter().enumerate() {
            if let Some(bad) = gate.operands().find(|&w| w as usize >= i) {
                return Err(MpcError::MalformedCircuit(format!("gate {i} reads wire {bad} before it is written")));
            }
            if let Gate::Input { party, bit } = *gate {
                if party >= self.arity {
                    return Err(MpcError::MalformedCircuit(format!("input party {party} outside arity")));
                }
                match (self.input_kind, bit) {
                    (ValueKind::FieldElement, None) => {}
                    (ValueKind::Bits16, Some(b)) if b < self.bit_width => {}
                    _ => return Err(MpcError::MalformedCircuit(format!("gate {i} has the wrong input encoding"))),
                }
                inputs.push((party, bit));
            }
        }
        inputs.sort();
        let before = inputs.len();
        inputs.dedup();
        if before != inputs.len() {
            return Err(MpcError::MalformedCircuit("an input position is declared twice".into()));
        }
        let per_party = match self.input_kind {
            ValueKind::FieldElement => 1,
            ValueKind::Bits16 => self.bit_width as usize,
        };
        if inputs.len() != self.arity * per_party {
            return Err(MpcError::MalformedCircuit("not every input position is declared".into()));
        }
        if self.output_wires().is_empty() {
            return Err(MpcError::MalformedCircuit("circuit has no outputs".into()));
        }
        if let Some(&w) = self.boolean_wires.iter().find(|&&w| w as usize >= self.gates.len()) {
            return Err(MpcError::MalformedCircuit(format!("boolean wire {w} does not exist")));
        }
        Ok(())
    }

    /// Input wires of `party`, MSB first for bit inputs.
    pub fn input_wires(&self, party: usize) -> Vec<WireId> {
        let mut wires: Vec<(u32, WireId)> = self
            .gates
            .iter()
            .enumerate()
            .filter_map(|(i, g)| match *g {
                Gate::Input { party: p, bit } if p == party => Some((bit.unwrap_or(0), i as WireId)),
                _ => None,
            })
            .collect();
        wires.sort();
        wires.into_iter().map(|(_, w)| w).collect()
    }

    /// Source wires of the outputs, in gate order.
    pub fn output_wires(&self) -> Vec<WireId> {
        self.gates
            .iter()
            .filter_map(|g| match *g {
                Gate::Output { a, .. } => Some(a),
                _ => None,
            })
            .collect()
    }

    pub fn mul_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Mul { .. })).count()
    }

    pub fn has_mul(&self) -> bool {
        self.mul_count() > 0
    }

    /// Multiplicative depth of every wire: the number of MUL gates on the
    /// longest path from an input or constant.
    pub fn mul_layers(&self) -> Vec<u32> {
        let mut depth = vec![0u32; self.gates.len()];
        for (i, gate) in self.gates.iter().enumerate() {
            let base = gate.operands().map(|w| depth[w as usize]).max().unwrap_or(0);
            depth[i] = if matches!(gate, Gate::Mul { .. }) { base + 1 } else { base };
        }
        depth
    }

    /// Number of communication rounds a Beaver evaluation needs.
    pub fn mul_depth(&self) -> u32 {
        self.mul_layers().into_iter().max().unwrap_or(0)
    }

    fn per_party_inputs(&self, inputs: &[u64], field: &Field) -> Result<Vec<Vec<Fe>>, MpcError> {
        if inputs.len() != self.arity {
            return Err(MpcError::ArityMismatch { expected: self.arity, got: inputs.len() });
        }
        inputs
            .iter()
            .map(|&v| match self.input_kind {
                ValueKind::FieldElement => {
                    field.try_elem(v).map(|x| vec![x]).ok_or(MpcError::OutOfRange { value: v, limit: field.modulus() })
                }
                ValueKind::Bits16 => {
                    let k = self.bit_width;
                    if v >= 1u64 << k {
                        return Err(MpcError::OutOfRange { value: v, limit: 1u64 << k });
                    }
                    Ok((0..k).rev().map(|pos| field.elem((v >> pos) & 1)).collect())
                }
            })
            .collect()
    }
}

/// Plaintext value of every wire.
pub fn eval_plain_wires(circuit: &Circuit, inputs: &[u64], field: &Field) -> Result<Vec<Fe>, MpcError> {
    circuit.validate()?;
    let per_party = circuit.per_party_inputs(inputs, field)?;
    let mut wires: Vec<Fe> = Vec::with_capacity(circuit.gates.len());
    for gate in &circuit.gates {
        let w = |i: WireId| wires[i as usize];
        let v = match *gate {
            Gate::Input { party, bit } => per_party[party][bit.unwrap_or(0) as usize],
            Gate::Const { value } => field.elem(value.value()),
            Gate::Add { a, b } => field.add(w(a), w(b)),
            Gate::Sub { a, b } => field.sub(w(a), w(b)),
            Gate::CMul { a, k } => field.mul(w(a), field.elem(k.value())),
            Gate::Mul { a, b } => field.mul(w(a), w(b)),
            Gate::Output { a, .. } => w(a),
        };
        wires.push(v);
    }
    Ok(wires)
}

/// Reference semantics: gate-by-gate evaluation in the field of `params`.
pub fn eval_plain(circuit: &Circuit, inputs: &[u64], params: &MpcParams) -> Result<Vec<Fe>, MpcError> {
    let field = Field::new(params.p)?;
    let wires = eval_plain_wires(circuit, inputs, &field)?;
    Ok(circuit.output_wires().into_iter().map(|w| wires[w as usize]).collect())
}
