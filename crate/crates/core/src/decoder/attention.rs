use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    /// `score = q · W · s`.
    #[default]
    General,
    /// `score = q · s`; needs equal widths.
    Dot,
}

/// Encoder states prepared once per example for repeated attention.
#[derive(Debug, Clone)]
pub struct Memory {
    /// `n x width` encoder states.
    pub states: Var,
    /// `width x n`.
    pub states_t: Var,
    /// Additive score mask (`0` or `-inf`), absent when nothing is masked.
    pub mask: Option<Var>,
    pub len: usize,
    pub width: usize,
}

impl Memory {
    pub fn new(tape: &mut Tape<'_>, states: Var, mask: Option<&[bool]>) -> Result<Self> {
        let [n, width] = tape.shape(states);
        if n == 0 {
            return Err(Error::contract("attention over an empty memory"));
        }
        let mask = match mask {
            None => None,
            Some(m) => {
                if m.len() != n {
                    return Err(Error::contract(format!("mask has {} entries for {n} states", m.len())));
                }
                if !m.iter().any(|&keep| keep) {
                    return Err(Error::contract("every encoder position is masked"));
                }
                if m.iter().all(|&keep| keep) {
                    None
                } else {
                    let row = m.iter().map(|&keep| if keep { 0.0 } else { f64::NEG_INFINITY }).collect();
                    Some(tape.constant(Tensor::from_vec(1, n, row)?))
                }
            }
        };
        let states_t = tape.transpose(states);
        Ok(Memory {
            states,
            states_t,
            mask,
            len: n,
            width,
        })
    }
}

/// Soft attention of a `1 x q` query over `memory`. Returns the `1 x width`
/// context and the `1 x n` weights.
pub fn attend(tape: &mut Tape<'_>, query: Var, memory: &Memory, bilinear: Option<Var>) -> Result<(Var, Var)> {
    let projected = match bilinear {
        Some(w) => tape.matmul(query, w)?,
        None => query,
    };
    let mut scores = tape.matmul(projected, memory.states_t)?;
    if let Some(mask) = memory.mask {
        scores = tape.add(scores, mask)?;
    }
    let weights = tape.softmax_rows(scores)?;
    let context = tape.matmul(weights, memory.states)?;
    Ok((context, weights))
}
