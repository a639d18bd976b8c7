use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Dropout, ParamId, ParamStore, Tape, Tensor, Var};
use crate::recurrent::LstmCell;

/// One-layer bidirectional LSTM whose concatenated states are projected
/// back to `hidden` columns.
#[derive(Debug, Clone)]
pub struct BiLstmEncoder {
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub hidden: usize,
}

impl BiLstmEncoder {
    pub fn build<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(BiLstmEncoder {
            forward: LstmCell::build(store, &format!("{prefix}.fwd"), input, hidden, rng)?,
            backward: LstmCell::build(store, &format!("{prefix}.bwd"), input, hidden, rng)?,
            proj_w: store.xavier(format!("{prefix}.proj_w"), 2 * hidden, hidden, rng)?,
            proj_b: store.zeros(format!("{prefix}.proj_b"), 1, hidden)?,
            hidden,
        })
    }

    /// Raw `T x 2·hidden` states: forward half then backward half.
    pub fn states(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let [t, _] = tape.shape(x);
        if t == 0 {
            return Err(Error::contract("cannot encode an empty sequence"));
        }
        let fwd = run(tape, &self.forward, x, (0..t).collect())?;
        let mut bwd = run(tape, &self.backward, x, (0..t).rev().collect())?;
        bwd.reverse();
        let rows = fwd
            .into_iter()
            .zip(bwd)
            .map(|(f, b)| tape.concat_cols(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
        tape.concat_rows(&rows)
    }

    /// Projected `T x hidden` states for the decoder.
    pub fn encode(&self, tape: &mut Tape<'_>, x: Var, drop: &mut Dropout<'_>) -> Result<Var> {
        let states = self.states(tape, x)?;
        let states = drop.apply(tape, states)?;
        tape.linear(states, self.proj_w, Some(self.proj_b))
    }
}

fn run(tape: &mut Tape<'_>, cell: &LstmCell, x: Var, order: Vec<usize>) -> Result<Vec<Var>> {
    let mut h = tape.constant(Tensor::zeros(1, cell.hidden));
    let mut c = tape.constant(Tensor::zeros(1, cell.hidden));
    let mut out = Vec::with_capacity(order.len());
    for i in order {
        let xi = tape.gather_rows(x, &[i])?;
        (h, c) = cell.step(tape, xi, h, c)?;
        out.push(h);
    }
    Ok(out)
}
