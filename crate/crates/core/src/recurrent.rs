//! LSTM cell shared by the sequential encoder and the decoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Var};

/// Single LSTM cell. The fused weight maps `[x; h]` to the four gate
/// pre-activations in the order input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn build<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::config(format!("{prefix}: LSTM sizes must be positive")));
        }
        Ok(LstmCell {
            w: store.xavier(format!("{prefix}.w"), input + hidden, 4 * hidden, rng)?,
            b: store.zeros(format!("{prefix}.b"), 1, 4 * hidden)?,
            input,
            hidden,
        })
    }

    /// One step on a `1 x input` row. Returns the new hidden and cell rows.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let xh = tape.concat_cols(&[x, h])?;
        let z = tape.linear(xh, self.w, Some(self.b))?;
        let n = self.hidden;
        let i = tape.slice_cols(z, 0, n)?;
        let f = tape.slice_cols(z, n, n)?;
        let g = tape.slice_cols(z, 2 * n, n)?;
        let o = tape.slice_cols(z, 3 * n, n)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let kept = tape.mul(f, c)?;
        let written = tape.mul(i, g)?;
        let c_new = tape.add(kept, written)?;
        let squashed = tape.tanh(c_new);
        let h_new = tape.mul(o, squashed)?;
        Ok((h_new, c_new))
    }
}
