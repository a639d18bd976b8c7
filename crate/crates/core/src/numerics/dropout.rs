use rand::{Rng, RngCore};

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted dropout: in training mode each component is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`. In
/// evaluation mode, or with rate 0, `x` is returned unchanged.
pub fn dropout<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    x: Var,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let [r, c] = tape.shape(x);
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..r * c)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = tape.constant(Tensor::from_vec(r, c, mask)?);
    tape.mul(x, mask)
}

/// Dropout settings threaded through a forward pass. Evaluation passes
/// carry no generator and leave every value untouched.
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut dyn RngCore>,
}

impl<'r> Dropout<'r> {
    pub fn train(rate: f64, rng: &'r mut dyn RngCore) -> Result<Self> {
        check_rate(rate)?;
        Ok(Dropout { rate, rng: Some(rng) })
    }

    pub fn eval() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        match self.rng.as_deref_mut() {
            Some(rng) => dropout(tape, x, self.rate, true, rng),
            None => Ok(x),
        }
    }
}
