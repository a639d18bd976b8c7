use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

/// Extended-vocabulary mixture
/// `p_gen · vocab(w) + (1 − p_gen) · Σ_{i: src[i] = w} attn[i]`. `src`
/// holds extended ids; the result has `max(vocab.len(), max(src) + 1)`
/// entries.
pub fn copy_mix(vocab_dist: &[f64], attn: &[f64], src: &[usize], p_gen: f64) -> Result<Vec<f64>> {
    if attn.len() != src.len() {
        return Err(Error::contract(format!(
            "{} attention weights for {} source tokens",
            attn.len(),
            src.len()
        )));
    }
    let width = src.iter().map(|&s| s + 1).max().unwrap_or(0).max(vocab_dist.len());
    let mut out = vec![0.0; width];
    for (o, &p) in out.iter_mut().zip(vocab_dist) {
        *o = p_gen * p;
    }
    for (&a, &s) in attn.iter().zip(src) {
        out[s] += (1.0 - p_gen) * a;
    }
    Ok(out)
}

/// Tape version of [`copy_mix`] with a `1 x 1` gate and an explicit
/// extended width.
pub fn copy_mix_tape(
    tape: &mut Tape<'_>,
    vocab_dist: Var,
    attn: Var,
    src: &[usize],
    p_gen: Var,
    width: usize,
) -> Result<Var> {
    let [_, v] = tape.shape(vocab_dist);
    let ids: Vec<usize> = (0..v).collect();
    let generated = tape.index_add_cols(vocab_dist, &ids, width)?;
    let generated = tape.mul_col(generated, p_gen)?;
    let copied = tape.index_add_cols(attn, src, width)?;
    let keep = tape.one_minus(p_gen);
    let copied = tape.mul_col(copied, keep)?;
    tape.add(generated, copied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ParamStore, Tensor};

    #[test]
    fn half_mixture_example() {
        let out = copy_mix(&[0.25; 4], &[0.7, 0.3], &[0, 5], 0.5).unwrap();
        assert!((out[0] - 0.475).abs() < 1e-15);
        assert_eq!(out.len(), 6);
        assert!((out[5] - 0.15).abs() < 1e-15);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn endpoints() {
        let v = [0.1, 0.2, 0.7];
        assert_eq!(copy_mix(&v, &[0.6, 0.4], &[1, 1], 1.0).unwrap(), v.to_vec());
        assert_eq!(copy_mix(&v, &[0.6, 0.4], &[1, 1], 0.0).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn tape_version_agrees() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let v = tape.constant(Tensor::row(&[0.1, 0.2, 0.7]));
        let a = tape.constant(Tensor::row(&[0.6, 0.4]));
        let g = tape.constant(Tensor::scalar(0.3));
        let out = copy_mix_tape(&mut tape, v, a, &[2, 3], g, 4).unwrap();
        let want = copy_mix(&[0.1, 0.2, 0.7], &[0.6, 0.4], &[2, 3], 0.3).unwrap();
        for (x, y) in tape.value(out).data().iter().zip(&want) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
