use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

/// `[lemma ; Σ features]`. The sum of an empty list is the zero vector of
/// length `feature_dim`.
pub fn compose_sr_node(lemma: &[f64], features: &[&[f64]], feature_dim: usize) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; feature_dim];
    for (i, f) in features.iter().enumerate() {
        if f.len() != feature_dim {
            return Err(Error::Shape {
                op: "compose_sr_node",
                lhs: [i, f.len()],
                rhs: [i, feature_dim],
            });
        }
        for (s, x) in sum.iter_mut().zip(f.iter()) {
            *s += x;
        }
    }
    let mut out = lemma.to_vec();
    out.extend(sum);
    Ok(out)
}

/// Tape version of [`compose_sr_node`] for a whole graph: row `v` of the
/// result is `[lemma_table[lemmas[v]] ; Σ_j feature_table[features[v][j]]]`.
pub fn compose_node_inputs(
    tape: &mut Tape<'_>,
    lemma_table: Var,
    feature_table: Var,
    lemmas: &[usize],
    features: &[Vec<usize>],
) -> Result<Var> {
    if lemmas.len() != features.len() {
        return Err(Error::contract(format!(
            "{} lemmas but {} feature lists",
            lemmas.len(),
            features.len()
        )));
    }
    let n = lemmas.len();
    let lemma_rows = tape.gather_rows(lemma_table, lemmas)?;
    let flat: Vec<usize> = features.iter().flatten().copied().collect();
    let owner: Vec<usize> = features
        .iter()
        .enumerate()
        .flat_map(|(v, f)| std::iter::repeat_n(v, f.len()))
        .collect();
    let feature_rows = tape.gather_rows(feature_table, &flat)?;
    let summed = tape.scatter_add_rows(feature_rows, &owner, n)?;
    tape.concat_cols(&[lemma_rows, summed])
}
