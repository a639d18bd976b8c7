use std::fs;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::vocab::Vocab;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub found: usize,
    pub vocab: usize,
    pub fraction: f64,
    pub missing: Vec<String>,
}

/// Reads a whitespace-separated text embedding file (`token v1 v2 ...` per
/// line) into a `vocab.len() x dim` table. Tokens absent from the file keep
/// a uniform Xavier initialisation drawn from `rng`.
pub fn load_pretrained_embeddings<R: Rng>(path: &Path, vocab: &Vocab, dim: usize, rng: &mut R) -> Result<(Tensor, Coverage)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let limit = (6.0 / (vocab.len() + dim) as f64).sqrt();
    let mut table = Tensor::zeros(vocab.len(), dim);
    for x in table.data_mut() {
        *x = rng.gen_range(-limit..=limit);
    }
    let mut seen = vec![false; vocab.len()];
    let mut file_dim = None;
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let loc = format!("{}:{}", path.display(), i + 1);
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|e| Error::parse(&loc, format!("bad value `{f}`: {e}"))))
            .collect::<Result<_>>()?;
        match file_dim {
            None => {
                if values.len() != dim {
                    return Err(Error::config(format!(
                        "{loc}: embeddings have {} dimensions, configured {dim}",
                        values.len()
                    )));
                }
                file_dim = Some(values.len());
            }
            Some(d) if d != values.len() => {
                return Err(Error::parse(&loc, format!("expected {d} values, found {}", values.len())));
            }
            Some(_) => {}
        }
        if let Some(id) = vocab.get(token) {
            table.row_slice_mut(id).copy_from_slice(&values);
            seen[id] = true;
        }
    }
    let found = seen.iter().filter(|&&s| s).count();
    let missing = seen
        .iter()
        .enumerate()
        .filter(|(_, &s)| !s)
        .filter_map(|(i, _)| vocab.token(i).map(str::to_string))
        .collect();
    let fraction = if vocab.is_empty() { 0.0 } else { found as f64 / vocab.len() as f64 };
    Ok((
        table,
        Coverage {
            found,
            vocab: vocab.len(),
            fraction,
            missing,
        },
    ))
}
