use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::vocab::PAD_ID;

/// Targets of several examples padded to a common length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<String>,
    /// `batch x max_len` target ids, padded with the padding id.
    pub targets: Vec<Vec<usize>>,
    /// True on real tokens.
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn new(items: &[(&str, &[usize])], max_batch: usize) -> Result<Self> {
        if items.is_empty() || items.len() > max_batch {
            return Err(Error::contract(format!(
                "batch of {} examples, allowed 1..={max_batch}",
                items.len()
            )));
        }
        Self::padded(items, items.iter().map(|(_, t)| t.len()).max().unwrap_or(0))
    }

    /// Pads to `len` columns, which must cover the longest target.
    pub fn padded(items: &[(&str, &[usize])], len: usize) -> Result<Self> {
        let mut batch = Batch {
            ids: Vec::with_capacity(items.len()),
            targets: Vec::with_capacity(items.len()),
            mask: Vec::with_capacity(items.len()),
        };
        for (id, t) in items {
            if t.len() > len {
                return Err(Error::contract(format!("target of `{id}` is longer than the padding length {len}")));
            }
            let mut row = t.to_vec();
            row.resize(len, PAD_ID);
            batch.ids.push(id.to_string());
            batch.targets.push(row);
            batch.mask.push((0..len).map(|i| i < t.len()).collect());
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn real_tokens(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllReport {
    pub sum: f64,
    pub mean: f64,
    pub tokens: usize,
    /// Gold probabilities clamped up to the floor.
    pub clamped: usize,
}

/// Negative log likelihood of the batch targets under stepwise
/// distributions: `dists[b]` has one row per target position.
pub fn nll_loss(dists: &[Tensor], batch: &Batch) -> Result<NllReport> {
    if dists.len() != batch.len() {
        return Err(Error::contract(format!(
            "{} distribution tables for {} examples",
            dists.len(),
            batch.len()
        )));
    }
    let floor = crate::decoder::PROB_FLOOR;
    let mut report = NllReport {
        sum: 0.0,
        mean: 0.0,
        tokens: 0,
        clamped: 0,
    };
    for ((d, targets), mask) in dists.iter().zip(&batch.targets).zip(&batch.mask) {
        for (t, (&gold, &real)) in targets.iter().zip(mask).enumerate() {
            if !real {
                continue;
            }
            if t >= d.rows() || gold >= d.cols() {
                return Err(Error::contract(format!(
                    "gold ({t}, {gold}) outside distribution table {:?}",
                    d.shape()
                )));
            }
            let mut p = d.get(t, gold);
            if p < floor {
                p = floor;
                report.clamped += 1;
            }
            report.sum -= p.ln();
            report.tokens += 1;
        }
    }
    report.mean = if report.tokens == 0 { 0.0 } else { report.sum / report.tokens as f64 };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(targets: &[&[usize]]) -> Batch {
        let items: Vec<(&str, &[usize])> = targets.iter().map(|t| ("x", *t)).collect();
        Batch::new(&items, 64).unwrap()
    }

    #[test]
    fn padding_and_mask() {
        let b = batch(&[&[5, 6, 2], &[7, 2]]);
        assert_eq!(b.targets[1], vec![7, 2, PAD_ID]);
        assert_eq!(b.mask[1], vec![true, true, false]);
        assert_eq!(b.real_tokens(), 5);
    }

    #[test]
    fn batch_size_is_bounded() {
        let t: &[usize] = &[2];
        let items = vec![("x", t); 65];
        assert!(Batch::new(&items, 64).is_err());
    }

    #[test]
    fn one_hot_predictions_give_zero() {
        let b = batch(&[&[1, 0]]);
        let d = Tensor::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(nll_loss(&[d], &b).unwrap().sum, 0.0);
    }

    #[test]
    fn uniform_gives_t_ln_v() {
        let b = batch(&[&[0, 1, 2]]);
        let d = Tensor::filled(3, 5, 0.2);
        let r = nll_loss(&[d], &b).unwrap();
        assert!((r.sum - 3.0 * 5f64.ln()).abs() < 1e-12);
        assert!((r.mean - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn half_and_quarter_give_ln8() {
        let b = batch(&[&[0, 1]]);
        let d = Tensor::from_vec(2, 2, vec![0.5, 0.5, 0.75, 0.25]).unwrap();
        assert!((nll_loss(&[d], &b).unwrap().sum - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped_and_counted() {
        let b = batch(&[&[0]]);
        let d = Tensor::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let r = nll_loss(&[d], &b).unwrap();
        assert_eq!(r.clamped, 1);
        assert!((r.sum + 1e-12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn extra_padding_changes_nothing() {
        let t: &[usize] = &[0, 1];
        let short = Batch::padded(&[("x", t)], 2).unwrap();
        let long = Batch::padded(&[("x", t)], 6).unwrap();
        let d = Tensor::filled(6, 3, 1.0 / 3.0);
        assert_eq!(nll_loss(std::slice::from_ref(&d), &short).unwrap(), nll_loss(std::slice::from_ref(&d), &long).unwrap());
    }
}
