//! Corpus BLEU and token accuracy.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Count substituted for a zero match count when smoothing is enabled.
pub const SMOOTHING_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub bleu: f64,
    /// Modified precision per n-gram order actually used.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// Highest n-gram order entering the geometric mean.
    pub max_order: usize,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to `hyp_len`; ties go to the shorter one.
fn closest_ref_len<S: AsRef<str>>(hyp_len: usize, refs: &[Vec<S>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(hyp_len), r))
        .unwrap_or(0)
}

/// Corpus-level BLEU with clipped n-gram counts. When the longest hypothesis
/// is shorter than `max_n` tokens, the geometric mean only covers the orders
/// that hypothesis can contain.
pub fn corpus_bleu<S: AsRef<str>>(
    hypotheses: &[Vec<S>],
    references: &[Vec<Vec<S>>],
    max_n: usize,
    smoothing: bool,
) -> Result<BleuReport> {
    if hypotheses.len() != references.len() {
        return Err(Error::contract(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::config("max_n must be at least 1"));
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(Error::contract(format!("hypothesis {i} has no references")));
    }

    let longest = hypotheses.iter().map(Vec::len).max().unwrap_or(0);
    let order = max_n.min(longest);
    let mut matched = vec![0usize; order];
    let mut total = vec![0usize; order];
    let mut hyp_len = 0;
    let mut ref_len = 0;

    for (hyp, refs) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += closest_ref_len(hyp.len(), refs);
        for n in 1..=order {
            let counts = ngram_counts(hyp, n);
            let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in &counts {
                matched[n - 1] += (*c).min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }

    let precisions: Vec<f64> = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| {
            if t == 0 {
                0.0
            } else if m == 0 && smoothing {
                SMOOTHING_EPSILON / t as f64
            } else {
                m as f64 / t as f64
            }
        })
        .collect();

    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };

    let bleu = if order == 0 || precisions.iter().any(|&p| p <= 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / order as f64;
        brevity_penalty * log_mean.exp()
    };

    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
        max_order: order,
    })
}

/// Whitespace tokenisation used for scoring text files.
pub fn split_tokens(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Fraction of unmasked positions where `predicted` equals `gold`. Returns 0
/// when no position is unmasked.
pub fn token_accuracy<T: PartialEq>(predicted: &[T], gold: &[T], mask: &[bool]) -> Result<f64> {
    if predicted.len() != gold.len() || gold.len() != mask.len() {
        return Err(Error::contract(format!(
            "token_accuracy lengths differ: {} predicted, {} gold, {} mask",
            predicted.len(),
            gold.len(),
            mask.len()
        )));
    }
    let mut seen = 0usize;
    let mut right = 0usize;
    for ((p, g), &m) in predicted.iter().zip(gold).zip(mask) {
        if m {
            seen += 1;
            if p == g {
                right += 1;
            }
        }
    }
    Ok(if seen == 0 { 0.0 } else { right as f64 / seen as f64 })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn toks(s: &str) -> Vec<String> {
        split_tokens(s)
    }

    fn single(hyps: &[&str], refs: &[&str]) -> BleuReport {
        let h: Vec<_> = hyps.iter().map(|s| toks(s)).collect();
        let r: Vec<_> = refs.iter().map(|s| vec![toks(s)]).collect();
        corpus_bleu(&h, &r, 4, false).unwrap()
    }

    #[test]
    fn identical_is_one() {
        let r = single(&["a b c d e"], &["a b c d e"]);
        assert_eq!(r.bleu, 1.0);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(single(&["x y z w"], &["a b c d"]).bleu, 0.0);
    }

    #[test]
    fn short_hypothesis_truncates_orders() {
        let r = single(&["the cat"], &["the cat sat"]);
        assert_eq!(r.max_order, 2);
        assert!((r.bleu - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn clipping_limits_repeats() {
        // Unigram "the" appears 7 times but only twice in the reference.
        let r = single(&["the the the the the the the"], &["the cat is on the mat"]);
        assert!((r.precisions[0] - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn closest_reference_prefers_shorter_on_tie() {
        let refs = vec![toks("a b"), toks("a b c d")];
        assert_eq!(closest_ref_len(3, &refs), 2);
    }

    #[test]
    fn smoothing_avoids_zero() {
        let h = vec![toks("a b x y")];
        let r = vec![vec![toks("a b c d")]];
        assert_eq!(corpus_bleu(&h, &r, 4, false).unwrap().bleu, 0.0);
        assert!(corpus_bleu(&h, &r, 4, true).unwrap().bleu > 0.0);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let h: Vec<Vec<String>> = vec![vec![]];
        let r = vec![vec![toks("a b")]];
        assert_eq!(corpus_bleu(&h, &r, 4, false).unwrap().bleu, 0.0);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let h = vec![toks("a")];
        let r: Vec<Vec<Vec<String>>> = vec![];
        assert!(corpus_bleu(&h, &r, 4, false).unwrap_err().is_contract_violation());
    }

    #[test]
    fn accuracy_counts_unmasked() {
        let acc = token_accuracy(&[1, 2, 3, 9, 7], &[1, 2, 3, 4, 0], &[true, true, true, true, false]).unwrap();
        assert_eq!(acc, 0.75);
        assert_eq!(token_accuracy(&[1, 2], &[3, 4], &[true, true]).unwrap(), 0.0);
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(String::from), 1..10)
    }

    proptest! {
        #[test]
        fn self_bleu_is_one(h in sentence()) {
            let r = corpus_bleu(std::slice::from_ref(&h), &[vec![h.clone()]], 4, false).unwrap();
            prop_assert!((r.bleu - 1.0).abs() < 1e-12);
        }

        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((sentence(), sentence()), 1..6), seed in any::<u64>()) {
            let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().map(|(a, b)| (a, vec![b])).unzip();
            let base = corpus_bleu(&h, &r, 4, false).unwrap();
            let mut idx: Vec<usize> = (0..h.len()).collect();
            idx.rotate_left((seed % h.len() as u64) as usize);
            idx.reverse();
            let h2: Vec<_> = idx.iter().map(|&i| h[i].clone()).collect();
            let r2: Vec<_> = idx.iter().map(|&i| r[i].clone()).collect();
            let other = corpus_bleu(&h2, &r2, 4, false).unwrap();
            prop_assert!((base.bleu - other.bleu).abs() < 1e-12);
        }

        #[test]
        fn shortening_never_raises_bp(pairs in prop::collection::vec((sentence(), sentence()), 1..6)) {
            let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().map(|(a, b)| (a, vec![b])).unzip();
            let base = corpus_bleu(&h, &r, 4, false).unwrap();
            let shorter: Vec<Vec<String>> = h.iter().map(|s| s[..s.len().div_ceil(2)].to_vec()).collect();
            let cut = corpus_bleu(&shorter, &r, 4, false).unwrap();
            if base.hyp_len <= base.ref_len {
                prop_assert!(cut.brevity_penalty <= base.brevity_penalty + 1e-12);
            }
        }
    }
}
