use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attend, AttentionKind, Memory};
use super::copy::copy_mix_tape;
use crate::error::{Error, Result};
use crate::numerics::{Dropout, ParamId, ParamStore, Tape, Tensor, Var};
use crate::recurrent::LstmCell;
use crate::vocab::{BOS_ID, EOS_ID, PAD_ID, UNK_ID};

/// Probabilities below this are clamped before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub memory_width: usize,
    pub attention: AttentionKind,
    pub input_feeding: bool,
    pub copy: bool,
}

/// Attention LSTM decoder with an optional copy switch.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub embedding: ParamId,
    pub cell: LstmCell,
    pub attn_w: Option<ParamId>,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub vocab_w: ParamId,
    pub vocab_b: ParamId,
    pub copy_w: Option<ParamId>,
    pub copy_b: Option<ParamId>,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub h: Var,
    pub c: Var,
    /// Previous attentional vector, fed back when input feeding is on.
    pub feed: Var,
}

/// What the decoder attends to for one example.
#[derive(Debug, Clone)]
pub struct Source {
    pub memory: Memory,
    /// Extended-vocabulary id of every memory position, used for copying.
    pub copy_ids: Vec<usize>,
    /// Size of the extended vocabulary for this example.
    pub ext_width: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Step {
    /// `1 x V` (or `1 x ext_width` with copying) output distribution.
    pub dist: Var,
    pub attention: Var,
    pub state: DecoderState,
}

#[derive(Debug, Clone)]
pub struct Nll {
    /// Negative log likelihood summed over target positions.
    pub loss: Var,
    pub tokens: usize,
    /// Gold probabilities that fell below [`PROB_FLOOR`].
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decoded {
    /// Extended-vocabulary ids, without the closing end token.
    pub tokens: Vec<usize>,
    /// Attention weights of every emitted step.
    pub attention: Vec<Vec<f64>>,
    pub log_prob: f64,
}

impl Decoder {
    pub fn build<R: Rng>(store: &mut ParamStore, prefix: &str, config: DecoderConfig, rng: &mut R) -> Result<Self> {
        let DecoderConfig {
            vocab,
            embed,
            hidden,
            memory_width,
            ..
        } = config;
        if vocab <= EOS_ID {
            return Err(Error::config("target vocabulary lacks the reserved entries"));
        }
        if config.attention == AttentionKind::Dot && memory_width != hidden {
            return Err(Error::config(format!(
                "dot attention needs encoder width {memory_width} to equal decoder hidden size {hidden}"
            )));
        }
        let cell_input = if config.input_feeding { embed + hidden } else { embed };
        let copy_input = hidden + memory_width + embed;
        Ok(Decoder {
            config,
            embedding: store.xavier(format!("{prefix}.embedding"), vocab, embed, rng)?,
            cell: LstmCell::build(store, &format!("{prefix}.lstm"), cell_input, hidden, rng)?,
            attn_w: match config.attention {
                AttentionKind::General => Some(store.xavier(format!("{prefix}.attn_w"), hidden, memory_width, rng)?),
                AttentionKind::Dot => None,
            },
            out_w: store.xavier(format!("{prefix}.out_w"), hidden + memory_width, hidden, rng)?,
            out_b: store.zeros(format!("{prefix}.out_b"), 1, hidden)?,
            vocab_w: store.xavier(format!("{prefix}.vocab_w"), hidden, vocab, rng)?,
            vocab_b: store.zeros(format!("{prefix}.vocab_b"), 1, vocab)?,
            copy_w: if config.copy {
                Some(store.xavier(format!("{prefix}.copy_w"), copy_input, 1, rng)?)
            } else {
                None
            },
            copy_b: if config.copy {
                Some(store.zeros(format!("{prefix}.copy_b"), 1, 1)?)
            } else {
                None
            },
        })
    }

    pub fn initial_state(&self, tape: &mut Tape<'_>) -> DecoderState {
        let h = self.config.hidden;
        DecoderState {
            h: tape.constant(Tensor::zeros(1, h)),
            c: tape.constant(Tensor::zeros(1, h)),
            feed: tape.constant(Tensor::zeros(1, h)),
        }
    }

    /// Id fed back as the next input: out-of-vocabulary copies read as the
    /// unknown token.
    pub fn input_id(&self, token: usize) -> usize {
        if token < self.config.vocab {
            token
        } else {
            UNK_ID
        }
    }

    pub fn step(
        &self,
        tape: &mut Tape<'_>,
        state: DecoderState,
        prev: usize,
        src: &Source,
        drop: &mut Dropout<'_>,
    ) -> Result<Step> {
        if prev >= self.config.vocab {
            return Err(Error::Unknown {
                kind: "token id",
                value: prev.to_string(),
            });
        }
        let table = tape.param(self.embedding);
        let emb = tape.gather_rows(table, &[prev])?;
        let emb = drop.apply(tape, emb)?;
        let x = if self.config.input_feeding {
            tape.concat_cols(&[emb, state.feed])?
        } else {
            emb
        };
        let (h, c) = self.cell.step(tape, x, state.h, state.c)?;
        let bilinear = self.attn_w.map(|w| tape.param(w));
        let (context, attention) = attend(tape, h, &src.memory, bilinear)?;
        let hc = tape.concat_cols(&[h, context])?;
        let hidden = tape.linear(hc, self.out_w, Some(self.out_b))?;
        let feed = tape.tanh(hidden);
        let out = drop.apply(tape, feed)?;
        let logits = tape.linear(out, self.vocab_w, Some(self.vocab_b))?;
        let mut dist = tape.softmax_rows(logits)?;
        if let (Some(w), Some(b)) = (self.copy_w, self.copy_b) {
            let gate_in = tape.concat_cols(&[hc, emb])?;
            let score = tape.linear(gate_in, w, Some(b))?;
            let p_gen = tape.sigmoid(score);
            dist = copy_mix_tape(tape, dist, attention, &src.copy_ids, p_gen, src.ext_width.max(self.config.vocab))?;
        }
        Ok(Step {
            dist,
            attention,
            state: DecoderState { h, c, feed },
        })
    }

    /// Teacher-forced negative log likelihood of `target` (extended ids,
    /// closing end token included).
    pub fn nll(&self, tape: &mut Tape<'_>, src: &Source, target: &[usize], drop: &mut Dropout<'_>) -> Result<Nll> {
        let mut state = self.initial_state(tape);
        let mut prev = BOS_ID;
        let mut terms = Vec::with_capacity(target.len());
        let mut clamped = 0;
        for &gold in target {
            let step = self.step(tape, state, prev, src, drop)?;
            let [_, width] = tape.shape(step.dist);
            if gold >= width {
                return Err(Error::Unknown {
                    kind: "target id",
                    value: gold.to_string(),
                });
            }
            let p = tape.pick(step.dist, 0, gold)?;
            if tape.value(p).item() < PROB_FLOOR {
                clamped += 1;
            }
            terms.push(tape.ln_clamped(p, PROB_FLOOR));
            state = step.state;
            prev = self.input_id(gold);
        }
        let total = tape.add_all(&terms)?;
        Ok(Nll {
            loss: tape.scale(total, -1.0),
            tokens: target.len(),
            clamped,
        })
    }

    /// Output distributions at every position of `target` with gold inputs.
    pub fn teacher_forced(
        &self,
        tape: &mut Tape<'_>,
        src: &Source,
        target: &[usize],
        drop: &mut Dropout<'_>,
    ) -> Result<Vec<Var>> {
        let mut state = self.initial_state(tape);
        let mut prev = BOS_ID;
        let mut out = Vec::with_capacity(target.len());
        for &gold in target {
            let step = self.step(tape, state, prev, src, drop)?;
            out.push(step.dist);
            state = step.state;
            prev = self.input_id(gold);
        }
        Ok(out)
    }

    /// Argmax decoding. Ties go to the lowest id; padding and start tokens
    /// are never produced.
    pub fn greedy(&self, tape: &mut Tape<'_>, src: &Source, max_len: usize) -> Result<Decoded> {
        let mut state = self.initial_state(tape);
        let mut prev = BOS_ID;
        let mut out = Decoded {
            tokens: Vec::new(),
            attention: Vec::new(),
            log_prob: 0.0,
        };
        let mut eval = Dropout::eval();
        for _ in 0..max_len {
            let step = self.step(tape, state, prev, src, &mut eval)?;
            let dist = tape.value(step.dist).data();
            let (best, p) = argmax_allowed(dist);
            out.log_prob += p.max(PROB_FLOOR).ln();
            if best == EOS_ID {
                break;
            }
            out.tokens.push(best);
            out.attention.push(tape.value(step.attention).data().to_vec());
            state = step.state;
            prev = self.input_id(best);
        }
        Ok(out)
    }

    /// Beam search without length normalisation. A width of one reproduces
    /// [`greedy`](Self::greedy).
    pub fn beam(&self, tape: &mut Tape<'_>, src: &Source, max_len: usize, width: usize) -> Result<Decoded> {
        if width <= 1 {
            return self.greedy(tape, src, max_len);
        }
        struct Hyp {
            tokens: Vec<usize>,
            attention: Vec<Vec<f64>>,
            score: f64,
            state: DecoderState,
        }
        let mut eval = Dropout::eval();
        let mut live = vec![Hyp {
            tokens: Vec::new(),
            attention: Vec::new(),
            score: 0.0,
            state: self.initial_state(tape),
        }];
        let mut finished: Vec<Decoded> = Vec::new();
        for _ in 0..max_len {
            let mut candidates = Vec::new();
            let mut steps = Vec::with_capacity(live.len());
            for (k, hyp) in live.iter().enumerate() {
                let prev = hyp.tokens.last().map_or(BOS_ID, |&t| self.input_id(t));
                let step = self.step(tape, hyp.state, prev, src, &mut eval)?;
                let dist = tape.value(step.dist).data();
                let mut ranked: Vec<usize> = (0..dist.len()).filter(|&t| t != PAD_ID && t != BOS_ID).collect();
                ranked.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
                for &t in ranked.iter().take(width) {
                    candidates.push((hyp.score + dist[t].max(PROB_FLOOR).ln(), k, t));
                }
                steps.push(step);
            }
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut next = Vec::with_capacity(width);
            for (score, k, t) in candidates.into_iter().take(width) {
                let parent = &live[k];
                if t == EOS_ID {
                    finished.push(Decoded {
                        tokens: parent.tokens.clone(),
                        attention: parent.attention.clone(),
                        log_prob: score,
                    });
                } else {
                    let mut tokens = parent.tokens.clone();
                    tokens.push(t);
                    let mut attention = parent.attention.clone();
                    attention.push(tape.value(steps[k].attention).data().to_vec());
                    next.push(Hyp {
                        tokens,
                        attention,
                        score,
                        state: steps[k].state,
                    });
                }
            }
            live = next;
            let best_done = finished.iter().map(|d| d.log_prob).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            if live.is_empty() || best_done >= best_live {
                break;
            }
        }
        finished.extend(live.into_iter().map(|h| Decoded {
            tokens: h.tokens,
            attention: h.attention,
            log_prob: h.score,
        }));
        let mut best = 0;
        for (i, d) in finished.iter().enumerate() {
            if d.log_prob > finished[best].log_prob {
                best = i;
            }
        }
        Ok(finished.swap_remove(best))
    }
}

/// Highest-probability id other than padding and start, lowest id on ties.
pub fn argmax_allowed(dist: &[f64]) -> (usize, f64) {
    let mut best = EOS_ID;
    let mut p = f64::NEG_INFINITY;
    for (t, &q) in dist.iter().enumerate() {
        if t == PAD_ID || t == BOS_ID {
            continue;
        }
        if q > p {
            best = t;
            p = q;
        }
    }
    (best, p)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn config(copy: bool) -> DecoderConfig {
        DecoderConfig {
            vocab: 7,
            embed: 3,
            hidden: 4,
            memory_width: 5,
            attention: AttentionKind::General,
            input_feeding: true,
            copy,
        }
    }

    fn setup(copy: bool, seed: u64) -> (ParamStore, Decoder, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dec = Decoder::build(&mut store, "dec", config(copy), &mut rng).unwrap();
        let mem = Tensor::from_vec(3, 5, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        (store, dec, mem)
    }

    fn source(tape: &mut Tape<'_>, mem: &Tensor, copy_ids: Vec<usize>, ext_width: usize) -> Source {
        let m = tape.constant(mem.clone());
        Source {
            memory: Memory::new(tape, m, None).unwrap(),
            copy_ids,
            ext_width,
        }
    }

    #[test]
    fn distribution_sums_to_one() {
        for copy in [false, true] {
            let (store, dec, mem) = setup(copy, 1);
            let mut tape = Tape::new(&store);
            let src = source(&mut tape, &mem, vec![4, 7, 8], 9);
            let s0 = dec.initial_state(&mut tape);
            let step = dec.step(&mut tape, s0, BOS_ID, &src, &mut Dropout::eval()).unwrap();
            let sum: f64 = tape.value(step.dist).data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let (mut store, dec, mem) = setup(false, 2);
        store.value_mut(dec.vocab_w).fill(0.0);
        let mut tape = Tape::new(&store);
        let src = source(&mut tape, &mem, vec![], 0);
        let s0 = dec.initial_state(&mut tape);
        let step = dec.step(&mut tape, s0, BOS_ID, &src, &mut Dropout::eval()).unwrap();
        assert!(tape.value(step.dist).data().iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn state_changes_the_distribution() {
        let (store, dec, mem) = setup(false, 3);
        let mut tape = Tape::new(&store);
        let src = source(&mut tape, &mem, vec![], 0);
        let s0 = dec.initial_state(&mut tape);
        let first = dec.step(&mut tape, s0, 4, &src, &mut Dropout::eval()).unwrap();
        let second = dec.step(&mut tape, first.state, 4, &src, &mut Dropout::eval()).unwrap();
        assert_ne!(tape.value(first.dist), tape.value(second.dist));
    }

    #[test]
    fn unknown_previous_token_rejected() {
        let (store, dec, mem) = setup(false, 4);
        let mut tape = Tape::new(&store);
        let src = source(&mut tape, &mem, vec![], 0);
        let s0 = dec.initial_state(&mut tape);
        assert!(dec.step(&mut tape, s0, 7, &src, &mut Dropout::eval()).is_err());
    }

    fn rigged(token: usize) -> (ParamStore, Decoder, Tensor) {
        let (mut store, dec, mem) = setup(false, 5);
        store.value_mut(dec.vocab_w).fill(0.0);
        store.value_mut(dec.vocab_b).set(0, token, 10.0);
        (store, dec, mem)
    }

    #[test]
    fn rigged_end_token_gives_empty_output() {
        let (store, dec, mem) = rigged(EOS_ID);
        let mut tape = Tape::new(&store);
        let src = source(&mut tape, &mem, vec![], 0);
        assert!(dec.greedy(&mut tape, &src, 10).unwrap().tokens.is_empty());
    }

    #[test]
    fn rigged_token_repeats_to_max_len() {
        let (store, dec, mem) = rigged(5);
        let mut tape = Tape::new(&store);
        let src = source(&mut tape, &mem, vec![], 0);
        assert_eq!(dec.greedy(&mut tape, &src, 6).unwrap().tokens, vec![5; 6]);
    }

    #[test]
    fn rigged_start_token_is_never_emitted() {
        let (store, dec, mem) = rigged(BOS_ID);
        let mut tape = Tape::new(&store);
        let src = source(&mut tape, &mem, vec![], 0);
        let out = dec.greedy(&mut tape, &src, 4).unwrap();
        assert!(out.tokens.iter().all(|&t| t != BOS_ID && t != PAD_ID));
    }

    #[test]
    fn ties_break_to_lowest_id() {
        assert_eq!(argmax_allowed(&[0.5, 0.5, 0.0, 0.25, 0.25]).0, 3);
    }

    #[test]
    fn beam_width_one_matches_greedy_and_wider_scores_no_worse() {
        let (store, dec, mem) = setup(true, 6);
        let mut tape = Tape::new(&store);
        let src = source(&mut tape, &mem, vec![4, 7, 8], 9);
        let g = dec.greedy(&mut tape, &src, 8).unwrap();
        assert_eq!(dec.beam(&mut tape, &src, 8, 1).unwrap(), g);
        let b = dec.beam(&mut tape, &src, 8, 4).unwrap();
        if g.tokens.len() < 8 && b.tokens.len() < 8 {
            assert!(b.log_prob >= g.log_prob - 1e-12);
        }
    }

    #[test]
    fn stepwise_nll_matches_teacher_forced_loss() {
        let (store, dec, mem) = setup(true, 7);
        let target = [4, 8, 5, EOS_ID];
        let mut tape = Tape::new(&store);
        let src = source(&mut tape, &mem, vec![4, 7, 8], 9);
        let nll = dec.nll(&mut tape, &src, &target, &mut Dropout::eval()).unwrap();
        let loss = tape.value(nll.loss).item();

        let mut manual = 0.0;
        let mut state = dec.initial_state(&mut tape);
        let mut prev = BOS_ID;
        for &gold in &target {
            let step = dec.step(&mut tape, state, prev, &src, &mut Dropout::eval()).unwrap();
            manual -= tape.value(step.dist).get(0, gold).ln();
            state = step.state;
            prev = dec.input_id(gold);
        }
        assert!((loss - manual).abs() < 1e-12);
        assert_eq!(nll.tokens, 4);
    }

    #[test]
    fn dot_attention_needs_matching_widths() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DecoderConfig {
            attention: AttentionKind::Dot,
            ..config(false)
        };
        assert!(Decoder::build(&mut store, "dec", cfg, &mut rng).is_err());
    }
}
