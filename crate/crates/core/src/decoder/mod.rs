//! Attention decoder, copy mixture and pretrained embeddings.

mod attention;
mod copy;
mod lstm;
mod pretrained;

pub use attention::{attend, AttentionKind, Memory};
pub use copy::{copy_mix, copy_mix_tape};
pub use lstm::{argmax_allowed, Decoded, Decoder, DecoderConfig, DecoderState, Nll, Source, Step, PROB_FLOOR};
pub use pretrained::{load_pretrained_embeddings, Coverage};
