//! Finite-difference verification of complete models.

use serde::{Deserialize, Serialize};

use crate::decoder::AttentionKind;
use crate::encoders::SkipKind;
use crate::error::Result;
use crate::ingestion::Example;
use crate::model::{EncoderKind, Model, ModelConfig, Vocabs};
use crate::numerics::{grad_check, Dropout, GradCheckConfig, GradCheckReport};

/// Named model shapes exercised by the gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckVariant {
    /// Two residual GCN layers with an attention decoder.
    ResidualGcn,
    /// Two dense GCN layers with a copying decoder.
    DenseGcnCopy,
    /// Bidirectional LSTM over the linearised graph.
    Bilstm,
}

impl CheckVariant {
    pub const ALL: [CheckVariant; 3] = [CheckVariant::ResidualGcn, CheckVariant::DenseGcnCopy, CheckVariant::Bilstm];

    pub fn config(self, hidden: usize) -> ModelConfig {
        let base = ModelConfig {
            gcn_layers: 2,
            hidden,
            embed_dim: hidden,
            feature_dim: 0,
            attention: AttentionKind::General,
            input_feeding: true,
            seed: 3,
            ..ModelConfig::default()
        };
        match self {
            CheckVariant::ResidualGcn => ModelConfig {
                encoder: EncoderKind::Gcn,
                skip: SkipKind::Residual,
                copy: false,
                ..base
            },
            CheckVariant::DenseGcnCopy => ModelConfig {
                encoder: EncoderKind::Gcn,
                skip: SkipKind::Dense,
                copy: true,
                ..base
            },
            CheckVariant::Bilstm => ModelConfig {
                encoder: EncoderKind::Bilstm,
                copy: false,
                ..base
            },
        }
    }
}

/// Compares analytic and numeric gradients of the example's summed loss for
/// every parameter of a freshly initialised model.
pub fn check_model(config: ModelConfig, example: &Example, gc: &GradCheckConfig) -> Result<GradCheckReport> {
    let vocabs = Vocabs::build(std::slice::from_ref(example), &config)?;
    let mut model = Model::new(config, vocabs)?;
    let prepared = model.prepare(example)?;
    let mut store = std::mem::take(&mut model.store);
    grad_check(
        &mut store,
        |tape| Ok(model.loss(tape, &prepared, &mut Dropout::eval())?.loss),
        gc,
    )
}
