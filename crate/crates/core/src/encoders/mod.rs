//! Graph and sequence encoders.

mod bilstm;
mod features;
mod gcn;

pub use bilstm::BiLstmEncoder;
pub use features::{compose_node_inputs, compose_sr_node};
pub use gcn::{
    direction_slot, gcn_layer, label_vocab, GateMode, GcnEncoder, GcnLayerParams, GraphIndex, LabelMode, SkipKind,
};
