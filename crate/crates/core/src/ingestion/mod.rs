//! Corpus readers, graph construction and preprocessing.

pub mod dataset;
pub mod linearise;
pub mod sr11;
pub mod webnlg;

pub use dataset::{
    filter_long_targets, read_jsonl, write_jsonl, DatasetSplit, Example, SplitName, Task, MAX_TARGET_LEN,
};
pub use linearise::{linearise, LineariseOptions};
