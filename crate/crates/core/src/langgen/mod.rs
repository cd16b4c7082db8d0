//! Dataset generation: length-truncated Dyck(k, m) samples with gold stack
//! annotations, and the SCAN grammar with length splits.

mod dyck;
mod scan;

pub use dyck::{
    build_dyck_datasets, chain_log_probability, dyck_annotations, dyck_length_bounds,
    dyck_test_bounds, length_histogram, sample_dyck, sample_dyck_rejection, sample_dyck_set,
    DyckAnnotations, DyckConfig, DyckDatasets, DyckSample, DyckVocab, LengthConditionedChain,
    EOS_SYMBOL,
};
pub use scan::{
    scan_enumerate, scan_interpret, scan_interpret_str, scan_length_split, Action, ActionStyle,
    LengthSplit, ScanPair, COMMAND_WORDS, PUBLISHED_CUTOFFS,
};
