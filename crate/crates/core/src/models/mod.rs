//! Recurrent models: the LSTM language model and the LSTM encoder-decoder,
//! with hand-derived gradients, greedy decoding, state traces and
//! checkpoints.

mod checkpoint;
mod decode;
mod head;
mod lm;
mod lstm;
mod params;
mod seq2seq;
mod trace;
mod vocab;

pub use checkpoint::{
    read_checkpoint, AnyModel, Checkpoint, Checkpointable, Dims, ModelKind, ParamTensor,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use decode::{masked_distribution, DecodeOptions};
pub use lm::{lm_pair, BatchLoss, LstmLm, SeqOutput};
pub use lstm::{lstm_cell, LstmLayer};
pub use params::{ModelInfo, Parameterized};
pub use seq2seq::Seq2Seq;
pub use trace::{StateMeta, StateTrace, TraceKind};
pub use vocab::{Vocab, BOS_SYMBOL};
