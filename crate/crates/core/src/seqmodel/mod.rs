//! A small differentiable encoder–decoder with exact sequence
//! log-probabilities, reverse-mode gradients, and greedy / top-K-top-P
//! decoding.

mod arch;
pub mod checkpoint;
mod decode;
mod model;
mod vocab;

pub use arch::{Architecture, Block, Layout};
pub use decode::{
    argmax, filter_top_k_top_p, greedy_decode, sample_top_k_top_p, DecodeState, EncodedSource,
    SamplerParams,
};
pub use model::{
    grad_of_scalar, sequence_log_prob, sequence_log_probs, PolicyModel, ReferenceModel, Scope,
    SeqModel, Transformer, LOG_PROB_FLOOR,
};
pub use vocab::{tokens_from_str, tokens_to_string, Token, Vocab};
