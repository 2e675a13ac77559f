//! Neural chain extractor: embeddings, factored encoder, pointer decoder,
//! beam search, the unordered relevance baseline and the answer scorer.

pub mod beam;
pub mod decoder;
pub mod encoder;
pub mod lstm;
pub mod params;
pub mod scorer;

pub use beam::{beam_search, extract_chains, union_top_k, BeamConfig};
pub use decoder::{decoder_step, DecoderState};
pub use encoder::{encode_example, EncoderMode, EncoderOutput};
pub use params::{ModelParams, Tensors, Vocab};
pub use scorer::{predict_candidate, score_candidates, score_sentences_unordered, top_k_relevant};
