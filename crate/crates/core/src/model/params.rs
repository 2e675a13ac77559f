//! Learned tensors, the vocabulary, and the JSON checkpoint format.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, ArrayViewD, ArrayViewMutD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::LstmWeights;
use crate::corpus::Example;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const SEP: &str = "<sep>";
pub const UNK_ID: usize = 0;
pub const SEP_ID: usize = 1;

pub const DEFAULT_EMBED_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 64;

/// Lowercased token vocabulary. Ids 0 and 1 are reserved for [`UNK`] and
/// [`SEP`]; the rest are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 || words[UNK_ID] != UNK || words[SEP_ID] != SEP {
            return Err(Error::Checkpoint(
                "vocabulary must start with the reserved symbols".into(),
            ));
        }
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Vocab { words, ids })
    }

    /// Collects every question, sentence and candidate token of `examples`.
    pub fn build<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Self {
        let mut seen = BTreeSet::new();
        for ex in examples {
            let cands = ex.candidates.iter().flatten().flat_map(|c| &c.tokens);
            let sents = ex.sentences.iter().flat_map(|s| &s.tokens);
            for t in ex.question_tokens.iter().chain(sents).chain(cands) {
                seen.insert(t.lower.as_str());
            }
        }
        seen.remove(UNK);
        seen.remove(SEP);
        let words = [UNK, SEP]
            .into_iter()
            .chain(seen)
            .map(str::to_string)
            .collect();
        Vocab::from_words(words).expect("reserved symbols present")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, lower: &str) -> usize {
        self.ids.get(lower).copied().unwrap_or(UNK_ID)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Every learned tensor. Also used as the gradient and optimizer-moment
/// container, so the shapes always mirror the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub embedding: Array2<f64>,
    pub enc_fwd: LstmWeights,
    pub enc_bwd: LstmWeights,
    pub decoder: LstmWeights,
    /// Pointer scoring weights over `[h; s; h ⊙ s]`.
    pub pointer: Array1<f64>,
    pub sos: Array1<f64>,
    pub eos: Array1<f64>,
    /// Unordered-baseline weights over `[s; q; s ⊙ q]`.
    pub relevance: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 14] = [
    "embedding",
    "encoder.fwd.w_x",
    "encoder.fwd.w_h",
    "encoder.fwd.bias",
    "encoder.bwd.w_x",
    "encoder.bwd.w_h",
    "encoder.bwd.bias",
    "decoder.w_x",
    "decoder.w_h",
    "decoder.bias",
    "pointer",
    "sos",
    "eos",
    "relevance",
];

impl Tensors {
    pub fn zeros(vocab: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        let out = 2 * hidden_dim;
        Tensors {
            embedding: Array2::zeros((vocab, embed_dim)),
            enc_fwd: LstmWeights::zeros(embed_dim, hidden_dim),
            enc_bwd: LstmWeights::zeros(embed_dim, hidden_dim),
            decoder: LstmWeights::zeros(out, out),
            pointer: Array1::zeros(3 * out),
            sos: Array1::zeros(out),
            eos: Array1::zeros(out),
            relevance: Array1::zeros(3 * out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Tensors::zeros(
            self.embedding.nrows(),
            self.embedding.ncols(),
            self.enc_fwd.hidden(),
        )
    }

    pub fn named(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            (TENSOR_NAMES[0], self.embedding.view().into_dyn()),
            (TENSOR_NAMES[1], self.enc_fwd.w_x.view().into_dyn()),
            (TENSOR_NAMES[2], self.enc_fwd.w_h.view().into_dyn()),
            (TENSOR_NAMES[3], self.enc_fwd.bias.view().into_dyn()),
            (TENSOR_NAMES[4], self.enc_bwd.w_x.view().into_dyn()),
            (TENSOR_NAMES[5], self.enc_bwd.w_h.view().into_dyn()),
            (TENSOR_NAMES[6], self.enc_bwd.bias.view().into_dyn()),
            (TENSOR_NAMES[7], self.decoder.w_x.view().into_dyn()),
            (TENSOR_NAMES[8], self.decoder.w_h.view().into_dyn()),
            (TENSOR_NAMES[9], self.decoder.bias.view().into_dyn()),
            (TENSOR_NAMES[10], self.pointer.view().into_dyn()),
            (TENSOR_NAMES[11], self.sos.view().into_dyn()),
            (TENSOR_NAMES[12], self.eos.view().into_dyn()),
            (TENSOR_NAMES[13], self.relevance.view().into_dyn()),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        vec![
            (TENSOR_NAMES[0], self.embedding.view_mut().into_dyn()),
            (TENSOR_NAMES[1], self.enc_fwd.w_x.view_mut().into_dyn()),
            (TENSOR_NAMES[2], self.enc_fwd.w_h.view_mut().into_dyn()),
            (TENSOR_NAMES[3], self.enc_fwd.bias.view_mut().into_dyn()),
            (TENSOR_NAMES[4], self.enc_bwd.w_x.view_mut().into_dyn()),
            (TENSOR_NAMES[5], self.enc_bwd.w_h.view_mut().into_dyn()),
            (TENSOR_NAMES[6], self.enc_bwd.bias.view_mut().into_dyn()),
            (TENSOR_NAMES[7], self.decoder.w_x.view_mut().into_dyn()),
            (TENSOR_NAMES[8], self.decoder.w_h.view_mut().into_dyn()),
            (TENSOR_NAMES[9], self.decoder.bias.view_mut().into_dyn()),
            (TENSOR_NAMES[10], self.pointer.view_mut().into_dyn()),
            (TENSOR_NAMES[11], self.sos.view_mut().into_dyn()),
            (TENSOR_NAMES[12], self.eos.view_mut().into_dyn()),
            (TENSOR_NAMES[13], self.relevance.view_mut().into_dyn()),
        ]
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, mut t) in self.named_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn add_assign(&mut self, other: &Tensors) {
        for ((_, mut a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            a += &b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.named()
            .iter()
            .map(|(_, t)| t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.named() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    tensor: name.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub vocab: Vocab,
    pub tensors: Tensors,
}

impl ModelParams {
    pub fn zeros(vocab: Vocab, embed_dim: usize, hidden_dim: usize) -> Self {
        let tensors = Tensors::zeros(vocab.len(), embed_dim, hidden_dim);
        ModelParams {
            embed_dim,
            hidden_dim,
            vocab,
            tensors,
        }
    }

    /// Uniform(−0.1, 0.1) for embeddings, recurrent weights and the SOS/EOS
    /// vectors; zero for biases, the pointer and the relevance weights.
    pub fn init(vocab: Vocab, embed_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = ModelParams::zeros(vocab, embed_dim, hidden_dim);
        let t = &mut p.tensors;
        let mut fill = |a: ArrayViewMutD<f64>| {
            let mut a = a;
            a.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
        };
        fill(t.embedding.view_mut().into_dyn());
        for cell in [&mut t.enc_fwd, &mut t.enc_bwd, &mut t.decoder] {
            fill(cell.w_x.view_mut().into_dyn());
            fill(cell.w_h.view_mut().into_dyn());
        }
        fill(t.sos.view_mut().into_dyn());
        fill(t.eos.view_mut().into_dyn());
        p
    }

    /// Width of sentence, question and decoder vectors.
    pub fn rep_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn token_ids<'a>(&self, tokens: impl IntoIterator<Item = &'a crate::corpus::Token>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.vocab.id(&t.lower)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            vocab: self.vocab.words().to_vec(),
            tensors: self
                .tensors
                .named()
                .into_iter()
                .map(|(name, t)| {
                    (
                        name.to_string(),
                        StoredTensor {
                            shape: t.shape().to_vec(),
                            data: t.iter().copied().collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let vocab = Vocab::from_words(ckpt.vocab)?;
        let mut params = ModelParams::zeros(vocab, ckpt.embed_dim, ckpt.hidden_dim);
        let mut stored = ckpt.tensors;
        for (name, mut target) in params.tensors.named_mut() {
            let t = stored
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape != target.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape,
                    target.shape()
                )));
            }
            let array = ArrayD::from_shape_vec(IxDyn(&t.shape), t.data)
                .map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
            target.assign(&array);
        }
        if let Some(extra) = stored.keys().next() {
            return Err(Error::Checkpoint(format!("unknown tensor `{extra}`")));
        }
        params.tensors.check_finite()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelParams::from_checkpoint(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub vocab: Vec<String>,
    pub tensors: BTreeMap<String, StoredTensor>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn vocab() -> Vocab {
        Vocab::from_words(vec![UNK.into(), SEP.into(), "a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn names_cover_every_tensor() {
        let t = Tensors::zeros(4, 3, 2);
        let named = t.named();
        assert_eq!(named.len(), TENSOR_NAMES.len());
        let shapes: Vec<Vec<usize>> = named.iter().map(|(_, a)| a.shape().to_vec()).collect();
        assert_eq!(shapes[0], [4, 3]);
        assert_eq!(shapes[1], [8, 3]);
        assert_eq!(shapes[7], [16, 4]);
        assert_eq!(shapes[10], [12]);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = vocab();
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("zzz"), UNK_ID);
    }

    #[test]
    fn checkpoint_round_trip_is_byte_stable() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::init(vocab(), 3, 2, &mut rng);
        let first = serde_json::to_string(&p.to_checkpoint()).unwrap();
        let back = ModelParams::from_checkpoint(serde_json::from_str(&first).unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(serde_json::to_string(&back.to_checkpoint()).unwrap(), first);
    }

    #[test]
    fn checkpoint_shape_mismatch_is_rejected() {
        let p = ModelParams::zeros(vocab(), 3, 2);
        let mut ckpt = p.to_checkpoint();
        ckpt.tensors.get_mut("pointer").unwrap().shape = vec![6];
        assert!(ModelParams::from_checkpoint(ckpt).is_err());
    }

    #[test]
    fn init_zeroes_pointer_and_biases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(vocab(), 3, 2, &mut rng);
        assert!(p.tensors.pointer.iter().all(|&v| v == 0.0));
        assert!(p.tensors.decoder.bias.iter().all(|&v| v == 0.0));
        assert!(p.tensors.embedding.iter().all(|v| v.abs() < 0.1));
        assert!(p.tensors.embedding.iter().any(|&v| v != 0.0));
    }
}
