//! Beam search over chains and the top-k union used as downstream evidence.

use std::cmp::Ordering;
use std::collections::HashSet;

use super::decoder::{decoder_step_log, DecoderState};
use super::encoder::{encode_example, EncoderMode, EncoderOutput};
use super::params::ModelParams;
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::graph::Chain;

pub const DEFAULT_BEAM_SIZE: usize = 5;
pub const DEFAULT_UNION_K: usize = 5;
pub const DEFAULT_UNION_CAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub max_steps: usize,
    /// Rank by log-probability divided by chain length.
    pub length_norm: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: DEFAULT_BEAM_SIZE,
            max_steps: crate::graph::DEFAULT_MAX_CHAIN_LEN,
            length_norm: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub chain: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    pub state: DecoderState,
}

impl Hypothesis {
    fn rank_score(&self, length_norm: bool) -> f64 {
        if length_norm && !self.chain.is_empty() {
            self.log_prob / self.chain.len() as f64
        } else {
            self.log_prob
        }
    }
}

/// Higher score first, then lexicographically smaller chain, then finished.
fn rank(a: &Hypothesis, b: &Hypothesis, length_norm: bool) -> Ordering {
    b.rank_score(length_norm)
        .partial_cmp(&a.rank_score(length_norm))
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.chain.cmp(&b.chain))
        .then_with(|| b.finished.cmp(&a.finished))
}

/// Decodes up to `beam_size` chains, best first. EOS is not offered at the
/// first step, so every chain holds at least one sentence.
pub fn beam_search(params: &ModelParams, enc: &EncoderOutput, config: &BeamConfig) -> Result<Vec<Chain>> {
    if enc.sentence_reps.nrows() == 0 {
        return Err(Error::Model("cannot decode an example without sentences".into()));
    }
    if config.beam_size == 0 || config.max_steps == 0 {
        return Err(Error::Config("beam size and max steps must be at least 1".into()));
    }
    let reps = enc.sentence_reps.view();
    let n = reps.nrows();
    let mut beams = vec![Hypothesis {
        chain: Vec::new(),
        log_prob: 0.0,
        finished: false,
        state: DecoderState::initial(enc),
    }];

    while beams.iter().any(|h| !h.finished) {
        let mut pool = Vec::new();
        for hyp in beams {
            if hyp.finished {
                pool.push(hyp);
                continue;
            }
            let input = match hyp.chain.last() {
                None => params.tensors.sos.view(),
                Some(&last) => reps.row(last),
            };
            let (log_probs, next) =
                decoder_step_log(params, &hyp.state, input, reps, !hyp.chain.is_empty())?;
            for (cand, &lp) in log_probs.iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                if cand == n {
                    pool.push(Hypothesis {
                        chain: hyp.chain.clone(),
                        log_prob: hyp.log_prob + lp,
                        finished: true,
                        state: next.clone(),
                    });
                } else {
                    let mut chain = hyp.chain.clone();
                    chain.push(cand);
                    let mut state = next.clone();
                    state.select(cand);
                    pool.push(Hypothesis {
                        finished: chain.len() >= config.max_steps,
                        chain,
                        log_prob: hyp.log_prob + lp,
                        state,
                    });
                }
            }
        }
        pool.sort_by(|a, b| rank(a, b, config.length_norm));
        pool.truncate(config.beam_size);
        beams = pool;
    }

    Ok(beams
        .into_iter()
        .map(|h| Chain {
            score: Some(h.rank_score(config.length_norm)),
            sentences: h.chain,
        })
        .collect())
}

/// Encodes `example` and decodes its ranked chains.
pub fn extract_chains(
    params: &ModelParams,
    example: &Example,
    mode: EncoderMode,
    config: &BeamConfig,
) -> Result<Vec<Chain>> {
    beam_search(params, &encode_example(params, example, mode), config)
}

/// Merges the sentences of the first `k` chains in rank order, stopping at
/// `cap` sentences, and returns them in document order.
pub fn union_top_k(chains: &[Chain], k: usize, cap: usize) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    'outer: for chain in chains.iter().take(k) {
        for &s in &chain.sentences {
            if kept.len() >= cap {
                break 'outer;
            }
            if seen.insert(s) {
                kept.push(s);
            }
        }
    }
    kept.sort_unstable();
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chains(seqs: &[&[usize]]) -> Vec<Chain> {
        seqs.iter().map(|s| Chain::new(s.to_vec())).collect()
    }

    #[test]
    fn union_examples() {
        assert_eq!(union_top_k(&chains(&[&[2, 5], &[5, 2], &[1]]), 3, 5), vec![1, 2, 5]);
        assert_eq!(union_top_k(&chains(&[&[7, 3]]), 5, 10), vec![3, 7]);
        assert_eq!(union_top_k(&chains(&[&[7, 3], &[1]]), 5, 1), vec![7]);
        assert_eq!(union_top_k(&chains(&[&[7, 3], &[1]]), 1, 5), vec![3, 7]);
    }
}
