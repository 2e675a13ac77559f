//! Pseudogold chain selection over the enumerated chain set.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, OracleAnnotation, OracleStatus, Token};
use crate::entities::{build_entity_index, DEFAULT_COMMON_ENTITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::graph::{build_graph, enumerate_chains, Chain, DEFAULT_MAX_CHAIN_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    #[default]
    Shortest,
    QOverlap,
}

/// Overlap measure used by [`Criterion::QOverlap`]. Only unigram overlap
/// is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapMetric {
    #[default]
    Rouge1F1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub criterion: Criterion,
    pub max_len: usize,
    pub threshold: usize,
    pub overlap: OverlapMetric,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            criterion: Criterion::Shortest,
            max_len: DEFAULT_MAX_CHAIN_LEN,
            threshold: DEFAULT_COMMON_ENTITY_THRESHOLD,
            overlap: OverlapMetric::Rouge1F1,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if self.threshold == 0 {
            return Err(Error::Config("threshold must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unigram F1 with clipped counts.
pub fn rouge1_f1<S: AsRef<str>>(chain_tokens: &[S], question_tokens: &[S]) -> f64 {
    if chain_tokens.is_empty() || question_tokens.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in question_tokens {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in chain_tokens {
        if let Some(c) = counts.get_mut(t.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let p = overlap as f64 / chain_tokens.len() as f64;
    let r = overlap as f64 / question_tokens.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn chain_overlap(chain: &Chain, example: &Example, question: &[&str]) -> f64 {
    let tokens: Vec<&str> = chain
        .sentences
        .iter()
        .flat_map(|&g| example.sentences[g].tokens.iter().map(|t| t.lower.as_str()))
        .collect();
    rouge1_f1(&tokens, question)
}

/// Picks the oracle chain; `None` when `chains` is empty.
pub fn select_oracle(
    chains: &[Chain],
    example: &Example,
    question: &[Token],
    config: &OracleConfig,
) -> Option<Chain> {
    let by_length =
        |a: &Chain, b: &Chain| a.len().cmp(&b.len()).then_with(|| a.sentences.cmp(&b.sentences));
    match config.criterion {
        Criterion::Shortest => chains.iter().min_by(|a, b| by_length(a, b)).cloned(),
        Criterion::QOverlap => {
            let question: Vec<&str> = question.iter().map(|t| t.lower.as_str()).collect();
            chains
                .iter()
                .map(|c| (chain_overlap(c, example, &question), c))
                .min_by(|(fa, a), (fb, b)| {
                    fb.partial_cmp(fa)
                        .unwrap_or(Ordering::Equal)
                        .then_with(|| by_length(a, b))
                })
                .map(|(f, c)| Chain {
                    sentences: c.sentences.clone(),
                    score: Some(f),
                })
        }
    }
}

/// Runs the whole heuristic pipeline for one example.
pub fn derive_oracle(example: &Example, config: &OracleConfig) -> OracleAnnotation {
    let index = build_entity_index(example, config.threshold);
    let graph = build_graph(example, &index);
    let set = enumerate_chains(&graph, config.max_len);
    let chosen = select_oracle(&set.chains, example, &example.question_tokens, config);
    OracleAnnotation {
        status: if chosen.is_some() {
            OracleStatus::Ok
        } else {
            OracleStatus::Unreachable
        },
        chain: chosen.map(|c| c.sentences),
        pruned: Some(set.pruned),
    }
}
